// sail_synth: writes a synthetic paired dataset (train/test SEB1 files with manifests).

#include <cstdio>
#include <filesystem>

#include <CLI11.hpp>

#include "sail/embed_store.hpp"
#include "sail/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Generate synthetic image/text embedding pairs sharing a latent variable."};
    sail::SyntheticSpec spec;
    std::string out;
    app.add_option("--out", out)->required();
    app.add_option("--n-train", spec.n_train);
    app.add_option("--n-test", spec.n_test);
    app.add_option("--latent-dim", spec.latent_dim);
    app.add_option("--image-dim", spec.image_dim);
    app.add_option("--text-dim", spec.text_dim);
    app.add_option("--noise", spec.noise);
    app.add_option("--seed", spec.seed);
    CLI11_PARSE(app, argc, argv);

    try {
        namespace fs = std::filesystem;
        fs::create_directories(out);
        const auto split = sail::make_synthetic_alignment(spec);
        auto save = [&](const sail::EmbeddingMatrix& m, const std::string& name, const std::vector<std::string>& ids) {
            const fs::path p = fs::path(out) / (name + ".seb1");
            sail::write_embeddings(m, p);
            sail::Manifest man;
            man.encoder_name = "synthetic";
            man.source_dataset = "synthetic-seed-" + std::to_string(spec.seed);
            man.n_rows = m.rows();
            man.dim = static_cast<std::uint32_t>(m.cols());
            man.ids = ids;
            sail::write_manifest(man, p);
        };
        save(split.train.images, "train_images", split.train.ids);
        save(split.train.texts, "train_texts", split.train.ids);
        save(*split.train.hq_texts, "train_hq_texts", split.train.ids);
        save(split.test.images, "test_images", split.test.ids);
        save(split.test.texts, "test_texts", split.test.ids);
        std::printf("wrote %zu train / %zu test pairs to %s\n", spec.n_train, spec.n_test, out.c_str());
    } catch (const sail::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
