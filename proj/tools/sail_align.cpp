// sail_align: train alignment heads on pre-encoded embeddings and evaluate them.
//
// Exit codes: 0 success, 1 validation/usage error, 2 internal error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sail/sail.hpp"

namespace fs = std::filesystem;
using namespace sail;

namespace {

struct Common {
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

void write_run_manifest(const fs::path& out, const std::string& command, const Common& common, nlohmann::json extra = {}) {
    nlohmann::json j = extra.is_object() ? std::move(extra) : nlohmann::json::object();
    j["command"] = command;
    j["seed"] = common.seed;
    report::write_text(out / "run.json", j.dump(2) + "\n");
}

void write_metrics(const fs::path& out, const std::vector<report::MetricRow>& rows) {
    report::write_text(out / "report.csv", report::metrics_csv(rows));
    std::cout << report::metrics_table(rows);
}

std::optional<TrainerState> maybe_checkpoint(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return load_checkpoint(path);
}

EmbeddingMatrix project(const std::optional<TrainerState>& ckpt, Side side, EmbeddingMatrix x) {
    return ckpt ? embed_with_head(*ckpt, side, x) : std::move(x);
}

std::vector<std::size_t> parse_ks(const std::string& s) {
    std::vector<std::size_t> ks;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            ks.push_back(std::stoul(tok));
        } catch (const std::exception&) {
            throw ConfigError("--ks: bad value \"" + tok + "\"");
        }
    }
    if (ks.empty()) throw ConfigError("--ks: empty list");
    return ks;
}

// ---------------------------------------------------------------------------

int cmd_inspect(const std::string& path) {
    const auto bytes = sail::detail::read_file(path);
    Seb1Info info;
    decode_seb1(bytes, path, &info, /*verify_crc=*/false);
    std::printf("file: %s\nn_rows: %llu\ndim: %u\n", path.c_str(), static_cast<unsigned long long>(info.n_rows), info.dim);
    std::printf("crc: %s (stored 0x%08x, computed 0x%08x)\n", info.crc_ok() ? "OK" : "MISMATCH", info.stored_crc,
                info.computed_crc);
    bool ok = info.crc_ok();
    if (auto m = read_manifest(path)) {
        std::printf("manifest: encoder_name=%s source_dataset=%s n_rows=%llu dim=%u created_unix_ms=%lld ids=%s\n",
                    m->encoder_name.c_str(), m->source_dataset.c_str(), static_cast<unsigned long long>(m->n_rows), m->dim,
                    static_cast<long long>(m->created_unix_ms),
                    m->ids ? std::to_string(m->ids->size()).c_str() : "none");
        for (auto it = m->extra.begin(); it != m->extra.end(); ++it) {
            std::printf("manifest.%s: %s\n", it.key().c_str(), it.value().dump().c_str());
        }
        if (m->n_rows != info.n_rows || m->dim != info.dim) {
            std::printf("manifest: MISMATCH with file header\n");
            ok = false;
        }
    } else {
        std::printf("manifest: none\n");
    }
    if (!ok) {
        std::fprintf(stderr, "error: %s failed validation\n", path.c_str());
        return 1;
    }
    return 0;
}

struct TrainArgs {
    std::string config, images, texts, hq_texts, eval_images, eval_texts, out;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    bool deterministic_log = false;
};

int cmd_train(const TrainArgs& a, Common& common) {
    std::vector<ConfigEntry> overrides;
    for (const auto& kv : a.overrides) overrides.push_back(parse_override(kv));
    if (a.seed) overrides.push_back({"seed", std::to_string(*a.seed), 0});
    const TrainConfig cfg = load_train_config(a.config, overrides);
    common.seed = cfg.seed;

    const auto data = load_paired(a.images, a.texts, a.hq_texts.empty() ? std::nullopt : std::optional<fs::path>(a.hq_texts));
    std::optional<PairedDataset> eval;
    if (!a.eval_images.empty() || !a.eval_texts.empty()) {
        if (a.eval_images.empty() || a.eval_texts.empty()) throw ConfigError("--eval-images and --eval-texts go together");
        eval = load_paired(a.eval_images, a.eval_texts);
    }

    const fs::path out = a.out;
    fs::create_directories(out / "plots");
    std::ofstream metrics(out / "metrics.jsonl", std::ios::trunc);
    std::ofstream eval_log;
    TrainHooks hooks;
    hooks.metrics = &metrics;
    hooks.log_wall_time = !a.deterministic_log;
    const std::vector<std::size_t> ks{1, 5, 10};
    auto retrieval = [&](const TrainerState& s) {
        auto ks_here = ks;
        std::erase_if(ks_here, [&](std::size_t k) { return k > std::min(eval->images.rows(), eval->texts.rows()); });
        return retrieval_report(embed_with_head(s, Side::image, eval->images), embed_with_head(s, Side::text, eval->texts),
                                ks_here);
    };
    if (eval) {
        eval_log.open(out / "eval.jsonl", std::ios::trunc);
        hooks.on_eval = [&](const TrainerState& s) {
            nlohmann::json j{{"epoch", s.epoch}, {"step", s.step}};
            for (const auto& row : report::rows_of(retrieval(s))) j[row.metric] = row.value;
            eval_log << j.dump() << "\n";
        };
    }

    TrainerState state = init_state(data, cfg);
    std::printf("training %s heads: %zu pairs, batch %zu, %zu epochs\n", std::string(head_kind_name(cfg.image_head.kind)).c_str(),
                data.size(), cfg.batch_size, cfg.epochs);
    train_epochs(state, data, state.config.epochs, hooks);
    save_checkpoint(state, out / "checkpoint.bin");

    std::vector<report::MetricRow> rows{{"final_loss", state.history.back().loss},
                                        {"first_loss", state.history.front().loss},
                                        {"t", std::exp(static_cast<double>(state.t_log))},
                                        {"b", state.bias}};
    if (eval) {
        for (auto& r : report::rows_of(retrieval(state))) rows.push_back(std::move(r));
    }
    write_metrics(out, rows);
    std::vector<double> losses;
    for (const auto& h : state.history) losses.push_back(h.loss);
    report::write_text(out / "plots" / "loss.svg", report::loss_svg(losses));
    write_run_manifest(out, "train", common, {{"config", to_json(state.config)}, {"images", a.images}, {"texts", a.texts}});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Align frozen unimodal embeddings with lightweight heads and evaluate the result."};
    app.require_subcommand(1, 1);
    app.fallthrough();
    Common common;
    app.add_option("--threads", common.threads, "worker threads (default: SAIL_ALIGN_THREADS or CPU count)");
    auto* seed_opt = app.add_option("--seed", common.seed, "root seed; overrides the config seed for train");

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "summarize an SEB1 file and its manifest");
    inspect->add_option("path", inspect_path)->required();

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "train alignment heads");
    train_cmd->add_option("--config", ta.config, "TOML-style config file")->required();
    train_cmd->add_option("--images", ta.images)->required();
    train_cmd->add_option("--texts", ta.texts)->required();
    train_cmd->add_option("--hq-texts", ta.hq_texts, "high-quality captions for the multi-positive loss");
    train_cmd->add_option("--eval-images", ta.eval_images);
    train_cmd->add_option("--eval-texts", ta.eval_texts);
    train_cmd->add_option("--out", ta.out)->required();
    train_cmd->add_option("--set", ta.overrides, "config override section.key=value (repeatable)");
    train_cmd->add_flag("--deterministic-log", ta.deterministic_log, "omit wall_ms from metrics.jsonl");

    std::string checkpoint, out, images, texts, ks = "1,5,10", text_owner;
    auto* er = app.add_subcommand("eval-retrieval", "image-text retrieval recall@K");
    er->add_option("--images", images)->required();
    er->add_option("--texts", texts)->required();
    er->add_option("--text-owner", text_owner, "labels file mapping each text row to its image row");
    er->add_option("--checkpoint", checkpoint);
    er->add_option("--ks", ks);
    er->add_option("--out", out)->required();

    std::string labels, prompts, prompt_labels;
    auto* ec = app.add_subcommand("eval-classify", "zero-shot classification with prompt-ensemble prototypes");
    ec->add_option("--images", images)->required();
    ec->add_option("--labels", labels)->required();
    ec->add_option("--prompts", prompts)->required();
    ec->add_option("--prompt-labels", prompt_labels)->required();
    ec->add_option("--checkpoint", checkpoint);
    ec->add_option("--out", out)->required();

    std::string train_x, train_y, test_x, test_y, side = "image";
    std::size_t k = 20;
    auto* ek = app.add_subcommand("eval-knn", "k-NN probe accuracy");
    ek->add_option("--train", train_x)->required();
    ek->add_option("--train-labels", train_y)->required();
    ek->add_option("--test", test_x)->required();
    ek->add_option("--test-labels", test_y)->required();
    ek->add_option("--k", k);
    ek->add_option("--checkpoint", checkpoint);
    ek->add_option("--side", side)->check(CLI::IsMember({"image", "text"}));
    ek->add_option("--out", out)->required();

    std::string quads;
    auto* ew = app.add_subcommand("eval-winoground", "text/image/group scores over similarity quads");
    ew->add_option("--quads", quads)->required();
    ew->add_option("--out", out)->required();

    std::string pairs_a, pairs_b;
    auto* em = app.add_subcommand("eval-mmvp", "image-matching score over quads, optional pair cosine analysis");
    em->add_option("--quads", quads)->required();
    em->add_option("--pairs-a", pairs_a);
    em->add_option("--pairs-b", pairs_b);
    em->add_option("--checkpoint", checkpoint);
    em->add_option("--out", out)->required();

    std::string patches, classes, gt;
    auto* es = app.add_subcommand("eval-segment", "open-vocabulary segmentation mIoU");
    es->add_option("--patches", patches)->required();
    es->add_option("--classes", classes)->required();
    es->add_option("--gt", gt)->required();
    es->add_option("--checkpoint", checkpoint);
    es->add_option("--out", out)->required();

    std::string records;
    auto* pr = app.add_subcommand("probe-report", "correlate a predictor score with alignment across models");
    pr->add_option("--records", records)->required();
    pr->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::fprintf(stderr, "error: %s\n", msg.c_str());
        return 1;
    }

    try {
        set_num_threads(common.threads);
        if (seed_opt->count() > 0) ta.seed = common.seed;
        if (*inspect) return cmd_inspect(inspect_path);
        if (*train_cmd) return cmd_train(ta, common);

        const fs::path out_dir = out;
        fs::create_directories(out_dir);
        const auto ckpt = maybe_checkpoint(checkpoint);

        if (*er) {
            std::vector<std::size_t> owner;
            if (!text_owner.empty()) owner = read_labels(text_owner).values;
            const auto rep = retrieval_report(project(ckpt, Side::image, read_embeddings(images)),
                                              project(ckpt, Side::text, read_embeddings(texts)), parse_ks(ks), owner);
            write_metrics(out_dir, report::rows_of(rep));
            write_run_manifest(out_dir, "eval-retrieval", common);
        } else if (*ec) {
            const auto img = project(ckpt, Side::image, read_embeddings(images));
            const auto lab = read_labels(labels);
            const auto protos = build_prototypes(project(ckpt, Side::text, read_embeddings(prompts)), read_labels(prompt_labels));
            for (auto c : protos.degenerate) std::fprintf(stderr, "warning: class %zu has a degenerate prototype\n", c);
            const auto res = zeroshot_classify(img, protos.rows, lab.values);
            write_metrics(out_dir, {{"top1", res.accuracy},
                                    {"n_images", static_cast<double>(img.rows())},
                                    {"degenerate_classes", static_cast<double>(protos.degenerate.size())}});
            write_run_manifest(out_dir, "eval-classify", common);
        } else if (*ek) {
            const Side s = side == "image" ? Side::image : Side::text;
            const auto trl = read_labels(train_y);
            const auto tel = read_labels(test_y);
            LabeledDataset tr{project(ckpt, s, read_embeddings(train_x)), trl.values, trl.n_classes};
            LabeledDataset te{project(ckpt, s, read_embeddings(test_x)), tel.values, tel.n_classes};
            const auto res = knn_classify(tr, te, k);
            write_metrics(out_dir, {{"knn_top1", res.accuracy}, {"k", static_cast<double>(k)}});
            write_run_manifest(out_dir, "eval-knn", common);
        } else if (*ew) {
            const auto rep = winoground_score(report::read_quads_csv(quads));
            write_metrics(out_dir, report::rows_of(rep));
            write_run_manifest(out_dir, "eval-winoground", common);
        } else if (*em) {
            std::vector<report::MetricRow> rows{{"mmvp_score", mmvp_pair_score(report::read_quads_csv(quads))}};
            if (!pairs_a.empty() || !pairs_b.empty()) {
                if (pairs_a.empty() || pairs_b.empty()) throw ConfigError("--pairs-a and --pairs-b go together");
                const auto sum = pair_cosine_analysis(project(ckpt, Side::image, read_embeddings(pairs_a)),
                                                      project(ckpt, Side::image, read_embeddings(pairs_b)));
                rows.push_back({"pair_cos_mean", sum.mean});
                rows.push_back({"pair_cos_min", sum.min});
                rows.push_back({"pair_cos_max", sum.max});
                for (std::size_t d = 0; d < 9; ++d) rows.push_back({"pair_cos_p" + std::to_string((d + 1) * 10), sum.deciles[d]});
                report::write_text(out_dir / "plots" / "pair_cosine.svg",
                                   report::histogram_svg(sum, "image-image cosine similarity"));
                std::string csv = "pair,cosine\n";
                for (std::size_t i = 0; i < sum.cosines.size(); ++i) csv += std::to_string(i) + "," + report::num(sum.cosines[i], 8) + "\n";
                report::write_text(out_dir / "pair_cosines.csv", csv);
            }
            write_metrics(out_dir, rows);
            write_run_manifest(out_dir, "eval-mmvp", common);
        } else if (*es) {
            const auto gt_m = read_embeddings(gt);
            const auto man = read_manifest(gt);
            if (!man || !man->extra.contains("h") || !man->extra.contains("w")) {
                throw FormatError(gt + ": segmentation manifest needs keys h, w, n_classes");
            }
            SegmentationInput in;
            in.h = man->extra.at("h").get<std::size_t>();
            in.w = man->extra.at("w").get<std::size_t>();
            if (gt_m.cols() != 1 || gt_m.rows() != in.h * in.w) throw FormatError(gt + ": expected an h*w x 1 grid");
            for (std::size_t i = 0; i < gt_m.rows(); ++i) {
                const float v = gt_m(i, 0);
                if (v < 0.0f || v != std::floor(v)) throw ValidationError(gt + ": invalid class index at patch " + std::to_string(i));
                in.ground_truth.push_back(static_cast<std::uint32_t>(v));
            }
            in.patch_embeddings = project(ckpt, Side::image, read_embeddings(patches));
            in.class_text_embeddings = project(ckpt, Side::text, read_embeddings(classes));
            if (man->extra.contains("n_classes") && man->extra.at("n_classes").get<std::size_t>() != in.class_text_embeddings.rows()) {
                throw ValidationError(gt + ": n_classes does not match the class embedding rows");
            }
            const auto res = segment(in);
            std::vector<report::MetricRow> rows{{"miou", res.miou}};
            for (const auto& [c, iou] : res.class_iou) rows.push_back({"iou_class_" + std::to_string(c), iou});
            write_metrics(out_dir, rows);
            std::string mask;
            for (std::size_t r = 0; r < in.h; ++r) {
                for (std::size_t c = 0; c < in.w; ++c) mask += (c ? "," : "") + std::to_string(res.mask[r * in.w + c]);
                mask += "\n";
            }
            report::write_text(out_dir / "mask.csv", mask);
            write_run_manifest(out_dir, "eval-segment", common);
        } else if (*pr) {
            const auto rep = probing_report(report::read_probe_records_csv(records));
            report::write_text(out_dir / "report.csv", report::probing_csv(rep));
            report::write_text(out_dir / "report.txt", report::probing_table(rep));
            report::write_text(out_dir / "plots" / "probe.svg", report::probing_svg(rep));
            std::cout << report::probing_table(rep);
            write_run_manifest(out_dir, "probe-report", common);
        }
        return 0;
    } catch (const sail::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 2;
    }
}
