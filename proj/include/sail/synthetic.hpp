#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "sail/embed_store.hpp"
#include "sail/rng.hpp"

namespace sail {

/// Two frozen "encoders" viewing a shared latent z ~ N(0, I):
///   image = A z + noise * eps,  text = tanh(B z) + noise * eps'
/// A and B have N(0, 1/latent_dim) entries so every coordinate of A z and B z has unit variance.
/// hq_texts is a second independent noisy draw of tanh(B z).
struct SyntheticSpec {
    std::size_t latent_dim = 32;
    std::size_t image_dim = 64;
    std::size_t text_dim = 48;
    std::size_t n_train = 8000;
    std::size_t n_test = 1000;
    double noise = 0.05;
    std::uint64_t seed = 0;
};

struct SyntheticSplit {
    PairedDataset train;
    PairedDataset test;
};

inline SyntheticSplit make_synthetic_alignment(const SyntheticSpec& spec) {
    SplitMix64 g(derive_seed(spec.seed, 0x5E));
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
    Matrix<double> A(spec.image_dim, spec.latent_dim), B(spec.text_dim, spec.latent_dim);
    for (auto& v : A.values()) v = g.normal() * scale;
    for (auto& v : B.values()) v = g.normal() * scale;

    auto make = [&](std::size_t n, const std::string& prefix) {
        PairedDataset d;
        d.images = EmbeddingMatrix(n, spec.image_dim);
        d.texts = EmbeddingMatrix(n, spec.text_dim);
        d.hq_texts = EmbeddingMatrix(n, spec.text_dim);
        std::vector<double> z(spec.latent_dim);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto& v : z) v = g.normal();
            for (std::size_t r = 0; r < spec.image_dim; ++r) {
                double s = 0.0;
                for (std::size_t k = 0; k < spec.latent_dim; ++k) s += A(r, k) * z[k];
                d.images(i, r) = static_cast<float>(s + spec.noise * g.normal());
            }
            for (std::size_t r = 0; r < spec.text_dim; ++r) {
                double s = 0.0;
                for (std::size_t k = 0; k < spec.latent_dim; ++k) s += B(r, k) * z[k];
                const double clean = std::tanh(s);
                d.texts(i, r) = static_cast<float>(clean + spec.noise * g.normal());
                (*d.hq_texts)(i, r) = static_cast<float>(clean + spec.noise * g.normal());
            }
            d.ids.push_back(prefix + std::to_string(i));
        }
        return d;
    };
    SyntheticSplit s;
    s.train = make(spec.n_train, "train-");
    s.test = make(spec.n_test, "test-");
    return s;
}

} // namespace sail
