#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sail/errors.hpp"

namespace sail {

struct LionConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double weight_decay = 1e-7;

    void validate() const {
        if (!(lr >= 0.0)) throw ConfigError("lion lr must be >= 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw ConfigError("lion betas must lie in [0, 1)");
        }
        if (!(weight_decay >= 0.0)) throw ConfigError("lion weight_decay must be >= 0");
    }

    friend bool operator==(const LionConfig&, const LionConfig&) = default;
};

/// Momentum buffers keyed by parameter name; created zero-filled on first use.
template <class T>
struct LionState {
    LionConfig config;
    std::map<std::string, std::vector<T>> momentum;
    std::uint64_t step = 0;

    friend bool operator==(const LionState&, const LionState&) = default;
};

template <class T>
struct ParamRef {
    std::string name;
    std::span<T> value;
    std::span<const T> grad;
    bool decay = true;  ///< false for the loss temperature and bias
};

template <class T>
constexpr T sign_of(T v) noexcept {
    return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0});
}

/// One LION update, in place:
///   u  = sign(beta1 m + (1 - beta1) g)
///   p <- p - lr (u + wd p)
///   m <- beta2 m + (1 - beta2) g
/// Every gradient is checked before anything is mutated.
template <class T>
void lion_step(std::span<ParamRef<T>> params, LionState<T>& state) {
    state.config.validate();
    for (const auto& p : params) {
        if (p.value.size() != p.grad.size()) {
            throw ShapeError("lion_step: " + p.name + " has " + std::to_string(p.value.size()) + " values but " +
                             std::to_string(p.grad.size()) + " gradients");
        }
        if (auto it = state.momentum.find(p.name); it != state.momentum.end() && it->second.size() != p.value.size()) {
            throw ShapeError("lion_step: momentum buffer for " + p.name + " has wrong size");
        }
        for (std::size_t i = 0; i < p.grad.size(); ++i) {
            if (!std::isfinite(p.grad[i])) {
                throw TrainingError("lion_step: non-finite gradient in " + p.name + " at index " + std::to_string(i));
            }
        }
    }
    const T lr = static_cast<T>(state.config.lr);
    const T b1 = static_cast<T>(state.config.beta1);
    const T b2 = static_cast<T>(state.config.beta2);
    for (auto& p : params) {
        auto& m = state.momentum[p.name];
        if (m.empty()) m.assign(p.value.size(), T{0});
        const T wd = p.decay ? static_cast<T>(state.config.weight_decay) : T{0};
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const T g = p.grad[i];
            const T u = sign_of(b1 * m[i] + (T{1} - b1) * g);
            p.value[i] = p.value[i] - lr * (u + wd * p.value[i]);
            m[i] = b2 * m[i] + (T{1} - b2) * g;
        }
    }
    ++state.step;
}

} // namespace sail
