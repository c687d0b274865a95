#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sail/linalg.hpp"
#include "sail/matrix.hpp"
#include "sail/rng.hpp"

namespace sail {

enum class HeadKind { linear, mlp, glu };

inline std::string_view head_kind_name(HeadKind k) {
    switch (k) {
    case HeadKind::linear: return "linear";
    case HeadKind::mlp: return "mlp";
    case HeadKind::glu: return "glu";
    }
    return "?";
}

inline HeadKind parse_head_kind(std::string_view s) {
    if (s == "linear") return HeadKind::linear;
    if (s == "mlp") return HeadKind::mlp;
    if (s == "glu") return HeadKind::glu;
    throw ConfigError("unknown head kind \"" + std::string(s) + "\" (expected linear, mlp or glu)");
}

struct HeadConfig {
    HeadKind kind = HeadKind::glu;
    std::size_t in_dim = 0;
    std::size_t out_dim = 1024;
    std::size_t expansion = 8;  ///< hidden width = expansion * in_dim; unused for linear
    std::uint64_t init_seed = 0;

    std::size_t hidden_dim() const noexcept { return expansion * in_dim; }

    void validate() const {
        if (in_dim < 1 || out_dim < 1) throw ConfigError("head dims must be >= 1");
        if (expansion < 1) throw ConfigError("head expansion must be >= 1");
    }

    friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

template <class T>
struct NamedTensor {
    std::string name;
    Matrix<T> value;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Tensor order per kind:
///   linear: W (out x in), c (1 x out)
///   mlp:    W1 (h x in), c1 (1 x h), W2 (out x h), c2 (1 x out)
///   glu:    W_gate (h x in), W_up (h x in), W_down (out x h), c_down (1 x out)
template <class T>
struct HeadParams {
    HeadConfig config;
    std::vector<NamedTensor<T>> tensors;

    Matrix<T>& operator[](std::size_t i) { return tensors[i].value; }
    const Matrix<T>& operator[](std::size_t i) const { return tensors[i].value; }

    template <class U>
    HeadParams<U> cast() const {
        HeadParams<U> out{config, {}};
        for (const auto& t : tensors) out.tensors.push_back({t.name, t.value.template cast<U>()});
        return out;
    }

    friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

struct TensorShape {
    std::string name;
    std::size_t rows;
    std::size_t cols;
};

inline std::vector<TensorShape> head_tensor_shapes(const HeadConfig& c) {
    const std::size_t h = c.hidden_dim();
    switch (c.kind) {
    case HeadKind::linear: return {{"W", c.out_dim, c.in_dim}, {"c", 1, c.out_dim}};
    case HeadKind::mlp: return {{"W1", h, c.in_dim}, {"c1", 1, h}, {"W2", c.out_dim, h}, {"c2", 1, c.out_dim}};
    case HeadKind::glu:
        return {{"W_gate", h, c.in_dim}, {"W_up", h, c.in_dim}, {"W_down", c.out_dim, h}, {"c_down", 1, c.out_dim}};
    }
    return {};
}

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with one SplitMix64 stream per tensor; biases zero.
template <class T = float>
HeadParams<T> init_head(const HeadConfig& cfg) {
    cfg.validate();
    HeadParams<T> p{cfg, {}};
    std::uint64_t tag = 0;
    for (const auto& s : head_tensor_shapes(cfg)) {
        Matrix<T> m(s.rows, s.cols);
        if (s.rows > 1) {  // weight matrix; biases are 1 x n and stay zero
            const double bound = 1.0 / std::sqrt(static_cast<double>(s.cols));
            SplitMix64 g(derive_seed(cfg.init_seed, tag));
            for (auto& v : m.values()) v = static_cast<T>((2.0 * g.uniform_open() - 1.0) * bound);
        }
        p.tensors.push_back({s.name, std::move(m)});
        ++tag;
    }
    return p;
}

template <class T>
void check_head_shapes(const HeadParams<T>& p, const std::string& what) {
    const auto shapes = head_tensor_shapes(p.config);
    if (shapes.size() != p.tensors.size()) throw ShapeError(what + ": wrong tensor count for head kind");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const auto& t = p.tensors[i];
        if (t.name != shapes[i].name || t.value.rows() != shapes[i].rows || t.value.cols() != shapes[i].cols) {
            throw ShapeError(what + ": tensor " + t.name + " has shape " + shape_str(t.value) + ", config expects " +
                             shapes[i].name + " " + shape_str(shapes[i].rows, shapes[i].cols));
        }
    }
}

template <class T>
struct ForwardCache {
    HeadKind kind = HeadKind::linear;
    Matrix<T> input;
    Matrix<T> pre;     ///< mlp: hidden pre-activation; glu: gate pre-activation
    Matrix<T> up;      ///< glu only
    Matrix<T> hidden;  ///< post-activation input to the output projection
};

template <class T>
struct HeadForward {
    Matrix<T> output;
    ForwardCache<T> cache;
};

template <class T>
struct HeadGradients {
    std::vector<NamedTensor<T>> tensors;  ///< same order and shapes as HeadParams::tensors
    Matrix<T> d_input;
};

namespace detail {

template <class T>
void add_bias(Matrix<T>& y, const Matrix<T>& bias) {
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto r = y.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] = static_cast<T>(r[j] + bias(0, j));
    }
}

template <class T>
Matrix<T> bias_grad(const Matrix<T>& dy) {
    auto s = sum_rows(dy);
    Matrix<T> g(1, dy.cols());
    for (std::size_t j = 0; j < s.size(); ++j) g(0, j) = static_cast<T>(s[j]);
    return g;
}

template <class T>
T relu(T v) noexcept {
    return v > T{0} ? v : T{0};
}

} // namespace detail

/// linear: y = x W^T + c
/// mlp:    y = ReLU(x W1^T + c1) W2^T + c2
/// glu:    y = (ReLU(x W_gate^T) * (x W_up^T)) W_down^T + c_down
template <class T>
HeadForward<T> head_forward(const HeadParams<T>& p, const Matrix<T>& x) {
    const auto& cfg = p.config;
    if (x.cols() != cfg.in_dim) {
        throw ShapeError("head_forward: input dim " + std::to_string(x.cols()) + " != head in_dim " + std::to_string(cfg.in_dim));
    }
    HeadForward<T> f;
    f.cache.kind = cfg.kind;
    f.cache.input = x;
    switch (cfg.kind) {
    case HeadKind::linear:
        f.output = matmul_abt(x, p[0]);
        detail::add_bias(f.output, p[1]);
        break;
    case HeadKind::mlp: {
        f.cache.pre = matmul_abt(x, p[0]);
        detail::add_bias(f.cache.pre, p[1]);
        f.cache.hidden = Matrix<T>(x.rows(), cfg.hidden_dim());
        for (std::size_t i = 0; i < f.cache.pre.size(); ++i) f.cache.hidden.data()[i] = detail::relu(f.cache.pre.data()[i]);
        f.output = matmul_abt(f.cache.hidden, p[2]);
        detail::add_bias(f.output, p[3]);
        break;
    }
    case HeadKind::glu: {
        f.cache.pre = matmul_abt(x, p[0]);
        f.cache.up = matmul_abt(x, p[1]);
        f.cache.hidden = Matrix<T>(x.rows(), cfg.hidden_dim());
        for (std::size_t i = 0; i < f.cache.pre.size(); ++i) {
            f.cache.hidden.data()[i] = detail::relu(f.cache.pre.data()[i]) * f.cache.up.data()[i];
        }
        f.output = matmul_abt(f.cache.hidden, p[2]);
        detail::add_bias(f.output, p[3]);
        break;
    }
    }
    return f;
}

/// Exact gradients of head_forward; ReLU'(0) = 0.
template <class T>
HeadGradients<T> head_backward(const HeadParams<T>& p, const ForwardCache<T>& cache, const Matrix<T>& dy) {
    const auto& cfg = p.config;
    const auto& x = cache.input;
    if (cache.kind != cfg.kind || x.cols() != cfg.in_dim) throw ShapeError("head_backward: cache does not match head");
    if (dy.rows() != x.rows() || dy.cols() != cfg.out_dim) {
        throw ShapeError("head_backward: dL/dy is " + shape_str(dy) + ", expected " + shape_str(x.rows(), cfg.out_dim));
    }
    HeadGradients<T> g;
    auto push = [&](std::size_t idx, Matrix<T> m) { g.tensors.push_back({p.tensors[idx].name, std::move(m)}); };

    switch (cfg.kind) {
    case HeadKind::linear:
        push(0, matmul_atb(dy, x));
        push(1, detail::bias_grad(dy));
        g.d_input = matmul(dy, p[0]);
        break;
    case HeadKind::mlp: {
        if (cache.hidden.rows() != x.rows()) throw ShapeError("head_backward: cache does not match head");
        Matrix<T> dh = matmul(dy, p[2]);
        for (std::size_t i = 0; i < dh.size(); ++i) {
            if (!(cache.pre.data()[i] > T{0})) dh.data()[i] = T{0};
        }
        push(0, matmul_atb(dh, x));
        push(1, detail::bias_grad(dh));
        push(2, matmul_atb(dy, cache.hidden));
        push(3, detail::bias_grad(dy));
        g.d_input = matmul(dh, p[0]);
        break;
    }
    case HeadKind::glu: {
        if (cache.hidden.rows() != x.rows()) throw ShapeError("head_backward: cache does not match head");
        const Matrix<T> da = matmul(dy, p[2]);
        Matrix<T> dgate(da.rows(), da.cols());
        Matrix<T> dup(da.rows(), da.cols());
        for (std::size_t i = 0; i < da.size(); ++i) {
            const T gate = cache.pre.data()[i];
            const bool open = gate > T{0};
            dgate.data()[i] = open ? da.data()[i] * cache.up.data()[i] : T{0};
            dup.data()[i] = open ? da.data()[i] * gate : T{0};
        }
        push(0, matmul_atb(dgate, x));
        push(1, matmul_atb(dup, x));
        push(2, matmul_atb(dy, cache.hidden));
        push(3, detail::bias_grad(dy));
        g.d_input = matmul(dgate, p[0]);
        const Matrix<T> dx_up = matmul(dup, p[1]);
        for (std::size_t i = 0; i < g.d_input.size(); ++i) g.d_input.data()[i] += dx_up.data()[i];
        break;
    }
    }
    return g;
}

} // namespace sail
