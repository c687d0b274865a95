#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sail/embed_store.hpp"
#include "sail/heads.hpp"
#include "sail/linalg.hpp"
#include "sail/losses.hpp"
#include "sail/optim.hpp"

namespace sail {

enum class Preset { probe, sail };

inline std::string_view preset_name(Preset p) { return p == Preset::probe ? "probe" : "sail"; }

inline Preset parse_preset(std::string_view s) {
    if (s == "probe") return Preset::probe;
    if (s == "sail") return Preset::sail;
    throw ConfigError("unknown preset \"" + std::string(s) + "\" (expected probe or sail)");
}

struct TrainConfig {
    Preset preset = Preset::sail;
    HeadConfig image_head;
    HeadConfig text_head;
    LossConfig loss;
    LionConfig optim;
    std::size_t epochs = 50;
    std::size_t batch_size = 32768;
    std::uint64_t seed = 0;
    std::size_t eval_every = 0;  ///< 0 disables periodic evaluation
    std::string checkpoint_path;

    /// probe: linear heads to 2048 dims, 100 epochs. sail: GLU x8 heads to 1024 dims, 50 epochs.
    /// Both: batch 32768, LION(0.9, 0.99), lr 1e-5, wd 1e-7, t = 20, b = -10,
    /// sigmoid loss over all B^2 pairs with the high-quality caption as a second positive.
    static TrainConfig for_preset(Preset p) {
        TrainConfig c;
        c.preset = p;
        c.loss = LossConfig{LossKind::sigmoid, Normalization::batch_squared, std::log(20.0), -10.0, 100.0, true};
        c.optim = LionConfig{1e-5, 0.9, 0.99, 1e-7};
        c.batch_size = 32768;
        if (p == Preset::probe) {
            c.image_head = HeadConfig{HeadKind::linear, 0, 2048, 1, 0};
            c.epochs = 100;
        } else {
            c.image_head = HeadConfig{HeadKind::glu, 0, 1024, 8, 0};
            c.epochs = 50;
        }
        c.text_head = c.image_head;
        return c;
    }

    void validate() const {
        if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (image_head.out_dim != text_head.out_dim) {
            throw ConfigError("image_head.out_dim (" + std::to_string(image_head.out_dim) + ") != text_head.out_dim (" +
                              std::to_string(text_head.out_dim) + ")");
        }
        if (image_head.expansion < 1 || text_head.expansion < 1) throw ConfigError("head expansion must be >= 1");
        loss.validate();
        optim.validate();
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline nlohmann::json to_json(const HeadConfig& h) {
    return {{"kind", head_kind_name(h.kind)}, {"in_dim", h.in_dim}, {"out_dim", h.out_dim},
            {"expansion", h.expansion}, {"init_seed", h.init_seed}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"preset", preset_name(c.preset)},
            {"image_head", to_json(c.image_head)},
            {"text_head", to_json(c.text_head)},
            {"loss",
             {{"kind", loss_kind_name(c.loss.kind)},
              {"normalization", normalization_name(c.loss.normalization)},
              {"t_log", c.loss.t_log},
              {"bias", c.loss.bias},
              {"t_fixed_infonce", c.loss.t_fixed_infonce},
              {"multi_positive", c.loss.multi_positive}}},
            {"optim",
             {{"lr", c.optim.lr}, {"beta1", c.optim.beta1}, {"beta2", c.optim.beta2}, {"weight_decay", c.optim.weight_decay}}},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"eval_every", c.eval_every},
            {"checkpoint_path", c.checkpoint_path}};
}

inline HeadConfig head_config_from_json(const nlohmann::json& j) {
    return HeadConfig{parse_head_kind(j.at("kind").get<std::string>()), j.at("in_dim").get<std::size_t>(),
                      j.at("out_dim").get<std::size_t>(), j.at("expansion").get<std::size_t>(),
                      j.at("init_seed").get<std::uint64_t>()};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.preset = parse_preset(j.at("preset").get<std::string>());
    c.image_head = head_config_from_json(j.at("image_head"));
    c.text_head = head_config_from_json(j.at("text_head"));
    const auto& l = j.at("loss");
    c.loss = LossConfig{parse_loss_kind(l.at("kind").get<std::string>()),
                        parse_normalization(l.at("normalization").get<std::string>()), l.at("t_log").get<double>(),
                        l.at("bias").get<double>(), l.at("t_fixed_infonce").get<double>(),
                        l.at("multi_positive").get<bool>()};
    const auto& o = j.at("optim");
    c.optim = LionConfig{o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                         o.at("weight_decay").get<double>()};
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_every = j.at("eval_every").get<std::size_t>();
    c.checkpoint_path = j.at("checkpoint_path").get<std::string>();
    return c;
}

/// Per-epoch means. The loss under the other normalization is derived exactly for sigmoid
/// losses (factor B) and absent for InfoNCE.
struct EpochRecord {
    std::uint64_t epoch = 0;
    std::uint64_t step = 0;
    double loss = 0.0;
    std::optional<double> loss_batch;
    std::optional<double> loss_batch_squared;
    double t = 0.0;
    double b = 0.0;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainerState {
    TrainConfig config;
    HeadParams<float> image_head;
    HeadParams<float> text_head;
    float t_log = 0.0f;
    float bias = 0.0f;
    LionState<float> optim;
    std::uint64_t epoch = 0;
    std::uint64_t step = 0;
    std::vector<EpochRecord> history;

    friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

struct TrainHooks {
    std::ostream* metrics = nullptr;  ///< receives one NDJSON record per epoch
    bool log_wall_time = true;        ///< false drops wall_ms so logs are byte-reproducible
    std::function<void(const TrainerState&)> on_eval;
};

/// Fills in head input dims from the data and derives head init seeds from the root seed.
inline TrainerState init_state(const PairedDataset& data, TrainConfig cfg) {
    data.validate();
    if (cfg.image_head.in_dim == 0) cfg.image_head.in_dim = data.images.cols();
    if (cfg.text_head.in_dim == 0) cfg.text_head.in_dim = data.texts.cols();
    cfg.image_head.init_seed = derive_seed(cfg.seed, 0x1A);
    cfg.text_head.init_seed = derive_seed(cfg.seed, 0x7E);
    cfg.validate();
    TrainerState s;
    s.config = cfg;
    s.image_head = init_head<float>(cfg.image_head);
    s.text_head = init_head<float>(cfg.text_head);
    s.t_log = static_cast<float>(cfg.loss.t_log);
    s.bias = static_cast<float>(cfg.loss.bias);
    s.optim.config = cfg.optim;
    return s;
}

namespace detail {

inline std::uint32_t dataset_crc(const PairedDataset& d) {
    auto bytes = [](const EmbeddingMatrix& m) {
        return std::span(reinterpret_cast<const std::uint8_t*>(m.data()), m.size() * sizeof(float));
    };
    std::uint32_t c = crc32_ieee(bytes(d.images));
    c = crc32_ieee(bytes(d.texts), c);
    if (d.hq_texts) c = crc32_ieee(bytes(*d.hq_texts), c);
    return c;
}

inline void write_metric(std::ostream& os, const EpochRecord& r, std::optional<double> wall_ms) {
    nlohmann::json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["loss_batch"] = r.loss_batch ? nlohmann::json(*r.loss_batch) : nlohmann::json(nullptr);
    j["loss_batch_squared"] = r.loss_batch_squared ? nlohmann::json(*r.loss_batch_squared) : nlohmann::json(nullptr);
    j["t"] = r.t;
    j["b"] = r.b;
    if (wall_ms) j["wall_ms"] = *wall_ms;
    os << j.dump() << '\n';
}

} // namespace detail

/// Continues training until state.epoch == until_epoch. Only the heads and (t_log, b)
/// receive gradients; the dataset embeddings are never modified.
inline void train_epochs(TrainerState& s, const PairedDataset& data, std::uint64_t until_epoch, const TrainHooks& hooks = {}) {
    data.validate();
    const auto& cfg = s.config;
    const bool multi = cfg.loss.multi_positive;
    if (multi && !data.hq_texts) throw ConfigError("multi-positive loss requested but the dataset has no hq_texts");
    if (data.images.cols() != cfg.image_head.in_dim) {
        throw ShapeError("image embeddings have dim " + std::to_string(data.images.cols()) + ", image head expects " +
                         std::to_string(cfg.image_head.in_dim));
    }
    if (data.texts.cols() != cfg.text_head.in_dim) {
        throw ShapeError("text embeddings have dim " + std::to_string(data.texts.cols()) + ", text head expects " +
                         std::to_string(cfg.text_head.in_dim));
    }
    if (data.size() < cfg.batch_size) {
        throw ConfigError("dataset has " + std::to_string(data.size()) + " rows, fewer than batch_size " +
                          std::to_string(cfg.batch_size));
    }
    const std::uint32_t crc_before = detail::dataset_crc(data);
    const std::size_t B = cfg.batch_size;

    while (s.epoch < until_epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const BatchPlan plan = make_batch_plan(data.size(), B, cfg.seed, s.epoch);
        double loss_sum = 0.0;
        for (std::size_t k = 0; k < plan.n_batches(); ++k) {
            const auto idx = plan.batch(k);
            const auto xb = gather_rows(data.images, idx);
            auto tb = gather_rows(data.texts, idx);
            if (multi) tb = vstack(tb, gather_rows(*data.hq_texts, idx));

            auto fx = head_forward(s.image_head, xb);
            auto ft = head_forward(s.text_head, tb);

            LossConfig lc = cfg.loss;
            lc.t_log = s.t_log;
            lc.bias = s.bias;
            double value = 0.0, d_t_log = 0.0, d_b = 0.0;
            Matrix<float> dx, dt;
            if (multi) {
                auto mp = multi_positive_loss(fx.output, slice_rows(ft.output, 0, B), slice_rows(ft.output, B, 2 * B), lc);
                value = mp.value;
                d_t_log = mp.d_t_log;
                d_b = mp.d_b;
                dx = std::move(mp.d_x);
                dt = vstack(mp.d_y, mp.d_y_hq);
            } else {
                auto lo = contrastive_loss(fx.output, ft.output, lc);
                value = lo.value;
                d_t_log = lo.d_t_log;
                d_b = lo.d_b;
                dx = std::move(lo.d_x);
                dt = std::move(lo.d_y);
            }
            if (!std::isfinite(value)) throw TrainingError("non-finite loss at step " + std::to_string(s.step));

            auto gx = head_backward(s.image_head, fx.cache, dx);
            auto gt = head_backward(s.text_head, ft.cache, dt);

            const float g_t_log = static_cast<float>(d_t_log);
            const float g_b = static_cast<float>(d_b);
            std::vector<ParamRef<float>> params;
            for (std::size_t i = 0; i < gx.tensors.size(); ++i) {
                params.push_back({"head.image." + s.image_head.tensors[i].name, s.image_head[i].values(),
                                  gx.tensors[i].value.values(), true});
            }
            for (std::size_t i = 0; i < gt.tensors.size(); ++i) {
                params.push_back({"head.text." + s.text_head.tensors[i].name, s.text_head[i].values(),
                                  gt.tensors[i].value.values(), true});
            }
            params.push_back({"loss.t_log", std::span(&s.t_log, 1), std::span(&g_t_log, 1), false});
            params.push_back({"loss.b", std::span(&s.bias, 1), std::span(&g_b, 1), false});
            lion_step(std::span(params), s.optim);

            ++s.step;
            loss_sum += value;
        }

        EpochRecord rec;
        rec.epoch = s.epoch;
        rec.step = s.step;
        rec.loss = loss_sum / static_cast<double>(plan.n_batches());
        if (cfg.loss.kind == LossKind::sigmoid) {
            const double Bd = static_cast<double>(B);
            rec.loss_batch = cfg.loss.normalization == Normalization::batch ? rec.loss : rec.loss * Bd;
            rec.loss_batch_squared = cfg.loss.normalization == Normalization::batch ? rec.loss / Bd : rec.loss;
        }
        rec.t = std::exp(static_cast<double>(s.t_log));
        rec.b = s.bias;
        s.history.push_back(rec);
        ++s.epoch;

        if (hooks.metrics) {
            const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            detail::write_metric(*hooks.metrics, rec, hooks.log_wall_time ? std::optional<double>(ms) : std::nullopt);
        }
        if (hooks.on_eval && cfg.eval_every > 0 && s.epoch % cfg.eval_every == 0) hooks.on_eval(s);
    }

    if (detail::dataset_crc(data) != crc_before) throw TrainingError("frozen embeddings were modified during training");
}

inline TrainerState train(const PairedDataset& data, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
    TrainerState s = init_state(data, cfg);
    train_epochs(s, data, s.config.epochs, hooks);
    return s;
}

/// Inference path used by every evaluation: L2-normalized head output.
inline EmbeddingMatrix embed_with_head(const TrainerState& s, Side side, const EmbeddingMatrix& x) {
    const auto& head = side == Side::image ? s.image_head : s.text_head;
    if (x.cols() != head.config.in_dim) {
        throw ShapeError(std::string(side_name(side)) + " embeddings have dim " + std::to_string(x.cols()) +
                         ", head expects " + std::to_string(head.config.in_dim));
    }
    return l2_normalize(head_forward(head, x).output).rows;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "SCK1" | version u32 = 1 | header_len u64 | header JSON (UTF-8)
//   | n_tensors u32 | per tensor: name_len u32, name, n_rows u64, dim u32, f32 payload
//   | CRC32 of everything above
// Tensors: head.<side>.<name>, loss.t_log, loss.b, optim.<param>.m

inline constexpr std::array<char, 4> kCheckpointMagic{'S', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> encode_checkpoint(const TrainerState& s) {
    nlohmann::json header;
    header["format"] = "sail-checkpoint";
    header["preset"] = preset_name(s.config.preset);
    header["config"] = to_json(s.config);
    header["epoch"] = s.epoch;
    header["step"] = s.step;
    header["optim_step"] = s.optim.step;
    auto& hist = header["history"] = nlohmann::json::array();
    for (const auto& r : s.history) {
        hist.push_back({{"epoch", r.epoch}, {"step", r.step}, {"loss", r.loss},
                        {"loss_batch", r.loss_batch ? nlohmann::json(*r.loss_batch) : nlohmann::json(nullptr)},
                        {"loss_batch_squared", r.loss_batch_squared ? nlohmann::json(*r.loss_batch_squared) : nlohmann::json(nullptr)},
                        {"t", r.t}, {"b", r.b}});
    }
    const std::string text = header.dump();

    struct Entry {
        std::string name;
        std::size_t rows, cols;
        std::span<const float> data;
    };
    std::vector<Entry> entries;
    std::map<std::string, std::pair<std::size_t, std::size_t>> shapes;
    auto add_head = [&](const char* side, const HeadParams<float>& h) {
        for (const auto& t : h.tensors) {
            std::string name = std::string("head.") + side + "." + t.name;
            shapes[name] = {t.value.rows(), t.value.cols()};
            entries.push_back({std::move(name), t.value.rows(), t.value.cols(), t.value.values()});
        }
    };
    add_head("image", s.image_head);
    add_head("text", s.text_head);
    entries.push_back({"loss.t_log", 1, 1, std::span(&s.t_log, 1)});
    entries.push_back({"loss.b", 1, 1, std::span(&s.bias, 1)});
    shapes["loss.t_log"] = shapes["loss.b"] = {1, 1};
    for (const auto& [name, m] : s.optim.momentum) {
        auto it = shapes.find(name);
        auto shape = std::pair<std::size_t, std::size_t>{1, m.size()};
        if (it != shapes.end() && it->second.first * it->second.second == m.size()) shape = it->second;
        entries.push_back({"optim." + name + ".m", shape.first, shape.second, m});
    }

    detail::ByteWriter w;
    w.raw(kCheckpointMagic.data(), 4);
    w.u32(kCheckpointVersion);
    w.u64(text.size());
    w.raw(text.data(), text.size());
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        w.u32(static_cast<std::uint32_t>(e.name.size()));
        w.raw(e.name.data(), e.name.size());
        w.u64(e.rows);
        w.u32(static_cast<std::uint32_t>(e.cols));
        w.f32s(e.data);
    }
    w.u32(crc32_ieee(w.bytes()));
    return std::move(w.bytes());
}

inline TrainerState decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& what) {
    if (bytes.size() < 4) throw TruncatedError(what + ": truncated checkpoint");
    {
        const std::uint32_t computed = crc32_ieee(bytes.first(bytes.size() - 4));
        std::uint32_t stored;
        std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
        if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin())) {
            throw FormatError(what + ": not a checkpoint (bad magic)");
        }
        if (stored != computed) throw ChecksumError(what, stored, computed);
    }
    detail::ByteReader r(bytes.first(bytes.size() - 4), what);
    r.raw(4);
    if (auto v = r.u32(); v != kCheckpointVersion) throw VersionError(what + ": unsupported checkpoint version " + std::to_string(v));
    const auto hlen = r.u64();
    auto htext = r.raw(static_cast<std::size_t>(hlen));

    TrainerState s;
    try {
        const auto header = nlohmann::json::parse(htext.begin(), htext.end());
        s.config = train_config_from_json(header.at("config"));
        s.epoch = header.at("epoch").get<std::uint64_t>();
        s.step = header.at("step").get<std::uint64_t>();
        s.optim.step = header.at("optim_step").get<std::uint64_t>();
        for (const auto& h : header.at("history")) {
            EpochRecord rec;
            rec.epoch = h.at("epoch").get<std::uint64_t>();
            rec.step = h.at("step").get<std::uint64_t>();
            rec.loss = h.at("loss").get<double>();
            if (!h.at("loss_batch").is_null()) rec.loss_batch = h.at("loss_batch").get<double>();
            if (!h.at("loss_batch_squared").is_null()) rec.loss_batch_squared = h.at("loss_batch_squared").get<double>();
            rec.t = h.at("t").get<double>();
            rec.b = h.at("b").get<double>();
            s.history.push_back(rec);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(what + ": bad checkpoint header: " + e.what());
    }
    s.optim.config = s.config.optim;

    std::map<std::string, Matrix<float>> tensors;
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto name_len = r.u32();
        auto name_bytes = r.raw(name_len);
        std::string name(name_bytes.begin(), name_bytes.end());
        const auto rows = r.u64();
        const auto cols = r.u32();
        auto payload = r.raw(static_cast<std::size_t>(rows * cols * sizeof(float)));
        Matrix<float> m(static_cast<std::size_t>(rows), cols);
        std::memcpy(m.data(), payload.data(), payload.size());
        tensors.emplace(std::move(name), std::move(m));
    }
    if (r.remaining() != 0) throw FormatError(what + ": trailing bytes in checkpoint");

    auto take = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw ShapeError(what + ": missing tensor " + name);
        if (it->second.rows() != rows || it->second.cols() != cols) {
            throw ShapeError(what + ": tensor " + name + " has shape " + shape_str(it->second) + ", config expects " +
                             shape_str(rows, cols));
        }
        Matrix<float> m = std::move(it->second);
        tensors.erase(it);
        return m;
    };
    auto load_head = [&](const char* side, const HeadConfig& hc) {
        HeadParams<float> h{hc, {}};
        for (const auto& shape : head_tensor_shapes(hc)) {
            h.tensors.push_back({shape.name, take(std::string("head.") + side + "." + shape.name, shape.rows, shape.cols)});
        }
        return h;
    };
    s.image_head = load_head("image", s.config.image_head);
    s.text_head = load_head("text", s.config.text_head);
    s.t_log = take("loss.t_log", 1, 1)(0, 0);
    s.bias = take("loss.b", 1, 1)(0, 0);
    for (auto& [name, m] : tensors) {
        if (name.rfind("optim.", 0) != 0 || name.size() < 8 || name.substr(name.size() - 2) != ".m") {
            throw FormatError(what + ": unexpected tensor " + name);
        }
        const std::string param = name.substr(6, name.size() - 8);
        std::vector<float> values(m.values().begin(), m.values().end());
        s.optim.momentum.emplace(param, std::move(values));
    }
    return s;
}

inline void save_checkpoint(const TrainerState& s, const std::filesystem::path& path) {
    detail::write_file(path, encode_checkpoint(s));
}

inline TrainerState load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(detail::read_file(path), path.string());
}

} // namespace sail
