#pragma once

#include <zlib.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sail/errors.hpp"
#include "sail/matrix.hpp"
#include "sail/rng.hpp"

namespace sail {

static_assert(std::endian::native == std::endian::little, "SEB1 I/O assumes a little-endian host");

// SEB1 layout, all little-endian:
//   "SEB1" | version u32 = 1 | dtype u32 = 0 (f32) | n_rows u64 | dim u32 | reserved u32 = 0
//   payload: n_rows * dim f32
//   footer: CRC32 (IEEE) of header + payload
inline constexpr std::array<char, 4> kSeb1Magic{'S', 'E', 'B', '1'};
inline constexpr std::uint32_t kSeb1Version = 1;
inline constexpr std::uint32_t kSeb1DtypeF32 = 0;
inline constexpr std::size_t kSeb1HeaderBytes = 28;
inline constexpr std::size_t kSeb1FooterBytes = 4;

inline std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes, std::uint32_t crc = 0) {
    uLong c = crc;
    // zlib takes uInt lengths; feed in bounded pieces.
    constexpr std::size_t kPiece = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kPiece) {
        const std::size_t len = std::min(kPiece, bytes.size() - off);
        c = ::crc32(c, bytes.data() + off, static_cast<uInt>(len));
    }
    return static_cast<std::uint32_t>(c);
}

namespace detail {

class ByteWriter {
public:
    void u32(std::uint32_t v) { put(&v, 4); }
    void u64(std::uint64_t v) { put(&v, 8); }
    void raw(const void* p, std::size_t n) { put(p, n); }
    void f32s(std::span<const float> v) { put(v.data(), v.size() * sizeof(float)); }
    std::vector<std::uint8_t>& bytes() { return buf_; }

private:
    void put(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    template <class V>
    V get() {
        need(sizeof(V));
        V v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
        pos_ += sizeof(V);
        return v;
    }
    void need(std::size_t n) const {
        if (remaining() < n) throw TruncatedError(what_ + ": truncated at byte " + std::to_string(pos_));
    }

    std::span<const std::uint8_t> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> buf(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size))) {
        throw IoError(path.string() + ": read failed");
    }
    return buf;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string() + ": write failed");
}

} // namespace detail

inline void validate_finite(const EmbeddingMatrix& m, const std::string& what) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!std::isfinite(m.data()[i])) {
            throw ValidationError(what + ": non-finite value at row " + std::to_string(i / std::max<std::size_t>(1, m.cols())) +
                                  ", col " + std::to_string(i % std::max<std::size_t>(1, m.cols())));
        }
    }
}

/// Serializes to the exact on-disk SEB1 byte image.
inline std::vector<std::uint8_t> encode_seb1(const EmbeddingMatrix& m) {
    validate_finite(m, "encode_seb1");
    if (m.cols() > UINT32_MAX) throw ValidationError("encode_seb1: dim exceeds u32");
    detail::ByteWriter w;
    w.raw(kSeb1Magic.data(), 4);
    w.u32(kSeb1Version);
    w.u32(kSeb1DtypeF32);
    w.u64(m.rows());
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.u32(0);
    w.f32s(m.values());
    w.u32(crc32_ieee(w.bytes()));
    return std::move(w.bytes());
}

struct Seb1Info {
    std::uint64_t n_rows = 0;
    std::uint32_t dim = 0;
    std::uint32_t stored_crc = 0;
    std::uint32_t computed_crc = 0;
    bool crc_ok() const noexcept { return stored_crc == computed_crc; }
};

/// Parses an SEB1 byte image. With verify_crc=false the footer is reported in info but not enforced.
inline EmbeddingMatrix decode_seb1(std::span<const std::uint8_t> bytes, const std::string& what,
                                   Seb1Info* info = nullptr, bool verify_crc = true) {
    detail::ByteReader r(bytes, what);
    auto magic = r.raw(4);
    if (!std::equal(magic.begin(), magic.end(), kSeb1Magic.begin())) {
        throw FormatError(what + ": bad magic \"" + std::string(magic.begin(), magic.end()) + "\" (expected SEB1)");
    }
    if (auto v = r.u32(); v != kSeb1Version) {
        throw VersionError(what + ": unsupported SEB1 version " + std::to_string(v));
    }
    if (auto dt = r.u32(); dt != kSeb1DtypeF32) throw FormatError(what + ": unsupported dtype " + std::to_string(dt));
    const std::uint64_t n_rows = r.u64();
    const std::uint32_t dim = r.u32();
    if (auto reserved = r.u32(); reserved != 0) throw FormatError(what + ": reserved header field is nonzero");

    const std::uint64_t payload_bytes = n_rows * dim * sizeof(float);
    if (dim != 0 && payload_bytes / dim / sizeof(float) != n_rows) throw FormatError(what + ": row count overflows");
    if (r.remaining() < payload_bytes + kSeb1FooterBytes) {
        throw TruncatedError(what + ": truncated (need " + std::to_string(kSeb1HeaderBytes + payload_bytes + kSeb1FooterBytes) +
                             " bytes, have " + std::to_string(bytes.size()) + ")");
    }
    if (r.remaining() > payload_bytes + kSeb1FooterBytes) throw FormatError(what + ": trailing bytes after footer");

    auto payload = r.raw(static_cast<std::size_t>(payload_bytes));
    const std::uint32_t stored = r.u32();
    const std::uint32_t computed = crc32_ieee(bytes.first(kSeb1HeaderBytes + payload.size()));
    if (info) *info = Seb1Info{n_rows, dim, stored, computed};
    if (verify_crc && stored != computed) throw ChecksumError(what, stored, computed);

    EmbeddingMatrix m(static_cast<std::size_t>(n_rows), dim);
    std::memcpy(m.data(), payload.data(), payload.size());
    validate_finite(m, what);
    return m;
}

/// Writes SEB1; nothing touches the disk if validation fails.
inline void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    auto bytes = encode_seb1(m);
    detail::write_file(path, bytes);
}

inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path, Seb1Info* info = nullptr) {
    auto bytes = detail::read_file(path);
    return decode_seb1(bytes, path.string(), info);
}

// ---------------------------------------------------------------------------
// Sidecar manifests

inline std::filesystem::path manifest_path(const std::filesystem::path& seb1) {
    return seb1.parent_path() / (seb1.stem().string() + ".manifest.json");
}

struct Manifest {
    std::string encoder_name;
    std::string source_dataset;
    std::uint64_t n_rows = 0;
    std::uint32_t dim = 0;
    std::int64_t created_unix_ms = 0;
    std::optional<std::vector<std::string>> ids;
    nlohmann::json extra = nlohmann::json::object();  ///< n_classes, h, w, throughput, ...

    nlohmann::json to_json() const {
        nlohmann::json j = extra;
        j["encoder_name"] = encoder_name;
        j["source_dataset"] = source_dataset;
        j["n_rows"] = n_rows;
        j["dim"] = dim;
        j["created_unix_ms"] = created_unix_ms;
        if (ids) j["ids"] = *ids;
        return j;
    }

    static Manifest from_json(const nlohmann::json& j, const std::string& what) {
        if (!j.is_object()) throw FormatError(what + ": manifest is not a JSON object");
        Manifest m;
        try {
            m.encoder_name = j.value("encoder_name", "");
            m.source_dataset = j.value("source_dataset", "");
            m.n_rows = j.at("n_rows").get<std::uint64_t>();
            m.dim = j.at("dim").get<std::uint32_t>();
            m.created_unix_ms = j.value("created_unix_ms", std::int64_t{0});
            if (j.contains("ids")) m.ids = j.at("ids").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(what + ": bad manifest: " + e.what());
        }
        for (auto it = j.begin(); it != j.end(); ++it) {
            static const char* known[] = {"encoder_name", "source_dataset", "n_rows", "dim", "created_unix_ms", "ids"};
            if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known)) m.extra[it.key()] = it.value();
        }
        if (m.ids && m.ids->size() != m.n_rows) throw ValidationError(what + ": ids length != n_rows");
        return m;
    }
};

inline void write_manifest(const Manifest& m, const std::filesystem::path& seb1) {
    const std::string text = m.to_json().dump(2) + "\n";
    detail::write_file(manifest_path(seb1), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::optional<Manifest> read_manifest(const std::filesystem::path& seb1) {
    const auto p = manifest_path(seb1);
    if (!std::filesystem::exists(p)) return std::nullopt;
    auto bytes = detail::read_file(p);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
    return Manifest::from_json(j, p.string());
}

// ---------------------------------------------------------------------------
// Datasets

/// Row i of every matrix is the same sample; ids are carried for audit only.
struct PairedDataset {
    EmbeddingMatrix images;
    EmbeddingMatrix texts;
    std::optional<EmbeddingMatrix> hq_texts;
    std::vector<std::string> ids;

    std::size_t size() const noexcept { return images.rows(); }

    void validate() const {
        if (images.rows() != texts.rows()) {
            throw ValidationError("paired dataset: images have " + std::to_string(images.rows()) + " rows, texts have " +
                                  std::to_string(texts.rows()));
        }
        if (hq_texts && hq_texts->rows() != images.rows()) {
            throw ValidationError("paired dataset: hq_texts have " + std::to_string(hq_texts->rows()) +
                                  " rows, images have " + std::to_string(images.rows()));
        }
        if (hq_texts && hq_texts->cols() != texts.cols()) {
            throw ValidationError("paired dataset: hq_texts dim " + std::to_string(hq_texts->cols()) + " != texts dim " +
                                  std::to_string(texts.cols()));
        }
        if (!ids.empty() && ids.size() != images.rows()) throw ValidationError("paired dataset: ids length != rows");
    }
};

inline PairedDataset load_paired(const std::filesystem::path& images, const std::filesystem::path& texts,
                                 const std::optional<std::filesystem::path>& hq_texts = std::nullopt) {
    PairedDataset d;
    d.images = read_embeddings(images);
    d.texts = read_embeddings(texts);
    if (hq_texts) d.hq_texts = read_embeddings(*hq_texts);
    if (auto m = read_manifest(images); m && m->ids) d.ids = *m->ids;
    d.validate();
    if (d.ids.empty()) {
        d.ids.reserve(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) d.ids.push_back("row-" + std::to_string(i));
    }
    return d;
}

struct Labels {
    std::vector<std::size_t> values;
    std::size_t n_classes = 0;
};

struct LabeledDataset {
    EmbeddingMatrix embeddings;
    std::vector<std::size_t> labels;
    std::size_t n_classes = 0;

    void validate() const {
        if (labels.size() != embeddings.rows()) {
            throw ValidationError("labeled dataset: " + std::to_string(labels.size()) + " labels for " +
                                  std::to_string(embeddings.rows()) + " rows");
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= n_classes) {
                throw ValidationError("labeled dataset: label " + std::to_string(labels[i]) + " at row " +
                                      std::to_string(i) + " outside [0, " + std::to_string(n_classes) + ")");
            }
        }
    }
};

/// Labels are an SEB1 dim=1 file of integral f32 class indices plus manifest key n_classes.
inline void write_labels(const Labels& labels, const std::filesystem::path& path, std::string source = "") {
    EmbeddingMatrix m(labels.values.size(), 1);
    for (std::size_t i = 0; i < labels.values.size(); ++i) {
        if (labels.values[i] >= labels.n_classes) throw ValidationError("write_labels: label out of range at row " + std::to_string(i));
        m(i, 0) = static_cast<float>(labels.values[i]);
    }
    write_embeddings(m, path);
    Manifest man;
    man.encoder_name = "labels";
    man.source_dataset = std::move(source);
    man.n_rows = m.rows();
    man.dim = 1;
    man.extra["n_classes"] = labels.n_classes;
    write_manifest(man, path);
}

inline Labels read_labels(const std::filesystem::path& path) {
    auto m = read_embeddings(path);
    if (m.cols() != 1) throw FormatError(path.string() + ": labels file must have dim 1, has " + std::to_string(m.cols()));
    auto man = read_manifest(path);
    if (!man || !man->extra.contains("n_classes")) throw FormatError(path.string() + ": labels manifest lacks n_classes");
    Labels l;
    l.n_classes = man->extra.at("n_classes").get<std::size_t>();
    l.values.reserve(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const float v = m(i, 0);
        if (v < 0.0f || v != std::floor(v) || static_cast<std::size_t>(v) >= l.n_classes) {
            throw ValidationError(path.string() + ": invalid class index " + std::to_string(v) + " at row " + std::to_string(i));
        }
        l.values.push_back(static_cast<std::size_t>(v));
    }
    return l;
}

// ---------------------------------------------------------------------------
// Batching

/// Epoch-specific shuffled order. Only full batches are used; the remainder is dropped.
struct BatchPlan {
    std::uint64_t seed = 0;
    std::size_t batch_size = 0;
    std::uint64_t epoch = 0;
    std::vector<std::size_t> order;

    std::size_t n_batches() const noexcept { return order.size() / batch_size; }
    std::size_t dropped() const noexcept { return order.size() % batch_size; }
    std::span<const std::size_t> batch(std::size_t k) const {
        return std::span(order).subspan(k * batch_size, batch_size);
    }
};

/// Fisher-Yates (i from n-1 down to 1, j = next() % (i+1)) driven by
/// SplitMix64 seeded with derive_seed(seed, epoch).
inline BatchPlan make_batch_plan(std::size_t n_rows, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2, got " + std::to_string(batch_size));
    if (n_rows < 2) throw ConfigError("need at least 2 rows to batch, got " + std::to_string(n_rows));
    BatchPlan p{seed, batch_size, epoch, std::vector<std::size_t>(n_rows)};
    std::iota(p.order.begin(), p.order.end(), std::size_t{0});
    SplitMix64 g(derive_seed(seed, epoch));
    for (std::size_t i = n_rows - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(g.next() % (i + 1));
        std::swap(p.order[i], p.order[j]);
    }
    return p;
}

} // namespace sail
