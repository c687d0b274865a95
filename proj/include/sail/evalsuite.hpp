#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sail/embed_store.hpp"
#include "sail/linalg.hpp"

namespace sail {

// Ties resolve to the lowest index everywhere. Winoground-style comparisons are strict.

// ---------------------------------------------------------------------------
// Retrieval

struct RetrievalReport {
    std::map<std::size_t, double> i2t_recall_at;
    std::map<std::size_t, double> t2i_recall_at;
    std::size_t n_queries = 0;  ///< image queries; text queries may differ for 1:N data

    /// Mean of I2T and T2I recall at K.
    double average(std::size_t k) const { return 0.5 * (i2t_recall_at.at(k) + t2i_recall_at.at(k)); }
};

/// Position of gallery item g when sorted by similarity descending, lower index first on ties.
inline std::size_t gallery_rank(std::span<const double> sims, std::size_t g) {
    std::size_t r = 0;
    const double sg = sims[g];
    for (std::size_t h = 0; h < sims.size(); ++h) {
        if (sims[h] > sg || (sims[h] == sg && h < g)) ++r;
    }
    return r;
}

/// Fraction of queries with at least one ground-truth item among the top K gallery items (cosine).
inline std::map<std::size_t, double> recall_at_k(const EmbeddingMatrix& queries, const EmbeddingMatrix& gallery,
                                                 const std::vector<std::vector<std::size_t>>& ground_truth,
                                                 const std::vector<std::size_t>& ks) {
    if (ground_truth.size() != queries.rows()) throw ValidationError("recall_at_k: one ground-truth list per query required");
    for (auto k : ks) {
        if (k < 1 || k > gallery.rows()) {
            throw ValidationError("recall_at_k: K=" + std::to_string(k) + " outside [1, " + std::to_string(gallery.rows()) + "]");
        }
    }
    for (std::size_t q = 0; q < ground_truth.size(); ++q) {
        if (ground_truth[q].empty()) throw ValidationError("recall_at_k: query " + std::to_string(q) + " has no ground truth");
        for (auto g : ground_truth[q]) {
            if (g >= gallery.rows()) throw ValidationError("recall_at_k: ground-truth index out of range for query " + std::to_string(q));
        }
    }
    const auto sim = cosine_matrix(queries, gallery);
    std::vector<std::size_t> best(queries.rows());
    parallel_for(queries.rows(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t q = begin; q < end; ++q) {
            std::size_t b = gallery.rows();
            for (auto g : ground_truth[q]) b = std::min(b, gallery_rank(sim.values.row(q), g));
            best[q] = b;
        }
    });
    std::map<std::size_t, double> out;
    for (auto k : ks) {
        std::size_t hits = 0;
        for (auto b : best) hits += b < k ? 1 : 0;
        out[k] = queries.rows() ? static_cast<double>(hits) / static_cast<double>(queries.rows()) : 0.0;
    }
    return out;
}

/// Image-text retrieval in both directions. text_owner[t] names the image text t describes;
/// empty means positional pairing (text i <-> image i).
inline RetrievalReport retrieval_report(const EmbeddingMatrix& images, const EmbeddingMatrix& texts,
                                        const std::vector<std::size_t>& ks,
                                        std::vector<std::size_t> text_owner = {}) {
    if (text_owner.empty()) {
        if (images.rows() != texts.rows()) throw ValidationError("retrieval_report: positional pairing needs equal row counts");
        text_owner.resize(texts.rows());
        std::iota(text_owner.begin(), text_owner.end(), std::size_t{0});
    }
    if (text_owner.size() != texts.rows()) throw ValidationError("retrieval_report: text_owner length != text rows");
    std::vector<std::vector<std::size_t>> i2t(images.rows()), t2i(texts.rows());
    for (std::size_t t = 0; t < texts.rows(); ++t) {
        if (text_owner[t] >= images.rows()) throw ValidationError("retrieval_report: text_owner out of range");
        i2t[text_owner[t]].push_back(t);
        t2i[t].push_back(text_owner[t]);
    }
    RetrievalReport r;
    r.i2t_recall_at = recall_at_k(images, texts, i2t, ks);
    r.t2i_recall_at = recall_at_k(texts, images, t2i, ks);
    r.n_queries = images.rows();
    return r;
}

// ---------------------------------------------------------------------------
// Classification

struct ClassificationResult {
    double accuracy = 0.0;
    std::vector<std::size_t> predictions;
};

struct Prototypes {
    EmbeddingMatrix rows;
    std::vector<std::size_t> degenerate;  ///< classes whose prompt mean vanished; their row is zero
};

/// Per class: normalize each prompt embedding, average, renormalize.
inline Prototypes build_prototypes(const std::vector<EmbeddingMatrix>& prompts_per_class) {
    if (prompts_per_class.empty()) throw ValidationError("build_prototypes: no classes");
    const std::size_t d = prompts_per_class.front().cols();
    Prototypes p{EmbeddingMatrix(prompts_per_class.size(), d), {}};
    for (std::size_t c = 0; c < prompts_per_class.size(); ++c) {
        const auto& m = prompts_per_class[c];
        if (m.rows() == 0) throw ValidationError("build_prototypes: class " + std::to_string(c) + " has no prompts");
        if (m.cols() != d) throw ShapeError("build_prototypes: class " + std::to_string(c) + " has dim " + std::to_string(m.cols()));
        std::vector<double> mean(d, 0.0);
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const double n = std::sqrt(dot(m.row(i), m.row(i)));
            if (n == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) mean[j] += static_cast<double>(m(i, j)) / n;
        }
        for (auto& v : mean) v /= static_cast<double>(m.rows());
        const double n = std::sqrt(dot(std::span<const double>(mean), std::span<const double>(mean)));
        if (n <= 1e-6) {
            p.degenerate.push_back(c);
            continue;
        }
        for (std::size_t j = 0; j < d; ++j) p.rows(c, j) = static_cast<float>(mean[j] / n);
    }
    return p;
}

/// Groups prompt rows by their class label and builds prototypes.
inline Prototypes build_prototypes(const EmbeddingMatrix& prompts, const Labels& prompt_labels) {
    if (prompt_labels.values.size() != prompts.rows()) throw ValidationError("build_prototypes: one label per prompt required");
    std::vector<std::vector<std::size_t>> rows(prompt_labels.n_classes);
    for (std::size_t i = 0; i < prompts.rows(); ++i) rows[prompt_labels.values[i]].push_back(i);
    std::vector<EmbeddingMatrix> per_class;
    for (const auto& r : rows) per_class.push_back(gather_rows(prompts, std::span<const std::size_t>(r)));
    return build_prototypes(per_class);
}

inline std::size_t argmax_lowest(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

inline ClassificationResult zeroshot_classify(const EmbeddingMatrix& images, const EmbeddingMatrix& prototypes,
                                              const std::vector<std::size_t>& labels) {
    if (labels.size() != images.rows()) throw ValidationError("zeroshot_classify: one label per image required");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= prototypes.rows()) {
            throw ValidationError("zeroshot_classify: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                  " has no prototype");
        }
    }
    const auto sim = cosine_matrix(images, prototypes, Side::image, Side::text);
    ClassificationResult r;
    r.predictions.resize(images.rows());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < images.rows(); ++i) {
        r.predictions[i] = argmax_lowest(sim.values.row(i));
        correct += r.predictions[i] == labels[i] ? 1 : 0;
    }
    r.accuracy = images.rows() ? static_cast<double>(correct) / static_cast<double>(images.rows()) : 0.0;
    return r;
}

inline constexpr double kKnnTemperature = 0.07;

/// Cosine k-NN with votes exp(sim / tau) accumulated in rank order.
inline ClassificationResult knn_classify(const LabeledDataset& train, const LabeledDataset& test, std::size_t k,
                                         double tau = kKnnTemperature) {
    train.validate();
    test.validate();
    if (train.embeddings.cols() != test.embeddings.cols()) {
        throw ShapeError("knn_classify: train dim " + std::to_string(train.embeddings.cols()) + " != test dim " +
                         std::to_string(test.embeddings.cols()));
    }
    if (k < 1 || k > train.embeddings.rows()) throw ValidationError("knn_classify: k must lie in [1, train size]");
    const std::size_t n_classes = std::max(train.n_classes, test.n_classes);
    const auto sim = cosine_matrix(test.embeddings, train.embeddings);
    ClassificationResult r;
    r.predictions.resize(test.embeddings.rows());
    parallel_for(test.embeddings.rows(), [&](std::size_t begin, std::size_t end) {
        std::vector<std::size_t> idx(train.embeddings.rows());
        std::vector<double> votes(n_classes);
        for (std::size_t q = begin; q < end; ++q) {
            auto s = sim.values.row(q);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                              [&](std::size_t a, std::size_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); });
            std::fill(votes.begin(), votes.end(), 0.0);
            for (std::size_t n = 0; n < k; ++n) votes[train.labels[idx[n]]] += std::exp(s[idx[n]] / tau);
            r.predictions[q] = argmax_lowest(votes);
        }
    });
    std::size_t correct = 0;
    for (std::size_t q = 0; q < r.predictions.size(); ++q) correct += r.predictions[q] == test.labels[q] ? 1 : 0;
    r.accuracy = r.predictions.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.predictions.size());
    return r;
}

// ---------------------------------------------------------------------------
// Compositional reasoning

/// s(T_a, I_b) for the two captions and two images of one example.
struct SimilarityQuad {
    std::string id;
    double s_t0i0 = 0.0;
    double s_t0i1 = 0.0;
    double s_t1i0 = 0.0;
    double s_t1i1 = 0.0;
    std::string pattern;  ///< optional grouping tag
};

/// Each caption scores its own image higher than the other caption does.
inline bool text_correct(const SimilarityQuad& q) { return q.s_t0i0 > q.s_t1i0 && q.s_t1i1 > q.s_t0i1; }
/// For each caption, the matching image scores higher than the other image.
inline bool image_correct(const SimilarityQuad& q) { return q.s_t0i0 > q.s_t0i1 && q.s_t1i1 > q.s_t1i0; }
inline bool group_correct(const SimilarityQuad& q) { return text_correct(q) && image_correct(q); }

struct WinogroundReport {
    double text_score = 0.0;  ///< percentages
    double image_score = 0.0;
    double group_score = 0.0;
    std::size_t n_examples = 0;
};

inline WinogroundReport winoground_score(const std::vector<SimilarityQuad>& quads) {
    if (quads.empty()) throw ValidationError("winoground_score: no examples");
    std::size_t t = 0, i = 0, g = 0;
    for (const auto& q : quads) {
        t += text_correct(q);
        i += image_correct(q);
        g += group_correct(q);
    }
    const double n = static_cast<double>(quads.size());
    return {100.0 * static_cast<double>(t) / n, 100.0 * static_cast<double>(i) / n, 100.0 * static_cast<double>(g) / n,
            quads.size()};
}

/// Image-matching score in percent. With pattern tags, patterns are averaged first, then overall.
inline double mmvp_pair_score(const std::vector<SimilarityQuad>& quads) {
    if (quads.empty()) throw ValidationError("mmvp_pair_score: no examples");
    std::map<std::string, std::pair<std::size_t, std::size_t>> per;  // hits, count
    for (const auto& q : quads) {
        auto& [hits, count] = per[q.pattern];
        hits += image_correct(q);
        ++count;
    }
    double sum = 0.0;
    for (const auto& [pattern, hc] : per) sum += static_cast<double>(hc.first) / static_cast<double>(hc.second);
    return 100.0 * sum / static_cast<double>(per.size());
}

// ---------------------------------------------------------------------------
// Pair cosine distribution

inline constexpr std::size_t kHistogramBins = 20;

struct PairCosineSummary {
    std::vector<double> cosines;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::array<double, 9> deciles{};                 ///< 10th..90th percentile, linear interpolation
    std::array<std::size_t, kHistogramBins> histogram{};  ///< bins of width 0.1 over [-1, 1]; 1.0 lands in the last bin
};

/// Linear-interpolated quantile of sorted data at p in [0, 1].
inline double quantile_sorted(std::span<const double> sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::size_t histogram_bin(double c) {
    const double x = std::floor((c + 1.0) * 10.0);
    if (x < 0.0) return 0;
    return std::min<std::size_t>(kHistogramBins - 1, static_cast<std::size_t>(x));
}

inline PairCosineSummary pair_cosine_analysis(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("pair_cosine_analysis: " + shape_str(a) + " vs " + shape_str(b));
    if (a.rows() == 0) throw ValidationError("pair_cosine_analysis: no pairs");
    PairCosineSummary s;
    s.cosines.resize(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double den = std::sqrt(dot(a.row(i), a.row(i))) * std::sqrt(dot(b.row(i), b.row(i)));
        s.cosines[i] = den == 0.0 ? 0.0 : dot(a.row(i), b.row(i)) / den;
    }
    std::vector<double> sorted = s.cosines;
    std::sort(sorted.begin(), sorted.end());
    s.min = sorted.front();
    s.max = sorted.back();
    s.mean = std::accumulate(s.cosines.begin(), s.cosines.end(), 0.0) / static_cast<double>(s.cosines.size());
    for (std::size_t k = 0; k < 9; ++k) s.deciles[k] = quantile_sorted(sorted, static_cast<double>(k + 1) / 10.0);
    for (double c : s.cosines) ++s.histogram[histogram_bin(c)];
    return s;
}

// ---------------------------------------------------------------------------
// Segmentation

inline constexpr std::uint32_t kIgnoreLabel = 255;

struct SegmentationInput {
    std::size_t h = 0;
    std::size_t w = 0;
    EmbeddingMatrix patch_embeddings;           ///< (h*w) x d, row-major over the grid
    std::optional<std::vector<float>> cls_embedding;  ///< carried along, unused
    EmbeddingMatrix class_text_embeddings;      ///< C x d
    std::vector<std::uint32_t> ground_truth;    ///< h*w class indices, 255 = ignore
};

struct SegmentationResult {
    std::vector<std::uint32_t> mask;
    double miou = 0.0;
    std::map<std::uint32_t, double> class_iou;  ///< classes present in the ground truth
};

/// mIoU over classes present in the non-ignored ground truth; ignored patches count nowhere.
inline double mean_iou(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt, std::size_t n_classes,
                       std::map<std::uint32_t, double>* per_class = nullptr) {
    std::vector<std::size_t> inter(n_classes, 0), uni(n_classes, 0), present(n_classes, 0);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] == kIgnoreLabel) continue;
        ++present[gt[i]];
        if (pred[i] == gt[i]) {
            ++inter[gt[i]];
            ++uni[gt[i]];
        } else {
            ++uni[gt[i]];
            ++uni[pred[i]];
        }
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (present[c] == 0) continue;
        const double iou = static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
        if (per_class) (*per_class)[static_cast<std::uint32_t>(c)] = iou;
        sum += iou;
        ++n;
    }
    if (n == 0) throw ValidationError("segment: ground truth has no non-ignored patch");
    return sum / static_cast<double>(n);
}

/// Per-patch argmax cosine against the class text embeddings, then mIoU.
inline SegmentationResult segment(const SegmentationInput& in) {
    const std::size_t C = in.class_text_embeddings.rows();
    if (in.h < 1 || in.w < 1) throw ValidationError("segment: grid dims must be >= 1");
    if (C < 2) throw ValidationError("segment: need at least 2 classes");
    if (in.patch_embeddings.rows() != in.h * in.w) {
        throw ShapeError("segment: " + std::to_string(in.patch_embeddings.rows()) + " patches for a " + std::to_string(in.h) +
                         "x" + std::to_string(in.w) + " grid");
    }
    if (in.ground_truth.size() != in.h * in.w) throw ShapeError("segment: ground truth size does not match the grid");
    for (std::size_t i = 0; i < in.ground_truth.size(); ++i) {
        const auto g = in.ground_truth[i];
        if (g != kIgnoreLabel && g >= C) {
            throw ValidationError("segment: ground-truth class " + std::to_string(g) + " at patch " + std::to_string(i) +
                                  " outside [0, " + std::to_string(C) + ")");
        }
    }
    const auto sim = cosine_matrix(in.patch_embeddings, in.class_text_embeddings);
    SegmentationResult r;
    r.mask.resize(in.h * in.w);
    for (std::size_t p = 0; p < r.mask.size(); ++p) r.mask[p] = static_cast<std::uint32_t>(argmax_lowest(sim.values.row(p)));
    r.miou = mean_iou(r.mask, in.ground_truth, C, &r.class_iou);
    return r;
}

// ---------------------------------------------------------------------------
// Correlation analysis

/// Sample Pearson correlation, two-pass in double.
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ValidationError("pearson: length mismatch");
    if (xs.size() < 2) throw ValidationError("pearson: need at least 2 points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw ValidationError("pearson: zero variance, correlation undefined");
    return sxy / std::sqrt(sxx * syy);
}

struct ProbeRecord {
    std::string model_name;
    double predictor_score = 0.0;  ///< kNN top-1 or an external benchmark average
    double alignment_score = 0.0;  ///< average R@10
};

struct ProbingReport {
    double r = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<ProbeRecord> records;
    std::vector<double> residuals;  ///< alignment - fitted
};

/// Least-squares line alignment = slope * predictor + intercept, plus Pearson r.
inline ProbingReport probing_report(std::vector<ProbeRecord> records) {
    if (records.size() < 2) throw ValidationError("probing_report: need at least 2 records");
    std::vector<double> xs, ys;
    for (const auto& rec : records) {
        if (!std::isfinite(rec.predictor_score) || !std::isfinite(rec.alignment_score)) {
            throw ValidationError("probing_report: non-finite score for " + rec.model_name);
        }
        xs.push_back(rec.predictor_score);
        ys.push_back(rec.alignment_score);
    }
    ProbingReport rep;
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx == 0.0) throw ValidationError("probing_report: predictor scores have zero variance");
    rep.slope = sxy / sxx;
    rep.intercept = my - rep.slope * mx;
    rep.r = pearson(xs, ys);
    for (std::size_t i = 0; i < xs.size(); ++i) rep.residuals.push_back(ys[i] - (rep.slope * xs[i] + rep.intercept));
    rep.records = std::move(records);
    return rep;
}

} // namespace sail
