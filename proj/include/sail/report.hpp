#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sail/evalsuite.hpp"

namespace sail::report {

inline std::string num(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

/// One metric row; report.csv holds `metric,value` pairs.
struct MetricRow {
    std::string metric;
    double value;
};

inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
    std::string out = "metric,value\n";
    for (const auto& r : rows) out += r.metric + "," + num(r.value, 8) + "\n";
    return out;
}

inline std::string metrics_table(const std::vector<MetricRow>& rows) {
    std::size_t w = 6;
    for (const auto& r : rows) w = std::max(w, r.metric.size());
    std::ostringstream os;
    os << std::string(w + 16, '-') << "\n";
    for (const auto& r : rows) os << r.metric << std::string(w - r.metric.size() + 2, ' ') << num(r.value, 4) << "\n";
    os << std::string(w + 16, '-') << "\n";
    return os.str();
}

inline std::vector<MetricRow> rows_of(const RetrievalReport& r, const std::string& prefix = "") {
    std::vector<MetricRow> rows;
    for (const auto& [k, v] : r.i2t_recall_at) rows.push_back({prefix + "i2t_R@" + std::to_string(k), v});
    for (const auto& [k, v] : r.t2i_recall_at) rows.push_back({prefix + "t2i_R@" + std::to_string(k), v});
    for (const auto& [k, v] : r.i2t_recall_at) rows.push_back({prefix + "avg_R@" + std::to_string(k), r.average(k)});
    return rows;
}

inline std::vector<MetricRow> rows_of(const WinogroundReport& r) {
    return {{"text_score", r.text_score}, {"image_score", r.image_score}, {"group_score", r.group_score},
            {"n_examples", static_cast<double>(r.n_examples)}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << text;
    if (!out) throw IoError(path.string() + ": write failed");
}

// ---------------------------------------------------------------------------
// CSV inputs

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

inline double parse_cell(const std::string& cell, const std::string& what, std::size_t line) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw FormatError(what + ":" + std::to_string(line) + ": not a number: \"" + cell + "\"");
    }
}

/// Header `id,s_t0i0,s_t0i1,s_t1i0,s_t1i1[,pattern]`.
inline std::vector<SimilarityQuad> read_quads_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open");
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
    const auto header = split_csv_line(line);
    const std::vector<std::string> base{"id", "s_t0i0", "s_t0i1", "s_t1i0", "s_t1i1"};
    const bool has_pattern = header.size() == 6 && header[5] == "pattern";
    if (header.size() < 5 || !std::equal(base.begin(), base.end(), header.begin()) || (header.size() == 6 && !has_pattern) ||
        header.size() > 6) {
        throw FormatError(path.string() + ": expected header id,s_t0i0,s_t0i1,s_t1i0,s_t1i1[,pattern]");
    }
    std::vector<SimilarityQuad> quads;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
        SimilarityQuad q;
        q.id = cells[0];
        q.s_t0i0 = parse_cell(cells[1], path.string(), lineno);
        q.s_t0i1 = parse_cell(cells[2], path.string(), lineno);
        q.s_t1i0 = parse_cell(cells[3], path.string(), lineno);
        q.s_t1i1 = parse_cell(cells[4], path.string(), lineno);
        if (has_pattern) q.pattern = cells[5];
        quads.push_back(std::move(q));
    }
    return quads;
}

/// Header `model_name,predictor_score,alignment_score`.
inline std::vector<ProbeRecord> read_probe_records_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open");
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
    const auto header = split_csv_line(line);
    if (header != std::vector<std::string>{"model_name", "predictor_score", "alignment_score"}) {
        throw FormatError(path.string() + ": expected header model_name,predictor_score,alignment_score");
    }
    std::vector<ProbeRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto c = split_csv_line(line);
        if (c.size() != 3) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
        out.push_back({c[0], parse_cell(c[1], path.string(), lineno), parse_cell(c[2], path.string(), lineno)});
    }
    return out;
}

inline std::string probing_csv(const ProbingReport& r) {
    std::string out = "model_name,predictor_score,alignment_score,fitted,residual\n";
    for (std::size_t i = 0; i < r.records.size(); ++i) {
        const auto& rec = r.records[i];
        out += rec.model_name + "," + num(rec.predictor_score) + "," + num(rec.alignment_score) + "," +
               num(rec.alignment_score - r.residuals[i]) + "," + num(r.residuals[i]) + "\n";
    }
    out += "# pearson_r," + num(r.r, 8) + "\n# slope," + num(r.slope, 8) + "\n# intercept," + num(r.intercept, 8) + "\n";
    return out;
}

inline std::string probing_table(const ProbingReport& r) {
    std::ostringstream os;
    std::size_t w = 10;
    for (const auto& rec : r.records) w = std::max(w, rec.model_name.size());
    os << "model" << std::string(w - 3, ' ') << "predictor   alignment   residual\n";
    for (std::size_t i = 0; i < r.records.size(); ++i) {
        const auto& rec = r.records[i];
        os << rec.model_name << std::string(w - rec.model_name.size() + 2, ' ') << num(rec.predictor_score, 4) << "    "
           << num(rec.alignment_score, 4) << "    " << num(r.residuals[i], 4) << "\n";
    }
    os << "pearson r = " << num(r.r, 4) << ", fit: alignment = " << num(r.slope, 4) << " * predictor + "
       << num(r.intercept, 4) << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// SVG

namespace svg {

struct Frame {
    double x0, x1, y0, y1;  // data range
    double width = 480, height = 360, margin = 48;

    double px(double x) const { return margin + (x - x0) / (x1 - x0) * (width - 2 * margin); }
    double py(double y) const { return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin); }
};

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string open(const Frame& f, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n"
       << "<line x1=\"" << f.margin << "\" y1=\"" << f.height - f.margin << "\" x2=\"" << f.width - f.margin << "\" y2=\""
       << f.height - f.margin << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << f.margin << "\" y1=\"" << f.margin << "\" x2=\"" << f.margin << "\" y2=\"" << f.height - f.margin
       << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << f.width / 2 << "\" y=\"" << f.height - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << escape(xlabel) << "</text>\n"
       << "<text x=\"14\" y=\"" << f.height / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
       << f.height / 2 << ")\">" << escape(ylabel) << "</text>\n"
       << "<text x=\"" << f.margin << "\" y=\"" << f.height - f.margin + 14 << "\" font-size=\"10\">" << num(f.x0, 3) << "</text>\n"
       << "<text x=\"" << f.width - f.margin << "\" y=\"" << f.height - f.margin + 14 << "\" text-anchor=\"end\" font-size=\"10\">"
       << num(f.x1, 3) << "</text>\n"
       << "<text x=\"" << f.margin - 4 << "\" y=\"" << f.height - f.margin << "\" text-anchor=\"end\" font-size=\"10\">"
       << num(f.y0, 3) << "</text>\n"
       << "<text x=\"" << f.margin - 4 << "\" y=\"" << f.margin + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << num(f.y1, 3)
       << "</text>\n";
    return os.str();
}

inline std::pair<double, double> padded_range(double lo, double hi) {
    if (hi <= lo) return {lo - 1.0, hi + 1.0};
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

} // namespace svg

/// Scatter of (predictor, alignment) with the fitted line.
inline std::string probing_svg(const ProbingReport& r) {
    double xl = r.records[0].predictor_score, xh = xl, yl = r.records[0].alignment_score, yh = yl;
    for (const auto& rec : r.records) {
        xl = std::min(xl, rec.predictor_score);
        xh = std::max(xh, rec.predictor_score);
        yl = std::min(yl, rec.alignment_score);
        yh = std::max(yh, rec.alignment_score);
    }
    auto [x0, x1] = svg::padded_range(xl, xh);
    auto [y0, y1] = svg::padded_range(yl, yh);
    svg::Frame f{x0, x1, y0, y1};
    std::ostringstream os;
    os << svg::open(f, "alignment vs predictor (r = " + num(r.r, 3) + ")", "predictor score", "alignment score");
    os << "<line x1=\"" << f.px(x0) << "\" y1=\"" << f.py(r.slope * x0 + r.intercept) << "\" x2=\"" << f.px(x1) << "\" y2=\""
       << f.py(r.slope * x1 + r.intercept) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    for (const auto& rec : r.records) {
        os << "<circle cx=\"" << f.px(rec.predictor_score) << "\" cy=\"" << f.py(rec.alignment_score)
           << "\" r=\"4\" fill=\"steelblue\"><title>" << svg::escape(rec.model_name) << "</title></circle>\n";
        os << "<text x=\"" << f.px(rec.predictor_score) + 6 << "\" y=\"" << f.py(rec.alignment_score) - 6
           << "\" font-size=\"9\">" << svg::escape(rec.model_name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline std::string histogram_svg(const PairCosineSummary& s, const std::string& title) {
    std::size_t peak = 1;
    for (auto c : s.histogram) peak = std::max(peak, c);
    svg::Frame f{-1.0, 1.0, 0.0, static_cast<double>(peak)};
    std::ostringstream os;
    os << svg::open(f, title, "cosine similarity", "pairs");
    for (std::size_t b = 0; b < kHistogramBins; ++b) {
        const double lo = -1.0 + 0.1 * static_cast<double>(b);
        const double top = f.py(static_cast<double>(s.histogram[b]));
        os << "<rect x=\"" << f.px(lo) << "\" y=\"" << top << "\" width=\"" << f.px(lo + 0.1) - f.px(lo) - 1 << "\" height=\""
           << f.py(0.0) - top << "\" fill=\"steelblue\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

/// Line plot of per-epoch loss.
inline std::string loss_svg(const std::vector<double>& losses) {
    if (losses.empty()) return {};
    const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
    auto [y0, y1] = svg::padded_range(*lo, *hi);
    svg::Frame f{0.0, std::max(1.0, static_cast<double>(losses.size() - 1)), y0, y1};
    std::ostringstream os;
    os << svg::open(f, "training loss", "epoch", "mean loss");
    os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < losses.size(); ++i) os << f.px(static_cast<double>(i)) << "," << f.py(losses[i]) << " ";
    os << "\"/>\n</svg>\n";
    return os.str();
}

} // namespace sail::report
