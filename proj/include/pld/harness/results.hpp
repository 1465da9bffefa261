#pragma once
// Result files: per-seed CSV rows, cross-seed summaries, Gaussian smoothing
// and self-contained SVG learning curves.

#include "pld/harness/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace pld {

inline constexpr std::string_view kPolicyCsvHeader = "seed,episode,return,actor_loss,critic_loss,dyn_loss_total,dyn_loss_parsimony";
inline constexpr std::string_view kPlanningCsvHeader = "seed,task,score,epsilon,bfs_distance";
inline constexpr std::string_view kLatentCsvHeader = "seed,task,latent_return";

inline std::string policy_csv_row(std::uint64_t seed, const EpisodeRecord& r) {
    return std::to_string(seed) + "," + std::to_string(r.episode) + "," + format_double(r.episode_return) + "," +
           format_double(r.actor_loss) + "," + format_double(r.critic_loss) + "," + format_double(r.dyn_loss_total) + "," +
           format_double(r.dyn_loss_parsimony);
}

inline std::string planning_csv_row(std::uint64_t seed, const TaskRecord& r) {
    return std::to_string(seed) + "," + std::to_string(r.task) + "," + format_double(r.score) + "," + format_double(r.epsilon) +
           "," + std::to_string(r.bfs_distance);
}

inline std::string latent_csv_row(std::uint64_t seed, const TaskRecord& r) {
    return std::to_string(seed) + "," + std::to_string(r.task) + "," +
           (std::isnan(r.latent_return) ? std::string("nan") : format_double(r.latent_return));
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::invalid_argument("csv: no column '" + std::string(name) + "'");
    }

    std::vector<double> numbers(std::string_view name) const {
        const std::size_t c = column(name);
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(r[c] == "nan" ? std::nan("") : parse_number<double>(name, r[c]));
        return out;
    }
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline CsvTable parse_csv(std::string_view text) {
    CsvTable t;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
        } else {
            if (cells.size() != t.header.size()) throw std::invalid_argument("csv: ragged row");
            t.rows.push_back(std::move(cells));
        }
    }
    if (t.header.empty()) throw std::invalid_argument("csv: missing header");
    return t;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

/// Mean and population standard deviation across equal-length series.
struct SeriesSummary {
    std::vector<double> mean;
    std::vector<double> stddev;
    int series = 0;
};

inline SeriesSummary summarize(const std::vector<std::vector<double>>& series) {
    if (series.empty()) throw std::invalid_argument("summarize: no series");
    const std::size_t n = series.front().size();
    for (const auto& s : series)
        if (s.size() != n) throw std::invalid_argument("summarize: series lengths differ (inconsistent schemas)");
    SeriesSummary out;
    out.series = static_cast<int>(series.size());
    for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0;
        for (const auto& s : series) m += s[i];
        m /= static_cast<double>(series.size());
        double v = 0.0;
        for (const auto& s : series) v += (s[i] - m) * (s[i] - m);
        out.mean.push_back(m);
        out.stddev.push_back(std::sqrt(v / static_cast<double>(series.size())));
    }
    return out;
}

/// Normalised Gaussian kernel of radius round(truncate * sigma).
inline std::vector<double> gaussian_kernel(double sigma, double truncate = 4.0) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
    const int radius = static_cast<int>(truncate * sigma + 0.5);
    std::vector<double> w;
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        w.push_back(std::exp(-0.5 * k * k / (sigma * sigma)));
        total += w.back();
    }
    for (double& x : w) x /= total;
    return w;
}

/// 1-D Gaussian smoothing with half-sample reflection at the ends
/// (d c b a | a b c d | d c b a).
inline std::vector<double> gaussian_filter(const std::vector<double>& x, double sigma = 2.0, double truncate = 4.0) {
    const std::vector<double> w = gaussian_kernel(sigma, truncate);
    const int radius = static_cast<int>(w.size() / 2);
    const int n = static_cast<int>(x.size());
    std::vector<double> out(x.size(), 0.0);
    if (n == 0) return out;
    auto reflect = [n](int i) {
        const int period = 2 * n;
        i %= period;
        if (i < 0) i += period;
        return i < n ? i : period - 1 - i;
    };
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
            acc += w[static_cast<std::size_t>(k + radius)] * x[static_cast<std::size_t>(reflect(i + k))];
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

/// index,mean,std,smoothed_mean,smoothed_std,seeds
inline std::string summary_csv(std::string_view index_name, const SeriesSummary& s, int first_index) {
    const std::vector<double> sm = gaussian_filter(s.mean), ss = gaussian_filter(s.stddev);
    std::string out = std::string(index_name) + ",mean,std,smoothed_mean,smoothed_std,seeds\n";
    for (std::size_t i = 0; i < s.mean.size(); ++i)
        out += std::to_string(first_index + static_cast<int>(i)) + "," + format_double(s.mean[i]) + "," + format_double(s.stddev[i]) +
               "," + format_double(sm[i]) + "," + format_double(ss[i]) + "," + std::to_string(s.series) + "\n";
    return out;
}

struct PlotSeries {
    std::string label;
    std::vector<double> mean;
    std::vector<double> stddev;
    int first_index = 0;
};

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

/// Mean curves with a +-1 std band; values are plotted as given.
inline std::string render_svg(const std::vector<PlotSeries>& series, std::string_view title, std::string_view x_label,
                              std::string_view y_label) {
    constexpr double w = 720, h = 440, left = 70, right = 170, top = 40, bottom = 60;
    static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool first = true;
    for (const PlotSeries& s : series) {
        for (std::size_t i = 0; i < s.mean.size(); ++i) {
            const double x = s.first_index + static_cast<double>(i);
            const double lo = s.mean[i] - s.stddev[i], hi = s.mean[i] + s.stddev[i];
            if (first) {
                x0 = x1 = x;
                y0 = lo;
                y1 = hi;
                first = false;
            }
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, lo);
            y1 = std::max(y1, hi);
        }
    }
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pw = w - left - right, ph = h - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    auto tick = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4g", v);
        return std::string(buf);
    };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
                      "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + xml_escape(title) + "</text>\n";
    svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
           "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
        svg += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(top + ph + 18) + "\" text-anchor=\"middle\">" + tick(xv) + "</text>\n";
        svg += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(yv) + 4) + "\" text-anchor=\"end\">" + tick(yv) + "</text>\n";
        svg += "<line x1=\"" + num(left) + "\" x2=\"" + num(left + pw) + "\" y1=\"" + num(py(yv)) + "\" y2=\"" + num(py(yv)) +
               "\" stroke=\"#ddd\"/>\n";
    }
    svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(h - 15) + "\" text-anchor=\"middle\">" + xml_escape(x_label) +
           "</text>\n";
    svg += "<text transform=\"translate(18," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" + xml_escape(y_label) +
           "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const PlotSeries& ps = series[s];
        const std::string color = colors[s % std::size(colors)];
        std::string band, line;
        for (std::size_t i = 0; i < ps.mean.size(); ++i) {
            const double x = px(ps.first_index + static_cast<double>(i));
            band += num(x) + "," + num(py(ps.mean[i] + ps.stddev[i])) + " ";
            line += num(x) + "," + num(py(ps.mean[i])) + " ";
        }
        for (std::size_t i = ps.mean.size(); i-- > 0;)
            band += num(px(ps.first_index + static_cast<double>(i))) + "," + num(py(ps.mean[i] - ps.stddev[i])) + " ";
        svg += "<polygon points=\"" + band + "\" fill=\"" + color + "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
        svg += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.8\"/>\n";
        const double ly = top + 16 + 20.0 * static_cast<double>(s);
        svg += "<line x1=\"" + num(w - right + 12) + "\" x2=\"" + num(w - right + 36) + "\" y1=\"" + num(ly) + "\" y2=\"" + num(ly) +
               "\" stroke=\"" + color + "\" stroke-width=\"3\"/>\n";
        svg += "<text x=\"" + num(w - right + 42) + "\" y=\"" + num(ly + 4) + "\">" + xml_escape(ps.label) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace pld
