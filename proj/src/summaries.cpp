#include "sae/summaries.hpp"

#include "sae/csv.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sae {

PointStat parse_point_stat(const std::string& text) {
    if (text == "median") {
        return PointStat::median;
    }
    if (text == "mean") {
        return PointStat::mean;
    }
    throw std::invalid_argument("point must be 'median' or 'mean'");
}

double sorted_quantile(const std::vector<double>& sorted, double prob) {
    if (sorted.empty()) {
        throw std::invalid_argument("quantile of an empty sample");
    }
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<AreaSummary> summarize(const DirectEstimates& direct, const SummaryOptions& options) {
    if (options.exceedance_threshold) {
        throw std::invalid_argument("exceedance probabilities need a model-based result");
    }
    std::vector<AreaSummary> out;
    for (const auto& a : direct.areas) {
        AreaSummary s;
        s.id = a.id;
        s.level = direct.level;
        s.method = Method::direct;
        s.point = a.p_hat;
        s.ci_low = a.ci_low;
        s.ci_high = a.ci_high;
        if (a.ci_low && a.ci_high) {
            s.ci_width = *a.ci_high - *a.ci_low;
        }
        if (a.var_p && a.flag == DirectFlag::ok) {
            s.sd = std::sqrt(*a.var_p);
            if (a.p_hat && *a.p_hat > 0.0) {
                s.cv = 100.0 * *s.sd / *a.p_hat;
            }
        }
        if (a.flag != DirectFlag::ok) {
            s.flags.push_back(to_string(a.flag));
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<AreaSummary> summarize(const PosteriorResult& result, const SummaryOptions& options) {
    if (result.samples.rows() == 0) {
        throw std::invalid_argument("posterior result has no samples");
    }
    std::optional<std::vector<double>> exc;
    if (options.exceedance_threshold) {
        exc = exceedance(result, *options.exceedance_threshold);
    }
    std::vector<AreaSummary> out;
    const auto n = result.samples.rows();
    for (std::size_t i = 0; i < result.n_areas(); ++i) {
        const auto col = result.samples.col(static_cast<Eigen::Index>(i));
        std::vector<double> v(col.data(), col.data() + n);
        std::sort(v.begin(), v.end());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (double x : v) {
            ss += (x - mean) * (x - mean);
        }
        AreaSummary s;
        s.id = result.area_ids[i];
        s.level = result.level;
        s.method = result.method;
        s.point = options.point == PointStat::median ? sorted_quantile(v, 0.5) : mean;
        s.ci_low = sorted_quantile(v, 0.025);
        s.ci_high = sorted_quantile(v, 0.975);
        s.ci_width = *s.ci_high - *s.ci_low;
        s.sd = std::sqrt(ss / static_cast<double>(n - 1));
        if (*s.point > 0.0) {
            s.cv = 100.0 * *s.sd / *s.point;
        }
        if (exc) {
            s.exceedance_threshold = options.exceedance_threshold;
            s.exceedance = (*exc)[i];
        }
        if (i < result.flags.size()) {
            s.flags = result.flags[i];
        }
        s.seed = result.seed;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<double> exceedance(const PosteriorResult& result, double p0) {
    if (!(p0 >= 0.0 && p0 <= 1.0)) {
        throw std::invalid_argument("exceedance threshold must lie in [0, 1]");
    }
    if (result.samples.rows() == 0) {
        throw std::invalid_argument("posterior result has no samples");
    }
    const auto n = result.samples.rows();
    std::vector<double> out(result.n_areas());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto col = result.samples.col(static_cast<Eigen::Index>(i));
        Eigen::Index above = 0;
        for (Eigen::Index s = 0; s < n; ++s) {
            above += col(s) > p0 ? 1 : 0;
        }
        out[i] = static_cast<double>(above) / static_cast<double>(n);
    }
    return out;
}

std::vector<double> exceedance(const DirectEstimates&, double) {
    throw std::invalid_argument("exceedance probabilities need a model-based result, not direct estimates");
}

std::optional<double> summary_stat(const AreaSummary& s, const std::string& stat) {
    if (stat == "point") {
        return s.point;
    }
    if (stat == "ci_low") {
        return s.ci_low;
    }
    if (stat == "ci_high") {
        return s.ci_high;
    }
    if (stat == "ci_width") {
        return s.ci_width;
    }
    if (stat == "sd") {
        return s.sd;
    }
    if (stat == "cv") {
        return s.cv;
    }
    if (stat == "exceedance") {
        return s.exceedance;
    }
    throw std::invalid_argument("unknown statistic '" + stat + "'");
}

ScatterData scatter_data(const std::vector<AreaSummary>& a, const std::vector<AreaSummary>& b, const std::string& stat) {
    ScatterData out;
    out.stat = stat;
    if (!a.empty() && !b.empty() && a.front().level != b.front().level) {
        throw std::invalid_argument(
            fmt::format("cannot compare level {} with level {}", a.front().level, b.front().level));
    }
    out.level = !a.empty() ? a.front().level : (!b.empty() ? b.front().level : 0);
    std::map<AreaId, const AreaSummary*> right;
    for (const auto& s : b) {
        right[s.id] = &s;
    }
    std::set<AreaId> seen;
    for (const auto& s : a) {
        seen.insert(s.id);
        const auto it = right.find(s.id);
        const auto va = summary_stat(s, stat);
        if (it == right.end() || !va) {
            out.unmatched.push_back(s.id);
            continue;
        }
        const auto vb = summary_stat(*it->second, stat);
        if (!vb) {
            out.unmatched.push_back(s.id);
            continue;
        }
        out.points.push_back({s.id, *va, *vb});
    }
    for (const auto& s : b) {
        if (!seen.count(s.id)) {
            out.unmatched.push_back(s.id);
        }
    }
    return out;
}

RidgeSelection parse_ridge_selection(const std::string& text) {
    RidgeSelection sel;
    if (text.empty() || text == "all" || text == "all_level1") {
        return sel;
    }
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? std::string() : text.substr(colon + 1);
    if (head == "within" && !arg.empty()) {
        sel.kind = RidgeSelection::Kind::within;
        sel.admin1 = arg;
        return sel;
    }
    if (head == "top_bottom") {
        const auto x = csv::parse_long(arg);
        if (!x || *x < 1) {
            throw std::invalid_argument("top_bottom needs a positive count");
        }
        sel.kind = RidgeSelection::Kind::top_bottom;
        sel.x = static_cast<int>(*x);
        return sel;
    }
    throw std::invalid_argument("selection must be all, within:<admin1 id> or top_bottom:<x>");
}

RidgeCurve kernel_density(const std::vector<double>& samples) {
    if (samples.size() < 2) {
        throw std::invalid_argument("kernel density needs at least two samples");
    }
    const int g = kRidgeGridSize;
    const double delta = 1.0 / (g - 1);
    std::vector<double> v = samples;
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) {
        ss += (x - mean) * (x - mean);
    }
    const double sd = std::sqrt(ss / (n - 1.0));
    const double iqr = sorted_quantile(v, 0.75) - sorted_quantile(v, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0)) {
        spread = sd;
    }
    const double h = std::max(0.9 * spread * std::pow(n, -0.2), 1.5 * delta);

    // Linear binning onto the grid, then a reflected Gaussian convolution.
    std::vector<double> counts(g, 0.0);
    for (double x : v) {
        const double pos = std::clamp(x, 0.0, 1.0) / delta;
        const auto j = std::min(static_cast<int>(pos), g - 2);
        const double frac = pos - j;
        counts[j] += 1.0 - frac;
        counts[j + 1] += frac;
    }
    std::vector<double> kern(2 * g - 1);
    for (int k = 0; k < 2 * g - 1; ++k) {
        const double z = k * delta / h;
        kern[k] = std::exp(-0.5 * z * z);
    }
    RidgeCurve curve;
    curve.bandwidth = h;
    curve.median = sorted_quantile(v, 0.5);
    curve.density.assign(g, 0.0);
    for (int i = 0; i < g; ++i) {
        double s = 0.0;
        for (int j = 0; j < g; ++j) {
            if (counts[j] == 0.0) {
                continue;
            }
            s += counts[j] * (kern[std::abs(i - j)] + kern[i + j] + kern[2 * (g - 1) - i - j]);
        }
        curve.density[i] = s;
    }
    double total = 0.0;
    for (int i = 1; i < g; ++i) {
        total += 0.5 * (curve.density[i] + curve.density[i - 1]) * delta;
    }
    for (double& d : curve.density) {
        d /= total;
    }
    return curve;
}

RidgeData ridge_data(const PosteriorResult& result, const AreaGraph& graph, const RidgeSelection& selection) {
    std::vector<AreaId> admin1_of;
    for (const auto& id : result.area_ids) {
        admin1_of.push_back(result.level >= 1 ? graph.ancestor_at(id, 1) : AreaId());
    }
    return ridge_data(result, admin1_of, selection);
}

RidgeData ridge_data(const PosteriorResult& result, const std::vector<AreaId>& admin1_of,
                     const RidgeSelection& selection) {
    if (admin1_of.size() != result.n_areas()) {
        throw std::invalid_argument("one Admin-1 id per area is required");
    }
    if (result.samples.rows() == 0) {
        throw std::invalid_argument("ridge data needs a model-based result with samples");
    }
    RidgeData out;
    for (int i = 0; i < kRidgeGridSize; ++i) {
        out.grid.push_back(static_cast<double>(i) / (kRidgeGridSize - 1));
    }
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < result.n_areas(); ++i) {
        if (selection.kind != RidgeSelection::Kind::within || admin1_of[i] == selection.admin1) {
            chosen.push_back(i);
        }
    }
    if (selection.kind == RidgeSelection::Kind::within && chosen.empty()) {
        throw NotFoundError(fmt::format("no areas within Admin-1 area '{}'", selection.admin1));
    }
    std::vector<RidgeCurve> all;
    const auto n = result.samples.rows();
    for (const auto i : chosen) {
        const auto col = result.samples.col(static_cast<Eigen::Index>(i));
        RidgeCurve c = kernel_density(std::vector<double>(col.data(), col.data() + n));
        c.id = result.area_ids[i];
        all.push_back(std::move(c));
    }
    std::sort(all.begin(), all.end(), [](const RidgeCurve& a, const RidgeCurve& b) {
        return a.median < b.median || (a.median == b.median && a.id < b.id);
    });
    switch (selection.kind) {
    case RidgeSelection::Kind::all:
    case RidgeSelection::Kind::within:
        out.curves = std::move(all);
        break;
    case RidgeSelection::Kind::top_bottom: {
        int x = selection.x;
        const int total = static_cast<int>(all.size());
        if (x > total) {
            out.notes.push_back(fmt::format("top_bottom({}) exceeds the {} available areas; clipped to {}", x, total, total));
            x = total;
        }
        std::vector<bool> keep(all.size(), false);
        for (int k = 0; k < x; ++k) {
            keep[k] = true;
            keep[all.size() - 1 - k] = true;
        }
        for (std::size_t k = 0; k < all.size(); ++k) {
            if (keep[k]) {
                out.curves.push_back(std::move(all[k]));
            }
        }
        break;
    }
    }
    return out;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? csv::format_real(*v) : std::string(); }

}  // namespace

void tabulate(std::ostream& out, const std::vector<std::vector<AreaSummary>>& results) {
    out << csv::join(tabulation_columns()) << '\n';
    for (const auto& set : results) {
        for (const auto& s : set) {
            std::string flags;
            for (std::size_t k = 0; k < s.flags.size(); ++k) {
                flags += (k ? ";" : "") + s.flags[k];
            }
            out << csv::join({s.id, std::to_string(s.level), to_string(s.method), cell(s.point), cell(s.ci_low),
                              cell(s.ci_high), cell(s.ci_width), cell(s.cv), cell(s.exceedance), flags})
                << '\n';
        }
    }
}

std::string tabulate(const std::vector<std::vector<AreaSummary>>& results) {
    std::ostringstream os;
    tabulate(os, results);
    return os.str();
}

std::vector<AreaSummary> parse_tabulation(std::istream& in) {
    const auto rows = csv::read(in);
    if (rows.empty() || rows[0].cells != tabulation_columns()) {
        throw ValidationError("tabulation: unexpected header");
    }
    std::vector<AreaSummary> out;
    auto real = [](const std::string& c, std::size_t line) -> std::optional<double> {
        if (c.empty()) {
            return std::nullopt;
        }
        const auto v = csv::parse_double(c);
        if (!v) {
            throw ValidationError(fmt::format("tabulation: non-numeric cell '{}'", c), line);
        }
        return v;
    };
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& c = rows[r].cells;
        if (c.size() != tabulation_columns().size()) {
            throw ValidationError("tabulation: wrong number of cells", rows[r].line);
        }
        AreaSummary s;
        s.id = c[0];
        const auto level = csv::parse_long(c[1]);
        if (!level) {
            throw ValidationError("tabulation: bad level", rows[r].line);
        }
        s.level = static_cast<AdminLevel>(*level);
        s.method = parse_method(c[2]);
        s.point = real(c[3], rows[r].line);
        s.ci_low = real(c[4], rows[r].line);
        s.ci_high = real(c[5], rows[r].line);
        s.ci_width = real(c[6], rows[r].line);
        s.cv = real(c[7], rows[r].line);
        s.exceedance = real(c[8], rows[r].line);
        std::string f = c[9];
        std::size_t pos = 0;
        while (!f.empty()) {
            const auto next = f.find(';', pos);
            s.flags.push_back(f.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
            if (next == std::string::npos) {
                break;
            }
            pos = next + 1;
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace sae
