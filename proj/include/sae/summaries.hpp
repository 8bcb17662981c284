#pragma once

#include "sae/direct_estimation.hpp"
#include "sae/posterior.hpp"

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace sae {

enum class PointStat { median, mean };

PointStat parse_point_stat(const std::string& text);

struct SummaryOptions {
    PointStat point = PointStat::median;
    std::optional<double> exceedance_threshold;
};

struct AreaSummary {
    AreaId id;
    AdminLevel level = 0;
    Method method = Method::direct;
    std::optional<double> point;
    std::optional<double> ci_low;
    std::optional<double> ci_high;
    std::optional<double> ci_width;
    std::optional<double> sd;  // standard error or posterior sd
    std::optional<double> cv;  // percent
    std::optional<double> exceedance_threshold;
    std::optional<double> exceedance;
    std::vector<std::string> flags;
    std::optional<std::uint64_t> seed;
};

std::vector<AreaSummary> summarize(const DirectEstimates& direct, const SummaryOptions& options = {});
std::vector<AreaSummary> summarize(const PosteriorResult& result, const SummaryOptions& options = {});

// Type-7 sample quantile of already sorted values.
double sorted_quantile(const std::vector<double>& sorted, double prob);

// Monte Carlo Pr(p_i > p0) per area over the cached samples.
std::vector<double> exceedance(const PosteriorResult& result, double p0);
// Direct estimates carry no posterior: always throws std::invalid_argument.
std::vector<double> exceedance(const DirectEstimates& direct, double p0);

// Field accessor by name: point, ci_low, ci_high, ci_width, sd, cv, exceedance.
std::optional<double> summary_stat(const AreaSummary& s, const std::string& stat);

struct ScatterPoint {
    AreaId id;
    double a = 0.0;
    double b = 0.0;
};

struct ScatterData {
    AdminLevel level = 0;
    std::string stat;
    std::vector<ScatterPoint> points;   // order of the first input
    std::vector<AreaId> unmatched;      // missing or without the stat on either side
};

ScatterData scatter_data(const std::vector<AreaSummary>& a, const std::vector<AreaSummary>& b, const std::string& stat);

struct RidgeSelection {
    enum class Kind { all, within, top_bottom };
    Kind kind = Kind::all;
    AreaId admin1;
    int x = 0;
};

// "all", "within:<admin1 id>" or "top_bottom:<x>".
RidgeSelection parse_ridge_selection(const std::string& text);

struct RidgeCurve {
    AreaId id;
    double median = 0.0;
    double bandwidth = 0.0;
    std::vector<double> density;
};

struct RidgeData {
    std::vector<double> grid;  // 512 points on [0, 1]
    std::vector<RidgeCurve> curves;  // ascending median, id tiebreak
    std::vector<std::string> notes;
};

inline constexpr int kRidgeGridSize = 512;

// Gaussian kernel density of each selected area's samples, Silverman
// bandwidth, reflected at 0 and 1 and scaled to unit trapezoid integral.
RidgeData ridge_data(const PosteriorResult& result, const AreaGraph& graph, const RidgeSelection& selection);
// Same, with the Admin-1 ancestor of each area given directly (result order).
RidgeData ridge_data(const PosteriorResult& result, const std::vector<AreaId>& admin1_of,
                     const RidgeSelection& selection);

// Density of one sample vector on the ridge grid.
RidgeCurve kernel_density(const std::vector<double>& samples);

// Columns: area, level, method, point, ci_low, ci_high, ci_width, cv,
// exceedance, flags. Reals with 6 significant digits; absent values empty.
void tabulate(std::ostream& out, const std::vector<std::vector<AreaSummary>>& results);
std::string tabulate(const std::vector<std::vector<AreaSummary>>& results);

// Reads a tabulation back (fields not in the file stay empty).
std::vector<AreaSummary> parse_tabulation(std::istream& in);

inline const std::vector<std::string>& tabulation_columns() {
    static const std::vector<std::string> cols = {"area", "level", "method", "point", "ci_low",
                                                  "ci_high", "ci_width", "cv", "exceedance", "flags"};
    return cols;
}

}  // namespace sae
