#include "sae/direct_estimation.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <map>

namespace sae {

std::string to_string(DirectFlag flag) {
    switch (flag) {
    case DirectFlag::ok:
        return "ok";
    case DirectFlag::no_data:
        return "no_data";
    case DirectFlag::low_information:
        return "low_information";
    }
    return "unknown";
}

std::string to_string(ConsistencyStatus status) {
    switch (status) {
    case ConsistencyStatus::pass:
        return "pass";
    case ConsistencyStatus::fail:
        return "fail";
    case ConsistencyStatus::no_reference:
        return "no_reference";
    }
    return "unknown";
}

std::size_t DirectEstimates::count(DirectFlag flag) const {
    return static_cast<std::size_t>(
        std::count_if(areas.begin(), areas.end(), [flag](const DirectArea& a) { return a.flag == flag; }));
}

DirectEstimates hajek(const AnalysisDataset& ds, AdminLevel level) {
    const auto groups = ds.records_by_area(level);
    const auto& ls = ds.graph().level(level);
    DirectEstimates out;
    out.level = level;
    out.areas.resize(ls.size());
    for (std::size_t i = 0; i < ls.size(); ++i) {
        auto& a = out.areas[i];
        a.id = ls.ids[i];
        a.n_clusters = static_cast<long>(groups[i].size());
        if (groups[i].empty()) {
            a.flag = DirectFlag::no_data;
            continue;
        }
        double num = 0.0;
        double den = 0.0;
        for (const auto idx : groups[i]) {
            const auto& r = ds.records()[idx];
            num += r.weight * static_cast<double>(r.y);
            den += r.weight * static_cast<double>(r.n);
        }
        if (den <= 0.0) {
            // Clusters present but no trials: nothing to estimate from.
            a.flag = DirectFlag::low_information;
            a.notes.push_back("area has clusters but zero trials");
            continue;
        }
        a.p_hat = num / den;
        a.flag = DirectFlag::ok;
    }
    return out;
}

DirectEstimates design_variance(const AnalysisDataset& ds, AdminLevel level) {
    DirectEstimates out = hajek(ds, level);
    const auto groups = ds.records_by_area(level);
    for (std::size_t i = 0; i < out.areas.size(); ++i) {
        auto& a = out.areas[i];
        if (a.flag != DirectFlag::ok) {
            continue;
        }
        const double p = *a.p_hat;
        double den = 0.0;
        for (const auto idx : groups[i]) {
            const auto& r = ds.records()[idx];
            den += r.weight * static_cast<double>(r.n);
        }
        // Linearized scores grouped by stratum within the area.
        std::map<std::string, std::vector<double>> by_stratum;
        for (const auto idx : groups[i]) {
            const auto& r = ds.records()[idx];
            const double u = r.weight * (static_cast<double>(r.y) - p * static_cast<double>(r.n)) / den;
            by_stratum[r.stratum_id].push_back(u);
        }
        double var = 0.0;
        std::size_t singleton_strata = 0;
        for (const auto& [stratum, scores] : by_stratum) {
            const auto m = static_cast<double>(scores.size());
            if (scores.size() < 2) {
                ++singleton_strata;
                continue;
            }
            double mean = 0.0;
            for (double u : scores) {
                mean += u;
            }
            mean /= m;
            double ss = 0.0;
            for (double u : scores) {
                ss += (u - mean) * (u - mean);
            }
            var += m / (m - 1.0) * ss;
        }
        if (singleton_strata > 0) {
            a.notes.push_back(fmt::format("{} single-cluster stratum/strata contribute zero variance", singleton_strata));
        }
        // Rounding residue when every cluster has the same proportion.
        if (var <= 1e-20 * p * p) {
            var = 0.0;
        }
        if (p <= 0.0 || p >= 1.0 || !(var > 0.0) || !std::isfinite(var)) {
            a.flag = DirectFlag::low_information;
            continue;
        }
        a.var_p = var;
        const double v = var / (p * (1.0 - p) * p * (1.0 - p));
        a.logit_var = v;
        const double half = kNormalQuantile975 * std::sqrt(v);
        const double centre = logit(p);
        a.ci_low = expit(centre - half);
        a.ci_high = expit(centre + half);
    }
    return out;
}

ConsistencyCheck compare_with_reference(double computed, std::optional<double> reference, double tolerance) {
    ConsistencyCheck c;
    c.computed = computed;
    c.reference = reference;
    c.tolerance = tolerance;
    if (!reference) {
        c.status = ConsistencyStatus::no_reference;
    } else {
        c.status = std::abs(computed - *reference) <= tolerance ? ConsistencyStatus::pass : ConsistencyStatus::fail;
    }
    return c;
}

ConsistencyCheck national_consistency_check(const AnalysisDataset& ds, double tolerance) {
    const auto national = hajek(ds, 0);
    const auto& a = national.areas.at(0);
    return compare_with_reference(a.p_hat.value_or(std::nan("")), ds.metadata().reference_national_estimate,
                                  tolerance);
}

}  // namespace sae
