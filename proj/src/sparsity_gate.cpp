#include "sae/sparsity_gate.hpp"

#include <fmt/core.h>

namespace sae {

std::string to_string(Verdict verdict) {
    switch (verdict) {
    case Verdict::allow:
        return "allow";
    case Verdict::warn_overridable:
        return "warn_overridable";
    case Verdict::error_blocked:
        return "error_blocked";
    }
    return "unknown";
}

Verdict GateReport::verdict(Method method) const {
    switch (method) {
    case Method::direct:
        return direct;
    case Method::area_level:
        return area_level;
    case Method::unit_level:
        return unit_level;
    }
    return Verdict::error_blocked;
}

namespace {

// More than a quarter of the areas, in integer arithmetic.
bool above_quarter(std::size_t k, std::size_t n) { return 4 * k > n; }

double percent(std::size_t k, std::size_t n) {
    return n == 0 ? 0.0 : 100.0 * static_cast<double>(k) / static_cast<double>(n);
}

std::string direct_warning(const GateReport& g) {
    const auto k = g.n_no_data + g.n_low_info;
    return fmt::format(
        "Direct estimates at admin level {}: {} of {} areas ({:.1f}%) have no data or low information, "
        "more than the 25% limit. Direct estimates may be unreliable; you may override this warning and proceed.",
        g.level, k, g.n_areas, percent(k, g.n_areas));
}

std::string area_error(const GateReport& g) {
    const auto k = g.n_no_data + g.n_low_info;
    return fmt::format(
        "Area-level model at admin level {}: {} of {} areas ({:.1f}%) have no data or low information, "
        "more than the 25% limit. Area-level models are not allowed at this level.",
        g.level, k, g.n_areas, percent(k, g.n_areas));
}

std::string area_exclusion(const GateReport& g) {
    return fmt::format(
        "Area-level model at admin level {}: {} area(s) with no data or low information are excluded before "
        "model fitting and predicted from the model.",
        g.level, g.area_level_excluded.size());
}

std::string unit_warning(const GateReport& g) {
    return fmt::format(
        "Unit-level model at admin level {}: {} of {} areas ({:.1f}%) have no data, more than the 25% limit. "
        "You may override this warning and proceed.",
        g.level, g.n_no_data, g.n_areas, percent(g.n_no_data, g.n_areas));
}

std::string recommendation_text(const GateReport& g) {
    switch (g.recommendation) {
    case Method::direct:
        return fmt::format(
            "Recommended method at admin level {}: direct. Sample size is judged sufficient because no more than "
            "25% of areas have no data or low information.",
            g.level);
    case Method::area_level:
        return fmt::format("Recommended method at admin level {}: area-level model.", g.level);
    case Method::unit_level:
        return fmt::format(
            "Recommended method at admin level {}: unit-level model. Weighted estimates are not reliable for "
            "enough areas at this level.",
            g.level);
    }
    return {};
}

}  // namespace

GateReport evaluate_gate_counts(AdminLevel level, std::size_t n_areas, std::size_t n_no_data,
                                std::size_t n_low_info, std::vector<AreaId> excluded) {
    if (n_no_data + n_low_info > n_areas) {
        throw std::invalid_argument("gate: more problem areas than areas");
    }
    GateReport g;
    g.level = level;
    g.n_areas = n_areas;
    g.n_no_data = n_no_data;
    g.n_low_info = n_low_info;
    const bool sparse = above_quarter(n_no_data + n_low_info, n_areas);
    g.direct = sparse ? Verdict::warn_overridable : Verdict::allow;
    g.area_level = sparse ? Verdict::error_blocked : Verdict::allow;
    g.unit_level = above_quarter(n_no_data, n_areas) ? Verdict::warn_overridable : Verdict::allow;
    if (g.direct == Verdict::allow) {
        g.recommendation = Method::direct;
    } else if (g.area_level == Verdict::allow) {
        g.recommendation = Method::area_level;
    } else {
        g.recommendation = Method::unit_level;
    }
    if (g.area_level == Verdict::allow) {
        g.area_level_excluded = std::move(excluded);
    }
    if (g.direct != Verdict::allow) {
        g.messages.push_back(direct_warning(g));
    }
    if (g.area_level == Verdict::error_blocked) {
        g.messages.push_back(area_error(g));
    } else if (!g.area_level_excluded.empty()) {
        g.messages.push_back(area_exclusion(g));
    }
    if (g.unit_level != Verdict::allow) {
        g.messages.push_back(unit_warning(g));
    }
    g.messages.push_back(recommendation_text(g));
    return g;
}

GateReport evaluate_gate(const DirectEstimates& direct, AdminLevel level) {
    if (direct.level != level) {
        throw std::invalid_argument(fmt::format("gate: direct estimates are for level {}, not {}", direct.level, level));
    }
    std::vector<AreaId> excluded;
    for (const auto& a : direct.areas) {
        if (a.flag != DirectFlag::ok) {
            excluded.push_back(a.id);
        }
    }
    return evaluate_gate_counts(level, direct.areas.size(), direct.count(DirectFlag::no_data),
                                direct.count(DirectFlag::low_information), std::move(excluded));
}

FitPermission check_fit_permission(const GateReport& gate, Method method, bool override_requested) {
    FitPermission p;
    const Verdict v = gate.verdict(method);
    if (v == Verdict::allow) {
        return p;
    }
    switch (method) {
    case Method::direct:
        p.messages.push_back(direct_warning(gate));
        break;
    case Method::area_level:
        p.messages.push_back(area_error(gate));
        break;
    case Method::unit_level:
        p.messages.push_back(unit_warning(gate));
        break;
    }
    if (v == Verdict::warn_overridable && override_requested) {
        p.overridden = true;
        return p;
    }
    p.allowed = false;
    return p;
}

GateRefusal::GateRefusal(Method method, Verdict verdict, std::vector<std::string> messages)
    : std::runtime_error(messages.empty() ? std::string("fit refused by the data-sparsity gate") : messages.front()),
      method_(method),
      verdict_(verdict),
      messages_(std::move(messages)) {}

void require_fit_permission(const GateReport& gate, Method method, bool override_requested) {
    const auto p = check_fit_permission(gate, method, override_requested);
    if (!p.allowed) {
        throw GateRefusal(method, gate.verdict(method), p.messages);
    }
}

}  // namespace sae
