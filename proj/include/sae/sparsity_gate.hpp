#pragma once

#include "sae/direct_estimation.hpp"
#include "sae/posterior.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace sae {

// Version tag of the message catalogue below; bump on any wording change.
inline constexpr const char* kGateMessageVersion = "gate-messages/1";

enum class Verdict { allow, warn_overridable, error_blocked };

std::string to_string(Verdict verdict);

struct GateReport {
    AdminLevel level = 0;
    std::size_t n_areas = 0;
    std::size_t n_no_data = 0;
    std::size_t n_low_info = 0;
    Verdict direct = Verdict::allow;
    Verdict area_level = Verdict::allow;
    Verdict unit_level = Verdict::allow;
    Method recommendation = Method::direct;
    std::vector<std::string> messages;
    // Areas left out of the area-level likelihood (no data or low information).
    std::vector<AreaId> area_level_excluded;
    std::string message_version = kGateMessageVersion;

    Verdict verdict(Method method) const;
};

// Counts-only form of the rules; `excluded` is attached when area-level
// fitting is allowed.
GateReport evaluate_gate_counts(AdminLevel level, std::size_t n_areas, std::size_t n_no_data,
                                std::size_t n_low_info, std::vector<AreaId> excluded = {});

GateReport evaluate_gate(const DirectEstimates& direct, AdminLevel level);

struct FitPermission {
    bool allowed = true;
    bool overridden = false;
    std::vector<std::string> messages;  // verbatim gate text when refused or overridden
};

// A warning needs `override_requested`; an error is final.
FitPermission check_fit_permission(const GateReport& gate, Method method, bool override_requested);

// Thrown when a fit is attempted against the gate.
class GateRefusal : public std::runtime_error {
public:
    GateRefusal(Method method, Verdict verdict, std::vector<std::string> messages);

    Method method() const noexcept { return method_; }
    Verdict verdict() const noexcept { return verdict_; }
    const std::vector<std::string>& messages() const noexcept { return messages_; }

private:
    Method method_;
    Verdict verdict_;
    std::vector<std::string> messages_;
};

// Throws GateRefusal unless `check_fit_permission` allows the fit.
void require_fit_permission(const GateReport& gate, Method method, bool override_requested);

}  // namespace sae
