#pragma once

#include "sae/common.hpp"
#include "sae/survey_data.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sae {

enum class DirectFlag { ok, no_data, low_information };

std::string to_string(DirectFlag flag);

struct DirectArea {
    AreaId id;
    std::optional<double> p_hat;
    std::optional<double> var_p;
    std::optional<double> logit_var;  // V_i, delta method
    std::optional<double> ci_low;
    std::optional<double> ci_high;
    DirectFlag flag = DirectFlag::no_data;
    long n_clusters = 0;
    std::vector<std::string> notes;
};

struct DirectEstimates {
    AdminLevel level = 0;
    std::vector<DirectArea> areas;  // graph order at `level`

    std::size_t count(DirectFlag flag) const;
};

// Weighted ratio estimate sum(w*y) / sum(w*n) per area; areas without clusters
// are flagged no_data. Variance fields are left empty.
DirectEstimates hajek(const AnalysisDataset& ds, AdminLevel level);

// Points plus Taylor-linearized stratified variance, logit-scale variance and
// a 95% logit-scale interval. Degenerate areas are flagged low_information.
DirectEstimates design_variance(const AnalysisDataset& ds, AdminLevel level);

enum class ConsistencyStatus { pass, fail, no_reference };

std::string to_string(ConsistencyStatus status);

struct ConsistencyCheck {
    double computed = 0.0;
    std::optional<double> reference;
    double tolerance = 0.005;
    ConsistencyStatus status = ConsistencyStatus::no_reference;
};

// Compares the national weighted estimate with the dataset's reference value.
ConsistencyCheck national_consistency_check(const AnalysisDataset& ds, double tolerance = 0.005);

// Decision helper for an already computed national estimate.
ConsistencyCheck compare_with_reference(double computed, std::optional<double> reference, double tolerance = 0.005);

}  // namespace sae
