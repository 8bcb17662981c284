#pragma once

#include "sae/area_model.hpp"

#include <optional>

namespace sae {

struct UnitModelOptions : ModelOptions {
    // One fixed effect per Admin-1 region instead of a global intercept;
    // requires level >= 2.
    bool nested = false;
    // Beta-binomial when true, plain binomial otherwise.
    bool overdispersion = true;
    // Proceed despite an overridable gate warning.
    bool override_gate = false;
};

// Beta-binomial cluster likelihood with a shared linear predictor per area.
// Areas without clusters are predicted from the latent field and flagged
// "extrapolated". Design weights are not used.
PosteriorResult fit_unit_model(const AnalysisDataset& ds, const CovariateTable* covariates,
                               const UnitModelOptions& options);

Likelihood unit_likelihood(const AnalysisDataset& ds, AdminLevel level, bool overdispersion);

struct WeightAuditEntry {
    AreaId id;
    double cv = 0.0;  // population sd / mean of the cluster weights
    long n_clusters = 0;
    bool flagged = false;
};

struct WeightAudit {
    AdminLevel level = 0;
    double threshold = 0.5;
    std::vector<WeightAuditEntry> areas;  // areas with clusters only
};

WeightAudit survey_weight_ignored_audit(const AnalysisDataset& ds, AdminLevel level, double threshold = 0.5);

// Prevalence draws aggregated from `result.level` to a coarser level, each
// fine area weighted by its design-weighted trials (equal weights inside a
// coarse area that has no data).
Eigen::MatrixXd aggregate_samples(const PosteriorResult& result, const AnalysisDataset& ds, AdminLevel target);

}  // namespace sae
