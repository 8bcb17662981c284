#pragma once

#include "sae/direct_estimation.hpp"
#include "sae/posterior.hpp"
#include "sae/sparsity_gate.hpp"
#include "sae/survey_data.hpp"

namespace sae {

using AreaModelOptions = ModelOptions;

// Gaussian model on logit(p_hat) with known variances V_i for areas flagged
// ok; every other area is predicted from the latent field and flagged
// "extrapolated". Throws GateRefusal when the gate blocks area-level fitting.
PosteriorResult fit_area_model(const DirectEstimates& direct, const AreaGraph& graph, const CovariateTable* covariates,
                               const AreaModelOptions& options);

// Intercept column followed by the selected covariate columns, in graph order.
Eigen::MatrixXd area_fixed_design(const AreaGraph& graph, AdminLevel level, const CovariateTable* covariates,
                                  const std::vector<std::string>& names, std::vector<std::string>& out_names);

// Likelihood of the usable direct estimates.
Likelihood area_likelihood(const DirectEstimates& direct);

// Island warnings for a level.
std::vector<std::string> structure_warnings(const AreaGraph& graph, AdminLevel level);

}  // namespace sae
