#pragma once

#include "sae/hyper_grid.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace sae {

enum class Method { direct, area_level, unit_level };

std::string to_string(Method method);
Method parse_method(const std::string& text);

inline constexpr int kDefaultSamples = 4000;
inline constexpr int kMinSamples = 100;

// Settings shared by the model-based fits.
struct ModelOptions {
    AdminLevel level = 1;
    std::vector<std::string> covariates;  // CovariateTable column names
    PriorSettings priors;
    GridSettings grid;
    int n_samples = kDefaultSamples;
    std::uint64_t seed = 1;
};

struct PosteriorResult {
    Method method = Method::area_level;
    AdminLevel level = 0;
    std::vector<AreaId> area_ids;
    std::shared_ptr<const LatentModelSpec> spec;
    std::shared_ptr<const Likelihood> likelihood;
    GridFit fit;
    std::uint64_t seed = 0;
    Eigen::MatrixXd samples;                      // draws x areas, prevalence scale
    std::vector<std::vector<std::string>> flags;  // per area, e.g. "extrapolated"
    std::vector<std::string> warnings;
    std::map<std::string, std::string> options;   // provenance

    std::size_t n_areas() const { return area_ids.size(); }
};

// Draws of area prevalences: a grid point by weight, then the latent
// Gaussian at that point with the constraints imposed, then expit of the
// linear predictor. Bit-identical for a given seed. Throws
// std::invalid_argument when n_samples < 100.
Eigen::MatrixXd sample_posterior(const PosteriorResult& result, int n_samples, std::uint64_t seed);

// Same draws on the linear-predictor scale.
Eigen::MatrixXd sample_predictor(const PosteriorResult& result, int n_samples, std::uint64_t seed);

// Mixture mean and variance of the linear predictor over the grid, from the
// Gaussian approximations (no sampling).
struct PredictorMoments {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};
PredictorMoments predictor_moments(const PosteriorResult& result);

// Posterior mean of each hyperparameter on its natural scale (grid weights).
HyperPoint hyper_posterior_mean(const HyperGrid& grid);

}  // namespace sae
