#pragma once

#include "sae/latent_model.hpp"
#include "sae/pc_prior.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sae {

struct PriorSettings {
    double sigma_u = 1.0;
    double sigma_alpha = 0.01;
    double phi_prob_mass = 2.0 / 3.0;
    double logit_d_mean = 0.0;
    double logit_d_sd = 1.5;
};

struct GridSettings {
    int points_small = 15;  // per axis with one or two free axes
    int points_three = 9;   // per axis with three free axes
    double span_sd = 2.5;
    double sd_min = 0.05;
    double sd_max = 3.0;
    std::optional<double> fixed_sigma;
    std::optional<double> fixed_phi;
    std::optional<double> fixed_d;
    FitOptions newton;
    unsigned threads = 0;  // 0: one per hardware thread
};

enum class HyperAxis { log_sigma, logit_phi, logit_d };

std::string to_string(HyperAxis axis);

struct HyperGrid {
    std::vector<HyperAxis> axes;
    std::vector<std::vector<double>> points;  // transformed coordinates, one entry per axis
    std::vector<double> log_weights;          // log-sum-exp = 0
    std::vector<double> log_evidence;
    std::vector<double> log_prior;
    std::vector<double> mode;
    std::vector<double> sd_minus;
    std::vector<double> sd_plus;
    HyperPoint base;  // values used for axes that are not free
    std::vector<std::string> warnings;

    HyperPoint hyper_at(std::size_t k) const;
    HyperPoint hyper_of(const std::vector<double>& coords) const;
    std::vector<double> weights() const;
};

struct GridFit {
    HyperGrid grid;
    std::vector<LatentFit> fits;  // aligned with grid.points
    LatentFit mode_fit;
};

// Log prior density of the free hyperparameters on the transformed scale
// (log sigma, logit phi, logit d), Jacobians included.
class HyperPrior {
public:
    HyperPrior(const LatentModelSpec& spec, const PriorSettings& settings);

    double log_density(const std::vector<HyperAxis>& axes, const std::vector<double>& coords) const;
    const PcSigmaPrior& sigma() const { return sigma_; }
    const std::optional<PcPhiPrior>& phi() const { return phi_; }

private:
    PcSigmaPrior sigma_;
    std::optional<PcPhiPrior> phi_;
    PriorSettings settings_;
};

// Eigenvalues of the generalized inverse of the structure block over the
// constrained subspace.
std::vector<double> structure_covariance_eigenvalues(const LatentModelSpec& spec);

GridFit build_hyper_grid(const LatentModelSpec& spec, const Likelihood& lik, const PriorSettings& priors = {},
                         const GridSettings& grid = {});

}  // namespace sae
