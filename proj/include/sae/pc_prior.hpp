#pragma once

#include <span>
#include <vector>

namespace sae {

// Exponential prior on a standard deviation with P(sigma > u) = alpha.
struct PcSigmaPrior {
    double u = 1.0;
    double alpha = 0.01;
    double rate = 0.0;

    double log_density(double sigma) const;
    // Density of log(sigma), Jacobian included.
    double log_density_log_sigma(double log_sigma) const;
};

PcSigmaPrior pc_prior_sigma(double u, double alpha);

// Penalized-complexity prior for the BYM2 mixing parameter phi, built from the
// eigenvalues gamma_j of the scaled structured covariance. The distance from
// the base model (phi = 0) is d(phi) = sqrt(2 KLD(phi)) and d has an
// exponential law whose rate makes P(phi < 0.5) = prob_mass.
class PcPhiPrior {
public:
    // Calibrates the rate with trapezoid integration over `calibration_grid`
    // (default: 101 uniform points on [0, 1]). Throws std::domain_error when the
    // structure is degenerate or the requested mass cannot be reached.
    explicit PcPhiPrior(std::vector<double> gammas, double prob_mass = 2.0 / 3.0,
                        std::span<const double> calibration_grid = {});

    double rate() const { return rate_; }
    double prob_mass() const { return prob_mass_; }

    double kld(double phi) const;
    double distance(double phi) const;
    double distance_derivative(double phi) const;

    // Unnormalized-free density on [0, 1]: rate * exp(-rate d) d' / (1 - exp(-rate d(1))).
    double log_density(double phi) const;
    // Density of logit(phi), Jacobian included.
    double log_density_logit(double logit_phi) const;

    // Log-density on `grid` normalized so that its trapezoid integral is 1.
    std::vector<double> log_density_on_grid(std::span<const double> grid) const;

private:
    std::vector<double> gammas_;
    double prob_mass_;
    double rate_ = 0.0;
    double slope_at_zero_ = 0.0;
};

// Trapezoid mass of exp(log_density) over grid[0..] up to `upper` (linear
// interpolation of the density inside the last cell), divided by the total.
double grid_cdf(std::span<const double> grid, std::span<const double> log_density, double upper);

// Log-density over `grid` for the calibrated prior (convenience wrapper).
std::vector<double> pc_prior_phi(std::span<const double> gammas, std::span<const double> grid,
                                 double prob_mass = 2.0 / 3.0);

}  // namespace sae
