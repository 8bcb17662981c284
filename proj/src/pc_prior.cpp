#include "sae/pc_prior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sae {

double PcSigmaPrior::log_density(double sigma) const {
    if (!(sigma > 0.0)) {
        return -INFINITY;
    }
    return std::log(rate) - rate * sigma;
}

double PcSigmaPrior::log_density_log_sigma(double log_sigma) const {
    const double sigma = std::exp(log_sigma);
    return std::log(rate) - rate * sigma + log_sigma;
}

PcSigmaPrior pc_prior_sigma(double u, double alpha) {
    if (!(u > 0.0) || !std::isfinite(u)) {
        throw std::domain_error("pc_prior_sigma: U must be positive");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::domain_error("pc_prior_sigma: alpha must lie in (0, 1)");
    }
    return {u, alpha, -std::log(alpha) / u};
}

namespace {

// x - log(1 + x), accurate near zero.
double x_minus_log1p(double x) {
    if (std::abs(x) < 1e-4) {
        return x * x * (0.5 - x * (1.0 / 3.0 - x * 0.25));
    }
    return x - std::log1p(x);
}

}  // namespace

PcPhiPrior::PcPhiPrior(std::vector<double> gammas, double prob_mass, std::span<const double> calibration_grid)
    : gammas_(std::move(gammas)), prob_mass_(prob_mass) {
    if (!(prob_mass > 0.0 && prob_mass < 1.0)) {
        throw std::domain_error("pc_prior_phi: prob_mass must lie in (0, 1)");
    }
    double ss = 0.0;
    for (double g : gammas_) {
        if (!(g > 0.0) || !std::isfinite(g)) {
            throw std::domain_error("pc_prior_phi: eigenvalues must be positive");
        }
        ss += (g - 1.0) * (g - 1.0);
    }
    if (gammas_.empty() || ss < 1e-20) {
        throw std::domain_error("pc_prior_phi: degenerate structure (all eigenvalues equal to 1)");
    }
    slope_at_zero_ = std::sqrt(0.5 * ss);

    std::vector<double> grid(calibration_grid.begin(), calibration_grid.end());
    if (grid.empty()) {
        grid.resize(101);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            grid[k] = static_cast<double>(k) / 100.0;
        }
    }
    if (grid.size() < 3 || grid.front() < 0.0 || grid.back() > 1.0 || grid.front() >= 0.5 || grid.back() <= 0.5) {
        throw std::domain_error("pc_prior_phi: calibration grid must straddle 0.5 inside [0, 1]");
    }
    std::vector<double> dist(grid.size()), log_slope(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        dist[k] = distance(grid[k]);
        log_slope[k] = std::log(distance_derivative(grid[k]));
    }
    auto cdf_at = [&](double log_rate) {
        const double r = std::exp(log_rate);
        std::vector<double> ld(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
            ld[k] = log_rate - r * dist[k] + log_slope[k];
        }
        return grid_cdf(grid, ld, 0.5);
    };
    double lo = -40.0;
    double hi = 10.0;
    if (cdf_at(lo) >= prob_mass) {
        throw std::domain_error("pc_prior_phi: requested P(phi < 0.5) is below what any rate can give");
    }
    if (cdf_at(hi) <= prob_mass) {
        throw std::domain_error("pc_prior_phi: requested P(phi < 0.5) is not reachable");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (cdf_at(mid) < prob_mass) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    rate_ = std::exp(0.5 * (lo + hi));
}

double PcPhiPrior::kld(double phi) const {
    double s = 0.0;
    for (double g : gammas_) {
        s += x_minus_log1p(phi * (g - 1.0));
    }
    return 0.5 * s;
}

double PcPhiPrior::distance(double phi) const { return std::sqrt(2.0 * kld(phi)); }

double PcPhiPrior::distance_derivative(double phi) const {
    if (phi < 1e-8) {
        return slope_at_zero_;
    }
    double dk = 0.0;
    for (double g : gammas_) {
        const double x = phi * (g - 1.0);
        dk += (g - 1.0) * x / (1.0 + x);
    }
    dk *= 0.5;
    return dk / distance(phi);
}

double PcPhiPrior::log_density(double phi) const {
    if (phi < 0.0 || phi > 1.0) {
        return -INFINITY;
    }
    const double norm = -std::expm1(-rate_ * distance(1.0));
    return std::log(rate_) - rate_ * distance(phi) + std::log(distance_derivative(phi)) - std::log(norm);
}

double PcPhiPrior::log_density_logit(double logit_phi) const {
    const double phi = 1.0 / (1.0 + std::exp(-logit_phi));
    // log(phi (1 - phi)) = -softplus(-t) - softplus(t)
    const double log_jac = -std::log1p(std::exp(-std::abs(logit_phi))) * 2.0 - std::abs(logit_phi);
    return log_density(phi) + log_jac;
}

std::vector<double> PcPhiPrior::log_density_on_grid(std::span<const double> grid) const {
    std::vector<double> ld(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        ld[k] = std::log(rate_) - rate_ * distance(grid[k]) + std::log(distance_derivative(grid[k]));
    }
    const double mx = *std::max_element(ld.begin(), ld.end());
    double total = 0.0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        total += 0.5 * (std::exp(ld[k] - mx) + std::exp(ld[k - 1] - mx)) * (grid[k] - grid[k - 1]);
    }
    const double shift = mx + std::log(total);
    for (double& v : ld) {
        v -= shift;
    }
    return ld;
}

double grid_cdf(std::span<const double> grid, std::span<const double> log_density, double upper) {
    if (grid.size() < 2 || grid.size() != log_density.size()) {
        throw std::invalid_argument("grid_cdf: grid and density sizes must match (>= 2 points)");
    }
    const double mx = *std::max_element(log_density.begin(), log_density.end());
    double total = 0.0;
    double below = 0.0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        const double f0 = std::exp(log_density[k - 1] - mx);
        const double f1 = std::exp(log_density[k] - mx);
        const double h = grid[k] - grid[k - 1];
        total += 0.5 * (f0 + f1) * h;
        if (grid[k] <= upper) {
            below += 0.5 * (f0 + f1) * h;
        } else if (grid[k - 1] < upper) {
            const double t = (upper - grid[k - 1]) / h;
            const double fu = f0 + t * (f1 - f0);
            below += 0.5 * (f0 + fu) * (upper - grid[k - 1]);
        }
    }
    return below / total;
}

std::vector<double> pc_prior_phi(std::span<const double> gammas, std::span<const double> grid, double prob_mass) {
    const PcPhiPrior prior(std::vector<double>(gammas.begin(), gammas.end()), prob_mass, grid);
    return prior.log_density_on_grid(grid);
}

}  // namespace sae
