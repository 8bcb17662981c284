#pragma once

#include "sae/common.hpp"
#include "sae/rng.hpp"
#include "sae/spatial_graph.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <string>
#include <vector>

namespace sae {

// BYM2 total standard deviation, spatial share and beta-binomial
// intra-cluster correlation. `phi` is ignored by models without spatial
// structure and `d` by Gaussian likelihoods.
struct HyperPoint {
    double sigma = 1.0;
    double phi = 0.5;
    double d = 0.05;
};

// Latent vector x = [fixed effects | e (one per area) | s (one per
// structured area)] with linear predictor
//   eta_i = F_i f + sigma (sqrt(1 - phi) e_i + sqrt(phi) s_k(i)).
// Prior precision: fixed_precision * I, I and structure + jitter * I. Each group
// in `constraints` holds s coordinates that must sum to zero.
struct LatentModelSpec {
    int n_areas = 0;
    Eigen::MatrixXd fixed_design;
    std::vector<std::string> fixed_names;
    double fixed_precision = 0.001;
    Eigen::SparseMatrix<double> structure;
    std::vector<int> structured_areas;
    std::vector<std::vector<int>> constraints;
    double jitter = 1e-6;

    int n_fixed() const { return static_cast<int>(fixed_design.cols()); }
    int n_structured() const { return static_cast<int>(structured_areas.size()); }
    int dim() const { return n_fixed() + n_areas + n_structured(); }
    int offset_e() const { return n_fixed(); }
    int offset_s() const { return n_fixed() + n_areas; }
    bool has_structure() const { return !structured_areas.empty(); }

    // Throws std::invalid_argument on inconsistent dimensions or empty groups.
    void validate() const;
};

// Spec for one graph level: the scaled ICAR block over non-singleton areas
// with one sum-to-zero constraint per connected component.
LatentModelSpec make_latent_spec(const LevelStructure& level, Eigen::MatrixXd fixed_design,
                                 std::vector<std::string> fixed_names);

enum class LikelihoodKind { gaussian, betabinomial, binomial };

struct AreaObservation {
    int area = 0;
    double value = 0.0;
    double variance = 1.0;
};

struct ClusterObservation {
    int area = 0;
    long n = 0;
    long y = 0;
};

struct Likelihood {
    LikelihoodKind kind = LikelihoodKind::gaussian;
    std::vector<AreaObservation> gaussian;
    std::vector<ClusterObservation> clusters;

    bool uses_overdispersion() const { return kind == LikelihoodKind::betabinomial; }
};

struct FitOptions {
    int max_iter = 100;
    double gradient_tol = 1e-8;
    double step_tol = 1e-10;
};

struct LatentFit {
    HyperPoint hyper;
    Eigen::VectorXd mode;
    double log_evidence = 0.0;
    double log_likelihood = 0.0;
    int iterations = 0;
    double gradient_norm = 0.0;
};

// Gaussian approximation N(mode, Qp^-1) conditioned on the sum-to-zero
// constraints, where Qp is the negative Hessian of the log posterior at the mode.
class LatentGaussian {
public:
    LatentGaussian(const LatentModelSpec& spec, const Likelihood& lik, const LatentFit& fit);

    const Eigen::VectorXd& mode() const { return mode_; }
    // Linear predictor eta at the mode, one entry per area.
    Eigen::VectorXd predictor_mean() const;
    Eigen::VectorXd predictor_variance() const;
    // Covariance of the full latent vector (dense; small problems only).
    Eigen::MatrixXd covariance() const;
    // A draw of eta, one entry per area.
    Eigen::VectorXd draw_predictor(Rng& rng) const;

private:
    Eigen::VectorXd constrained_solve(const Eigen::VectorXd& rhs) const;

    Eigen::SparseMatrix<double> a_;
    Eigen::SparseMatrix<double> c_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
    Eigen::MatrixXd k_;  // Qp^-1 C' (C Qp^-1 C')^-1
    Eigen::MatrixXd qinv_ct_;
    Eigen::VectorXd mode_;
    Eigen::VectorXd inv_sqrt_d_;
};

// Exact conjugate update for a Gaussian likelihood with known variances.
LatentFit gaussian_conditional_fit(const LatentModelSpec& spec, const Likelihood& lik, const HyperPoint& hyper);

// Newton-Raphson with step halving on log prior + log likelihood, then the
// Laplace evidence. `start` must satisfy the constraints (empty: zero vector).
// Throws NumericalError when the iteration fails to converge.
LatentFit laplace_fit(const LatentModelSpec& spec, const Likelihood& lik, const HyperPoint& hyper,
                      const Eigen::VectorXd& start = {}, const FitOptions& options = {});

// Log-likelihood contributions summed per area as functions of eta, with
// first and second derivatives. Constants are included.
struct AreaLogLik {
    Eigen::VectorXd value;
    Eigen::VectorXd d1;
    Eigen::VectorXd d2;
};
AreaLogLik evaluate_likelihood(const Likelihood& lik, int n_areas, const Eigen::VectorXd& eta, double d);

// Sparse map from the latent vector to the linear predictor.
Eigen::SparseMatrix<double> predictor_map(const LatentModelSpec& spec, const HyperPoint& hyper);

// Implied prior precision of b = sigma (sqrt(1 - phi) e + sqrt(phi) s) for one
// level (dense). phi = 1 gives sigma^-2 times the scaled ICAR matrix.
Eigen::MatrixXd bym2_precision(const LevelStructure& level, double sigma, double phi);

}  // namespace sae
