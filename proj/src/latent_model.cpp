#include "sae/latent_model.hpp"

#include "sae/betabinomial.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sae {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

void LatentModelSpec::validate() const {
    if (n_areas <= 0) {
        throw std::invalid_argument("latent model needs at least one area");
    }
    if (fixed_design.cols() > 0 && fixed_design.rows() != n_areas) {
        throw std::invalid_argument("fixed design must have one row per area");
    }
    if (static_cast<int>(fixed_names.size()) != n_fixed()) {
        throw std::invalid_argument("one name per fixed effect is required");
    }
    const int m = n_structured();
    if (structure.rows() != m || structure.cols() != m) {
        throw std::invalid_argument("structure matrix does not match the structured areas");
    }
    for (int a : structured_areas) {
        if (a < 0 || a >= n_areas) {
            throw std::invalid_argument("structured area index out of range");
        }
    }
    for (const auto& g : constraints) {
        if (g.empty()) {
            throw std::invalid_argument("empty constraint group");
        }
        for (int k : g) {
            if (k < 0 || k >= m) {
                throw std::invalid_argument("constraint index out of range");
            }
        }
    }
}

LatentModelSpec make_latent_spec(const LevelStructure& level, Eigen::MatrixXd fixed_design,
                                 std::vector<std::string> fixed_names) {
    LatentModelSpec spec;
    spec.n_areas = static_cast<int>(level.size());
    spec.fixed_design = std::move(fixed_design);
    spec.fixed_names = std::move(fixed_names);
    if (level.has_structure()) {
        std::vector<int> slot(level.size(), -1);
        for (const auto& comp : level.components) {
            if (comp.size() < 2) {
                continue;
            }
            std::vector<int> group;
            for (int a : comp) {
                slot[a] = spec.n_structured();
                group.push_back(slot[a]);
                spec.structured_areas.push_back(a);
            }
            spec.constraints.push_back(std::move(group));
        }
        std::vector<Triplet> trips;
        const double c = *level.scale_factor;
        for (int k = 0; k < level.icar.outerSize(); ++k) {
            for (SpMat::InnerIterator it(level.icar, k); it; ++it) {
                const int i = slot[it.row()];
                const int j = slot[it.col()];
                if (i >= 0 && j >= 0) {
                    trips.emplace_back(i, j, c * it.value());
                }
            }
        }
        spec.structure.resize(spec.n_structured(), spec.n_structured());
        spec.structure.setFromTriplets(trips.begin(), trips.end());
    }
    spec.validate();
    return spec;
}

SpMat predictor_map(const LatentModelSpec& spec, const HyperPoint& hyper) {
    const int p = spec.n_fixed();
    const double phi = spec.has_structure() ? hyper.phi : 0.0;
    const double we = hyper.sigma * std::sqrt(1.0 - phi);
    const double ws = hyper.sigma * std::sqrt(phi);
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(spec.n_areas) * (p + 2));
    for (int i = 0; i < spec.n_areas; ++i) {
        for (int j = 0; j < p; ++j) {
            if (spec.fixed_design(i, j) != 0.0) {
                trips.emplace_back(i, j, spec.fixed_design(i, j));
            }
        }
        trips.emplace_back(i, spec.offset_e() + i, we);
    }
    for (int k = 0; k < spec.n_structured(); ++k) {
        trips.emplace_back(spec.structured_areas[k], spec.offset_s() + k, ws);
    }
    SpMat a(spec.n_areas, spec.dim());
    a.setFromTriplets(trips.begin(), trips.end());
    return a;
}

namespace {

SpMat prior_precision(const LatentModelSpec& spec) {
    std::vector<Triplet> trips;
    for (int j = 0; j < spec.n_fixed(); ++j) {
        trips.emplace_back(j, j, spec.fixed_precision);
    }
    for (int i = 0; i < spec.n_areas; ++i) {
        trips.emplace_back(spec.offset_e() + i, spec.offset_e() + i, 1.0);
    }
    const int os = spec.offset_s();
    for (int k = 0; k < spec.structure.outerSize(); ++k) {
        for (SpMat::InnerIterator it(spec.structure, k); it; ++it) {
            trips.emplace_back(os + it.row(), os + it.col(), it.value());
        }
    }
    for (int k = 0; k < spec.n_structured(); ++k) {
        trips.emplace_back(os + k, os + k, spec.jitter);
    }
    SpMat q(spec.dim(), spec.dim());
    q.setFromTriplets(trips.begin(), trips.end());
    return q;
}

SpMat constraint_matrix(const LatentModelSpec& spec) {
    std::vector<Triplet> trips;
    for (std::size_t g = 0; g < spec.constraints.size(); ++g) {
        for (int k : spec.constraints[g]) {
            trips.emplace_back(static_cast<int>(g), spec.offset_s() + k, 1.0);
        }
    }
    SpMat c(static_cast<int>(spec.constraints.size()), spec.dim());
    c.setFromTriplets(trips.begin(), trips.end());
    return c;
}

// Gradient with the constrained directions removed (per-group mean over s).
double projected_gradient_norm(const LatentModelSpec& spec, const Eigen::VectorXd& g) {
    Eigen::VectorXd pg = g;
    for (const auto& grp : spec.constraints) {
        double mean = 0.0;
        for (int k : grp) {
            mean += g(spec.offset_s() + k);
        }
        mean /= static_cast<double>(grp.size());
        for (int k : grp) {
            pg(spec.offset_s() + k) -= mean;
        }
    }
    return pg.size() ? pg.cwiseAbs().maxCoeff() : 0.0;
}

using Ldlt = Eigen::SimplicialLDLT<SpMat>;

double log_det(const Ldlt& f) { return f.vectorD().array().log().sum(); }

void factor(Ldlt& f, const SpMat& q) {
    f.compute(q);
    if (f.info() != Eigen::Success || (f.vectorD().array() <= 0.0).any()) {
        throw NumericalError("posterior precision is not positive definite");
    }
}

// Log density at 0 of the constraint values C x for x ~ N(mean, Q^-1).
double constraint_log_density(const Ldlt& f, const SpMat& c, const Eigen::VectorXd& mean) {
    const int r = static_cast<int>(c.rows());
    if (r == 0) {
        return 0.0;
    }
    const Eigen::MatrixXd ct = Eigen::MatrixXd(c.transpose());
    const Eigen::MatrixXd cov = c * f.solve(ct);
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("constraint covariance is not positive definite");
    }
    const Eigen::VectorXd m = c * mean;
    const double ld = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * r * kLog2Pi - 0.5 * ld - 0.5 * m.dot(llt.solve(m));
}

// Newton direction x + delta that satisfies C (x + delta) = 0 when C x = 0.
Eigen::VectorXd constrained_direction(const Ldlt& f, const SpMat& c, const Eigen::VectorXd& g) {
    Eigen::VectorXd delta = f.solve(g);
    if (c.rows() == 0) {
        return delta;
    }
    const Eigen::MatrixXd ct = Eigen::MatrixXd(c.transpose());
    const Eigen::MatrixXd qct = f.solve(ct);
    const Eigen::MatrixXd cov = c * qct;
    const Eigen::VectorXd lam = cov.llt().solve(c * delta);
    delta -= qct * lam;
    return delta;
}

struct State {
    Eigen::VectorXd x;
    Eigen::VectorXd eta;
    AreaLogLik lik;
    double objective = 0.0;
};

class Problem {
public:
    Problem(const LatentModelSpec& spec, const Likelihood& l, const HyperPoint& h)
        : spec_(spec), lik_(l), hyper_(h) {
        spec.validate();
        if (!(h.sigma > 0.0) || !std::isfinite(h.sigma)) {
            throw std::domain_error("sigma must be positive");
        }
        if (spec.has_structure() && !(h.phi >= 0.0 && h.phi <= 1.0)) {
            throw std::domain_error("phi must lie in [0, 1]");
        }
        if (l.uses_overdispersion() && !(h.d > 0.0 && h.d < 1.0)) {
            throw std::domain_error("d must lie in (0, 1)");
        }
        a_ = predictor_map(spec, h);
        q0_ = prior_precision(spec);
        c_ = constraint_matrix(spec);
    }

    State evaluate(Eigen::VectorXd x) const {
        State s;
        s.eta = a_ * x;
        s.lik = evaluate_likelihood(lik_, spec_.n_areas, s.eta, hyper_.d);
        s.objective = s.lik.value.sum() - 0.5 * x.dot(q0_ * x);
        s.x = std::move(x);
        return s;
    }

    Eigen::VectorXd gradient(const State& s) const { return a_.transpose() * s.lik.d1 - q0_ * s.x; }

    SpMat posterior_precision(const State& s) const {
        Eigen::VectorXd w = (-s.lik.d2).cwiseMax(0.0);
        SpMat wa = w.asDiagonal() * a_;
        SpMat q = q0_ + SpMat(a_.transpose() * wa);
        q.makeCompressed();
        return q;
    }

    LatentFit finish(const State& s, int iterations) const {
        LatentFit fit;
        fit.hyper = hyper_;
        fit.mode = s.x;
        fit.iterations = iterations;
        const Eigen::VectorXd g = gradient(s);
        fit.gradient_norm = projected_gradient_norm(spec_, g);
        fit.log_likelihood = s.lik.value.sum();
        const int dim = spec_.dim();

        Ldlt f0;
        factor(f0, q0_);
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(dim);
        const double prior_x = -0.5 * dim * kLog2Pi + 0.5 * log_det(f0) - 0.5 * s.x.dot(q0_ * s.x);
        const double prior_c = constraint_log_density(f0, c_, zero);

        Ldlt fp;
        factor(fp, posterior_precision(s));
        const Eigen::VectorXd shift = fp.solve(g);
        const Eigen::VectorXd mu_u = s.x + shift;
        const double post_x = -0.5 * dim * kLog2Pi + 0.5 * log_det(fp) - 0.5 * g.dot(shift);
        const double post_c = constraint_log_density(fp, c_, mu_u);

        fit.log_evidence = fit.log_likelihood + (prior_x - prior_c) - (post_x - post_c);
        if (!std::isfinite(fit.log_evidence)) {
            throw NumericalError("non-finite evidence");
        }
        return fit;
    }

    const LatentModelSpec& spec() const { return spec_; }
    const SpMat& constraints() const { return c_; }

private:
    const LatentModelSpec& spec_;
    const Likelihood& lik_;
    HyperPoint hyper_;
    SpMat a_;
    SpMat q0_;
    SpMat c_;
};

}  // namespace

AreaLogLik evaluate_likelihood(const Likelihood& lik, int n_areas, const Eigen::VectorXd& eta, double d) {
    AreaLogLik out;
    out.value = Eigen::VectorXd::Zero(n_areas);
    out.d1 = Eigen::VectorXd::Zero(n_areas);
    out.d2 = Eigen::VectorXd::Zero(n_areas);
    switch (lik.kind) {
    case LikelihoodKind::gaussian:
        for (const auto& o : lik.gaussian) {
            const double r = o.value - eta(o.area);
            out.value(o.area) += -0.5 * (kLog2Pi + std::log(o.variance)) - 0.5 * r * r / o.variance;
            out.d1(o.area) += r / o.variance;
            out.d2(o.area) -= 1.0 / o.variance;
        }
        break;
    case LikelihoodKind::betabinomial:
    case LikelihoodKind::binomial:
        for (const auto& o : lik.clusters) {
            const ClusterLogLik c = lik.kind == LikelihoodKind::binomial ? binomial_eta(o.y, o.n, eta(o.area))
                                                                          : betabinomial_eta(o.y, o.n, eta(o.area), d);
            out.value(o.area) += c.value + log_binomial_coefficient(o.n, o.y);
            out.d1(o.area) += c.d1;
            out.d2(o.area) += c.d2;
        }
        break;
    }
    if (!out.value.allFinite()) {
        throw NumericalError("non-finite likelihood");
    }
    return out;
}

LatentFit gaussian_conditional_fit(const LatentModelSpec& spec, const Likelihood& lik, const HyperPoint& hyper) {
    if (lik.kind != LikelihoodKind::gaussian) {
        throw std::invalid_argument("gaussian_conditional_fit needs a Gaussian likelihood");
    }
    for (const auto& o : lik.gaussian) {
        if (!(o.variance > 0.0) || !std::isfinite(o.variance) || o.area < 0 || o.area >= spec.n_areas) {
            throw std::invalid_argument("Gaussian observation needs a valid area and a positive finite variance");
        }
    }
    const Problem prob(spec, lik, hyper);
    State s = prob.evaluate(Eigen::VectorXd::Zero(spec.dim()));
    Ldlt f;
    factor(f, prob.posterior_precision(s));
    s = prob.evaluate(s.x + constrained_direction(f, prob.constraints(), prob.gradient(s)));
    return prob.finish(s, 1);
}

LatentFit laplace_fit(const LatentModelSpec& spec, const Likelihood& lik, const HyperPoint& hyper,
                      const Eigen::VectorXd& start, const FitOptions& options) {
    const Problem prob(spec, lik, hyper);
    Eigen::VectorXd x0 = start.size() ? start : Eigen::VectorXd::Zero(spec.dim());
    if (x0.size() != spec.dim()) {
        throw std::invalid_argument("start vector has the wrong dimension");
    }
    for (const auto& grp : spec.constraints) {
        double mean = 0.0;
        for (int k : grp) {
            mean += x0(spec.offset_s() + k);
        }
        mean /= static_cast<double>(grp.size());
        for (int k : grp) {
            x0(spec.offset_s() + k) -= mean;
        }
    }
    State s = prob.evaluate(std::move(x0));
    int it = 0;
    bool converged = false;
    double gnorm = 0.0;
    for (; it < options.max_iter; ++it) {
        const Eigen::VectorXd g = prob.gradient(s);
        gnorm = projected_gradient_norm(spec, g);
        if (gnorm < options.gradient_tol) {
            converged = true;
            break;
        }
        Ldlt f;
        factor(f, prob.posterior_precision(s));
        const Eigen::VectorXd delta = constrained_direction(f, prob.constraints(), g);
        double t = 1.0;
        State next = prob.evaluate(s.x + delta);
        for (int h = 0; h < 60 && !(next.objective >= s.objective); ++h) {
            t *= 0.5;
            next = prob.evaluate(s.x + t * delta);
        }
        const double step = t * delta.norm();
        if (next.objective >= s.objective) {
            s = std::move(next);
        }
        if (step < options.step_tol) {
            converged = true;
            ++it;
            break;
        }
    }
    if (!converged) {
        throw NumericalError(fmt::format("Newton iteration did not converge after {} iterations (gradient {:.3g})",
                                         options.max_iter, gnorm));
    }
    return prob.finish(s, it);
}

LatentGaussian::LatentGaussian(const LatentModelSpec& spec, const Likelihood& lik, const LatentFit& fit)
    : mode_(fit.mode) {
    const Problem prob(spec, lik, fit.hyper);
    const State s = prob.evaluate(fit.mode);
    a_ = predictor_map(spec, fit.hyper);
    c_ = prob.constraints();
    factor(ldlt_, prob.posterior_precision(s));
    inv_sqrt_d_ = ldlt_.vectorD().array().rsqrt();
    if (c_.rows() > 0) {
        const Eigen::MatrixXd ct = Eigen::MatrixXd(c_.transpose());
        qinv_ct_ = ldlt_.solve(ct);
        const Eigen::MatrixXd cov = c_ * qinv_ct_;
        k_ = qinv_ct_ * cov.llt().solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
    }
}

Eigen::VectorXd LatentGaussian::constrained_solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd v = ldlt_.solve(rhs);
    if (c_.rows() > 0) {
        v -= k_ * (c_ * v);
    }
    return v;
}

Eigen::VectorXd LatentGaussian::predictor_mean() const { return a_ * mode_; }

Eigen::VectorXd LatentGaussian::predictor_variance() const {
    const Eigen::Index n = a_.rows();
    Eigen::VectorXd out(n);
    const SpMat at = a_.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd ai = at.col(i);
        out(i) = ai.dot(constrained_solve(ai));
    }
    return out;
}

Eigen::MatrixXd LatentGaussian::covariance() const {
    const Eigen::Index dim = mode_.size();
    Eigen::MatrixXd cov(dim, dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
        cov.col(j) = constrained_solve(Eigen::VectorXd::Unit(dim, j));
    }
    return 0.5 * (cov + cov.transpose());
}

Eigen::VectorXd LatentGaussian::draw_predictor(Rng& rng) const {
    const Eigen::Index dim = mode_.size();
    Eigen::VectorXd z(dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
        z(k) = rng.normal();
    }
    z = z.cwiseProduct(inv_sqrt_d_);
    Eigen::VectorXd eps = ldlt_.permutationPinv() * Eigen::VectorXd(ldlt_.matrixU().solve(z));
    if (c_.rows() > 0) {
        eps -= k_ * (c_ * eps);
    }
    return a_ * (mode_ + eps);
}

namespace {

// Sum-to-zero generalized inverse of the scaled ICAR matrix, zero on singletons.
Eigen::MatrixXd scaled_generalized_inverse(const LevelStructure& level) {
    const auto n = static_cast<Eigen::Index>(level.size());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    if (!level.has_structure()) {
        return out;
    }
    const Eigen::MatrixXd q = Eigen::MatrixXd(level.icar) * *level.scale_factor;
    for (const auto& comp : level.components) {
        const auto m = static_cast<Eigen::Index>(comp.size());
        if (m < 2) {
            continue;
        }
        Eigen::MatrixXd block(m, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = 0; j < m; ++j) {
                block(i, j) = q(comp[i], comp[j]);
            }
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block);
        const Eigen::VectorXd ev = eig.eigenvalues();
        const double cut = 1e-10 * ev.maxCoeff();
        Eigen::VectorXd inv = Eigen::VectorXd::Zero(m);
        for (Eigen::Index k = 0; k < m; ++k) {
            if (ev(k) > cut) {
                inv(k) = 1.0 / ev(k);
            }
        }
        const Eigen::MatrixXd g = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = 0; j < m; ++j) {
                out(comp[i], comp[j]) = g(i, j);
            }
        }
    }
    return out;
}

}  // namespace

Eigen::MatrixXd bym2_precision(const LevelStructure& level, double sigma, double phi) {
    if (!(sigma > 0.0) || !(phi >= 0.0 && phi <= 1.0)) {
        throw std::domain_error("bym2_precision: need sigma > 0 and phi in [0, 1]");
    }
    const auto n = static_cast<Eigen::Index>(level.size());
    const double ph = level.has_structure() ? phi : 0.0;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(n, n) * (1.0 - ph) + scaled_generalized_inverse(level) * ph;
    cov *= sigma * sigma;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd ev = eig.eigenvalues();
    const double cut = 1e-10 * ev.maxCoeff();
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        if (ev(k) > cut) {
            inv(k) = 1.0 / ev(k);
        }
    }
    return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace sae
