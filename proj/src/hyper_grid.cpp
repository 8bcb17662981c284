#include "sae/hyper_grid.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <thread>

namespace sae {

std::string to_string(HyperAxis axis) {
    switch (axis) {
    case HyperAxis::log_sigma:
        return "log_sigma";
    case HyperAxis::logit_phi:
        return "logit_phi";
    case HyperAxis::logit_d:
        return "logit_d";
    }
    return "unknown";
}

HyperPoint HyperGrid::hyper_of(const std::vector<double>& coords) const {
    HyperPoint h = base;
    for (std::size_t a = 0; a < axes.size(); ++a) {
        switch (axes[a]) {
        case HyperAxis::log_sigma:
            h.sigma = std::exp(coords[a]);
            break;
        case HyperAxis::logit_phi:
            h.phi = expit(coords[a]);
            break;
        case HyperAxis::logit_d:
            h.d = expit(coords[a]);
            break;
        }
    }
    return h;
}

HyperPoint HyperGrid::hyper_at(std::size_t k) const { return hyper_of(points.at(k)); }

std::vector<double> HyperGrid::weights() const {
    std::vector<double> w(log_weights.size());
    std::transform(log_weights.begin(), log_weights.end(), w.begin(), [](double v) { return std::exp(v); });
    return w;
}

std::vector<double> structure_covariance_eigenvalues(const LatentModelSpec& spec) {
    std::vector<double> out;
    const Eigen::MatrixXd s(spec.structure);
    for (const auto& grp : spec.constraints) {
        const auto m = static_cast<Eigen::Index>(grp.size());
        if (m < 2) {
            continue;
        }
        Eigen::MatrixXd block(m, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = 0; j < m; ++j) {
                block(i, j) = s(grp[i], grp[j]);
            }
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block, Eigen::EigenvaluesOnly);
        for (Eigen::Index k = 1; k < m; ++k) {
            out.push_back(1.0 / eig.eigenvalues()(k));
        }
    }
    return out;
}

HyperPrior::HyperPrior(const LatentModelSpec& spec, const PriorSettings& settings)
    : sigma_(pc_prior_sigma(settings.sigma_u, settings.sigma_alpha)), settings_(settings) {
    if (!(settings.logit_d_sd > 0.0)) {
        throw std::domain_error("prior sd of logit(d) must be positive");
    }
    if (spec.has_structure()) {
        phi_.emplace(structure_covariance_eigenvalues(spec), settings.phi_prob_mass);
    }
}

double HyperPrior::log_density(const std::vector<HyperAxis>& axes, const std::vector<double>& coords) const {
    double lp = 0.0;
    for (std::size_t a = 0; a < axes.size(); ++a) {
        const double t = coords[a];
        switch (axes[a]) {
        case HyperAxis::log_sigma:
            lp += sigma_.log_density_log_sigma(t);
            break;
        case HyperAxis::logit_phi:
            lp += phi_->log_density_logit(t);
            break;
        case HyperAxis::logit_d: {
            const double z = (t - settings_.logit_d_mean) / settings_.logit_d_sd;
            lp += -0.5 * kLog2Pi - std::log(settings_.logit_d_sd) - 0.5 * z * z;
            break;
        }
        }
    }
    return lp;
}

namespace {

struct Box {
    double lo;
    double hi;
};

Box default_box(HyperAxis axis) {
    switch (axis) {
    case HyperAxis::log_sigma:
        return {-6.9, 2.3};
    case HyperAxis::logit_phi:
        return {-7.0, 7.0};
    case HyperAxis::logit_d:
        return {-9.0, 3.0};
    }
    return {-5.0, 5.0};
}

double start_value(HyperAxis axis) {
    switch (axis) {
    case HyperAxis::log_sigma:
        return std::log(0.5);
    case HyperAxis::logit_phi:
        return 0.0;
    case HyperAxis::logit_d:
        return -2.0;
    }
    return 0.0;
}

class Objective {
public:
    Objective(const LatentModelSpec& spec, const Likelihood& lik, const HyperPrior& prior, const HyperGrid& grid,
              const FitOptions& newton)
        : spec_(spec), lik_(lik), prior_(prior), grid_(grid), newton_(newton) {}

    double operator()(const std::vector<double>& coords) {
        try {
            LatentFit fit = fit_at(coords, warm_);
            warm_ = fit.mode;
            return fit.log_evidence + prior_.log_density(grid_.axes, coords);
        } catch (const NumericalError&) {
            return -INFINITY;
        }
    }

    LatentFit fit_at(const std::vector<double>& coords, const Eigen::VectorXd& start) const {
        const HyperPoint h = grid_.hyper_of(coords);
        if (lik_.kind == LikelihoodKind::gaussian) {
            return gaussian_conditional_fit(spec_, lik_, h);
        }
        return laplace_fit(spec_, lik_, h, start, newton_);
    }

    const Eigen::VectorXd& warm() const { return warm_; }

private:
    const LatentModelSpec& spec_;
    const Likelihood& lik_;
    const HyperPrior& prior_;
    const HyperGrid& grid_;
    FitOptions newton_;
    Eigen::VectorXd warm_;
};

// Golden-section maximum of f on [lo, hi].
template <class F>
double golden_max(F&& f, double lo, double hi, double tol) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - r * (b - a);
    double d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

GridFit build_hyper_grid(const LatentModelSpec& spec, const Likelihood& lik, const PriorSettings& priors,
                         const GridSettings& settings) {
    spec.validate();
    const HyperPrior prior(spec, priors);
    GridFit out;
    HyperGrid& grid = out.grid;
    grid.base.sigma = settings.fixed_sigma.value_or(1.0);
    grid.base.phi = spec.has_structure() ? settings.fixed_phi.value_or(0.5) : 0.0;
    grid.base.d = settings.fixed_d.value_or(0.05);
    if (!settings.fixed_sigma) {
        grid.axes.push_back(HyperAxis::log_sigma);
    }
    if (spec.has_structure() && !settings.fixed_phi) {
        grid.axes.push_back(HyperAxis::logit_phi);
    }
    if (lik.uses_overdispersion() && !settings.fixed_d) {
        grid.axes.push_back(HyperAxis::logit_d);
    }
    const std::size_t k = grid.axes.size();
    Objective objective(spec, lik, prior, grid, settings.newton);

    if (k == 0) {
        out.mode_fit = objective.fit_at({}, {});
        grid.points.push_back({});
        grid.log_evidence.push_back(out.mode_fit.log_evidence);
        grid.log_prior.push_back(0.0);
        grid.log_weights.push_back(0.0);
        out.fits.push_back(out.mode_fit);
        return out;
    }

    // Mode: coordinate-wise golden-section search.
    std::vector<double> x(k);
    std::vector<Box> box(k);
    for (std::size_t a = 0; a < k; ++a) {
        x[a] = start_value(grid.axes[a]);
        box[a] = default_box(grid.axes[a]);
    }
    const double tol = 1e-3;
    for (int cycle = 0; cycle < 8; ++cycle) {
        double moved = 0.0;
        for (std::size_t a = 0; a < k; ++a) {
            auto along = [&](double t) {
                auto c = x;
                c[a] = t;
                return objective(c);
            };
            double lo = box[a].lo, hi = box[a].hi;
            if (cycle > 0) {
                lo = std::max(lo, x[a] - 1.0);
                hi = std::min(hi, x[a] + 1.0);
            }
            double t = golden_max(along, lo, hi, tol);
            if ((t - lo < 2 * tol && lo > box[a].lo) || (hi - t < 2 * tol && hi < box[a].hi)) {
                t = golden_max(along, box[a].lo, box[a].hi, tol);
            }
            for (int widen = 0; widen < 2; ++widen) {
                const double width = box[a].hi - box[a].lo;
                if (t - box[a].lo < 2 * tol) {
                    box[a].lo -= width;
                } else if (box[a].hi - t < 2 * tol) {
                    box[a].hi += width;
                } else {
                    break;
                }
                grid.warnings.push_back(
                    fmt::format("hyperparameter mode on the search boundary for {}; search widened", to_string(grid.axes[a])));
                t = golden_max(along, box[a].lo, box[a].hi, tol);
            }
            moved = std::max(moved, std::abs(t - x[a]));
            x[a] = t;
        }
        if (moved < tol) {
            break;
        }
    }
    grid.mode = x;
    const double f0 = objective(x);
    const Eigen::VectorXd mode_latent = objective.warm();
    out.mode_fit = objective.fit_at(x, mode_latent);

    // Curvature by central differences.
    const double h = 0.1;
    auto eval = [&](std::vector<double> c) { return objective(c); };
    Eigen::MatrixXd hess(k, k);
    std::vector<double> fp(k), fm(k);
    for (std::size_t a = 0; a < k; ++a) {
        auto c = x;
        c[a] = x[a] + h;
        fp[a] = eval(c);
        c[a] = x[a] - h;
        fm[a] = eval(c);
        hess(a, a) = (fp[a] - 2.0 * f0 + fm[a]) / (h * h);
    }
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
            auto c = x;
            c[a] = x[a] + h;
            c[b] = x[b] + h;
            const double fpp = eval(c);
            c[b] = x[b] - h;
            const double fpm = eval(c);
            c[a] = x[a] - h;
            const double fmm = eval(c);
            c[b] = x[b] + h;
            const double fmp = eval(c);
            hess(a, b) = hess(b, a) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
        }
    }
    std::vector<double> sd(k);
    const Eigen::MatrixXd neg = -hess;
    const Eigen::LLT<Eigen::MatrixXd> llt(neg);
    Eigen::MatrixXd cov;
    if (llt.info() == Eigen::Success) {
        cov = llt.solve(Eigen::MatrixXd::Identity(k, k));
    }
    for (std::size_t a = 0; a < k; ++a) {
        double s = settings.sd_max;
        if (cov.size() && cov(a, a) > 0.0) {
            s = std::sqrt(cov(a, a));
        } else if (neg(a, a) > 0.0) {
            s = 1.0 / std::sqrt(neg(a, a));
        }
        sd[a] = std::clamp(s, settings.sd_min, settings.sd_max);
    }
    // One-sided stretch for skewed directions: compare the drop two
    // conditional sds away with the Gaussian value of 2.
    grid.sd_minus.resize(k);
    grid.sd_plus.resize(k);
    for (std::size_t a = 0; a < k; ++a) {
        const double sc = neg(a, a) > 0.0 ? 1.0 / std::sqrt(neg(a, a)) : sd[a];
        for (int sign : {-1, 1}) {
            auto c = x;
            c[a] = x[a] + sign * 2.0 * sc;
            const double drop = f0 - eval(c);
            const double stretch = drop > 0.0 ? std::clamp(std::sqrt(2.0 / drop), 0.5, 3.0) : 3.0;
            const double v = std::clamp(sd[a] * stretch, settings.sd_min, settings.sd_max);
            (sign < 0 ? grid.sd_minus : grid.sd_plus)[a] = v;
        }
    }

    // Regular grid with trapezoid cell widths.
    const int npts = k <= 2 ? settings.points_small : settings.points_three;
    if (npts < 3) {
        throw std::invalid_argument("grid needs at least 3 points per axis");
    }
    std::vector<std::vector<double>> axis_values(k), axis_logw(k);
    for (std::size_t a = 0; a < k; ++a) {
        const double dt = 2.0 * settings.span_sd / (npts - 1);
        for (int j = 0; j < npts; ++j) {
            const double t = -settings.span_sd + j * dt;
            const double s = t < 0 ? grid.sd_minus[a] : grid.sd_plus[a];
            axis_values[a].push_back(x[a] + t * s);
        }
        for (int j = 0; j < npts; ++j) {
            const double left = j > 0 ? axis_values[a][j] - axis_values[a][j - 1] : 0.0;
            const double right = j + 1 < npts ? axis_values[a][j + 1] - axis_values[a][j] : 0.0;
            axis_logw[a].push_back(std::log(0.5 * (left + right)));
        }
    }
    std::size_t total = 1;
    for (std::size_t a = 0; a < k; ++a) {
        total *= static_cast<std::size_t>(npts);
    }
    grid.points.resize(total);
    std::vector<double> cell(total, 0.0);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        std::vector<double> c(k);
        for (std::size_t a = k; a-- > 0;) {
            const std::size_t j = rem % static_cast<std::size_t>(npts);
            rem /= static_cast<std::size_t>(npts);
            c[a] = axis_values[a][j];
            cell[idx] += axis_logw[a][j];
        }
        grid.points[idx] = std::move(c);
    }

    out.fits.resize(total);
    grid.log_evidence.assign(total, -INFINITY);
    grid.log_prior.assign(total, 0.0);
    std::vector<std::string> failures(total);
    unsigned nthreads = settings.threads ? settings.threads : std::max(1u, std::thread::hardware_concurrency());
    nthreads = static_cast<unsigned>(std::min<std::size_t>(nthreads, total));
    auto work = [&](unsigned tid) {
        for (std::size_t idx = tid; idx < total; idx += nthreads) {
            try {
                out.fits[idx] = objective.fit_at(grid.points[idx], mode_latent);
                grid.log_evidence[idx] = out.fits[idx].log_evidence;
            } catch (const std::exception& e) {
                failures[idx] = e.what();
            }
            grid.log_prior[idx] = prior.log_density(grid.axes, grid.points[idx]);
        }
    };
    if (nthreads <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < nthreads; ++t) {
            pool.emplace_back(work, t);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    std::size_t failed = 0;
    for (std::size_t idx = 0; idx < total; ++idx) {
        if (!failures[idx].empty()) {
            ++failed;
        }
    }
    if (failed == total) {
        throw NumericalError("every hyperparameter grid point failed: " + failures[0]);
    }
    if (failed > 0) {
        grid.warnings.push_back(fmt::format("{} of {} grid points failed and carry zero weight", failed, total));
    }

    grid.log_weights.resize(total);
    double mx = -INFINITY;
    for (std::size_t idx = 0; idx < total; ++idx) {
        grid.log_weights[idx] = grid.log_evidence[idx] + grid.log_prior[idx] + cell[idx];
        mx = std::max(mx, grid.log_weights[idx]);
    }
    double sum = 0.0;
    for (double v : grid.log_weights) {
        sum += std::exp(v - mx);
    }
    const double lse = mx + std::log(sum);
    std::size_t best = 0;
    for (std::size_t idx = 0; idx < total; ++idx) {
        grid.log_weights[idx] -= lse;
        if (grid.log_weights[idx] > grid.log_weights[best]) {
            best = idx;
        }
    }
    std::size_t rem = best;
    for (std::size_t a = k; a-- > 0;) {
        const std::size_t j = rem % static_cast<std::size_t>(npts);
        rem /= static_cast<std::size_t>(npts);
        if (j == 0 || j + 1 == static_cast<std::size_t>(npts)) {
            grid.warnings.push_back(
                fmt::format("largest grid weight sits on the grid edge for {}", to_string(grid.axes[a])));
        }
    }
    return out;
}

}  // namespace sae
