#include "sae/posterior.hpp"

#include <algorithm>
#include <stdexcept>

namespace sae {

std::string to_string(Method method) {
    switch (method) {
    case Method::direct:
        return "direct";
    case Method::area_level:
        return "area_level";
    case Method::unit_level:
        return "unit_level";
    }
    return "unknown";
}

Method parse_method(const std::string& text) {
    if (text == "direct") {
        return Method::direct;
    }
    if (text == "area_level" || text == "area") {
        return Method::area_level;
    }
    if (text == "unit_level" || text == "unit") {
        return Method::unit_level;
    }
    throw std::invalid_argument("unknown method '" + text + "' (expected direct, area or unit)");
}

Eigen::MatrixXd sample_predictor(const PosteriorResult& result, int n_samples, std::uint64_t seed) {
    if (n_samples < kMinSamples) {
        throw std::invalid_argument("at least 100 posterior samples are required");
    }
    if (!result.spec || !result.likelihood || result.fit.fits.empty()) {
        throw std::invalid_argument("posterior result has no fitted grid");
    }
    const auto& grid = result.fit.grid;
    std::vector<double> cum(grid.log_weights.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < cum.size(); ++k) {
        acc += std::exp(grid.log_weights[k]);
        cum[k] = acc;
    }
    std::vector<std::unique_ptr<LatentGaussian>> cache(cum.size());
    Rng rng(seed);
    const auto n = static_cast<Eigen::Index>(result.spec->n_areas);
    Eigen::MatrixXd out(n_samples, n);
    for (int s = 0; s < n_samples; ++s) {
        const double u = rng.uniform() * acc;
        auto idx = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        idx = std::min(idx, cum.size() - 1);
        if (!cache[idx]) {
            cache[idx] = std::make_unique<LatentGaussian>(*result.spec, *result.likelihood, result.fit.fits[idx]);
        }
        out.row(s) = cache[idx]->draw_predictor(rng).transpose();
    }
    return out;
}

Eigen::MatrixXd sample_posterior(const PosteriorResult& result, int n_samples, std::uint64_t seed) {
    Eigen::MatrixXd eta = sample_predictor(result, n_samples, seed);
    return eta.unaryExpr([](double v) { return expit_open(v); });
}

PredictorMoments predictor_moments(const PosteriorResult& result) {
    const auto& grid = result.fit.grid;
    const auto n = static_cast<Eigen::Index>(result.spec->n_areas);
    PredictorMoments m;
    m.mean = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd second = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < grid.log_weights.size(); ++k) {
        const double w = std::exp(grid.log_weights[k]);
        if (w == 0.0) {
            continue;
        }
        const LatentGaussian g(*result.spec, *result.likelihood, result.fit.fits[k]);
        const Eigen::VectorXd mu = g.predictor_mean();
        const Eigen::VectorXd var = g.predictor_variance();
        m.mean += w * mu;
        second += w * (var + mu.cwiseProduct(mu));
    }
    m.variance = second - m.mean.cwiseProduct(m.mean);
    return m;
}

HyperPoint hyper_posterior_mean(const HyperGrid& grid) {
    HyperPoint out{0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < grid.points.size(); ++k) {
        const double w = std::exp(grid.log_weights[k]);
        const HyperPoint h = grid.hyper_at(k);
        out.sigma += w * h.sigma;
        out.phi += w * h.phi;
        out.d += w * h.d;
    }
    return out;
}

}  // namespace sae
