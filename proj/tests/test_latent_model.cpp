#include "sae/latent_model.hpp"
#include "sae/rng.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace sae;

namespace {

Eigen::MatrixXd intercept(int n) { return Eigen::MatrixXd::Ones(n, 1); }

Likelihood gaussian(const std::vector<int>& areas, const std::vector<double>& y, const std::vector<double>& v) {
    Likelihood lik;
    for (std::size_t k = 0; k < areas.size(); ++k) {
        lik.gaussian.push_back({areas[k], y[k], v[k]});
    }
    return lik;
}

}  // namespace

TEST_CASE("one area, unit prior, unit datum: posterior N(0, 0.5)") {
    LatentModelSpec spec;
    spec.n_areas = 1;
    spec.fixed_design = Eigen::MatrixXd(1, 0);
    const auto lik = gaussian({0}, {0.0}, {1.0});
    const auto fit = gaussian_conditional_fit(spec, lik, {1.0, 0.5, 0.05});
    const LatentGaussian g(spec, lik, fit);
    CHECK(g.predictor_mean()(0) == doctest::Approx(0.0));
    CHECK(g.predictor_variance()(0) == doctest::Approx(0.5).epsilon(1e-12));
    // evidence: y ~ N(0, 2)
    CHECK(fit.log_evidence == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * 2.0)));
}

TEST_CASE("vanishing information leaves the prior") {
    auto graph = test::level1_graph(3, test::path_edges(3));
    const auto spec = make_latent_spec(graph->level(1), intercept(3), {"intercept"});
    const HyperPoint h{0.7, 0.4, 0.05};
    const auto lik = gaussian({0, 1, 2}, {1.0, -2.0, 0.5}, {1e12, 1e12, 1e12});
    const auto fit = gaussian_conditional_fit(spec, lik, h);
    const LatentGaussian g(spec, lik, fit);
    const Eigen::MatrixXd x = intercept(3);
    const auto s_cov = oracle::structured_covariance(Eigen::MatrixXd(graph->level(1).icar), spec.jitter);
    const auto prior = oracle::theta_covariance(x, 1000.0, h.sigma, h.phi, s_cov);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(g.predictor_mean()(i)) < 1e-8);
        CHECK(g.predictor_variance()(i) == doctest::Approx(prior(i, i)).epsilon(1e-8));
    }
    // a second set of huge variances moves the evidence only through the data term
    const auto lik2 = gaussian({0, 1, 2}, {3.0, 3.0, 3.0}, {1e12, 1e12, 1e12});
    const auto fit2 = gaussian_conditional_fit(spec, lik2, h);
    CHECK(fit2.log_evidence == doctest::Approx(fit.log_evidence).epsilon(1e-9));
}

TEST_CASE("conjugate update matches dense covariance-form algebra") {
    auto graph = test::level1_graph(5, {{1, 2}, {2, 3}, {3, 4}, {4, 5}, {1, 3}});
    const auto spec = make_latent_spec(graph->level(1), intercept(5), {"intercept"});
    const auto lik = gaussian({0, 1, 3, 4}, {-1.2, -0.3, 0.4, 0.9}, {0.2, 0.1, 0.3, 0.15});
    for (const HyperPoint& h : {HyperPoint{0.5, 0.0, 0.05}, HyperPoint{1.3, 0.7, 0.05}, HyperPoint{0.2, 1.0, 0.05}}) {
        const auto fit = gaussian_conditional_fit(spec, lik, h);
        const LatentGaussian g(spec, lik, fit);
        const auto s_cov = oracle::structured_covariance(Eigen::MatrixXd(graph->level(1).icar), spec.jitter);
        const auto prior = oracle::theta_covariance(intercept(5), 1000.0, h.sigma, h.phi, s_cov);
        Eigen::VectorXd y(4), v(4);
        y << -1.2, -0.3, 0.4, 0.9;
        v << 0.2, 0.1, 0.3, 0.15;
        const auto o = oracle::condition(prior, {0, 1, 3, 4}, y, v);
        const Eigen::VectorXd mean = g.predictor_mean();
        const Eigen::VectorXd var = g.predictor_variance();
        for (int i = 0; i < 5; ++i) {
            CHECK(mean(i) == doctest::Approx(o.mean(i)).epsilon(1e-10));
            CHECK(var(i) == doctest::Approx(o.cov(i, i)).epsilon(1e-10));
        }
        CHECK(fit.log_evidence == doctest::Approx(o.log_evidence).epsilon(1e-9));
    }
}

TEST_CASE("Newton on a Gaussian likelihood reproduces the exact update") {
    auto graph = test::level1_graph(4, test::path_edges(4));
    const auto spec = make_latent_spec(graph->level(1), intercept(4), {"intercept"});
    const auto lik = gaussian({0, 1, 2, 3}, {-1.0, -0.4, 0.3, 0.8}, {0.1, 0.15, 0.2, 0.1});
    const HyperPoint h{0.6, 0.5, 0.05};
    const auto exact = gaussian_conditional_fit(spec, lik, h);
    const auto newton = laplace_fit(spec, lik, h);
    CHECK((exact.mode - newton.mode).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(newton.log_evidence == doctest::Approx(exact.log_evidence).epsilon(1e-9));
}

TEST_CASE("duplicated data with doubled variances give the same posterior") {
    auto graph = test::level1_graph(3, test::path_edges(3));
    const auto spec = make_latent_spec(graph->level(1), intercept(3), {"intercept"});
    const auto once = gaussian({0, 1, 2}, {0.2, -0.5, 1.0}, {0.3, 0.2, 0.25});
    const auto twice = gaussian({0, 1, 2, 0, 1, 2}, {0.2, -0.5, 1.0, 0.2, -0.5, 1.0}, {0.6, 0.4, 0.5, 0.6, 0.4, 0.5});
    const HyperPoint h{0.8, 0.3, 0.05};
    const auto a = gaussian_conditional_fit(spec, once, h);
    const auto b = gaussian_conditional_fit(spec, twice, h);
    const LatentGaussian ga(spec, once, a), gb(spec, twice, b);
    CHECK((ga.predictor_mean() - gb.predictor_mean()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((ga.predictor_variance() - gb.predictor_variance()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(a.log_evidence - b.log_evidence) > 1e-3);
}

TEST_CASE("constrained draws: sum-to-zero holds and moments match") {
    auto graph = test::level1_graph(4, test::path_edges(4));
    const auto spec = make_latent_spec(graph->level(1), intercept(4), {"intercept"});
    const auto lik = gaussian({0, 2}, {-0.5, 0.5}, {0.2, 0.2});
    const auto fit = gaussian_conditional_fit(spec, lik, {0.7, 0.6, 0.05});
    const LatentGaussian g(spec, lik, fit);
    const Eigen::MatrixXd cov = g.covariance();
    // s block sums to zero with no variance
    Eigen::VectorXd c = Eigen::VectorXd::Zero(spec.dim());
    c.segment(spec.offset_s(), 4).setOnes();
    CHECK(std::abs(c.dot(cov * c)) < 1e-10);
    CHECK(std::abs(c.dot(g.mode())) < 1e-10);

    Rng rng(5);
    const int n = 20000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(4), sq = Eigen::VectorXd::Zero(4);
    for (int k = 0; k < n; ++k) {
        const Eigen::VectorXd eta = g.draw_predictor(rng);
        sum += eta;
        sq += eta.cwiseProduct(eta);
    }
    const Eigen::VectorXd mean = sum / n;
    const Eigen::VectorXd var = sq / n - mean.cwiseProduct(mean);
    for (int i = 0; i < 4; ++i) {
        const double sd = std::sqrt(g.predictor_variance()(i));
        CHECK(std::abs(mean(i) - g.predictor_mean()(i)) < 4 * sd / std::sqrt(n));
        CHECK(var(i) == doctest::Approx(g.predictor_variance()(i)).epsilon(0.05));
    }
}

TEST_CASE("likelihood derivatives agree with finite differences") {
    Likelihood lik;
    lik.kind = LikelihoodKind::betabinomial;
    lik.clusters = {{0, 10, 3}, {0, 12, 5}, {1, 30, 30}, {2, 8, 0}};
    Eigen::VectorXd eta(3);
    eta << -0.4, 1.2, -2.0;
    const double h = 1e-5;
    const auto base = evaluate_likelihood(lik, 3, eta, 0.1);
    for (int i = 0; i < 3; ++i) {
        Eigen::VectorXd up = eta, dn = eta;
        up(i) += h;
        dn(i) -= h;
        const auto u = evaluate_likelihood(lik, 3, up, 0.1);
        const auto d = evaluate_likelihood(lik, 3, dn, 0.1);
        CHECK(base.d1(i) == doctest::Approx((u.value(i) - d.value(i)) / (2 * h)).epsilon(1e-6));
        CHECK(base.d2(i) == doctest::Approx((u.d1(i) - d.d1(i)) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("beta-binomial with tiny d reproduces the binomial fit") {
    auto graph = test::level1_graph(4, test::path_edges(4));
    const auto spec = make_latent_spec(graph->level(1), intercept(4), {"intercept"});
    Likelihood bb;
    bb.kind = LikelihoodKind::betabinomial;
    bb.clusters = {{0, 25, 4}, {1, 30, 12}, {2, 22, 15}, {3, 28, 20}};
    Likelihood bin = bb;
    bin.kind = LikelihoodKind::binomial;
    const HyperPoint h{0.6, 0.5, 1e-9};
    const auto a = laplace_fit(spec, bb, h);
    const auto b = laplace_fit(spec, bin, h);
    const LatentGaussian ga(spec, bb, a), gb(spec, bin, b);
    for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(oracle::expit(ga.predictor_mean()(i)) - oracle::expit(gb.predictor_mean()(i))) < 1e-6);
    }
}

TEST_CASE("permuting area labels permutes the posterior") {
    // path 1-2-3-4 relabelled as 3-1-4-2
    auto g1 = test::level1_graph(4, {{1, 2}, {2, 3}, {3, 4}});
    auto g2 = test::level1_graph(4, {{3, 1}, {1, 4}, {4, 2}});
    const int perm[4] = {2, 0, 3, 1};  // area k of g1 is area perm[k] of g2
    const auto s1 = make_latent_spec(g1->level(1), intercept(4), {"intercept"});
    const auto s2 = make_latent_spec(g2->level(1), intercept(4), {"intercept"});
    Likelihood l1, l2;
    l1.kind = l2.kind = LikelihoodKind::betabinomial;
    const long ys[4] = {3, 8, 14, 20};
    for (int k = 0; k < 4; ++k) {
        l1.clusters.push_back({k, 25, ys[k]});
        l2.clusters.push_back({perm[k], 25, ys[k]});
    }
    const HyperPoint h{0.6, 0.7, 0.05};
    const LatentGaussian a(s1, l1, laplace_fit(s1, l1, h));
    const LatentGaussian b(s2, l2, laplace_fit(s2, l2, h));
    for (int k = 0; k < 4; ++k) {
        CHECK(a.predictor_mean()(k) == doctest::Approx(b.predictor_mean()(perm[k])).epsilon(1e-8));
        CHECK(a.predictor_variance()(k) == doctest::Approx(b.predictor_variance()(perm[k])).epsilon(1e-8));
    }
}

TEST_CASE("prior precision of the BYM2 effect at the endpoints") {
    for (auto [r, c] : std::vector<std::pair<int, int>>{{1, 2}, {1, 6}, {3, 3}}) {
        auto g = test::level1_graph(r * c, test::lattice_edges(r, c));
        const auto& lv = g->level(1);
        const double sigma = 0.7;
        const Eigen::MatrixXd p0 = bym2_precision(lv, sigma, 0.0);
        const Eigen::MatrixXd expect0 = Eigen::MatrixXd::Identity(r * c, r * c) / (sigma * sigma);
        CHECK((p0 - expect0).cwiseAbs().maxCoeff() < 1e-12);
        const Eigen::MatrixXd p1 = bym2_precision(lv, sigma, 1.0);
        const Eigen::MatrixXd expect1 = *lv.scale_factor * Eigen::MatrixXd(lv.icar) / (sigma * sigma);
        CHECK((p1 - expect1).cwiseAbs().maxCoeff() < 1e-12);
    }
    auto g = test::level1_graph(2, {{1, 2}});
    CHECK_THROWS_AS(bym2_precision(g->level(1), -1.0, 0.5), std::domain_error);
}

TEST_CASE("spec validation") {
    LatentModelSpec spec;
    spec.n_areas = 2;
    spec.fixed_design = Eigen::MatrixXd::Ones(3, 1);
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}
