// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "sae/area_model.hpp"
#include "sae/betabinomial.hpp"
#include "sae/pc_prior.hpp"
#include "sae/summaries.hpp"
#include "sae/synthetic.hpp"
#include "sae/unit_model.hpp"
#include "sae/workflow.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <fmt/core.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>

using namespace sae;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Records the first failure reason; later ones are counted.
struct Checker {
    bool ok = true;
    int failures = 0;
    std::string first;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            if (ok) {
                first = what;
            }
            ok = false;
            ++failures;
        }
    }
    Outcome outcome(const std::string& summary) const {
        if (ok) {
            return {true, summary};
        }
        return {false, fmt::format("{} [{} failed check(s); first: {}]", summary, failures, first)};
    }
};

// ---- 1 -------------------------------------------------------------------

Outcome direct_oracle() {
    std::mt19937_64 gen(20240601);
    Checker c;
    double worst = 0.0;
    int compared = 0;
    const auto t0 = Clock::now();
    for (int rep = 0; rep < 200; ++rep) {
        const int n_areas = std::uniform_int_distribution<int>(1, 5)(gen);
        const int n_strata = std::uniform_int_distribution<int>(1, 8)(gen);
        const int n_clusters = std::uniform_int_distribution<int>(2, 40)(gen);
        auto graph = test::level1_graph(n_areas, test::path_edges(n_areas));
        std::vector<test::ClusterRow> rows;
        std::vector<oracle::OracleCluster> oc;
        for (int k = 0; k < n_clusters; ++k) {
            const int area = std::uniform_int_distribution<int>(1, n_areas)(gen);
            const int h = std::uniform_int_distribution<int>(1, n_strata)(gen);
            const double w = std::uniform_real_distribution<double>(0.2, 8.0)(gen);
            const long n = std::uniform_int_distribution<long>(1, 40)(gen);
            const long y = std::uniform_int_distribution<long>(0, n)(gen);
            const std::string stratum = fmt::format("H{}", h);
            rows.push_back({stratum, {fmt::format("A{}", area)}, w, n, y});
            oc.push_back({stratum, area, 0.0, n, y});
        }
        const auto ds = test::make_dataset(graph, rows);
        // weights as stored after the CSV round trip
        for (std::size_t k = 0; k < oc.size(); ++k) {
            oc[k].w = ds.records()[k].weight;
        }
        for (AdminLevel level : {0, 1}) {
            const auto est = design_variance(ds, level);
            for (std::size_t i = 0; i < est.areas.size(); ++i) {
                const auto& a = est.areas[i];
                std::vector<oracle::OracleCluster> sub = oc;
                const int key = level == 0 ? 0 : static_cast<int>(i) + 1;
                if (level == 0) {
                    for (auto& x : sub) {
                        x.area = 0;
                    }
                }
                const auto o = oracle::direct(sub, key);
                c.require(a.p_hat.has_value() == o.p.has_value(), "point presence differs");
                if (!o.p || !a.p_hat) {
                    continue;
                }
                const double ep = std::abs(*a.p_hat - *o.p) / std::max(*o.p, 1e-300);
                worst = std::max(worst, *o.p > 0 ? ep : std::abs(*a.p_hat));
                c.require(*o.p == 0 ? *a.p_hat == 0 : ep <= 1e-10, fmt::format("point rel err {:.3g}", ep));
                ++compared;
                if (a.var_p) {
                    const double ev = std::abs(*a.var_p - *o.var) / *o.var;
                    worst = std::max(worst, ev);
                    c.require(ev <= 1e-10, fmt::format("variance rel err {:.3g}", ev));
                    ++compared;
                } else {
                    c.require(*o.p == 0.0 || *o.p == 1.0 || *o.var == 0.0, "variance missing for an informative area");
                }
            }
        }
    }
    const double secs = seconds_since(t0);
    c.require(secs < 5.0, fmt::format("runtime {:.2f}s", secs));
    return c.outcome(fmt::format("200 datasets, {} quantities, max rel err {:.2e}, {:.2f}s", compared, worst, secs));
}

// ---- shared 4-area toy ---------------------------------------------------

struct Toy {
    std::shared_ptr<const AreaGraph> graph = test::level1_graph(4, test::path_edges(4));
    Eigen::VectorXd y = (Eigen::VectorXd(4) << -1.0, -0.4, 0.3, 0.8).finished();
    Eigen::VectorXd v = (Eigen::VectorXd(4) << 0.1, 0.15, 0.2, 0.1).finished();

    DirectEstimates direct() const {
        DirectEstimates d;
        d.level = 1;
        for (int i = 0; i < 4; ++i) {
            DirectArea a;
            a.id = graph->level(1).ids[static_cast<std::size_t>(i)];
            const double p = expit(y(i));
            a.p_hat = p;
            a.logit_var = v(i);
            a.var_p = v(i) * p * p * (1 - p) * (1 - p);
            a.flag = DirectFlag::ok;
            a.n_clusters = 4;
            d.areas.push_back(a);
        }
        return d;
    }
    Eigen::MatrixXd s_cov() const { return oracle::structured_covariance(Eigen::MatrixXd(graph->level(1).icar), 1e-6); }
};

// ---- 2 -------------------------------------------------------------------

Outcome conjugacy() {
    Toy t;
    const auto spec = make_latent_spec(t.graph->level(1), Eigen::MatrixXd::Ones(4, 1), {"intercept"});
    const auto lik = area_likelihood(t.direct());
    Checker c;
    double worst = 0.0;
    for (const HyperPoint& h : {HyperPoint{0.4, 0.0, 0.05}, HyperPoint{0.9, 0.5, 0.05}, HyperPoint{1.7, 0.95, 0.05}}) {
        const auto fit = gaussian_conditional_fit(spec, lik, h);
        const LatentGaussian g(spec, lik, fit);
        const auto o = oracle::condition(oracle::theta_covariance(Eigen::MatrixXd::Ones(4, 1), 1000.0, h.sigma, h.phi,
                                                                  t.s_cov()),
                                         {0, 1, 2, 3}, t.y, t.v);
        const Eigen::VectorXd m = g.predictor_mean();
        const Eigen::VectorXd var = g.predictor_variance();
        for (int i = 0; i < 4; ++i) {
            const double em = std::abs(m(i) - o.mean(i)) / std::max(1.0, std::abs(o.mean(i)));
            const double ev = std::abs(var(i) - o.cov(i, i)) / std::max(1.0, std::abs(o.cov(i, i)));
            worst = std::max({worst, em, ev});
            c.require(em <= 1e-10 && ev <= 1e-10, fmt::format("area {} at sigma {}: err {:.3g}", i, h.sigma, std::max(em, ev)));
        }
    }
    return c.outcome(fmt::format("3 hyperparameter settings, max err {:.2e}", worst));
}

// ---- 3 -------------------------------------------------------------------

Outcome hyper_grid_fidelity() {
    Toy t;
    AreaModelOptions o;
    o.n_samples = 4000;
    o.seed = 3;
    const auto t0 = Clock::now();
    const auto r = fit_area_model(t.direct(), *t.graph, nullptr, o);
    const double secs = seconds_since(t0);
    // Model-implied moments of p from the engine's Gaussian mixture.
    Eigen::VectorXd p_mean = Eigen::VectorXd::Zero(4), p2 = Eigen::VectorXd::Zero(4);
    const auto w = r.fit.grid.weights();
    for (std::size_t k = 0; k < w.size(); ++k) {
        const LatentGaussian g(*r.spec, *r.likelihood, r.fit.fits[k]);
        const Eigen::VectorXd mk = g.predictor_mean();
        const Eigen::VectorXd vk = g.predictor_variance();
        for (int i = 0; i < 4; ++i) {
            const auto [e1, e2] = oracle::expit_moments(mk(i), vk(i), 401);
            p_mean(i) += w[k] * e1;
            p2(i) += w[k] * e2;
        }
    }
    const Eigen::VectorXd p_sd = (p2.array() - p_mean.array().square()).sqrt();

    const HyperPrior prior(*r.spec, {});
    const auto q = oracle::area_quadrature(
        Eigen::MatrixXd::Ones(4, 1), 1000.0, t.s_cov(), {0, 1, 2, 3}, t.y, t.v,
        [&](double ls, double lp) { return prior.log_density({HyperAxis::log_sigma, HyperAxis::logit_phi}, {ls, lp}); },
        -7.0, 2.0, -10.0, 10.0, 200);
    Checker c;
    double worst_mean = 0.0, worst_sd = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double dm = std::abs(p_mean(i) - q.p_mean(i));
        const double ds = std::abs(p_sd(i) - q.p_sd(i)) / q.p_sd(i);
        worst_mean = std::max(worst_mean, dm);
        worst_sd = std::max(worst_sd, ds);
        c.require(dm <= 5e-3, fmt::format("area {} mean diff {:.4f}", i, dm));
        c.require(ds <= 0.10, fmt::format("area {} sd rel diff {:.3f}", i, ds));
    }
    c.require(secs < 10.0, fmt::format("runtime {:.2f}s", secs));
    return c.outcome(fmt::format("max |mean diff| {:.2e}, max sd rel diff {:.2e}, fit {:.2f}s", worst_mean, worst_sd,
                                 secs));
}

// ---- 4 -------------------------------------------------------------------

Outcome unit_laplace_fidelity() {
    auto g = test::level1_graph(3, test::path_edges(3));
    const std::vector<std::tuple<int, long, long>> clusters = {{0, 20, 3}, {0, 25, 6}, {0, 15, 2}, {1, 20, 9},
                                                               {1, 30, 11}, {1, 18, 8}, {2, 22, 13}, {2, 20, 10},
                                                               {2, 25, 16}};
    std::vector<test::ClusterRow> rows;
    for (const auto& [a, n, y] : clusters) {
        rows.push_back({"S", {fmt::format("A{}", a + 1)}, 1.0, n, y});
    }
    const auto ds = test::make_dataset(g, rows);
    const double sigma = 0.6, phi = 0.5, d = 0.08;
    UnitModelOptions o;
    o.grid.fixed_sigma = sigma;
    o.grid.fixed_phi = phi;
    o.grid.fixed_d = d;
    o.seed = 4;
    const auto r = fit_unit_model(ds, nullptr, o);
    const auto s = summarize(r, {PointStat::mean, std::nullopt});

    const auto prior = oracle::theta_covariance(Eigen::MatrixXd::Ones(3, 1), 1000.0, sigma, phi,
                                                oracle::structured_covariance(Eigen::MatrixXd(g->level(1).icar), 1e-6));
    const auto q = oracle::three_area_quadrature(prior, clusters, d, -5.0, 4.0, 121);
    Checker c;
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double diff = std::abs(*s[static_cast<std::size_t>(i)].point - q.p_mean(i));
        worst = std::max(worst, diff);
        c.require(diff <= 0.02, fmt::format("area {} diff {:.4f}", i, diff));
    }
    return c.outcome(fmt::format("max |posterior mean diff| {:.4f} (oracle {:.4f} {:.4f} {:.4f})", worst, q.p_mean(0),
                                 q.p_mean(1), q.p_mean(2)));
}

// ---- 5 -------------------------------------------------------------------

Outcome betabinomial_pmf() {
    Checker c;
    double worst_norm = 0.0, worst_bin = 0.0;
    for (long n : {1L, 4L, 17L, 30L, 100L, 250L}) {
        for (double p : {0.003, 0.1, 0.37, 0.5, 0.81, 0.999}) {
            for (double d : {1e-6, 0.01, 0.05, 0.2, 0.5, 0.9}) {
                long double total = 0;
                for (long y = 0; y <= n; ++y) {
                    total += std::exp(static_cast<long double>(betabinomial_logpmf(y, n, p, d)));
                }
                const double err = std::abs(static_cast<double>(total - 1.0L));
                worst_norm = std::max(worst_norm, err);
                c.require(err <= 1e-12, fmt::format("sum at n={} p={} d={}: 1{:+.3g}", n, p, d, err));
            }
            for (long y = 0; y <= n; ++y) {
                const double diff =
                    std::abs(std::exp(betabinomial_logpmf(y, n, p, 1e-12)) - std::exp(binomial_logpmf(y, n, p)));
                worst_bin = std::max(worst_bin, diff);
                c.require(diff <= 1e-8, fmt::format("d->0 at n={} p={} y={}: {:.3g}", n, p, y, diff));
            }
        }
    }
    return c.outcome(fmt::format("max |sum-1| {:.2e}, max |bb-bin| at d=1e-12 {:.2e}", worst_norm, worst_bin));
}

// ---- 6 -------------------------------------------------------------------

double pinv_diag_geomean(const Eigen::MatrixXd& q, const std::vector<int>& areas) {
    const Eigen::MatrixXd p = oracle::pinv_sym(q);
    double s = 0;
    for (int i : areas) {
        s += std::log(p(i, i));
    }
    return std::exp(s / static_cast<double>(areas.size()));
}

Outcome bym2_structure() {
    Checker c;
    double worst = 0.0;
    for (auto [r, cols] : std::vector<std::pair<int, int>>{{1, 2}, {1, 7}, {4, 4}, {3, 5}}) {
        auto g = test::level1_graph(r * cols, test::lattice_edges(r, cols));
        const auto& lv = g->level(1);
        const auto n = r * cols;
        for (double sigma : {0.3, 1.0, 2.5}) {
            const Eigen::MatrixXd e0 = Eigen::MatrixXd::Identity(n, n) / (sigma * sigma);
            const Eigen::MatrixXd e1 = *lv.scale_factor * Eigen::MatrixXd(lv.icar) / (sigma * sigma);
            const double d0 = (bym2_precision(lv, sigma, 0.0) - e0).cwiseAbs().maxCoeff();
            const double d1 = (bym2_precision(lv, sigma, 1.0) - e1).cwiseAbs().maxCoeff();
            worst = std::max({worst, d0, d1});
            c.require(d0 <= 1e-12, fmt::format("phi=0 {}x{} sigma {}: {:.3g}", r, cols, sigma, d0));
            c.require(d1 <= 1e-12, fmt::format("phi=1 {}x{} sigma {}: {:.3g}", r, cols, sigma, d1));
        }
    }
    auto two = test::level1_graph(2, {{1, 2}});
    const double sf2 = *two->level(1).scale_factor;
    c.require(std::abs(sf2 - 0.25) <= 1e-12, fmt::format("2-node scale factor {:.15g}", sf2));

    double worst_gm = 0.0;
    struct Case {
        int n;
        std::vector<std::pair<int, int>> edges;
    };
    const std::vector<Case> graphs = {{9, test::path_edges(9)},
                                      {16, test::lattice_edges(4, 4)},
                                      {8, {{1, 2}, {2, 3}, {3, 1}, {4, 5}, {6, 7}, {7, 8}}},
                                      {7, {{1, 2}, {2, 3}, {4, 5}, {5, 6}}}};
    for (const auto& gc : graphs) {
        auto g = test::level1_graph(gc.n, gc.edges);
        const auto& lv = g->level(1);
        std::vector<int> structured;
        const std::set<int> single(lv.singletons.begin(), lv.singletons.end());
        for (int i = 0; i < gc.n; ++i) {
            if (!single.count(i)) {
                structured.push_back(i);
            }
        }
        const Eigen::MatrixXd q = *lv.scale_factor * Eigen::MatrixXd(lv.icar);
        const double gm = pinv_diag_geomean(q, structured);
        worst_gm = std::max(worst_gm, std::abs(gm - 1.0));
        c.require(std::abs(gm - 1.0) <= 1e-8, fmt::format("geometric mean {:.12g} on a {}-area graph", gm, gc.n));
    }
    return c.outcome(fmt::format("max precision err {:.2e}, 2-node c = {:.15g}, max |gm-1| {:.2e}", worst, sf2,
                                 worst_gm));
}

// ---- 7 -------------------------------------------------------------------

Outcome pc_priors() {
    Checker c;
    const double rate = pc_prior_sigma(1.0, 0.01).rate;
    c.require(std::abs(rate - 4.605170186) <= 1e-9, fmt::format("rate {:.12f}", rate));
    std::vector<double> grid(101);
    for (int i = 0; i <= 100; ++i) {
        grid[static_cast<std::size_t>(i)] = i / 100.0;
    }
    double worst = 0.0;
    const auto lattice = test::level1_graph(16, test::lattice_edges(4, 4));
    const auto path = test::level1_graph(6, test::path_edges(6));
    auto nigeria = std::make_shared<const AreaGraph>(AreaGraph::from_geometry(make_lattice_geography(37, 2)));
    for (const auto* lv : {&lattice->level(1), &path->level(1), &nigeria->level(1), &nigeria->level(2)}) {
        const PcPhiPrior prior(lv->scaled_covariance_eigenvalues);
        const auto logd = prior.log_density_on_grid(grid);
        // independent trapezoid over the first half of the grid
        double mass = 0.0, total = 0.0;
        for (std::size_t i = 1; i < grid.size(); ++i) {
            const double cell = 0.5 * (std::exp(logd[i]) + std::exp(logd[i - 1])) * (grid[i] - grid[i - 1]);
            total += cell;
            if (i <= 50) {
                mass += cell;
            }
        }
        const double pr = mass / total;
        worst = std::max(worst, std::abs(pr - 2.0 / 3.0));
        c.require(std::abs(pr - 2.0 / 3.0) <= 1e-6, fmt::format("P(phi<0.5) = {:.9f}", pr));
    }
    return c.outcome(fmt::format("lambda = {:.10f}, max |P(phi<0.5) - 2/3| {:.2e} over 4 graphs", rate, worst));
}

// ---- 8 -------------------------------------------------------------------

Outcome gate_rules() {
    Checker c;
    int cases = 0;
    for (std::size_t n = 0; n <= 12; ++n) {
        for (std::size_t nd = 0; nd <= n; ++nd) {
            for (std::size_t li = 0; nd + li <= n; ++li) {
                ++cases;
                std::vector<AreaId> excluded;
                for (std::size_t k = 0; k < nd + li; ++k) {
                    excluded.push_back(fmt::format("X{}", k));
                }
                const auto g = evaluate_gate_counts(2, n, nd, li, excluded);
                const std::size_t k = nd + li;
                // strictly more than 25%, in exact integer arithmetic
                const bool sparse = 100 * k > 25 * n;
                const bool unit_sparse = 100 * nd > 25 * n;
                const auto tag = fmt::format("n={} nd={} li={}", n, nd, li);
                c.require(g.direct == (sparse ? Verdict::warn_overridable : Verdict::allow), "direct verdict " + tag);
                c.require(g.area_level == (sparse ? Verdict::error_blocked : Verdict::allow), "area verdict " + tag);
                c.require(g.unit_level == (unit_sparse ? Verdict::warn_overridable : Verdict::allow),
                          "unit verdict " + tag);
                const Method rec = !sparse ? Method::direct : Method::unit_level;
                c.require(g.recommendation == rec, "recommendation " + tag);

                for (const Method m : {Method::direct, Method::area_level, Method::unit_level}) {
                    const bool flagged = m == Method::unit_level ? unit_sparse : sparse;
                    const auto plain = check_fit_permission(g, m, false);
                    const auto forced = check_fit_permission(g, m, true);
                    c.require(plain.allowed == !flagged, "permission " + tag);
                    const bool overridable = m != Method::area_level;
                    c.require(forced.allowed == (!flagged || overridable), "override " + tag);
                    c.require(forced.overridden == (flagged && overridable), "overridden flag " + tag);
                    bool threw = false;
                    try {
                        require_fit_permission(g, m, true);
                    } catch (const GateRefusal& e) {
                        threw = true;
                        c.require(e.verdict() == Verdict::error_blocked && !e.messages().empty(), "refusal " + tag);
                    }
                    c.require(threw == (flagged && !overridable), "throw " + tag);
                }

                std::size_t expected_messages = 1 + (sparse ? 2 : 0) + (unit_sparse ? 1 : 0) + (!sparse && k > 0 ? 1 : 0);
                c.require(g.messages.size() == expected_messages, "message count " + tag);
                const auto has = [&](const std::string& needle) {
                    return std::any_of(g.messages.begin(), g.messages.end(),
                                       [&](const std::string& m) { return m.find(needle) != std::string::npos; });
                };
                c.require(has("you may override this warning") == sparse, "direct text " + tag);
                c.require(has("are not allowed at this level") == sparse, "area text " + tag);
                c.require(has("Unit-level model at admin level 2") == unit_sparse, "unit text " + tag);
                c.require(has("are excluded before model fitting") == (!sparse && k > 0), "exclusion text " + tag);
                c.require(g.messages.back().rfind("Recommended method at admin level 2", 0) == 0, "recommendation text " + tag);
                c.require(g.area_level_excluded.size() == (sparse ? 0 : k), "excluded list " + tag);
                c.require(g.message_version == "gate-messages/1", "message version");
            }
        }
    }
    return c.outcome(fmt::format("{} count combinations over n = 0..12", cases));
}

// ---- 9 -------------------------------------------------------------------

Outcome shrinkage() {
    SyntheticDesignConfig cfg;
    cfg.n_admin1 = 27;
    cfg.admin2_per_admin1_side = 2;
    cfg.clusters_total = 260;
    cfg.urban_clusters = 100;
    cfg.min_clusters_per_area = 2;
    cfg.seed = 909;
    auto graph = std::make_shared<const AreaGraph>(AreaGraph::from_geometry(make_lattice_geography(27, 2)));
    const auto ds = generate_synthetic(cfg, graph);
    Checker c;
    std::vector<long> counts;
    for (const auto& a : cluster_counts(ds, 2)) {
        counts.push_back(a.n_clusters);
    }
    std::sort(counts.begin(), counts.end());
    const double median = 0.5 * (counts[(counts.size() - 1) / 2] + counts[counts.size() / 2]);
    c.require(median == 2.0, fmt::format("median clusters per area {}", median));

    const auto direct = design_variance(ds, 2);
    AreaModelOptions o;
    o.level = 2;
    o.seed = 9;
    const auto full = fit_area_model(direct, *graph, nullptr, o);
    const auto ms = summarize(full);
    const auto dsum = summarize(direct);
    double cv_model = 0.0, cv_direct = 0.0;
    int both = 0;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        if (dsum[i].cv && ms[i].cv) {
            cv_model += *ms[i].cv;
            cv_direct += *dsum[i].cv;
            ++both;
        }
    }
    cv_model /= both;
    cv_direct /= both;
    c.require(cv_model < cv_direct, fmt::format("mean CV model {:.2f} vs direct {:.2f}", cv_model, cv_direct));

    // Posterior means of theta against logit(p_hat) and the fitted mean.
    const auto hyper = hyper_posterior_mean(full.fit.grid);
    int between = 0, checked = 0;
    for (const double phi : {0.0, hyper.phi}) {
        AreaModelOptions f = o;
        f.grid.fixed_sigma = hyper.sigma;
        f.grid.fixed_phi = phi;
        f.n_samples = 100;
        const auto r = fit_area_model(direct, *graph, nullptr, f);
        const auto& spec = *r.spec;
        const Eigen::VectorXd& x = r.fit.mode_fit.mode;
        const LatentGaussian g(spec, *r.likelihood, r.fit.mode_fit);
        const Eigen::VectorXd theta = g.predictor_mean();
        std::vector<double> structured(static_cast<std::size_t>(spec.n_areas), 0.0);
        for (int k = 0; k < spec.n_structured(); ++k) {
            structured[static_cast<std::size_t>(spec.structured_areas[static_cast<std::size_t>(k)])] =
                x(spec.offset_s() + k);
        }
        for (std::size_t i = 0; i < direct.areas.size(); ++i) {
            if (direct.areas[i].flag != DirectFlag::ok) {
                continue;
            }
            const double y = logit(*direct.areas[i].p_hat);
            const double fitted = x(0) + hyper.sigma * std::sqrt(phi) * structured[i];
            const double lo = std::min(y, fitted) - 1e-9;
            const double hi = std::max(y, fitted) + 1e-9;
            ++checked;
            if (theta(static_cast<Eigen::Index>(i)) >= lo && theta(static_cast<Eigen::Index>(i)) <= hi) {
                ++between;
            }
        }
    }
    c.require(between == checked, fmt::format("{} of {} posterior means between the ends", between, checked));
    return c.outcome(fmt::format("{} areas, median {} clusters, mean CV {:.1f} (model) < {:.1f} (direct); "
                                 "{}/{} posterior means between logit(p_hat) and the fitted mean at phi = 0 and {:.3f}",
                                 counts.size(), median, cv_model, cv_direct, between, checked, hyper.phi));
}

// ---- 10 ------------------------------------------------------------------

Outcome exceedance_ridge() {
    const auto ds = load_sources(test::synthetic_sources(test::small_design(31)));
    Checker c;
    FitRequest req;
    req.method = Method::unit_level;
    req.level = 2;
    req.seed = 77;
    const auto a = run_fit(*ds, req);
    const auto b = run_fit(*ds, req);

    double worst_exc = 0.0;
    const auto sums = bundle_summaries(a);
    for (std::size_t i = 0; i < sums.size(); ++i) {
        const auto col = a.posterior->samples.col(static_cast<Eigen::Index>(i));
        const double med = *sums[i].point;
        const double pr = static_cast<double>((col.array() > med).count()) / static_cast<double>(col.size());
        worst_exc = std::max(worst_exc, std::abs(pr - 0.5));
        c.require(std::abs(pr - 0.5) <= 0.03, fmt::format("Pr(p > median) = {:.4f} for {}", pr, sums[i].id));
    }
    c.require(a.posterior->samples.rows() == 4000, "4000 draws");

    double worst_int = 0.0;
    for (const auto& sel : {"all", "top_bottom:3", "within:R02"}) {
        const auto rd = bundle_ridge(a, parse_ridge_selection(sel));
        for (const auto& curve : rd.curves) {
            double s = 0.0;
            for (std::size_t k = 1; k < rd.grid.size(); ++k) {
                s += 0.5 * (curve.density[k] + curve.density[k - 1]) * (rd.grid[k] - rd.grid[k - 1]);
            }
            worst_int = std::max(worst_int, std::abs(s - 1.0));
            c.require(std::abs(s - 1.0) <= 1e-6, fmt::format("ridge integral {:.9f}", s));
        }
    }

    c.require(a.posterior->samples == b.posterior->samples, "samples differ between identical runs");
    c.require(to_json(bundle_summaries(a)) == to_json(bundle_summaries(b)), "summaries differ");
    c.require(bundle_tabulation(a) == bundle_tabulation(b), "tabulations differ");
    FitRequest dreq;
    dreq.level = 2;
    dreq.method = Method::direct;
    const auto d = run_fit(*ds, dreq);
    auto r1 = build_report({d, a}, std::nullopt, "2026-01-01T00:00:00Z");
    auto r2 = build_report({d, b}, std::nullopt, utc_timestamp());
    r1["metadata"].erase("generated_at");
    r2["metadata"].erase("generated_at");
    c.require(r1.dump() == r2.dump(), "reports differ");
    c.require(bundle_to_json(a).dump() == bundle_to_json(b).dump(), "bundles differ");
    return c.outcome(fmt::format("{} areas: max |Pr(p > median) - 0.5| {:.4f}; max |ridge integral - 1| {:.1e}; "
                                 "samples, summaries, tabulations and reports identical",
                                 sums.size(), worst_exc, worst_int));
}

// ---- 11 ------------------------------------------------------------------

int sh(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_scale() {
    test::TempDir dir;
    const std::string cli = fmt::format("{} --quiet", SAE_CLI_PATH);
    const auto quiet = " > " + dir.file("log.txt") + " 2>&1";
    const auto d = dir.file("nga");
    Checker c;
    const auto t0 = Clock::now();
    c.require(sh(cli + " simulate --seed 7 --out-dir " + d + quiet) == 0, "simulate failed");
    const std::string src = " --data " + d + "/dataset.csv --geometry " + d + "/geometry.geojson";
    c.require(sh(cli + " check" + src + quiet) == 0, "check failed");
    std::vector<std::string> bundles;
    int fits_run = 0;
    for (int level : {1, 2}) {
        for (const char* method : {"direct", "area", "unit"}) {
            const auto out = fmt::format("{}/fit-{}-{}.json", d, method, level);
            const int code = sh(fmt::format("{} fit{} --method {} --level {} --seed 7 --out {}{}", cli, src, method,
                                            level, out, quiet));
            c.require(code == 0, fmt::format("fit {} level {} exited {}", method, level, code));
            bundles.push_back(out);
            ++fits_run;
        }
    }
    std::string fit_args;
    for (const auto& b : bundles) {
        fit_args += " --fit " + b;
    }
    c.require(sh(cli + " summarize" + fit_args + " --out-dir " + d + "/summary" + quiet) == 0, "summarize failed");
    c.require(sh(cli + " report" + fit_args + " --out " + d + "/report.json" + quiet) == 0, "report failed");
    const double secs = seconds_since(t0);
    c.require(secs < 60.0, fmt::format("pipeline took {:.1f}s", secs));

    DatasetSources s;
    s.dataset_csv = read_text_file(d + "/dataset.csv");
    s.geometry = read_text_file(d + "/geometry.geojson");
    const auto ds = load_sources(s);
    std::set<std::string> strata;
    long households = 0;
    for (const auto& r : ds->data->records()) {
        strata.insert(r.stratum_id);
        households += r.n;
    }
    const auto n_clusters = ds->data->records().size();
    c.require(strata.size() == 74, fmt::format("{} strata", strata.size()));
    c.require(n_clusters == 1400, fmt::format("{} clusters", n_clusters));
    c.require(households == 42000, fmt::format("{} households", households));
    c.require(std::filesystem::exists(d + "/report.json") && std::filesystem::exists(d + "/summary/tabulation.csv"),
              "pipeline outputs missing");
    return c.outcome(fmt::format("{} strata, {} clusters, {} households; simulate, check, {} fits, summarize, report "
                                 "in {:.1f}s",
                                 strata.size(), n_clusters, households, fits_run, secs));
}

// ---- 12 ------------------------------------------------------------------

Outcome consistency() {
    auto g = test::level1_graph(2, test::path_edges(2));
    const auto make = [&](long y1, long y2, double ref) {
        DatasetSources s;
        s.dataset_csv = test::dataset_csv({{"S", {"A1"}, 1.0, 500, y1}, {"S", {"A1"}, 1.0, 500, y2},
                                           {"S", {"A2"}, 2.0, 500, y1}, {"S", {"A2"}, 2.0, 500, y2}});
        s.edge_list = "level,a,b\n1,A1,A2\n";
        s.geometry = "{\"type\":\"FeatureCollection\",\"features\":["
                     "{\"type\":\"Feature\",\"properties\":{\"id\":\"N\",\"level\":0,\"parent_id\":null},\"geometry\":null},"
                     "{\"type\":\"Feature\",\"properties\":{\"id\":\"A1\",\"level\":1,\"parent_id\":\"N\"},\"geometry\":null},"
                     "{\"type\":\"Feature\",\"properties\":{\"id\":\"A2\",\"level\":1,\"parent_id\":\"N\"},\"geometry\":null}]}";
        s.reference_estimate = ref;
        return load_sources(s);
    };
    Checker c;
    const auto near = national_consistency_check(*make(180, 192, 0.37)->data);
    c.require(std::abs(near.computed - 0.372) < 1e-12, fmt::format("computed {:.6f}", near.computed));
    c.require(near.status == ConsistencyStatus::pass, "0.372 vs 0.37 did not pass");
    const auto far = national_consistency_check(*make(150, 150, 0.37)->data);
    c.require(std::abs(far.computed - 0.30) < 1e-12, fmt::format("computed {:.6f}", far.computed));
    c.require(far.status == ConsistencyStatus::fail, "0.30 vs 0.37 did not fail");
    c.require(compare_with_reference(0.3749, 0.37).status == ConsistencyStatus::pass, "0.3749 vs 0.37");
    c.require(compare_with_reference(0.3751, 0.37).status == ConsistencyStatus::fail, "0.3751 vs 0.37");
    return c.outcome(fmt::format("{:.3f} vs 0.37: {}; {:.3f} vs 0.37: {}", near.computed, to_string(near.status),
                                 far.computed, to_string(far.status)));
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"direct estimator matches the formula oracle", direct_oracle},
        {"Gaussian conjugacy at fixed hyperparameters", conjugacy},
        {"hyperparameter grid matches 200x200 quadrature", hyper_grid_fidelity},
        {"unit-level Laplace matches 3-D quadrature", unit_laplace_fidelity},
        {"beta-binomial normalization and binomial limit", betabinomial_pmf},
        {"BYM2 precision endpoints and ICAR scaling", bym2_structure},
        {"PC prior rate and phi calibration", pc_priors},
        {"sparsity gate rules, exhaustive", gate_rules},
        {"area-level shrinkage on sparse Admin-2 data", shrinkage},
        {"exceedance, ridge and reproducibility", exceedance_ridge},
        {"CLI pipeline at national survey scale", cli_scale},
        {"national consistency check", consistency},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        failed += o.pass ? 0 : 1;
        fmt::print("criterion {:2d} {}: {} ({})\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
