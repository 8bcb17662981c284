#include "sae/unit_model.hpp"

#include <fmt/core.h>
#include <fmt/ranges.h>

#include <cmath>

namespace sae {

Likelihood unit_likelihood(const AnalysisDataset& ds, AdminLevel level, bool overdispersion) {
    Likelihood lik;
    lik.kind = overdispersion ? LikelihoodKind::betabinomial : LikelihoodKind::binomial;
    const auto groups = ds.records_by_area(level);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (const auto idx : groups[i]) {
            const auto& r = ds.records()[idx];
            lik.clusters.push_back({static_cast<int>(i), r.n, r.y});
        }
    }
    return lik;
}

PosteriorResult fit_unit_model(const AnalysisDataset& ds, const CovariateTable* covariates,
                               const UnitModelOptions& options) {
    const AdminLevel level = options.level;
    if (!ds.has_level(level) || level < 1) {
        throw NotFoundError(fmt::format("admin level {} is not available in the dataset", level));
    }
    if (options.nested && level < 2) {
        throw ValidationError("nested Admin-1 effects need an admin level of 2 or finer");
    }
    if (ds.records().empty()) {
        throw ValidationError("the unit-level model needs at least one cluster");
    }
    const GateReport gate = evaluate_gate(design_variance(ds, level), level);
    const auto permission = check_fit_permission(gate, Method::unit_level, options.override_gate);
    if (!permission.allowed) {
        throw GateRefusal(Method::unit_level, gate.unit_level, permission.messages);
    }

    const AreaGraph& graph = ds.graph();
    const auto& ls = graph.level(level);
    std::vector<std::string> names;
    Eigen::MatrixXd x = area_fixed_design(graph, level, covariates, options.covariates, names);
    if (options.nested) {
        const auto& regions = graph.level(1).ids;
        Eigen::MatrixXd nested = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(regions.size()) + x.cols() - 1);
        std::vector<std::string> nested_names;
        for (const auto& r : regions) {
            nested_names.push_back("alpha[" + r + "]");
        }
        for (std::size_t i = 0; i < ls.size(); ++i) {
            const int a = graph.local_index(graph.ancestor_at(ls.ids[i], 1));
            nested(static_cast<Eigen::Index>(i), a) = 1.0;
        }
        nested.rightCols(x.cols() - 1) = x.rightCols(x.cols() - 1);
        nested_names.insert(nested_names.end(), names.begin() + 1, names.end());
        x = std::move(nested);
        names = std::move(nested_names);
    }
    auto spec = std::make_shared<LatentModelSpec>(make_latent_spec(ls, std::move(x), names));
    auto lik = std::make_shared<Likelihood>(unit_likelihood(ds, level, options.overdispersion));

    PosteriorResult r;
    r.method = Method::unit_level;
    r.level = level;
    r.area_ids = ls.ids;
    r.warnings = structure_warnings(graph, level);
    if (permission.overridden) {
        for (const auto& m : permission.messages) {
            r.warnings.push_back("gate warning overridden: " + m);
        }
    }
    bool any_success = false;
    for (const auto& c : lik->clusters) {
        any_success = any_success || c.y > 0;
    }
    if (!any_success) {
        r.warnings.push_back(fmt::format("no successes at level {}; estimates are driven by the prior", level));
    }
    r.fit = build_hyper_grid(*spec, *lik, options.priors, options.grid);
    r.warnings.insert(r.warnings.end(), r.fit.grid.warnings.begin(), r.fit.grid.warnings.end());
    r.spec = std::move(spec);
    r.likelihood = std::move(lik);
    r.seed = options.seed;
    r.flags.resize(r.area_ids.size());
    const auto groups = ds.records_by_area(level);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i].empty()) {
            r.flags[i] = {"no_data", "extrapolated"};
        }
    }
    r.options["nested"] = options.nested ? "true" : "false";
    r.options["overdispersion"] = options.overdispersion ? "true" : "false";
    r.options["covariates"] = fmt::format("{}", fmt::join(options.covariates, ";"));
    r.samples = sample_posterior(r, options.n_samples, options.seed);
    return r;
}

WeightAudit survey_weight_ignored_audit(const AnalysisDataset& ds, AdminLevel level, double threshold) {
    WeightAudit audit;
    audit.level = level;
    audit.threshold = threshold;
    const auto groups = ds.records_by_area(level);
    const auto& ls = ds.graph().level(level);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i].empty()) {
            continue;
        }
        double mean = 0.0;
        for (const auto idx : groups[i]) {
            mean += ds.records()[idx].weight;
        }
        mean /= static_cast<double>(groups[i].size());
        double ss = 0.0;
        for (const auto idx : groups[i]) {
            const double dv = ds.records()[idx].weight - mean;
            ss += dv * dv;
        }
        WeightAuditEntry e;
        e.id = ls.ids[i];
        e.n_clusters = static_cast<long>(groups[i].size());
        e.cv = std::sqrt(ss / static_cast<double>(groups[i].size())) / mean;
        e.flagged = e.cv > threshold;
        audit.areas.push_back(std::move(e));
    }
    return audit;
}

Eigen::MatrixXd aggregate_samples(const PosteriorResult& result, const AnalysisDataset& ds, AdminLevel target) {
    if (target >= result.level || target < 0) {
        throw std::invalid_argument("aggregation target must be a coarser level");
    }
    const AreaGraph& graph = ds.graph();
    const auto& coarse = graph.level(target);
    const auto groups = ds.records_by_area(result.level);
    std::vector<double> w(result.area_ids.size(), 0.0);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (const auto idx : groups[i]) {
            const auto& r = ds.records()[idx];
            w[i] += r.weight * static_cast<double>(r.n);
        }
    }
    std::vector<double> total(coarse.size(), 0.0);
    std::vector<int> parent(result.area_ids.size());
    for (std::size_t i = 0; i < result.area_ids.size(); ++i) {
        parent[i] = graph.local_index(graph.ancestor_at(result.area_ids[i], target));
        total[parent[i]] += w[i];
    }
    std::vector<double> count(coarse.size(), 0.0);
    for (int p : parent) {
        count[p] += 1.0;
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(result.samples.rows(), static_cast<Eigen::Index>(coarse.size()));
    for (std::size_t i = 0; i < parent.size(); ++i) {
        const int p = parent[i];
        const double share = total[p] > 0.0 ? w[i] / total[p] : 1.0 / count[p];
        out.col(p) += share * result.samples.col(static_cast<Eigen::Index>(i));
    }
    return out;
}

}  // namespace sae
