#include "sae/area_model.hpp"

#include <fmt/core.h>
#include <fmt/ranges.h>

namespace sae {

Eigen::MatrixXd area_fixed_design(const AreaGraph& graph, AdminLevel level, const CovariateTable* covariates,
                                  const std::vector<std::string>& names, std::vector<std::string>& out_names) {
    const auto& ls = graph.level(level);
    const auto n = static_cast<Eigen::Index>(ls.size());
    Eigen::MatrixXd x(n, 1 + static_cast<Eigen::Index>(names.size()));
    x.col(0).setOnes();
    out_names = {"intercept"};
    if (names.empty()) {
        return x;
    }
    if (!covariates) {
        throw ValidationError("covariates were requested but no covariate table was supplied");
    }
    if (covariates->level != level || covariates->ids != ls.ids) {
        throw ValidationError(fmt::format("covariate table does not cover the areas of level {}", level));
    }
    for (std::size_t k = 0; k < names.size(); ++k) {
        x.col(static_cast<Eigen::Index>(k) + 1) = covariates->values.col(covariates->column(names[k]));
        out_names.push_back(names[k]);
    }
    return x;
}

Likelihood area_likelihood(const DirectEstimates& direct) {
    Likelihood lik;
    lik.kind = LikelihoodKind::gaussian;
    for (std::size_t i = 0; i < direct.areas.size(); ++i) {
        const auto& a = direct.areas[i];
        if (a.flag == DirectFlag::ok) {
            lik.gaussian.push_back({static_cast<int>(i), logit(*a.p_hat), *a.logit_var});
        }
    }
    return lik;
}

std::vector<std::string> structure_warnings(const AreaGraph& graph, AdminLevel level) {
    std::vector<std::string> out;
    const auto& ls = graph.level(level);
    for (int i : ls.singletons) {
        if (ls.size() > 1) {
            out.push_back(fmt::format("area {} has no neighbours; its spatial effect is fixed at zero", ls.ids[i]));
        }
    }
    if (!ls.has_structure() && ls.size() > 1) {
        out.push_back(fmt::format("level {} has no adjacent areas; the model uses unstructured effects only", level));
    }
    return out;
}

PosteriorResult fit_area_model(const DirectEstimates& direct, const AreaGraph& graph, const CovariateTable* covariates,
                               const AreaModelOptions& options) {
    if (direct.level != options.level) {
        throw std::invalid_argument(
            fmt::format("direct estimates are for level {}, not {}", direct.level, options.level));
    }
    const GateReport gate = evaluate_gate(direct, options.level);
    require_fit_permission(gate, Method::area_level, false);

    std::vector<std::string> names;
    Eigen::MatrixXd x = area_fixed_design(graph, options.level, covariates, options.covariates, names);
    auto spec = std::make_shared<LatentModelSpec>(make_latent_spec(graph.level(options.level), std::move(x), names));
    auto lik = std::make_shared<Likelihood>(area_likelihood(direct));
    if (lik->gaussian.empty()) {
        throw ValidationError("no area has a usable direct estimate");
    }

    PosteriorResult r;
    r.method = Method::area_level;
    r.level = options.level;
    r.area_ids = graph.level(options.level).ids;
    r.fit = build_hyper_grid(*spec, *lik, options.priors, options.grid);
    r.spec = std::move(spec);
    r.likelihood = std::move(lik);
    r.seed = options.seed;
    r.flags.resize(r.area_ids.size());
    for (std::size_t i = 0; i < direct.areas.size(); ++i) {
        const auto flag = direct.areas[i].flag;
        if (flag != DirectFlag::ok) {
            r.flags[i].push_back(to_string(flag));
            r.flags[i].push_back("extrapolated");
        }
    }
    r.warnings = structure_warnings(graph, options.level);
    r.warnings.insert(r.warnings.end(), r.fit.grid.warnings.begin(), r.fit.grid.warnings.end());
    r.options["covariates"] = fmt::format("{}", fmt::join(options.covariates, ";"));
    r.samples = sample_posterior(r, options.n_samples, options.seed);
    return r;
}

}  // namespace sae
