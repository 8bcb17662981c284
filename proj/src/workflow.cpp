#include "sae/workflow.hpp"

#include <fmt/core.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace sae {

Json to_json(const DatasetSources& s) {
    return Json{{"dataset_csv", s.dataset_csv},
                {"geometry", s.geometry},
                {"edge_list", s.edge_list},
                {"covariates_csv", s.covariates_csv},
                {"covariates_level", s.covariates_level},
                {"reference_estimate", optional_json(s.reference_estimate)},
                {"survey_label", s.survey_label},
                {"indicator_label", s.indicator_label}};
}

DatasetSources sources_from_json(const Json& j) {
    if (!j.is_object()) {
        throw ValidationError("request body must be a JSON object");
    }
    auto text = [&](const char* key, bool required) -> std::string {
        if (!j.contains(key) || j.at(key).is_null()) {
            if (required) {
                throw ValidationError(fmt::format("missing field '{}'", key), 0, key);
            }
            return {};
        }
        if (!j.at(key).is_string()) {
            throw ValidationError(fmt::format("field '{}' must be a string", key), 0, key);
        }
        return j.at(key).get<std::string>();
    };
    DatasetSources s;
    s.dataset_csv = text("dataset_csv", true);
    s.geometry = text("geometry", true);
    s.edge_list = text("edge_list", false);
    s.covariates_csv = text("covariates_csv", false);
    s.survey_label = text("survey_label", false);
    s.indicator_label = text("indicator_label", false);
    if (j.contains("covariates_level") && !j.at("covariates_level").is_null()) {
        if (!j.at("covariates_level").is_number_integer()) {
            throw ValidationError("field 'covariates_level' must be an integer", 0, "covariates_level");
        }
        s.covariates_level = j.at("covariates_level").get<int>();
    }
    if (j.contains("reference_estimate") && !j.at("reference_estimate").is_null()) {
        if (!j.at("reference_estimate").is_number()) {
            throw ValidationError("field 'reference_estimate' must be a number", 0, "reference_estimate");
        }
        const double r = j.at("reference_estimate").get<double>();
        if (!(r >= 0.0 && r <= 1.0)) {
            throw ValidationError("reference_estimate must lie in [0, 1]", 0, "reference_estimate");
        }
        s.reference_estimate = r;
    }
    return s;
}

std::string content_hash(std::string_view data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return fmt::format("{:016x}", h);
}

std::shared_ptr<const LoadedDataset> load_sources(DatasetSources sources) {
    auto out = std::make_shared<LoadedDataset>();
    out->id = content_hash(to_json(sources).dump());
    std::vector<AreaFeature> features;
    {
        std::istringstream in(sources.geometry);
        features = read_geojson(in);
    }
    if (sources.edge_list.empty()) {
        out->graph = std::make_shared<const AreaGraph>(AreaGraph::from_geometry(features));
    } else {
        std::istringstream in(sources.edge_list);
        std::vector<Area> areas;
        for (auto& f : features) {
            areas.push_back(f.area);
        }
        out->graph = std::make_shared<const AreaGraph>(AreaGraph::from_edges(std::move(areas), read_edge_list(in)));
    }
    DatasetMetadata meta{sources.survey_label, sources.indicator_label, sources.reference_estimate};
    {
        std::istringstream in(sources.dataset_csv);
        out->data = std::make_shared<const AnalysisDataset>(load_dataset(in, out->graph, std::move(meta)));
    }
    if (!sources.covariates_csv.empty()) {
        if (sources.covariates_level < 1 || sources.covariates_level > out->graph->max_level()) {
            throw ValidationError(fmt::format("covariates: level {} is not in the geography", sources.covariates_level));
        }
        std::istringstream in(sources.covariates_csv);
        out->covariates = load_covariates(in, sources.covariates_level, *out->graph);
    }
    out->sources = std::move(sources);
    return out;
}

namespace {

Method method_from_text(const std::string& s) {
    try {
        return parse_method(s);
    } catch (const std::invalid_argument& e) {
        throw ValidationError(e.what(), 0, "method");
    }
}

std::optional<double> opt_number(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    if (!j.at(key).is_number()) {
        throw ValidationError(fmt::format("option '{}' must be a number", key), 0, key);
    }
    return j.at(key).get<double>();
}

}  // namespace

FitRequest fit_request_from_json(const Json& j, std::uint64_t default_seed) {
    if (!j.is_object()) {
        throw ValidationError("fit request must be a JSON object");
    }
    FitRequest r;
    try {
        if (!j.contains("method") || !j.at("method").is_string()) {
            throw ValidationError("missing field 'method'", 0, "method");
        }
        r.method = method_from_text(j.at("method").get<std::string>());
        if (!j.contains("level") || !j.at("level").is_number_integer()) {
            throw ValidationError("missing integer field 'level'", 0, "level");
        }
        r.level = j.at("level").get<int>();
        r.override_gate = j.value("override", false);
        r.seed = j.contains("seed") && !j.at("seed").is_null() ? j.at("seed").get<std::uint64_t>() : default_seed;
        const Json opts = j.value("options", Json::object());
        if (!opts.is_object()) {
            throw ValidationError("options must be an object", 0, "options");
        }
        r.covariates = opts.value("covariates", std::vector<std::string>{});
        r.nested = opts.value("nested", false);
        r.overdispersion = opts.value("overdispersion", true);
        r.n_samples = opts.value("n_samples", kDefaultSamples);
        r.fixed_sigma = opt_number(opts, "fixed_sigma");
        r.fixed_phi = opt_number(opts, "fixed_phi");
        r.fixed_d = opt_number(opts, "fixed_d");
        if (opts.contains("priors")) {
            const Json& p = opts.at("priors");
            r.priors.sigma_u = p.value("sigma_u", r.priors.sigma_u);
            r.priors.sigma_alpha = p.value("sigma_alpha", r.priors.sigma_alpha);
            r.priors.phi_prob_mass = p.value("phi_prob_mass", r.priors.phi_prob_mass);
            r.priors.logit_d_mean = p.value("logit_d_mean", r.priors.logit_d_mean);
            r.priors.logit_d_sd = p.value("logit_d_sd", r.priors.logit_d_sd);
        }
    } catch (const Json::exception& e) {
        throw ValidationError(fmt::format("malformed fit request: {}", e.what()));
    }
    if (r.n_samples < kMinSamples) {
        throw ValidationError("n_samples must be at least 100", 0, "n_samples");
    }
    return r;
}

Json to_json(const FitRequest& r) {
    return Json{{"method", to_string(r.method)},
                {"level", r.level},
                {"override", r.override_gate},
                {"seed", r.seed},
                {"options",
                 {{"covariates", r.covariates},
                  {"nested", r.nested},
                  {"overdispersion", r.overdispersion},
                  {"n_samples", r.n_samples},
                  {"fixed_sigma", optional_json(r.fixed_sigma)},
                  {"fixed_phi", optional_json(r.fixed_phi)},
                  {"fixed_d", optional_json(r.fixed_d)},
                  {"priors",
                   {{"sigma_u", r.priors.sigma_u},
                    {"sigma_alpha", r.priors.sigma_alpha},
                    {"phi_prob_mass", r.priors.phi_prob_mass},
                    {"logit_d_mean", r.priors.logit_d_mean},
                    {"logit_d_sd", r.priors.logit_d_sd}}}}}};
}

GateReport gate_report(const LoadedDataset& ds, AdminLevel level) {
    if (!ds.data->has_level(level)) {
        throw NotFoundError(fmt::format("admin level {} is not available in the dataset", level));
    }
    return evaluate_gate(design_variance(*ds.data, level), level);
}

void check_request(const LoadedDataset& ds, const FitRequest& request) {
    if (!ds.data->has_level(request.level)) {
        throw ValidationError(fmt::format("admin level {} is not available in the dataset", request.level), 0, "level");
    }
    if (request.method != Method::direct && request.level < 1) {
        throw ValidationError("model-based fits need admin level 1 or finer", 0, "level");
    }
    if (request.nested && (request.method != Method::unit_level || request.level < 2)) {
        throw ValidationError("nested Admin-1 effects apply to unit-level fits at level 2 or finer", 0, "nested");
    }
    if (!request.covariates.empty()) {
        if (request.method == Method::direct) {
            throw ValidationError("direct estimates do not use covariates", 0, "covariates");
        }
        if (!ds.covariates || ds.covariates->level != request.level) {
            throw ValidationError(fmt::format("no covariate table for level {}", request.level), 0, "covariates");
        }
        for (const auto& c : request.covariates) {
            if (std::find(ds.covariates->names.begin(), ds.covariates->names.end(), c) == ds.covariates->names.end()) {
                throw ValidationError(fmt::format("unknown covariate '{}'", c), 0, "covariates");
            }
        }
    }
    const GateReport gate = gate_report(ds, request.level);
    require_fit_permission(gate, request.method, request.override_gate);
}

std::string fit_id_for(const std::string& dataset_id, const FitRequest& request) {
    return content_hash(dataset_id + "|" + to_json(request).dump() + "|" + kEngineVersion);
}

FitBundle run_fit(const LoadedDataset& ds, const FitRequest& request) {
    check_request(ds, request);
    FitBundle b;
    b.fit_id = fit_id_for(ds.id, request);
    b.dataset_id = ds.id;
    b.request = request;
    b.metadata = ds.data->metadata();
    b.consistency = national_consistency_check(*ds.data);
    b.gate = gate_report(ds, request.level);
    const AreaGraph& graph = *ds.graph;
    for (const auto& id : graph.level(request.level).ids) {
        b.admin1_of.push_back(request.level >= 1 ? graph.ancestor_at(id, 1) : AreaId());
    }
    const auto permission = check_fit_permission(b.gate, request.method, request.override_gate);
    if (permission.overridden) {
        for (const auto& m : permission.messages) {
            b.warnings.push_back("gate warning overridden: " + m);
        }
    }
    if (request.method == Method::direct) {
        b.direct = design_variance(*ds.data, request.level);
        return b;
    }
    const CovariateTable* cov = request.covariates.empty() ? nullptr : &*ds.covariates;
    auto fill = [&](ModelOptions& o) {
        o.level = request.level;
        o.covariates = request.covariates;
        o.priors = request.priors;
        o.grid.fixed_sigma = request.fixed_sigma;
        o.grid.fixed_phi = request.fixed_phi;
        o.grid.fixed_d = request.fixed_d;
        o.n_samples = request.n_samples;
        o.seed = request.seed;
    };
    if (request.method == Method::area_level) {
        AreaModelOptions o;
        fill(o);
        b.posterior = fit_area_model(design_variance(*ds.data, request.level), graph, cov, o);
    } else {
        UnitModelOptions o;
        fill(o);
        o.nested = request.nested;
        o.overdispersion = request.overdispersion;
        o.override_gate = request.override_gate;
        b.posterior = fit_unit_model(*ds.data, cov, o);
        b.diagnostics["weight_audit"] = to_json(survey_weight_ignored_audit(*ds.data, request.level));
    }
    for (const auto& w : b.posterior->warnings) {
        if (std::find(b.warnings.begin(), b.warnings.end(), w) == b.warnings.end()) {
            b.warnings.push_back(w);
        }
    }
    b.diagnostics["hyper_grid"] = to_json(b.posterior->fit.grid);
    b.diagnostics["fixed_effects"] = b.posterior->spec->fixed_names;
    return b;
}

Json bundle_to_json(const FitBundle& b) {
    Json j{{"engine_version", kEngineVersion},
           {"fit_id", b.fit_id},
           {"dataset_id", b.dataset_id},
           {"request", to_json(b.request)},
           {"seed", b.request.seed},
           {"metadata",
            {{"survey_label", b.metadata.survey_label},
             {"indicator_label", b.metadata.indicator_label},
             {"reference_national_estimate", optional_json(b.metadata.reference_national_estimate)}}},
           {"consistency", to_json(b.consistency)},
           {"gate", to_json(b.gate)},
           {"admin1_of", b.admin1_of},
           {"warnings", b.warnings},
           {"diagnostics", b.diagnostics}};
    if (b.direct) {
        j["direct"] = to_json(*b.direct);
    }
    if (b.posterior) {
        const auto& p = *b.posterior;
        Json samples = Json::array();
        for (Eigen::Index i = 0; i < p.samples.cols(); ++i) {
            const auto col = p.samples.col(i);
            samples.push_back(std::vector<double>(col.data(), col.data() + col.size()));
        }
        j["posterior"] = {{"method", to_string(p.method)},
                          {"level", p.level},
                          {"area_ids", p.area_ids},
                          {"flags", p.flags},
                          {"seed", p.seed},
                          {"samples", samples}};
    }
    return j;
}

namespace {

Verdict parse_verdict(const std::string& s) {
    if (s == "allow") {
        return Verdict::allow;
    }
    if (s == "warn_overridable") {
        return Verdict::warn_overridable;
    }
    return Verdict::error_blocked;
}

ConsistencyStatus parse_status(const std::string& s) {
    if (s == "pass") {
        return ConsistencyStatus::pass;
    }
    if (s == "fail") {
        return ConsistencyStatus::fail;
    }
    return ConsistencyStatus::no_reference;
}

}  // namespace

FitBundle bundle_from_json(const Json& j) {
    FitBundle b;
    try {
        b.fit_id = j.at("fit_id").get<std::string>();
        b.dataset_id = j.at("dataset_id").get<std::string>();
        b.request = fit_request_from_json(j.at("request"), 1);
        const Json& m = j.at("metadata");
        b.metadata.survey_label = m.value("survey_label", "");
        b.metadata.indicator_label = m.value("indicator_label", "");
        if (!m.at("reference_national_estimate").is_null()) {
            b.metadata.reference_national_estimate = m.at("reference_national_estimate").get<double>();
        }
        const Json& c = j.at("consistency");
        b.consistency.computed = c.at("computed").get<double>();
        if (!c.at("reference").is_null()) {
            b.consistency.reference = c.at("reference").get<double>();
        }
        b.consistency.tolerance = c.at("tolerance").get<double>();
        b.consistency.status = parse_status(c.at("status").get<std::string>());
        const Json& g = j.at("gate");
        b.gate.level = g.at("level").get<int>();
        b.gate.n_areas = g.at("n_areas").get<std::size_t>();
        b.gate.n_no_data = g.at("n_no_data").get<std::size_t>();
        b.gate.n_low_info = g.at("n_low_info").get<std::size_t>();
        b.gate.direct = parse_verdict(g.at("verdicts").at("direct").get<std::string>());
        b.gate.area_level = parse_verdict(g.at("verdicts").at("area_level").get<std::string>());
        b.gate.unit_level = parse_verdict(g.at("verdicts").at("unit_level").get<std::string>());
        b.gate.recommendation = parse_method(g.at("recommendation").get<std::string>());
        b.gate.messages = g.at("messages").get<std::vector<std::string>>();
        b.gate.area_level_excluded = g.at("area_level_excluded").get<std::vector<std::string>>();
        b.gate.message_version = g.at("message_version").get<std::string>();
        b.admin1_of = j.at("admin1_of").get<std::vector<std::string>>();
        b.warnings = j.at("warnings").get<std::vector<std::string>>();
        b.diagnostics = j.at("diagnostics");
        if (j.contains("direct")) {
            b.direct = direct_from_json(j.at("direct"));
        }
        if (j.contains("posterior")) {
            const Json& p = j.at("posterior");
            PosteriorResult r;
            r.method = parse_method(p.at("method").get<std::string>());
            r.level = p.at("level").get<int>();
            r.area_ids = p.at("area_ids").get<std::vector<std::string>>();
            r.flags = p.at("flags").get<std::vector<std::vector<std::string>>>();
            r.seed = p.at("seed").get<std::uint64_t>();
            const Json& s = p.at("samples");
            if (s.size() != r.area_ids.size() || s.empty()) {
                throw ValidationError("fit bundle: sample matrix does not match the areas");
            }
            const auto n = static_cast<Eigen::Index>(s.at(0).size());
            r.samples.resize(n, static_cast<Eigen::Index>(s.size()));
            for (std::size_t i = 0; i < s.size(); ++i) {
                const auto col = s.at(i).get<std::vector<double>>();
                if (static_cast<Eigen::Index>(col.size()) != n) {
                    throw ValidationError("fit bundle: ragged sample matrix");
                }
                r.samples.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
            }
            b.posterior = std::move(r);
        }
    } catch (const Json::exception& e) {
        throw ValidationError(fmt::format("malformed fit bundle: {}", e.what()));
    }
    return b;
}

std::vector<AreaSummary> bundle_summaries(const FitBundle& b, const SummaryOptions& options) {
    if (b.direct) {
        SummaryOptions o = options;
        o.exceedance_threshold.reset();
        return summarize(*b.direct, o);
    }
    return summarize(*b.posterior, options);
}

std::vector<double> bundle_exceedance(const FitBundle& b, double p0) {
    if (b.direct) {
        return exceedance(*b.direct, p0);
    }
    return exceedance(*b.posterior, p0);
}

RidgeData bundle_ridge(const FitBundle& b, const RidgeSelection& selection) {
    if (!b.posterior) {
        throw std::invalid_argument("ridge data needs a model-based fit");
    }
    return ridge_data(*b.posterior, b.admin1_of, selection);
}

std::string bundle_tabulation(const FitBundle& b, const SummaryOptions& options) {
    return tabulate({bundle_summaries(b, options)});
}

Json build_report(const std::vector<FitBundle>& fits, std::optional<double> p0, const std::string& timestamp) {
    if (fits.empty()) {
        throw ValidationError("a report needs at least one fit");
    }
    const FitBundle& first = fits.front();
    for (const auto& f : fits) {
        if (f.dataset_id != first.dataset_id) {
            throw ValidationError("all fits in a report must come from the same dataset");
        }
    }
    const double threshold = p0.value_or(first.metadata.reference_national_estimate.value_or(first.consistency.computed));
    Json seeds = Json::object();
    for (const auto& f : fits) {
        seeds[f.fit_id] = f.request.seed;
    }
    Json report;
    report["report_version"] = 1;
    report["metadata"] = {{"survey_label", first.metadata.survey_label},
                          {"indicator_label", first.metadata.indicator_label},
                          {"generated_at", timestamp},
                          {"engine_version", kEngineVersion},
                          {"dataset_id", first.dataset_id},
                          {"seeds", seeds},
                          {"exceedance_threshold", threshold}};
    report["consistency"] = to_json(first.consistency);

    std::map<AdminLevel, Json> gates;
    for (const auto& f : fits) {
        gates.emplace(f.gate.level, to_json(f.gate));
    }
    Json gate_list = Json::array();
    for (auto& [level, g] : gates) {
        gate_list.push_back(g);
    }
    report["gate_reports"] = gate_list;

    Json fit_list = Json::array();
    Json maps = Json::array();
    Json ridges = Json::array();
    std::vector<std::vector<AreaSummary>> tables;
    for (const auto& f : fits) {
        SummaryOptions so;
        if (f.posterior) {
            so.exceedance_threshold = threshold;
        }
        auto sums = bundle_summaries(f, so);
        Json stats = Json::object();
        for (const auto& s : sums) {
            stats[s.id] = {{"point", optional_json(s.point)},
                           {"ci_width", optional_json(s.ci_width)},
                           {"cv", optional_json(s.cv)},
                           {"exceedance", optional_json(s.exceedance)},
                           {"flags", s.flags}};
        }
        maps.push_back({{"fit_id", f.fit_id}, {"method", to_string(f.request.method)}, {"level", f.request.level},
                        {"stats", stats}});
        if (f.posterior) {
            RidgeSelection sel;
            if (f.request.level > 1) {
                sel.kind = RidgeSelection::Kind::top_bottom;
                sel.x = 5;
            }
            ridges.push_back({{"fit_id", f.fit_id},
                              {"selection", sel.kind == RidgeSelection::Kind::all ? "all" : "top_bottom:5"},
                              {"data", to_json(bundle_ridge(f, sel))}});
        }
        fit_list.push_back({{"fit_id", f.fit_id},
                            {"method", to_string(f.request.method)},
                            {"level", f.request.level},
                            {"seed", f.request.seed},
                            {"request", to_json(f.request)},
                            {"warnings", f.warnings},
                            {"diagnostics", f.diagnostics},
                            {"summaries", to_json(sums)}});
        tables.push_back(std::move(sums));
    }
    Json scatter = Json::array();
    for (std::size_t a = 0; a < fits.size(); ++a) {
        for (std::size_t b = a + 1; b < fits.size(); ++b) {
            if (fits[a].request.level != fits[b].request.level) {
                continue;
            }
            for (const char* stat : {"point", "cv"}) {
                scatter.push_back({{"fit_a", fits[a].fit_id},
                                   {"fit_b", fits[b].fit_id},
                                   {"stat", stat},
                                   {"data", to_json(scatter_data(tables[a], tables[b], stat))}});
            }
        }
    }
    report["fits"] = fit_list;
    report["tabulation_csv"] = tabulate(tables);
    report["plots"] = {{"map", maps}, {"scatter", scatter}, {"ridge", ridges}};
    return report;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw NotFoundError(fmt::format("cannot open '{}'", path));
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, std::string_view text) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::filesystem::create_directories(p.parent_path());
    }
    const auto tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw std::runtime_error(fmt::format("cannot write '{}'", path));
        }
        out << text;
    }
    std::filesystem::rename(tmp, p);
}

}  // namespace sae
