#include "sae/csv.hpp"
#include "sae/log.hpp"
#include "sae/service.hpp"
#include "sae/synthetic.hpp"
#include "sae/workflow.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using sae::Json;

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kValidation = 3, kRefused = 4, kNotFound = 5, kNumerical = 6 };

struct SourceFlags {
    std::string data;
    std::string geometry;
    std::string edges;
    std::string covariates;
    int covariates_level = 1;
    std::optional<double> reference;
    std::string survey_label;
    std::string indicator_label;

    void add(CLI::App* app) {
        app->add_option("--data", data, "Cluster table (CSV)")->required()->check(CLI::ExistingFile);
        app->add_option("--geometry", geometry, "Area geometry (GeoJSON feature collection)")
            ->required()
            ->check(CLI::ExistingFile);
        app->add_option("--edges", edges, "Adjacency edge list (CSV: level,a,b) replacing geometric adjacency")
            ->check(CLI::ExistingFile);
        app->add_option("--covariates", covariates, "Area-level covariates (CSV)")->check(CLI::ExistingFile);
        app->add_option("--covariates-level", covariates_level, "Admin level of the covariate table");
        app->add_option("--reference", reference, "Published national estimate for the consistency check");
        app->add_option("--survey-label", survey_label);
        app->add_option("--indicator-label", indicator_label);
    }

    std::shared_ptr<const sae::LoadedDataset> load() const {
        sae::DatasetSources s;
        s.dataset_csv = sae::read_text_file(data);
        s.geometry = sae::read_text_file(geometry);
        if (!edges.empty()) {
            s.edge_list = sae::read_text_file(edges);
        }
        if (!covariates.empty()) {
            s.covariates_csv = sae::read_text_file(covariates);
        }
        s.covariates_level = covariates_level;
        s.reference_estimate = reference;
        s.survey_label = survey_label;
        s.indicator_label = indicator_label;
        return sae::load_sources(std::move(s));
    }
};

std::uint64_t default_seed() {
    return sae::config_from_env().default_seed;
}

Json with_provenance(Json j, const Json& seed) {
    j["engine_version"] = sae::kEngineVersion;
    j["seed"] = seed;
    return j;
}

std::vector<sae::FitBundle> load_bundles(const std::vector<std::string>& paths) {
    std::vector<sae::FitBundle> out;
    for (const auto& p : paths) {
        try {
            out.push_back(sae::bundle_from_json(Json::parse(sae::read_text_file(p))));
        } catch (const Json::parse_error& e) {
            throw sae::ValidationError(fmt::format("{}: not a fit bundle ({})", p, e.what()));
        }
    }
    return out;
}

std::string verdict_line(const sae::GateReport& g) {
    return fmt::format("  direct: {} | area_level: {} | unit_level: {} | recommended: {}", to_string(g.direct),
                       to_string(g.area_level), to_string(g.unit_level), to_string(g.recommendation));
}

int cmd_check(const SourceFlags& src, std::vector<int> levels, const std::string& format, double tolerance) {
    auto ds = src.load();
    if (levels.empty()) {
        for (auto l : ds->data->admin_levels()) {
            if (l >= 1) {
                levels.push_back(l);
            }
        }
    }
    const auto consistency = sae::national_consistency_check(*ds->data, tolerance);
    std::vector<sae::GateReport> gates;
    for (int l : levels) {
        gates.push_back(sae::gate_report(*ds, l));
    }
    if (format == "json") {
        Json reports = Json::array();
        for (const auto& g : gates) {
            reports.push_back(sae::to_json(g));
        }
        std::cout << with_provenance({{"dataset_id", ds->id},
                                      {"n_clusters", ds->data->records().size()},
                                      {"consistency", sae::to_json(consistency)},
                                      {"gate_reports", reports}},
                                     nullptr)
                         .dump(2)
                  << '\n';
        return kOk;
    }
    std::cout << fmt::format("dataset {}: {} clusters, admin levels 0-{}\n", ds->id, ds->data->records().size(),
                             ds->data->max_level());
    std::cout << fmt::format("national estimate {}", sae::csv::format_real(consistency.computed));
    if (consistency.reference) {
        std::cout << fmt::format(" vs reference {} (tolerance {}): {}", sae::csv::format_real(*consistency.reference),
                                 sae::csv::format_real(consistency.tolerance), to_string(consistency.status));
    } else {
        std::cout << ": no reference estimate";
    }
    std::cout << '\n';
    for (const auto& g : gates) {
        std::cout << fmt::format("admin level {}: {} areas, {} with no data, {} with low information\n", g.level,
                                 g.n_areas, g.n_no_data, g.n_low_info);
        std::cout << verdict_line(g) << '\n';
        for (const auto& m : g.messages) {
            std::cout << "  " << m << '\n';
        }
    }
    return kOk;
}

struct FitFlags {
    std::string method = "direct";
    int level = 1;
    bool override_gate = false;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> covariates;
    bool nested = false;
    bool no_overdispersion = false;
    int samples = sae::kDefaultSamples;
    std::optional<double> fixed_sigma;
    std::optional<double> fixed_phi;
    std::optional<double> fixed_d;
    std::string out;
};

int cmd_fit(const SourceFlags& src, const FitFlags& f) {
    auto ds = src.load();
    Json req{{"method", f.method},
             {"level", f.level},
             {"override", f.override_gate},
             {"options",
              {{"covariates", f.covariates},
               {"nested", f.nested},
               {"overdispersion", !f.no_overdispersion},
               {"n_samples", f.samples},
               {"fixed_sigma", sae::optional_json(f.fixed_sigma)},
               {"fixed_phi", sae::optional_json(f.fixed_phi)},
               {"fixed_d", sae::optional_json(f.fixed_d)}}}};
    if (f.seed) {
        req["seed"] = *f.seed;
    }
    const auto request = sae::fit_request_from_json(req, default_seed());
    const auto bundle = sae::run_fit(*ds, request);
    sae::write_text_file(f.out, sae::bundle_to_json(bundle).dump());
    std::cout << with_provenance({{"fit_id", bundle.fit_id},
                                  {"dataset_id", bundle.dataset_id},
                                  {"method", to_string(request.method)},
                                  {"level", request.level},
                                  {"out", f.out},
                                  {"warnings", bundle.warnings}},
                                 request.seed)
                     .dump(2)
              << '\n';
    return kOk;
}

int cmd_summarize(const std::vector<std::string>& fits, const std::string& out_dir, const std::string& point,
                  std::optional<double> p0) {
    const auto bundles = load_bundles(fits);
    sae::SummaryOptions base;
    base.point = sae::parse_point_stat(point);
    std::vector<std::vector<sae::AreaSummary>> tables;
    Json list = Json::array();
    Json seeds = Json::object();
    for (const auto& b : bundles) {
        sae::SummaryOptions o = base;
        if (b.posterior && p0) {
            o.exceedance_threshold = p0;
        }
        tables.push_back(sae::bundle_summaries(b, o));
        list.push_back({{"fit_id", b.fit_id}, {"summaries", sae::to_json(tables.back())}});
        seeds[b.fit_id] = b.request.seed;
    }
    const std::filesystem::path dir(out_dir);
    sae::write_text_file((dir / "tabulation.csv").string(), sae::tabulate(tables));
    sae::write_text_file((dir / "summaries.json").string(), with_provenance({{"fits", list}}, seeds).dump(2));
    const Json report = sae::build_report(bundles, p0, "");
    sae::write_text_file((dir / "plots.json").string(), with_provenance(report.at("plots"), seeds).dump());
    std::cout << with_provenance({{"out_dir", out_dir},
                                  {"files", {"tabulation.csv", "summaries.json", "plots.json"}},
                                  {"n_fits", bundles.size()}},
                                 seeds)
                     .dump(2)
              << '\n';
    return kOk;
}

int cmd_report(const std::vector<std::string>& fits, const std::string& out, std::optional<double> p0,
               const std::string& timestamp) {
    const auto bundles = load_bundles(fits);
    const Json report = sae::build_report(bundles, p0, timestamp.empty() ? sae::utc_timestamp() : timestamp);
    sae::write_text_file(out, report.dump(2));
    std::cout << with_provenance({{"out", out}, {"n_fits", bundles.size()}}, report.at("metadata").at("seeds")).dump(2)
              << '\n';
    return kOk;
}

struct SimulateFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::optional<int> admin1;
    std::optional<int> side;
    std::optional<int> clusters;
    std::optional<int> urban_clusters;
    std::optional<int> min_clusters;
    std::optional<std::string> field;
    std::optional<double> reference;
};

int cmd_simulate(const SimulateFlags& f) {
    sae::SyntheticDesignConfig cfg;
    if (!f.config.empty()) {
        std::istringstream in(sae::read_text_file(f.config));
        cfg = sae::parse_synthetic_config(in);
    }
    if (f.seed) cfg.seed = *f.seed;
    if (f.admin1) cfg.n_admin1 = *f.admin1;
    if (f.side) cfg.admin2_per_admin1_side = *f.side;
    if (f.clusters) cfg.clusters_total = *f.clusters;
    if (f.urban_clusters) cfg.urban_clusters = *f.urban_clusters;
    if (f.min_clusters) cfg.min_clusters_per_area = *f.min_clusters;
    if (f.field) cfg.true_prevalence_field = *f.field;
    if (f.reference) cfg.reference_national_estimate = *f.reference;

    const auto features = sae::make_lattice_geography(cfg.n_admin1, cfg.admin2_per_admin1_side);
    auto graph = std::make_shared<const sae::AreaGraph>(sae::AreaGraph::from_geometry(features));
    sae::SyntheticTruth truth;
    const auto ds = sae::generate_synthetic(cfg, graph, &truth);

    const std::filesystem::path dir(f.out_dir);
    std::ostringstream data, geo, conf, tr;
    sae::write_dataset_csv(data, ds);
    sae::write_geojson(geo, features);
    sae::write_synthetic_config(conf, cfg);
    tr << "area_id,level,prevalence\n";
    for (std::size_t i = 0; i < truth.ids.size(); ++i) {
        tr << sae::csv::escape(truth.ids[i]) << ',' << truth.level << ',' << sae::csv::format_real(truth.prevalence[i], 10)
           << '\n';
    }
    sae::write_text_file((dir / "dataset.csv").string(), data.str());
    sae::write_text_file((dir / "geometry.geojson").string(), geo.str());
    sae::write_text_file((dir / "design.conf").string(), conf.str());
    sae::write_text_file((dir / "truth.csv").string(), tr.str());
    std::cout << with_provenance({{"out_dir", f.out_dir},
                                  {"n_clusters", ds.records().size()},
                                  {"files", {"dataset.csv", "geometry.geojson", "design.conf", "truth.csv"}}},
                                 cfg.seed)
                     .dump(2)
              << '\n';
    return kOk;
}

sae::Service* g_service = nullptr;

extern "C" void on_signal(int) {
    if (g_service) {
        g_service->stop();
    }
}

int cmd_serve(sae::ServiceConfig cfg) {
    sae::Service service(cfg);
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const bool ok = service.run();
    g_service = nullptr;
    if (!ok) {
        throw std::runtime_error(fmt::format("cannot listen on {}:{}", cfg.host, cfg.port));
    }
    return kOk;
}

int fail(int code, const Json& error) {
    std::cerr << with_provenance(error, nullptr).dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Small area prevalence estimation from cluster surveys"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("--quiet", quiet, "Suppress structured logs on standard error");

    SourceFlags src;
    std::vector<int> check_levels;
    std::string check_format = "text";
    double tolerance = 0.005;
    auto* check = app.add_subcommand("check", "Validate a dataset, print sparsity gates and the consistency check");
    src.add(check);
    check->add_option("--level", check_levels, "Admin levels to gate (default: all below national)");
    check->add_option("--format", check_format)->check(CLI::IsMember({"text", "json"}));
    check->add_option("--tolerance", tolerance, "Consistency tolerance on the proportion scale");

    SourceFlags fit_src;
    FitFlags ff;
    auto* fit = app.add_subcommand("fit", "Run one method at one admin level and write a fit bundle");
    fit_src.add(fit);
    fit->add_option("--method", ff.method, "direct, area or unit")->required();
    fit->add_option("--level", ff.level)->required();
    fit->add_flag("--override", ff.override_gate, "Proceed despite an overridable sparsity warning");
    fit->add_option("--seed", ff.seed);
    fit->add_option("--covariate", ff.covariates, "Covariate column to include (repeatable)");
    fit->add_flag("--nested", ff.nested, "Admin-1 fixed effects (unit-level, level 2 or finer)");
    fit->add_flag("--no-overdispersion", ff.no_overdispersion, "Binomial instead of beta-binomial clusters");
    fit->add_option("--samples", ff.samples, "Posterior draws");
    fit->add_option("--fixed-sigma", ff.fixed_sigma);
    fit->add_option("--fixed-phi", ff.fixed_phi);
    fit->add_option("--fixed-d", ff.fixed_d);
    fit->add_option("--out", ff.out, "Bundle path (JSON)")->required();

    std::vector<std::string> sum_fits;
    std::string sum_out = ".";
    std::string sum_point = "median";
    std::optional<double> sum_p0;
    auto* summarize = app.add_subcommand("summarize", "Write tabulation.csv, summaries.json and plots.json");
    summarize->add_option("--fit", sum_fits, "Fit bundle (repeatable)")->required()->check(CLI::ExistingFile);
    summarize->add_option("--out-dir", sum_out);
    summarize->add_option("--point", sum_point)->check(CLI::IsMember({"median", "mean"}));
    summarize->add_option("--p0", sum_p0, "Exceedance threshold");

    std::vector<std::string> rep_fits;
    std::string rep_out;
    std::optional<double> rep_p0;
    std::string rep_timestamp;
    auto* report = app.add_subcommand("report", "Compile fits into one report (JSON)");
    report->add_option("--fit", rep_fits, "Fit bundle (repeatable)")->required()->check(CLI::ExistingFile);
    report->add_option("--out", rep_out)->required();
    report->add_option("--p0", rep_p0, "Exceedance threshold (default: reference or national estimate)");
    report->add_option("--timestamp", rep_timestamp, "Value for metadata.generated_at");

    SimulateFlags sim;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic survey on a lattice geography");
    simulate->add_option("--config", sim.config, "Design file (key = value)")->check(CLI::ExistingFile);
    simulate->add_option("--seed", sim.seed);
    simulate->add_option("--out-dir", sim.out_dir);
    simulate->add_option("--admin1", sim.admin1, "First-level regions");
    simulate->add_option("--side", sim.side, "Second-level lattice side per region");
    simulate->add_option("--clusters", sim.clusters);
    simulate->add_option("--urban-clusters", sim.urban_clusters);
    simulate->add_option("--min-clusters", sim.min_clusters, "Minimum clusters per second-level area");
    simulate->add_option("--field", sim.field, "constant:P or gradient:SOUTH:NORTH");
    simulate->add_option("--reference", sim.reference, "Reference national estimate stored with the design");

    sae::ServiceConfig serve_cfg;
    std::optional<std::string> serve_dir;
    std::optional<int> serve_port;
    std::optional<std::uint64_t> serve_seed;
    auto* serve = app.add_subcommand("serve", "Start the HTTP service");
    serve->add_option("--data-dir", serve_dir, "Overrides SAE_DATA_DIR");
    serve->add_option("--port", serve_port, "Overrides SAE_PORT");
    serve->add_option("--seed-default", serve_seed, "Overrides SAE_SEED_DEFAULT");
    serve->add_option("--host", serve_cfg.host);
    serve->add_option("--workers", serve_cfg.workers, "Concurrent fit jobs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(kUsage, sae::error_json("usage_error", e.what()));
    }
    sae::log::set_enabled(!quiet);

    try {
        if (*check) {
            return cmd_check(src, check_levels, check_format, tolerance);
        }
        if (*fit) {
            return cmd_fit(fit_src, ff);
        }
        if (*summarize) {
            return cmd_summarize(sum_fits, sum_out, sum_point, sum_p0);
        }
        if (*report) {
            return cmd_report(rep_fits, rep_out, rep_p0, rep_timestamp);
        }
        if (*simulate) {
            return cmd_simulate(sim);
        }
        if (*serve) {
            auto cfg = sae::config_from_env(serve_cfg);
            if (serve_dir) cfg.data_dir = *serve_dir;
            if (serve_port) cfg.port = *serve_port;
            if (serve_seed) cfg.default_seed = *serve_seed;
            return cmd_serve(cfg);
        }
    } catch (const sae::GateRefusal& e) {
        return fail(kRefused, sae::error_json(e));
    } catch (const sae::ValidationError& e) {
        return fail(kValidation, sae::error_json(e));
    } catch (const sae::NotFoundError& e) {
        return fail(kNotFound, sae::error_json("not_found", e.what()));
    } catch (const sae::NumericalError& e) {
        return fail(kNumerical, sae::error_json("numerical_error", e.what()));
    } catch (const std::invalid_argument& e) {
        return fail(kValidation, sae::error_json("validation_error", e.what()));
    } catch (const std::exception& e) {
        return fail(kFailure, sae::error_json("internal_error", e.what()));
    }
    return kFailure;
}
