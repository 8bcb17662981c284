#include "sae/service.hpp"

#include "sae/csv.hpp"
#include "sae/log.hpp"

#include <fmt/core.h>
#include <httplib.h>

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

namespace sae {

namespace fs = std::filesystem;

ServiceConfig config_from_env(ServiceConfig base) {
    if (const char* d = std::getenv("SAE_DATA_DIR"); d && *d) {
        base.data_dir = d;
    }
    if (const char* p = std::getenv("SAE_PORT"); p && *p) {
        const auto v = csv::parse_long(p);
        if (!v || *v < 0 || *v > 65535) {
            throw ValidationError(fmt::format("SAE_PORT '{}' is not a port number", p));
        }
        base.port = static_cast<int>(*v);
    }
    if (const char* s = std::getenv("SAE_SEED_DEFAULT"); s && *s) {
        const auto v = csv::parse_long(s);
        if (!v || *v < 0) {
            throw ValidationError(fmt::format("SAE_SEED_DEFAULT '{}' is not a nonnegative integer", s));
        }
        base.default_seed = static_cast<std::uint64_t>(*v);
    }
    return base;
}

std::string to_string(JobStatus s) {
    switch (s) {
        case JobStatus::queued: return "queued";
        case JobStatus::running: return "running";
        case JobStatus::done: return "done";
        case JobStatus::failed: return "failed";
    }
    return "failed";
}

Json to_json(const JobView& job) {
    return Json{{"id", job.id},
                {"kind", job.kind},
                {"status", to_string(job.status)},
                {"request", job.request},
                {"result", job.fit_id ? Json{{"fit_id", *job.fit_id}} : Json(nullptr)},
                {"error", job.error},
                {"created_at", job.created_at},
                {"started_at", job.started_at.empty() ? Json(nullptr) : Json(job.started_at)},
                {"finished_at", job.finished_at.empty() ? Json(nullptr) : Json(job.finished_at)}};
}

namespace {

struct HttpError : std::runtime_error {
    int status;
    Json body;
    HttpError(int s, Json b) : std::runtime_error(b.dump()), status(s), body(std::move(b)) {}
};

bool is_hex_id(const std::string& id) {
    return !id.empty() && id.size() <= 64 &&
           std::all_of(id.begin(), id.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

std::string job_kind(Method m) {
    switch (m) {
        case Method::direct: return "fit_direct";
        case Method::area_level: return "fit_area";
        case Method::unit_level: return "fit_unit";
    }
    return "fit_direct";
}

Json parse_body(const httplib::Request& req) {
    try {
        return Json::parse(req.body);
    } catch (const Json::parse_error& e) {
        throw HttpError(400, error_json("bad_request", fmt::format("request body is not valid JSON: {}", e.what())));
    }
}

long int_param(const httplib::Request& req, const char* name, std::optional<long> fallback) {
    if (!req.has_param(name)) {
        if (fallback) {
            return *fallback;
        }
        throw ValidationError(fmt::format("missing query parameter '{}'", name), 0, name);
    }
    const auto v = csv::parse_long(req.get_param_value(name));
    if (!v) {
        throw ValidationError(fmt::format("query parameter '{}' must be an integer", name), 0, name);
    }
    return *v;
}

std::optional<double> real_param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) {
        return std::nullopt;
    }
    const auto v = csv::parse_double(req.get_param_value(name));
    if (!v) {
        throw ValidationError(fmt::format("query parameter '{}' must be a number", name), 0, name);
    }
    return v;
}

double threshold_param(const httplib::Request& req, bool required) {
    const auto p0 = real_param(req, "p0");
    if (!p0) {
        if (required) {
            throw ValidationError("missing query parameter 'p0'", 0, "p0");
        }
        return std::nan("");
    }
    if (!(*p0 > 0.0 && *p0 < 1.0)) {
        throw ValidationError("p0 must lie strictly between 0 and 1", 0, "p0");
    }
    return *p0;
}

}  // namespace

struct Service::Impl {
    struct Job {
        JobView view;
        FitRequest request;
        std::string dataset_id;
    };

    ServiceConfig cfg;
    httplib::Server server;
    std::thread server_thread;

    std::mutex mu;
    std::condition_variable work_cv;
    std::condition_variable idle_cv;
    std::map<std::string, std::shared_ptr<const LoadedDataset>> datasets;
    std::map<std::string, std::shared_ptr<const FitBundle>> fits;
    std::map<std::string, Job> jobs;
    std::deque<std::string> queue;
    int active = 0;
    bool stopping = false;
    std::uint64_t job_counter = 0;
    std::vector<std::thread> workers;

    explicit Impl(ServiceConfig c) : cfg(std::move(c)) {
        fs::create_directories(fs::path(cfg.data_dir) / "datasets");
        fs::create_directories(fs::path(cfg.data_dir) / "fits");
        routes();
        const int n = std::max(1, cfg.workers);
        for (int i = 0; i < n; ++i) {
            workers.emplace_back([this] { worker_loop(); });
        }
    }

    ~Impl() {
        server.stop();
        if (server_thread.joinable()) {
            server_thread.join();
        }
        {
            std::lock_guard lock(mu);
            stopping = true;
        }
        work_cv.notify_all();
        for (auto& w : workers) {
            w.join();
        }
    }

    fs::path dataset_path(const std::string& id) const { return fs::path(cfg.data_dir) / "datasets" / (id + ".json"); }
    fs::path fit_path(const std::string& id) const { return fs::path(cfg.data_dir) / "fits" / (id + ".json"); }

    std::shared_ptr<const LoadedDataset> dataset(const std::string& id) {
        {
            std::lock_guard lock(mu);
            if (auto it = datasets.find(id); it != datasets.end()) {
                return it->second;
            }
        }
        if (!is_hex_id(id) || !fs::exists(dataset_path(id))) {
            throw NotFoundError(fmt::format("unknown dataset '{}'", id));
        }
        auto ds = load_sources(sources_from_json(Json::parse(read_text_file(dataset_path(id).string()))));
        std::lock_guard lock(mu);
        return datasets.emplace(id, ds).first->second;
    }

    std::shared_ptr<const FitBundle> fit(const std::string& id) {
        {
            std::lock_guard lock(mu);
            if (auto it = fits.find(id); it != fits.end()) {
                return it->second;
            }
        }
        if (!is_hex_id(id) || !fs::exists(fit_path(id))) {
            throw NotFoundError(fmt::format("unknown fit '{}'", id));
        }
        auto b = std::make_shared<const FitBundle>(bundle_from_json(Json::parse(read_text_file(fit_path(id).string()))));
        std::lock_guard lock(mu);
        return fits.emplace(id, b).first->second;
    }

    void worker_loop() {
        for (;;) {
            std::string id;
            FitRequest request;
            std::string dataset_id;
            {
                std::unique_lock lock(mu);
                work_cv.wait(lock, [&] { return stopping || !queue.empty(); });
                if (stopping) {
                    return;
                }
                id = queue.front();
                queue.pop_front();
                Job& job = jobs.at(id);
                job.view.status = JobStatus::running;
                job.view.started_at = utc_timestamp();
                request = job.request;
                dataset_id = job.dataset_id;
                ++active;
            }
            log::info("job started", {{"job_id", id}});
            std::optional<std::string> fit_id;
            Json error;
            try {
                const std::string fid = fit_id_for(dataset_id, request);
                std::shared_ptr<const FitBundle> existing;
                try {
                    existing = fit(fid);
                } catch (const NotFoundError&) {
                }
                if (!existing) {
                    auto ds = dataset(dataset_id);
                    auto bundle = std::make_shared<const FitBundle>(run_fit(*ds, request));
                    write_text_file(fit_path(fid).string(), bundle_to_json(*bundle).dump());
                    std::lock_guard lock(mu);
                    fits.emplace(fid, bundle);
                }
                fit_id = fid;
            } catch (const GateRefusal& e) {
                error = error_json(e)["error"];
            } catch (const ValidationError& e) {
                error = error_json(e)["error"];
            } catch (const NumericalError& e) {
                error = error_json("numerical_error", e.what())["error"];
            } catch (const std::exception& e) {
                error = error_json("internal_error", e.what())["error"];
            }
            {
                std::lock_guard lock(mu);
                Job& job = jobs.at(id);
                job.view.finished_at = utc_timestamp();
                if (fit_id) {
                    job.view.status = JobStatus::done;
                    job.view.fit_id = fit_id;
                } else {
                    job.view.status = JobStatus::failed;
                    job.view.error = error;
                }
                --active;
            }
            log::info("job finished", {{"job_id", id}, {"ok", fit_id.has_value()}});
            idle_cv.notify_all();
        }
    }

    static void reply(httplib::Response& res, int status, Json body, const Json& seed) {
        body["engine_version"] = kEngineVersion;
        body["seed"] = seed;
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    template <class F>
    auto guard(F f) {
        return [f](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const HttpError& e) {
                reply(res, e.status, e.body, nullptr);
            } catch (const GateRefusal& e) {
                reply(res, 403, error_json(e), nullptr);
            } catch (const NotFoundError& e) {
                reply(res, 404, error_json("not_found", e.what()), nullptr);
            } catch (const ValidationError& e) {
                reply(res, 422, error_json(e), nullptr);
            } catch (const std::invalid_argument& e) {
                reply(res, 422, error_json("validation_error", e.what()), nullptr);
            } catch (const Json::exception& e) {
                reply(res, 400, error_json("bad_request", e.what()), nullptr);
            } catch (const std::exception& e) {
                reply(res, 500, error_json("internal_error", e.what()), nullptr);
            }
        };
    }

    void routes() {
        server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
            log::info("request", {{"method", req.method}, {"path", req.path}, {"status", res.status}});
        });

        server.Post("/datasets", guard([this](const httplib::Request& req, httplib::Response& res) {
            auto sources = sources_from_json(parse_body(req));
            auto ds = load_sources(sources);
            if (!fs::exists(dataset_path(ds->id))) {
                write_text_file(dataset_path(ds->id).string(), to_json(ds->sources).dump());
            }
            {
                std::lock_guard lock(mu);
                datasets.emplace(ds->id, ds);
            }
            Json levels = Json::array();
            for (auto l : ds->data->admin_levels()) {
                levels.push_back({{"level", l}, {"n_areas", ds->graph->level(l).size()}});
            }
            reply(res, 201,
                  {{"dataset_id", ds->id},
                   {"n_clusters", ds->data->records().size()},
                   {"levels", levels},
                   {"covariates", ds->covariates ? Json(ds->covariates->names) : Json::array()}},
                  nullptr);
        }));

        server.Get(R"(/datasets/([^/]+)/clusters)", guard([this](const httplib::Request& req, httplib::Response& res) {
            auto ds = dataset(req.matches[1]);
            const auto level = static_cast<AdminLevel>(int_param(req, "level", 1));
            reply(res, 200, {{"dataset_id", ds->id}, {"level", level}, {"clusters", to_json(cluster_counts(*ds->data, level))}},
                  nullptr);
        }));

        server.Get(R"(/datasets/([^/]+)/consistency)", guard([this](const httplib::Request& req, httplib::Response& res) {
            auto ds = dataset(req.matches[1]);
            const double tol = real_param(req, "tolerance").value_or(0.005);
            Json body = to_json(national_consistency_check(*ds->data, tol));
            body["dataset_id"] = ds->id;
            reply(res, 200, body, nullptr);
        }));

        server.Get(R"(/datasets/([^/]+)/gate)", guard([this](const httplib::Request& req, httplib::Response& res) {
            auto ds = dataset(req.matches[1]);
            const auto level = static_cast<AdminLevel>(int_param(req, "level", 1));
            Json body = to_json(gate_report(*ds, level));
            body["dataset_id"] = ds->id;
            reply(res, 200, body, nullptr);
        }));

        server.Post("/fits", guard([this](const httplib::Request& req, httplib::Response& res) {
            const Json body = parse_body(req);
            if (!body.is_object() || !body.contains("dataset_id") || !body.at("dataset_id").is_string()) {
                throw ValidationError("missing field 'dataset_id'", 0, "dataset_id");
            }
            auto ds = dataset(body.at("dataset_id").get<std::string>());
            const FitRequest request = fit_request_from_json(body, cfg.default_seed);
            check_request(*ds, request);
            Job job;
            job.request = request;
            job.dataset_id = ds->id;
            job.view.kind = job_kind(request.method);
            job.view.request = to_json(request);
            job.view.request["dataset_id"] = ds->id;
            job.view.created_at = utc_timestamp();
            std::string id;
            {
                std::lock_guard lock(mu);
                id = fmt::format("job-{:06d}-{}", ++job_counter, fit_id_for(ds->id, request).substr(0, 8));
                job.view.id = id;
                jobs.emplace(id, std::move(job));
                queue.push_back(id);
            }
            work_cv.notify_one();
            reply(res, 202, {{"job_id", id}, {"fit_id", fit_id_for(ds->id, request)}}, request.seed);
        }));

        server.Get(R"(/jobs/([^/]+))", guard([this](const httplib::Request& req, httplib::Response& res) {
            JobView view;
            std::uint64_t seed = 0;
            {
                std::lock_guard lock(mu);
                auto it = jobs.find(req.matches[1]);
                if (it == jobs.end()) {
                    throw NotFoundError(fmt::format("unknown job '{}'", std::string(req.matches[1])));
                }
                view = it->second.view;
                seed = it->second.request.seed;
            }
            reply(res, 200, to_json(view), seed);
        }));

        server.Get(R"(/fits/([^/]+))", guard([this](const httplib::Request& req, httplib::Response& res) {
            auto b = fit(req.matches[1]);
            reply(res, 200, bundle_to_json(*b), b->request.seed);
        }));

        server.Get(R"(/fits/([^/]+)/summaries)", guard([this](const httplib::Request& req, httplib::Response& res) {
            auto b = fit(req.matches[1]);
            SummaryOptions o;
            if (req.has_param("point")) {
                o.point = parse_point_stat(req.get_param_value("point"));
            }
            if (b->posterior && req.has_param("p0")) {
                o.exceedance_threshold = threshold_param(req, true);
            }
            reply(res, 200, {{"fit_id", b->fit_id}, {"summaries", to_json(bundle_summaries(*b, o))}}, b->request.seed);
        }));

        server.Get(R"(/fits/([^/]+)/exceedance)", guard([this](const httplib::Request& req, httplib::Response& res) {
            auto b = fit(req.matches[1]);
            const double p0 = threshold_param(req, true);
            const auto probs = bundle_exceedance(*b, p0);
            Json list = Json::array();
            for (std::size_t i = 0; i < probs.size(); ++i) {
                list.push_back({{"area", b->posterior->area_ids[i]}, {"probability", probs[i]}});
            }
            reply(res, 200, {{"fit_id", b->fit_id}, {"p0", p0}, {"exceedance", list}}, b->request.seed);
        }));

        server.Get(R"(/fits/([^/]+)/ridge)", guard([this](const httplib::Request& req, httplib::Response& res) {
            auto b = fit(req.matches[1]);
            const std::string sel = req.has_param("selection") ? req.get_param_value("selection") : "all";
            Json body = to_json(bundle_ridge(*b, parse_ridge_selection(sel)));
            body["fit_id"] = b->fit_id;
            body["selection"] = sel;
            reply(res, 200, body, b->request.seed);
        }));

        server.Get(R"(/fits/([^/]+)/tabulation)", guard([this](const httplib::Request& req, httplib::Response& res) {
            auto b = fit(req.matches[1]);
            SummaryOptions o;
            if (req.has_param("point")) {
                o.point = parse_point_stat(req.get_param_value("point"));
            }
            if (b->posterior && req.has_param("p0")) {
                o.exceedance_threshold = threshold_param(req, true);
            }
            res.status = 200;
            res.set_header("X-SAE-Engine-Version", kEngineVersion);
            res.set_header("X-SAE-Seed", std::to_string(b->request.seed));
            res.set_content(bundle_tabulation(*b, o), "text/csv");
        }));

        server.Get("/compare", guard([this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("fit_a") || !req.has_param("fit_b")) {
                throw ValidationError("compare needs fit_a and fit_b");
            }
            auto a = fit(req.get_param_value("fit_a"));
            auto b = fit(req.get_param_value("fit_b"));
            if (a->request.level != b->request.level) {
                throw ValidationError(fmt::format("fits are at different levels ({} and {})", a->request.level,
                                                  b->request.level));
            }
            const std::string stat = req.has_param("stat") ? req.get_param_value("stat") : "point";
            SummaryOptions o;
            const double p0 = threshold_param(req, stat == "exceedance");
            if (stat == "exceedance") {
                if (!a->posterior || !b->posterior) {
                    throw ValidationError("exceedance needs two model-based fits", 0, "stat");
                }
                o.exceedance_threshold = p0;
            }
            Json body = to_json(scatter_data(bundle_summaries(*a, o), bundle_summaries(*b, o), stat));
            body["fit_a"] = a->fit_id;
            body["fit_b"] = b->fit_id;
            reply(res, 200, body, {{"fit_a", a->request.seed}, {"fit_b", b->request.seed}});
        }));

        server.Post("/reports", guard([this](const httplib::Request& req, httplib::Response& res) {
            const Json body = parse_body(req);
            if (!body.is_object() || !body.contains("fit_ids") || !body.at("fit_ids").is_array()) {
                throw ValidationError("missing array field 'fit_ids'", 0, "fit_ids");
            }
            std::vector<FitBundle> bundles;
            Json seeds = Json::object();
            for (const auto& id : body.at("fit_ids")) {
                auto b = fit(id.get<std::string>());
                seeds[b->fit_id] = b->request.seed;
                bundles.push_back(*b);
            }
            std::optional<double> p0;
            if (body.contains("p0") && !body.at("p0").is_null()) {
                p0 = body.at("p0").get<double>();
                if (!(*p0 > 0.0 && *p0 < 1.0)) {
                    throw ValidationError("p0 must lie strictly between 0 and 1", 0, "p0");
                }
            }
            reply(res, 200, build_report(bundles, p0, utc_timestamp()), seeds);
        }));
    }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() = default;

int Service::start() {
    int port = impl_->cfg.port;
    if (port == 0) {
        port = impl_->server.bind_to_any_port(impl_->cfg.host);
    } else if (!impl_->server.bind_to_port(impl_->cfg.host, port)) {
        port = -1;
    }
    if (port < 0) {
        throw std::runtime_error(fmt::format("cannot bind {}:{}", impl_->cfg.host, impl_->cfg.port));
    }
    impl_->cfg.port = port;
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    log::info("service listening", {{"host", impl_->cfg.host}, {"port", port}, {"data_dir", impl_->cfg.data_dir}});
    return port;
}

bool Service::run() {
    log::info("service listening",
              {{"host", impl_->cfg.host}, {"port", impl_->cfg.port}, {"data_dir", impl_->cfg.data_dir}});
    return impl_->server.listen(impl_->cfg.host, impl_->cfg.port);
}

void Service::stop() { impl_->server.stop(); }

void Service::wait_idle() {
    std::unique_lock lock(impl_->mu);
    impl_->idle_cv.wait(lock, [&] { return impl_->queue.empty() && impl_->active == 0; });
}

const ServiceConfig& Service::config() const { return impl_->cfg; }

}  // namespace sae
