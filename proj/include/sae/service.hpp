#pragma once

#include "sae/workflow.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

namespace sae {

struct ServiceConfig {
    std::string data_dir = "sae-data";
    std::string host = "127.0.0.1";
    int port = 8080;
    std::uint64_t default_seed = 1;
    int workers = 2;
};

// Overrides fields from SAE_DATA_DIR, SAE_PORT and SAE_SEED_DEFAULT when set.
ServiceConfig config_from_env(ServiceConfig base = {});

enum class JobStatus { queued, running, done, failed };
std::string to_string(JobStatus s);

struct JobView {
    std::string id;
    std::string kind;  // fit_direct, fit_area, fit_unit
    JobStatus status = JobStatus::queued;
    Json request;
    std::optional<std::string> fit_id;  // set once done
    Json error;
    std::string created_at;
    std::string started_at;
    std::string finished_at;
};

Json to_json(const JobView& job);

// HTTP front end over the shared workflow. Datasets and fit bundles are
// content-addressed files under the data directory; jobs live in memory.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds (port 0 picks a free one) and serves on a background thread.
    // Returns the bound port.
    int start();
    // Binds and serves on the calling thread until stop().
    bool run();
    void stop();

    // Blocks until no job is queued or running.
    void wait_idle();

    const ServiceConfig& config() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace sae
