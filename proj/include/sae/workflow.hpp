#pragma once

#include "sae/json_io.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sae {

// Raw inputs of one analysis, as uploaded or read from files.
struct DatasetSources {
    std::string dataset_csv;
    std::string geometry;   // GeoJSON feature collection
    std::string edge_list;  // optional: replaces geometric adjacency
    std::string covariates_csv;
    AdminLevel covariates_level = 1;
    std::optional<double> reference_estimate;
    std::string survey_label;
    std::string indicator_label;
};

Json to_json(const DatasetSources& s);
DatasetSources sources_from_json(const Json& j);

struct LoadedDataset {
    std::string id;
    DatasetSources sources;
    std::shared_ptr<const AreaGraph> graph;
    std::shared_ptr<const AnalysisDataset> data;
    std::optional<CovariateTable> covariates;
};

// Parses and validates everything; throws ValidationError.
std::shared_ptr<const LoadedDataset> load_sources(DatasetSources sources);

// 64-bit FNV-1a as 16 hex digits.
std::string content_hash(std::string_view data);

struct FitRequest {
    Method method = Method::direct;
    AdminLevel level = 1;
    bool override_gate = false;
    std::uint64_t seed = 1;
    std::vector<std::string> covariates;
    bool nested = false;
    bool overdispersion = true;
    int n_samples = kDefaultSamples;
    std::optional<double> fixed_sigma;
    std::optional<double> fixed_phi;
    std::optional<double> fixed_d;
    PriorSettings priors;
};

// Accepts {method, level, override, seed, options: {...}}; throws ValidationError.
FitRequest fit_request_from_json(const Json& j, std::uint64_t default_seed);
Json to_json(const FitRequest& r);

struct FitBundle {
    std::string fit_id;
    std::string dataset_id;
    FitRequest request;
    DatasetMetadata metadata;
    ConsistencyCheck consistency;
    GateReport gate;
    std::optional<DirectEstimates> direct;
    std::optional<PosteriorResult> posterior;  // samples, ids and flags
    std::vector<AreaId> admin1_of;
    std::vector<std::string> warnings;
    Json diagnostics = Json::object();
};

GateReport gate_report(const LoadedDataset& ds, AdminLevel level);

// Throws GateRefusal when the gate refuses the request, ValidationError on a
// bad level or option.
void check_request(const LoadedDataset& ds, const FitRequest& request);

std::string fit_id_for(const std::string& dataset_id, const FitRequest& request);

FitBundle run_fit(const LoadedDataset& ds, const FitRequest& request);

Json bundle_to_json(const FitBundle& b);
FitBundle bundle_from_json(const Json& j);

std::vector<AreaSummary> bundle_summaries(const FitBundle& b, const SummaryOptions& options = {});
// Throws std::invalid_argument for direct fits.
std::vector<double> bundle_exceedance(const FitBundle& b, double p0);
RidgeData bundle_ridge(const FitBundle& b, const RidgeSelection& selection);
std::string bundle_tabulation(const FitBundle& b, const SummaryOptions& options = {});

// Self-contained report. Only metadata.generated_at depends on the clock.
Json build_report(const std::vector<FitBundle>& fits, std::optional<double> p0, const std::string& timestamp);

std::string utc_timestamp();

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace sae
