#pragma once

#include "sae/common.hpp"
#include "sae/spatial_graph.hpp"

#include <Eigen/Dense>

#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace sae {

struct ClusterRecord {
    std::string cluster_id;
    std::string stratum_id;
    // Area id per admin level; index 0 is the national area. Levels always
    // form a contiguous prefix.
    std::vector<AreaId> area_by_level;
    double weight = 1.0;
    long n = 0;
    long y = 0;

    const AreaId& area(AdminLevel level) const { return area_by_level.at(static_cast<std::size_t>(level)); }
};

struct DatasetMetadata {
    std::string survey_label;
    std::string indicator_label;
    std::optional<double> reference_national_estimate;
};

// Immutable, validated table of cluster records bound to an area graph.
class AnalysisDataset {
public:
    // Throws ValidationError naming the first offending record (1-based row).
    AnalysisDataset(std::vector<ClusterRecord> records, std::shared_ptr<const AreaGraph> graph,
                    DatasetMetadata metadata);

    const std::vector<ClusterRecord>& records() const { return records_; }
    const AreaGraph& graph() const { return *graph_; }
    const std::shared_ptr<const AreaGraph>& graph_ptr() const { return graph_; }
    const DatasetMetadata& metadata() const { return metadata_; }

    // Levels 0..max_level() are available for every record.
    AdminLevel max_level() const { return max_level_; }
    bool has_level(AdminLevel level) const { return level >= 0 && level <= max_level_; }
    std::vector<AdminLevel> admin_levels() const;

    // Record indices grouped by local area index at `level`.
    std::vector<std::vector<std::size_t>> records_by_area(AdminLevel level) const;

private:
    std::vector<ClusterRecord> records_;
    std::shared_ptr<const AreaGraph> graph_;
    DatasetMetadata metadata_;
    AdminLevel max_level_ = 0;
};

// Reads the cluster table: required columns cluster_id, stratum_id, admin1_id,
// weight, n, y; optional admin2_id, admin3_id.
AnalysisDataset load_dataset(std::istream& in, std::shared_ptr<const AreaGraph> graph, DatasetMetadata metadata);

void write_dataset_csv(std::ostream& out, const AnalysisDataset& ds);

struct AreaClusterCount {
    AreaId id;
    long n_clusters = 0;
    long n_trials = 0;
    long n_successes = 0;
};

// One entry per area of the graph at `level`, in graph order. Throws
// NotFoundError when the dataset does not carry that level.
std::vector<AreaClusterCount> cluster_counts(const AnalysisDataset& ds, AdminLevel level);

// Area-level covariates, standardized column-wise. values(i, k) refers to the
// i-th area of the level in graph order.
struct CovariateTable {
    AdminLevel level = 1;
    std::vector<AreaId> ids;
    std::vector<std::string> names;
    Eigen::MatrixXd values;
    std::vector<double> center;  // original = values * scale + center
    std::vector<double> scale;

    int column(const std::string& name) const;
};

CovariateTable load_covariates(std::istream& in, AdminLevel level, const AreaGraph& graph);

// Header "area_id,name" listing every area at `level`, for users to fill in.
void write_covariate_template(std::ostream& out, AdminLevel level, const AreaGraph& graph);

}  // namespace sae
