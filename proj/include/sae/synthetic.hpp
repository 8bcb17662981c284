#pragma once

#include "sae/spatial_graph.hpp"
#include "sae/survey_data.hpp"

#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace sae {

// Defaults mirror a DHS-style national design: 37 first-level regions
// stratified urban/rural, 1400 clusters (580 urban), 30 households each.
struct SyntheticDesignConfig {
    int n_admin1 = 37;
    int admin2_per_admin1_side = 2;  // lattice geography: k x k second-level areas per region
    int strata_per_admin1 = 2;       // 2 = urban/rural, 1 = single stratum
    int clusters_total = 1400;
    int urban_clusters = 580;
    int households_per_cluster = 30;
    int min_clusters_per_area = 1;
    // "constant:P" or "gradient:SOUTH:NORTH" (logit-linear along the y axis).
    std::string true_prevalence_field = "gradient:0.15:0.60";
    double area_noise_sd = 0.25;  // logit-scale area noise for gradient fields
    double icc = 0.05;            // within-cluster correlation of the generating beta-binomial
    double urban_area_share = 0.4;
    std::uint64_t seed = 2018;
    std::string survey_label = "Synthetic stratified two-stage survey";
    std::string indicator_label = "synthetic binary indicator";
    std::optional<double> reference_national_estimate;
};

// key = value lines; '#' starts a comment. Unknown keys are rejected.
SyntheticDesignConfig parse_synthetic_config(std::istream& in);
void write_synthetic_config(std::ostream& out, const SyntheticDesignConfig& cfg);

// Square-lattice geography: a national area, n_admin1 square regions laid out
// row-major, each split into side x side second-level squares.
std::vector<AreaFeature> make_lattice_geography(int n_admin1, int side);

void write_geojson(std::ostream& out, const std::vector<AreaFeature>& features);

struct SyntheticTruth {
    AdminLevel level = 0;
    std::vector<AreaId> ids;
    std::vector<double> prevalence;
};

// Deterministic in cfg.seed. Clusters are placed in the finest level of the
// graph; second-level areas are wholly urban or rural, so strata are
// region x {urban, rural}.
AnalysisDataset generate_synthetic(const SyntheticDesignConfig& cfg, std::shared_ptr<const AreaGraph> graph,
                                   SyntheticTruth* truth = nullptr);

}  // namespace sae
