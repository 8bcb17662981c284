#pragma once

#include "sae/synthetic.hpp"
#include "sae/workflow.hpp"

#include <set>
#include <sstream>
#include <string>

namespace sae::test {

// Four regions of 2 x 2 districts with every district sampled.
inline SyntheticDesignConfig small_design(std::uint64_t seed = 21) {
    SyntheticDesignConfig cfg;
    cfg.n_admin1 = 4;
    cfg.admin2_per_admin1_side = 2;
    cfg.clusters_total = 96;
    cfg.urban_clusters = 40;
    cfg.households_per_cluster = 25;
    cfg.min_clusters_per_area = 3;
    cfg.seed = seed;
    cfg.survey_label = "Fixture survey";
    cfg.indicator_label = "fixture indicator";
    return cfg;
}

// Sources for `cfg`, with every cluster of the listed districts removed.
inline DatasetSources synthetic_sources(const SyntheticDesignConfig& cfg, const std::set<std::string>& drop = {}) {
    const auto features = make_lattice_geography(cfg.n_admin1, cfg.admin2_per_admin1_side);
    auto graph = std::make_shared<const AreaGraph>(AreaGraph::from_geometry(features));
    const auto ds = generate_synthetic(cfg, graph);
    std::ostringstream csv, geo;
    write_dataset_csv(csv, ds);
    write_geojson(geo, features);
    std::istringstream lines(csv.str());
    std::string line, kept;
    bool header = true;
    while (std::getline(lines, line)) {
        bool skip = false;
        if (!header) {
            for (const auto& d : drop) {
                skip = skip || line.find("," + d + ",") != std::string::npos;
            }
        }
        header = false;
        if (!skip) {
            kept += line + "\n";
        }
    }
    DatasetSources s;
    s.dataset_csv = kept;
    s.geometry = geo.str();
    s.survey_label = cfg.survey_label;
    s.indicator_label = cfg.indicator_label;
    s.reference_estimate = cfg.reference_national_estimate;
    return s;
}

// Five of sixteen districts without clusters: 31% sparse at level 2.
inline std::set<std::string> sparse_districts() {
    return {"R01_01", "R01_04", "R02_02", "R03_03", "R04_01"};
}

}  // namespace sae::test
