#include "sae/synthetic.hpp"

#include "sae/csv.hpp"
#include "sae/rng.hpp"

#include <json.hpp>

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <map>

namespace sae {

namespace {

struct Field {
    bool gradient = false;
    double low = 0.0;
    double high = 0.0;
};

Field parse_field(const std::string& spec) {
    Field f;
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = spec.find(':', start);
        parts.push_back(csv::trim(spec.substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) {
            break;
        }
        start = pos + 1;
    }
    auto prob = [&](const std::string& s) {
        const auto v = csv::parse_double(s);
        if (!v || *v < 0.0 || *v > 1.0) {
            throw ValidationError(fmt::format("prevalence field '{}': '{}' is not a probability", spec, s));
        }
        return *v;
    };
    if (parts[0] == "constant" && parts.size() == 2) {
        f.low = f.high = prob(parts[1]);
    } else if (parts[0] == "gradient" && parts.size() == 3) {
        f.gradient = true;
        f.low = prob(parts[1]);
        f.high = prob(parts[2]);
        if (f.low <= 0.0 || f.low >= 1.0 || f.high <= 0.0 || f.high >= 1.0) {
            throw ValidationError(fmt::format("prevalence field '{}': gradient ends must lie in (0, 1)", spec));
        }
    } else {
        throw ValidationError(fmt::format("unknown prevalence field '{}'", spec));
    }
    return f;
}

}  // namespace

SyntheticDesignConfig parse_synthetic_config(std::istream& in) {
    SyntheticDesignConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.resize(hash);
        }
        const auto t = csv::trim(line);
        if (t.empty()) {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ValidationError(fmt::format("config line {}: expected key = value", line_no), line_no);
        }
        const auto key = csv::trim(t.substr(0, eq));
        const auto value = csv::trim(t.substr(eq + 1));
        auto as_int = [&]() {
            const auto v = csv::parse_long(value);
            if (!v) {
                throw ValidationError(fmt::format("config line {}: '{}' must be an integer", line_no, key), line_no,
                                      key);
            }
            return static_cast<int>(*v);
        };
        auto as_real = [&]() {
            const auto v = csv::parse_double(value);
            if (!v) {
                throw ValidationError(fmt::format("config line {}: '{}' must be a number", line_no, key), line_no, key);
            }
            return *v;
        };
        if (key == "n_admin1") {
            cfg.n_admin1 = as_int();
        } else if (key == "admin2_per_admin1_side") {
            cfg.admin2_per_admin1_side = as_int();
        } else if (key == "strata_per_admin1") {
            cfg.strata_per_admin1 = as_int();
        } else if (key == "clusters_total") {
            cfg.clusters_total = as_int();
        } else if (key == "urban_clusters") {
            cfg.urban_clusters = as_int();
        } else if (key == "households_per_cluster") {
            cfg.households_per_cluster = as_int();
        } else if (key == "min_clusters_per_area") {
            cfg.min_clusters_per_area = as_int();
        } else if (key == "true_prevalence_field") {
            cfg.true_prevalence_field = value;
        } else if (key == "area_noise_sd") {
            cfg.area_noise_sd = as_real();
        } else if (key == "icc") {
            cfg.icc = as_real();
        } else if (key == "urban_area_share") {
            cfg.urban_area_share = as_real();
        } else if (key == "seed") {
            const auto v = csv::parse_long(value);
            if (!v || *v < 0) {
                throw ValidationError(fmt::format("config line {}: seed must be a nonnegative integer", line_no),
                                      line_no, key);
            }
            cfg.seed = static_cast<std::uint64_t>(*v);
        } else if (key == "survey_label") {
            cfg.survey_label = value;
        } else if (key == "indicator_label") {
            cfg.indicator_label = value;
        } else if (key == "reference_national_estimate") {
            cfg.reference_national_estimate = as_real();
        } else {
            throw ValidationError(fmt::format("config line {}: unknown key '{}'", line_no, key), line_no, key);
        }
    }
    return cfg;
}

void write_synthetic_config(std::ostream& out, const SyntheticDesignConfig& cfg) {
    out << "n_admin1 = " << cfg.n_admin1 << "\n"
        << "admin2_per_admin1_side = " << cfg.admin2_per_admin1_side << "\n"
        << "strata_per_admin1 = " << cfg.strata_per_admin1 << "\n"
        << "clusters_total = " << cfg.clusters_total << "\n"
        << "urban_clusters = " << cfg.urban_clusters << "\n"
        << "households_per_cluster = " << cfg.households_per_cluster << "\n"
        << "min_clusters_per_area = " << cfg.min_clusters_per_area << "\n"
        << "true_prevalence_field = " << cfg.true_prevalence_field << "\n"
        << "area_noise_sd = " << csv::format_real(cfg.area_noise_sd, 17) << "\n"
        << "icc = " << csv::format_real(cfg.icc, 17) << "\n"
        << "urban_area_share = " << csv::format_real(cfg.urban_area_share, 17) << "\n"
        << "seed = " << cfg.seed << "\n"
        << "survey_label = " << cfg.survey_label << "\n"
        << "indicator_label = " << cfg.indicator_label << "\n";
    if (cfg.reference_national_estimate) {
        out << "reference_national_estimate = " << csv::format_real(*cfg.reference_national_estimate, 17) << "\n";
    }
}

std::vector<AreaFeature> make_lattice_geography(int n_admin1, int side) {
    if (n_admin1 < 1 || side < 1) {
        throw std::invalid_argument("lattice geography needs n_admin1 >= 1 and side >= 1");
    }
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_admin1))));
    std::vector<AreaFeature> out;
    AreaFeature nat;
    nat.area = {"NAT", "National", 0, std::nullopt};
    out.push_back(nat);
    auto square = [](double x0, double y0, double w) {
        return Ring{{x0, y0}, {x0 + w, y0}, {x0 + w, y0 + w}, {x0, y0 + w}, {x0, y0}};
    };
    std::vector<AreaFeature> second;
    for (int j = 0; j < n_admin1; ++j) {
        const int r = j / cols;
        const int c = j % cols;
        AreaFeature reg;
        reg.area.id = fmt::format("R{:02d}", j + 1);
        reg.area.name = fmt::format("Region {}", j + 1);
        reg.area.level = 1;
        reg.area.parent_id = "NAT";
        reg.rings.push_back(square(c * side, r * side, side));
        out.push_back(reg);
        for (int a = 0; a < side; ++a) {
            for (int b = 0; b < side; ++b) {
                AreaFeature dist;
                dist.area.id = fmt::format("{}_{:02d}", reg.area.id, a * side + b + 1);
                dist.area.name = fmt::format("District {}-{}", j + 1, a * side + b + 1);
                dist.area.level = 2;
                dist.area.parent_id = reg.area.id;
                dist.rings.push_back(square(c * side + b, r * side + a, 1.0));
                second.push_back(dist);
            }
        }
    }
    out.insert(out.end(), second.begin(), second.end());
    return out;
}

void write_geojson(std::ostream& out, const std::vector<AreaFeature>& features) {
    nlohmann::json doc;
    doc["type"] = "FeatureCollection";
    doc["features"] = nlohmann::json::array();
    for (const auto& f : features) {
        nlohmann::json feat;
        feat["type"] = "Feature";
        feat["properties"] = {{"id", f.area.id},
                              {"name", f.area.name},
                              {"level", f.area.level},
                              {"parent_id", f.area.parent_id ? nlohmann::json(*f.area.parent_id) : nlohmann::json()}};
        if (f.rings.empty()) {
            feat["geometry"] = nullptr;
        } else {
            nlohmann::json rings = nlohmann::json::array();
            for (const auto& ring : f.rings) {
                nlohmann::json pts = nlohmann::json::array();
                for (const auto& p : ring) {
                    pts.push_back({p[0], p[1]});
                }
                rings.push_back(pts);
            }
            feat["geometry"] = {{"type", "Polygon"}, {"coordinates", rings}};
        }
        doc["features"].push_back(feat);
    }
    out << doc.dump() << "\n";
}

AnalysisDataset generate_synthetic(const SyntheticDesignConfig& cfg, std::shared_ptr<const AreaGraph> graph,
                                   SyntheticTruth* truth) {
    if (!graph) {
        throw ValidationError("synthetic design requires an area graph");
    }
    if (cfg.n_admin1 < 1 || cfg.clusters_total < 1 || cfg.households_per_cluster < 1 || cfg.min_clusters_per_area < 0) {
        throw ValidationError("synthetic config: counts must be positive");
    }
    if (cfg.strata_per_admin1 != 1 && cfg.strata_per_admin1 != 2) {
        throw ValidationError("synthetic config: strata_per_admin1 must be 1 or 2");
    }
    if (cfg.icc < 0.0 || cfg.icc >= 1.0) {
        throw ValidationError("synthetic config: icc must lie in [0, 1)");
    }
    if (graph->max_level() < 1 || static_cast<int>(graph->level(1).size()) < cfg.n_admin1) {
        throw ValidationError(fmt::format("synthetic config: graph has fewer than {} first-level areas", cfg.n_admin1));
    }
    const int urban_total = cfg.strata_per_admin1 == 2 ? cfg.urban_clusters : 0;
    if (urban_total < 0 || urban_total > cfg.clusters_total) {
        throw ValidationError("synthetic config: urban_clusters must lie in [0, clusters_total]");
    }
    const Field field = parse_field(cfg.true_prevalence_field);
    const AdminLevel fine = graph->max_level();
    Rng rng(cfg.seed);

    // Finest-level areas per region, and their urban/rural capability.
    struct Cell {
        AreaId id;
        AreaId region;
        bool urban = false;
        bool rural = false;
    };
    std::vector<Cell> cells;
    const auto& regions = graph->level(1).ids;
    for (int j = 0; j < cfg.n_admin1; ++j) {
        const auto members = graph->descendants_at(regions[j], fine);
        const int m = static_cast<int>(members.size());
        int n_urban = 0;
        if (cfg.strata_per_admin1 == 2 && m >= 2) {
            n_urban = std::clamp(static_cast<int>(std::lround(cfg.urban_area_share * m)), 1, m - 1);
        }
        for (int k = 0; k < m; ++k) {
            Cell c{members[k], regions[j], false, true};
            if (cfg.strata_per_admin1 == 2) {
                if (m == 1) {
                    c.urban = true;
                } else if (k < n_urban) {
                    c.urban = true;
                    c.rural = false;
                }
            }
            cells.push_back(c);
        }
    }
    if (cells.empty()) {
        throw ValidationError("synthetic config: no areas to sample");
    }

    // Allocate clusters: the configured minimum first, the rest uniformly at random.
    std::vector<int> n_urban(cells.size(), 0), n_rural(cells.size(), 0);
    auto allocate = [&](int budget, bool urban) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (urban ? cells[i].urban : cells[i].rural) {
                pool.push_back(i);
            }
        }
        if (budget == 0) {
            return;
        }
        if (pool.empty()) {
            throw ValidationError("synthetic config: no areas available for a stratum with clusters");
        }
        auto& target = urban ? n_urban : n_rural;
        // Mixed (single-area) regions take their minimum from the rural stratum.
        for (const auto i : pool) {
            const bool mixed = cells[i].urban && cells[i].rural;
            if (urban && mixed) {
                continue;
            }
            const int give = std::min(budget, cfg.min_clusters_per_area);
            target[i] += give;
            budget -= give;
        }
        while (budget-- > 0) {
            ++target[pool[rng.below(pool.size())]];
        }
    };
    allocate(urban_total, true);
    allocate(cfg.clusters_total - urban_total, false);

    // Area-level truth on the finest level.
    const auto& fine_ids = graph->level(fine).ids;
    // Gradient runs along graph order of the finest level (row-major on the lattice).
    std::map<AreaId, double> prevalence;
    for (std::size_t i = 0; i < fine_ids.size(); ++i) {
        double p = field.low;
        if (field.gradient) {
            const double t = fine_ids.size() > 1 ? static_cast<double>(i) / static_cast<double>(fine_ids.size() - 1) : 0.5;
            const double eta = logit(field.low) + (logit(field.high) - logit(field.low)) * t +
                               cfg.area_noise_sd * rng.normal();
            p = expit(eta);
        }
        prevalence[fine_ids[i]] = p;
    }

    std::map<std::string, double> stratum_weight;
    std::vector<ClusterRecord> records;
    records.reserve(static_cast<std::size_t>(cfg.clusters_total));
    int counter = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        for (int urban = 1; urban >= 0; --urban) {
            const int count = urban ? n_urban[i] : n_rural[i];
            for (int k = 0; k < count; ++k) {
                ClusterRecord r;
                r.cluster_id = fmt::format("C{:05d}", ++counter);
                r.stratum_id = cfg.strata_per_admin1 == 2
                                   ? fmt::format("{}_{}", cells[i].region, urban ? "urban" : "rural")
                                   : cells[i].region;
                auto [it, fresh] = stratum_weight.emplace(r.stratum_id, 0.0);
                if (fresh) {
                    it->second = std::exp(0.3 * rng.normal()) * (urban ? 600.0 : 1100.0);
                }
                r.weight = it->second * std::exp(0.1 * rng.normal());
                r.area_by_level.resize(static_cast<std::size_t>(fine) + 1);
                for (AdminLevel l = 0; l <= fine; ++l) {
                    r.area_by_level[l] = graph->ancestor_at(cells[i].id, l);
                }
                r.n = cfg.households_per_cluster;
                const double p = prevalence[cells[i].id];
                double pc = p;
                if (cfg.icc > 0.0 && p > 0.0 && p < 1.0) {
                    const double tau = (1.0 - cfg.icc) / cfg.icc;
                    pc = rng.beta(p * tau, (1.0 - p) * tau);
                }
                r.y = pc <= 0.0 ? 0 : (pc >= 1.0 ? r.n : rng.binomial(r.n, pc));
                records.push_back(std::move(r));
            }
        }
    }
    if (truth) {
        truth->level = fine;
        truth->ids = fine_ids;
        truth->prevalence.clear();
        for (const auto& id : fine_ids) {
            truth->prevalence.push_back(prevalence[id]);
        }
    }
    return AnalysisDataset(std::move(records), std::move(graph),
                           {cfg.survey_label, cfg.indicator_label, cfg.reference_national_estimate});
}

}  // namespace sae
