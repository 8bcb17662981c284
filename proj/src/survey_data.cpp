#include "sae/survey_data.hpp"

#include "sae/csv.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <map>
#include <unordered_set>

namespace sae {

AnalysisDataset::AnalysisDataset(std::vector<ClusterRecord> records, std::shared_ptr<const AreaGraph> graph,
                                 DatasetMetadata metadata)
    : records_(std::move(records)), graph_(std::move(graph)), metadata_(std::move(metadata)) {
    if (!graph_) {
        throw ValidationError("dataset requires an area graph");
    }
    if (metadata_.reference_national_estimate) {
        const double r = *metadata_.reference_national_estimate;
        if (!(r >= 0.0 && r <= 1.0)) {
            throw ValidationError("reference national estimate must lie in [0, 1]");
        }
    }
    std::unordered_set<std::string> seen;
    std::size_t levels = 0;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        const std::size_t row = i + 1;
        if (r.cluster_id.empty()) {
            throw ValidationError(fmt::format("row {}: empty cluster_id", row), row, "cluster_id");
        }
        if (!seen.insert(r.cluster_id).second) {
            throw ValidationError(fmt::format("row {}: duplicate cluster_id '{}'", row, r.cluster_id), row,
                                  "cluster_id");
        }
        if (r.stratum_id.empty()) {
            throw ValidationError(fmt::format("row {}: empty stratum_id", row), row, "stratum_id");
        }
        if (!(r.weight > 0.0) || !std::isfinite(r.weight)) {
            throw ValidationError(fmt::format("row {}: weight must be positive", row), row, "weight");
        }
        if (r.n < 0 || r.y < 0) {
            throw ValidationError(fmt::format("row {}: counts must be nonnegative", row), row, r.n < 0 ? "n" : "y");
        }
        if (r.y > r.n) {
            throw ValidationError(fmt::format("row {}: successes exceed trials (y={}, n={})", row, r.y, r.n), row,
                                  "y");
        }
        if (r.area_by_level.empty()) {
            throw ValidationError(fmt::format("row {}: missing level-0 area", row), row);
        }
        if (i == 0) {
            levels = r.area_by_level.size();
        } else if (r.area_by_level.size() != levels) {
            throw ValidationError(fmt::format("row {}: inconsistent admin levels across rows", row), row);
        }
        for (std::size_t l = 0; l < r.area_by_level.size(); ++l) {
            const auto& id = r.area_by_level[l];
            const std::string field = l == 0 ? "admin0" : fmt::format("admin{}_id", l);
            if (!graph_->contains(id)) {
                throw ValidationError(fmt::format("row {}: unknown area '{}' in {}", row, id, field), row, field);
            }
            const auto& area = graph_->area(id);
            if (area.level != static_cast<AdminLevel>(l)) {
                throw ValidationError(
                    fmt::format("row {}: unknown area '{}' at level {} (graph has it at level {})", row, id, l,
                                area.level),
                    row, field);
            }
            if (l > 0 && area.parent_id.value_or("") != r.area_by_level[l - 1]) {
                throw ValidationError(fmt::format("row {}: broken nesting, area '{}' is not inside '{}'", row, id,
                                                  r.area_by_level[l - 1]),
                                      row, field);
            }
        }
    }
    max_level_ = levels == 0 ? 0 : static_cast<AdminLevel>(levels) - 1;
}

std::vector<AdminLevel> AnalysisDataset::admin_levels() const {
    std::vector<AdminLevel> out;
    for (AdminLevel l = 0; l <= max_level_; ++l) {
        out.push_back(l);
    }
    return out;
}

std::vector<std::vector<std::size_t>> AnalysisDataset::records_by_area(AdminLevel level) const {
    if (!has_level(level)) {
        throw NotFoundError(fmt::format("admin level {} is not available in the dataset", level));
    }
    const auto& ls = graph_->level(level);
    std::vector<std::vector<std::size_t>> out(ls.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        out[graph_->local_index(records_[i].area(level))].push_back(i);
    }
    return out;
}

AnalysisDataset load_dataset(std::istream& in, std::shared_ptr<const AreaGraph> graph, DatasetMetadata metadata) {
    if (!graph) {
        throw ValidationError("dataset requires an area graph");
    }
    std::vector<csv::Row> rows;
    try {
        rows = csv::read(in);
    } catch (const std::runtime_error& e) {
        throw ValidationError(std::string("dataset: ") + e.what());
    }
    if (rows.empty()) {
        throw ValidationError("dataset: missing header row");
    }
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].cells.size(); ++i) {
        const auto name = csv::trim(rows[0].cells[i]);
        if (!col.emplace(name, i).second) {
            throw ValidationError(fmt::format("dataset: duplicate column '{}'", name));
        }
    }
    for (const char* req : {"cluster_id", "stratum_id", "admin1_id", "weight", "n", "y"}) {
        if (!col.count(req)) {
            throw ValidationError(fmt::format("dataset: missing required column '{}'", req), 0, req);
        }
    }
    if (col.count("admin3_id") && !col.count("admin2_id")) {
        throw ValidationError("dataset: admin3_id requires admin2_id");
    }
    const std::size_t n_cols = rows[0].cells.size();
    std::vector<std::string> level_cols = {"admin1_id"};
    for (const char* opt : {"admin2_id", "admin3_id"}) {
        if (col.count(opt)) {
            level_cols.push_back(opt);
        }
    }

    std::vector<ClusterRecord> records;
    records.reserve(rows.size() - 1);
    const AreaId& root = graph->root();
    for (std::size_t k = 1; k < rows.size(); ++k) {
        const auto& cells = rows[k].cells;
        const std::size_t row = k;
        if (cells.size() != n_cols) {
            throw ValidationError(
                fmt::format("row {} (line {}): malformed row, expected {} fields but found {}", row, rows[k].line,
                            n_cols, cells.size()),
                row);
        }
        auto cell = [&](const std::string& name) { return csv::trim(cells[col.at(name)]); };
        ClusterRecord r;
        r.cluster_id = cell("cluster_id");
        r.stratum_id = cell("stratum_id");
        const auto weight = csv::parse_double(cells[col.at("weight")]);
        if (!weight) {
            throw ValidationError(fmt::format("row {}: malformed row, weight is not a number", row), row, "weight");
        }
        r.weight = *weight;
        const auto n = csv::parse_long(cells[col.at("n")]);
        const auto y = csv::parse_long(cells[col.at("y")]);
        if (!n) {
            throw ValidationError(fmt::format("row {}: malformed row, n is not an integer", row), row, "n");
        }
        if (!y) {
            throw ValidationError(fmt::format("row {}: malformed row, y is not an integer", row), row, "y");
        }
        r.n = *n;
        r.y = *y;
        r.area_by_level.push_back(root);
        for (const auto& lc : level_cols) {
            const auto id = cell(lc);
            if (id.empty()) {
                throw ValidationError(fmt::format("row {}: malformed row, empty {}", row, lc), row, lc);
            }
            r.area_by_level.push_back(id);
        }
        records.push_back(std::move(r));
    }
    return AnalysisDataset(std::move(records), std::move(graph), std::move(metadata));
}

void write_dataset_csv(std::ostream& out, const AnalysisDataset& ds) {
    std::vector<std::string> header = {"cluster_id", "stratum_id", "admin1_id"};
    for (AdminLevel l = 2; l <= ds.max_level(); ++l) {
        header.push_back(fmt::format("admin{}_id", l));
    }
    for (const char* c : {"weight", "n", "y"}) {
        header.emplace_back(c);
    }
    out << csv::join(header) << "\n";
    for (const auto& r : ds.records()) {
        std::vector<std::string> cells = {r.cluster_id, r.stratum_id};
        for (AdminLevel l = 1; l <= ds.max_level(); ++l) {
            cells.push_back(r.area(l));
        }
        cells.push_back(csv::format_real(r.weight, 17));
        cells.push_back(std::to_string(r.n));
        cells.push_back(std::to_string(r.y));
        out << csv::join(cells) << "\n";
    }
}

std::vector<AreaClusterCount> cluster_counts(const AnalysisDataset& ds, AdminLevel level) {
    const auto groups = ds.records_by_area(level);
    const auto& ls = ds.graph().level(level);
    std::vector<AreaClusterCount> out(ls.size());
    for (std::size_t i = 0; i < ls.size(); ++i) {
        out[i].id = ls.ids[i];
        for (const auto idx : groups[i]) {
            const auto& r = ds.records()[idx];
            ++out[i].n_clusters;
            out[i].n_trials += r.n;
            out[i].n_successes += r.y;
        }
    }
    return out;
}

int CovariateTable::column(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw NotFoundError(fmt::format("unknown covariate '{}'", name));
    }
    return static_cast<int>(it - names.begin());
}

CovariateTable load_covariates(std::istream& in, AdminLevel level, const AreaGraph& graph) {
    const auto& ls = graph.level(level);
    std::vector<csv::Row> rows;
    try {
        rows = csv::read(in);
    } catch (const std::runtime_error& e) {
        throw ValidationError(std::string("covariates: ") + e.what());
    }
    if (rows.empty() || rows[0].cells.empty() || csv::trim(rows[0].cells[0]) != "area_id") {
        throw ValidationError("covariates: header must start with 'area_id'");
    }
    CovariateTable t;
    t.level = level;
    t.ids = ls.ids;
    // An optional "name" column (as written by the template) is carried but ignored.
    std::vector<std::size_t> value_cols;
    std::unordered_set<std::string> names;
    for (std::size_t c = 1; c < rows[0].cells.size(); ++c) {
        const auto name = csv::trim(rows[0].cells[c]);
        if (name == "name") {
            continue;
        }
        if (name.empty() || !names.insert(name).second) {
            throw ValidationError(fmt::format("covariates: duplicate or empty column name '{}'", name), 0, name);
        }
        t.names.push_back(name);
        value_cols.push_back(c);
    }
    if (t.names.empty()) {
        throw ValidationError("covariates: no covariate columns");
    }
    const auto n = static_cast<Eigen::Index>(ls.size());
    const auto k = static_cast<Eigen::Index>(t.names.size());
    Eigen::MatrixXd raw(n, k);
    std::vector<bool> filled(ls.size(), false);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& cells = rows[r].cells;
        if (cells.size() != rows[0].cells.size()) {
            throw ValidationError(fmt::format("covariates row {}: expected {} fields", r, rows[0].cells.size()), r);
        }
        const auto id = csv::trim(cells[0]);
        if (!graph.contains(id) || graph.area(id).level != level) {
            throw ValidationError(fmt::format("covariates row {}: unknown area '{}' at level {}", r, id, level), r,
                                  "area_id");
        }
        const int li = graph.local_index(id);
        if (filled[li]) {
            throw ValidationError(fmt::format("covariates row {}: duplicate area '{}'", r, id), r, "area_id");
        }
        filled[li] = true;
        for (Eigen::Index j = 0; j < k; ++j) {
            const auto v = csv::parse_double(cells[value_cols[j]]);
            if (!v || !std::isfinite(*v)) {
                throw ValidationError(fmt::format("covariates row {}: non-numeric value in column '{}'", r,
                                                  t.names[j]),
                                      r, t.names[j]);
            }
            raw(li, j) = *v;
        }
    }
    for (std::size_t i = 0; i < ls.size(); ++i) {
        if (!filled[i]) {
            throw ValidationError(fmt::format("covariates: missing area '{}'", ls.ids[i]), 0, ls.ids[i]);
        }
    }
    t.values.resize(n, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double mean = raw.col(j).mean();
        const double var = (raw.col(j).array() - mean).square().sum() / static_cast<double>(n > 1 ? n - 1 : 1);
        const double sd = std::sqrt(var);
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
            throw ValidationError(
                fmt::format("covariates: column '{}' has zero variance and is not identifiable", t.names[j]), 0,
                t.names[j]);
        }
        t.center.push_back(mean);
        t.scale.push_back(sd);
        t.values.col(j) = (raw.col(j).array() - mean) / sd;
    }
    return t;
}

void write_covariate_template(std::ostream& out, AdminLevel level, const AreaGraph& graph) {
    out << "area_id,name\n";
    for (const auto& id : graph.level(level).ids) {
        out << csv::join({id, graph.area(id).name}) << "\n";
    }
}

}  // namespace sae
