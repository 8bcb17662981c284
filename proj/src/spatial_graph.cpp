#include "sae/spatial_graph.hpp"

#include "sae/csv.hpp"

#include <json.hpp>

#include <fmt/core.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

namespace sae {

namespace {

struct BBox {
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    bool empty() const { return x0 > x1; }
    bool overlaps(const BBox& o, double eps) const {
        return !(o.x0 > x1 + eps || o.x1 < x0 - eps || o.y0 > y1 + eps || o.y1 < y0 - eps);
    }
};

BBox bbox_of(const std::vector<Ring>& rings) {
    BBox b;
    for (const auto& ring : rings) {
        for (const auto& p : ring) {
            b.x0 = std::min(b.x0, p[0]);
            b.y0 = std::min(b.y0, p[1]);
            b.x1 = std::max(b.x1, p[0]);
            b.y1 = std::max(b.y1, p[1]);
        }
    }
    return b;
}

bool point_on_segment(const std::array<double, 2>& p, const std::array<double, 2>& a,
                      const std::array<double, 2>& b, double eps) {
    const double dx = b[0] - a[0];
    const double dy = b[1] - a[1];
    const double len2 = dx * dx + dy * dy;
    if (len2 == 0.0) {
        return std::hypot(p[0] - a[0], p[1] - a[1]) <= eps;
    }
    if (eps == 0.0) {
        const double cross = (p[0] - a[0]) * dy - (p[1] - a[1]) * dx;
        if (cross != 0.0) {
            return false;
        }
        return std::min(a[0], b[0]) <= p[0] && p[0] <= std::max(a[0], b[0]) &&
               std::min(a[1], b[1]) <= p[1] && p[1] <= std::max(a[1], b[1]);
    }
    double t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p[0] - (a[0] + t * dx), p[1] - (a[1] + t * dy)) <= eps;
}

// True when some vertex of `a` touches the boundary of `b`.
bool vertices_touch(const std::vector<Ring>& a, const std::vector<Ring>& b, double eps) {
    for (const auto& ring_a : a) {
        for (const auto& p : ring_a) {
            for (const auto& ring_b : b) {
                const std::size_t m = ring_b.size();
                for (std::size_t k = 0; k < m; ++k) {
                    if (point_on_segment(p, ring_b[k], ring_b[(k + 1) % m], eps)) {
                        return true;
                    }
                }
            }
        }
    }
    return false;
}

Ring parse_ring(const nlohmann::json& coords) {
    Ring ring;
    for (const auto& p : coords) {
        if (!p.is_array() || p.size() < 2) {
            throw ValidationError("geometry: malformed coordinate");
        }
        ring.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return ring;
}

}  // namespace

Components connected_components(int n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (const auto& [a, b] : edges) {
        const int ra = find(a);
        const int rb = find(b);
        if (ra != rb) {
            parent[std::max(ra, rb)] = std::min(ra, rb);
        }
    }
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) {
        groups[find(i)].push_back(i);
    }
    Components out;
    for (auto& [root, members] : groups) {
        if (members.size() == 1) {
            out.singletons.push_back(members.front());
        }
        out.groups.push_back(std::move(members));
    }
    std::sort(out.singletons.begin(), out.singletons.end());
    return out;
}

Components connected_components(const AreaGraph& graph, AdminLevel level) {
    const auto& ls = graph.level(level);
    return connected_components(static_cast<int>(ls.size()), ls.edges);
}

double structure_scale(const Eigen::SparseMatrix<double>& laplacian,
                       const std::vector<std::vector<int>>& components) {
    const Eigen::MatrixXd dense(laplacian);
    double log_sum = 0.0;
    std::size_t count = 0;
    for (const auto& comp : components) {
        const auto m = static_cast<Eigen::Index>(comp.size());
        if (m < 2) {
            continue;
        }
        Eigen::MatrixXd block(m, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = 0; j < m; ++j) {
                block(i, j) = dense(comp[i], comp[j]);
            }
        }
        // For a connected Laplacian L, (L + J/m)^-1 - J/m is the generalized
        // inverse with rows summing to zero.
        const double inv_m = 1.0 / static_cast<double>(m);
        block.array() += inv_m;
        const Eigen::LLT<Eigen::MatrixXd> llt(block);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("structure_scale: component matrix is not positive definite");
        }
        const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
        for (Eigen::Index i = 0; i < m; ++i) {
            log_sum += std::log(inv(i, i) - inv_m);
            ++count;
        }
    }
    if (count == 0) {
        throw std::domain_error("ICAR scaling is undefined: every component is a singleton");
    }
    return std::exp(log_sum / static_cast<double>(count));
}

double icar_scale(const AreaGraph& graph, AdminLevel level) {
    const auto& ls = graph.level(level);
    if (!ls.scale_factor) {
        throw std::domain_error(
            fmt::format("ICAR scaling is undefined at level {}: every component is a singleton", level));
    }
    return *ls.scale_factor;
}

AreaGraph AreaGraph::from_edges(std::vector<Area> areas, const std::vector<EdgeSpec>& edges) {
    AreaGraph g;
    g.areas_ = std::move(areas);
    g.finalize(edges);
    return g;
}

AreaGraph AreaGraph::from_geometry(const std::vector<AreaFeature>& features, double epsilon) {
    std::vector<Area> areas;
    areas.reserve(features.size());
    for (const auto& f : features) {
        areas.push_back(f.area);
    }
    std::vector<BBox> boxes;
    boxes.reserve(features.size());
    for (const auto& f : features) {
        boxes.push_back(bbox_of(f.rings));
    }
    std::vector<EdgeSpec> edges;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (boxes[i].empty()) {
            continue;
        }
        for (std::size_t j = i + 1; j < features.size(); ++j) {
            if (features[i].area.level != features[j].area.level || boxes[j].empty() ||
                !boxes[i].overlaps(boxes[j], epsilon)) {
                continue;
            }
            if (vertices_touch(features[i].rings, features[j].rings, epsilon) ||
                vertices_touch(features[j].rings, features[i].rings, epsilon)) {
                edges.push_back({features[i].area.level, features[i].area.id, features[j].area.id});
            }
        }
    }
    return from_edges(std::move(areas), edges);
}

void AreaGraph::finalize(std::vector<EdgeSpec> edges) {
    for (std::size_t i = 0; i < areas_.size(); ++i) {
        const auto& a = areas_[i];
        if (a.id.empty()) {
            throw ValidationError("area with empty id");
        }
        if (a.level < 0) {
            throw ValidationError(fmt::format("area '{}' has negative level", a.id));
        }
        if (!index_.emplace(a.id, i).second) {
            throw ValidationError(fmt::format("duplicate area id '{}'", a.id));
        }
    }
    AdminLevel max_level = -1;
    for (const auto& a : areas_) {
        max_level = std::max(max_level, a.level);
    }
    if (max_level < 0) {
        throw ValidationError("area graph is empty");
    }
    levels_.resize(static_cast<std::size_t>(max_level) + 1);
    for (AdminLevel l = 0; l <= max_level; ++l) {
        levels_[l].level = l;
    }
    for (const auto& a : areas_) {
        auto& ls = levels_[a.level];
        local_[a.id] = static_cast<int>(ls.ids.size());
        ls.ids.push_back(a.id);
    }
    for (AdminLevel l = 0; l <= max_level; ++l) {
        if (levels_[l].ids.empty()) {
            throw ValidationError(fmt::format("no areas at level {} (levels must be contiguous)", l));
        }
    }
    if (levels_[0].ids.size() != 1) {
        throw ValidationError("exactly one level-0 (national) area is required");
    }
    for (const auto& a : areas_) {
        if (a.level == 0) {
            if (a.parent_id && !a.parent_id->empty()) {
                throw ValidationError(fmt::format("level-0 area '{}' must not have a parent", a.id));
            }
            continue;
        }
        if (!a.parent_id || a.parent_id->empty()) {
            throw ValidationError(fmt::format("area '{}' at level {} has no parent", a.id, a.level));
        }
        const auto it = index_.find(*a.parent_id);
        if (it == index_.end()) {
            throw ValidationError(fmt::format("area '{}' has unknown parent '{}'", a.id, *a.parent_id));
        }
        if (areas_[it->second].level != a.level - 1) {
            throw ValidationError(
                fmt::format("area '{}' (level {}) has parent '{}' at level {}", a.id, a.level,
                            *a.parent_id, areas_[it->second].level));
        }
    }

    std::vector<std::set<std::pair<int, int>>> edge_sets(levels_.size());
    for (const auto& e : edges) {
        const auto ia = index_.find(e.a);
        const auto ib = index_.find(e.b);
        if (ia == index_.end() || ib == index_.end()) {
            throw ValidationError(fmt::format("edge references unknown area '{}'",
                                              ia == index_.end() ? e.a : e.b));
        }
        if (e.a == e.b) {
            throw ValidationError(fmt::format("self-loop edge on area '{}'", e.a));
        }
        const auto la = areas_[ia->second].level;
        const auto lb = areas_[ib->second].level;
        if (la != lb || la != e.level) {
            throw ValidationError(fmt::format("edge {}-{} mixes levels (edge level {}, areas {} and {})",
                                              e.a, e.b, e.level, la, lb));
        }
        int a = local_.at(e.a);
        int b = local_.at(e.b);
        if (a > b) {
            std::swap(a, b);
        }
        edge_sets[la].insert({a, b});
    }

    for (auto& ls : levels_) {
        ls.edges.assign(edge_sets[ls.level].begin(), edge_sets[ls.level].end());
        const auto n = static_cast<Eigen::Index>(ls.size());
        std::vector<Eigen::Triplet<double>> trips;
        std::vector<double> degree(n, 0.0);
        for (const auto& [a, b] : ls.edges) {
            trips.emplace_back(a, b, -1.0);
            trips.emplace_back(b, a, -1.0);
            degree[a] += 1.0;
            degree[b] += 1.0;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            trips.emplace_back(i, i, degree[i]);
        }
        ls.icar.resize(n, n);
        ls.icar.setFromTriplets(trips.begin(), trips.end());
        auto comps = connected_components(static_cast<int>(n), ls.edges);
        ls.components = std::move(comps.groups);
        ls.singletons = std::move(comps.singletons);
        if (static_cast<Eigen::Index>(ls.singletons.size()) == n) {
            continue;
        }
        const double scale = structure_scale(ls.icar, ls.components);
        ls.scale_factor = scale;
        const Eigen::MatrixXd dense(ls.icar);
        for (const auto& comp : ls.components) {
            const auto m = static_cast<Eigen::Index>(comp.size());
            if (m < 2) {
                continue;
            }
            Eigen::MatrixXd block(m, m);
            for (Eigen::Index i = 0; i < m; ++i) {
                for (Eigen::Index j = 0; j < m; ++j) {
                    block(i, j) = dense(comp[i], comp[j]) * scale;
                }
            }
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block, Eigen::EigenvaluesOnly);
            // Ascending; the first eigenvalue is the component's null direction.
            for (Eigen::Index k = 1; k < m; ++k) {
                ls.scaled_covariance_eigenvalues.push_back(1.0 / eig.eigenvalues()(k));
            }
        }
    }
}

const Area& AreaGraph::area(const AreaId& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) {
        throw NotFoundError(fmt::format("unknown area '{}'", id));
    }
    return areas_[it->second];
}

const LevelStructure& AreaGraph::level(AdminLevel level) const {
    if (level < 0 || level >= static_cast<AdminLevel>(levels_.size())) {
        throw NotFoundError(fmt::format("admin level {} is not present in the area graph", level));
    }
    return levels_[level];
}

int AreaGraph::local_index(const AreaId& id) const {
    const auto it = local_.find(id);
    if (it == local_.end()) {
        throw NotFoundError(fmt::format("unknown area '{}'", id));
    }
    return it->second;
}

const AreaId& AreaGraph::ancestor_at(const AreaId& id, AdminLevel level) const {
    const Area* a = &area(id);
    if (level > a->level || level < 0) {
        throw std::invalid_argument(
            fmt::format("area '{}' (level {}) has no ancestor at level {}", id, a->level, level));
    }
    while (a->level > level) {
        a = &area(*a->parent_id);
    }
    return a->id;
}

std::vector<AreaId> AreaGraph::descendants_at(const AreaId& parent, AdminLevel child_level) const {
    const AdminLevel pl = area(parent).level;
    std::vector<AreaId> out;
    if (child_level < pl) {
        return out;
    }
    for (const auto& id : level(child_level).ids) {
        if (ancestor_at(id, pl) == parent) {
            out.push_back(id);
        }
    }
    return out;
}

std::vector<AreaFeature> read_geojson(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("geometry: invalid JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
        throw ValidationError("geometry: expected a FeatureCollection");
    }
    std::vector<AreaFeature> out;
    std::size_t k = 0;
    for (const auto& f : doc["features"]) {
        ++k;
        const auto& props = f.value("properties", nlohmann::json::object());
        AreaFeature feat;
        auto str_prop = [&](const char* key) -> std::string {
            if (!props.contains(key) || props[key].is_null()) {
                return {};
            }
            const auto& v = props[key];
            return v.is_string() ? v.get<std::string>() : v.dump();
        };
        feat.area.id = str_prop("id");
        if (feat.area.id.empty()) {
            throw ValidationError(fmt::format("geometry: feature {} has no id", k), k, "id");
        }
        feat.area.name = str_prop("name");
        if (!props.contains("level") || !props["level"].is_number_integer()) {
            throw ValidationError(fmt::format("geometry: feature '{}' has no integer level", feat.area.id),
                                  k, "level");
        }
        feat.area.level = props["level"].get<int>();
        const std::string parent = str_prop("parent_id");
        if (!parent.empty()) {
            feat.area.parent_id = parent;
        }
        if (f.contains("geometry") && !f["geometry"].is_null()) {
            const auto& geom = f["geometry"];
            const std::string type = geom.value("type", "");
            const auto& coords = geom.at("coordinates");
            if (type == "Polygon") {
                for (const auto& ring : coords) {
                    feat.rings.push_back(parse_ring(ring));
                }
            } else if (type == "MultiPolygon") {
                for (const auto& poly : coords) {
                    for (const auto& ring : poly) {
                        feat.rings.push_back(parse_ring(ring));
                    }
                }
            } else {
                throw ValidationError(
                    fmt::format("geometry: feature '{}' has unsupported type '{}'", feat.area.id, type), k);
            }
        }
        out.push_back(std::move(feat));
    }
    return out;
}

std::vector<EdgeSpec> read_edge_list(std::istream& in) {
    std::vector<EdgeSpec> edges;
    std::size_t row_no = 0;
    for (auto& row : csv::read(in)) {
        ++row_no;
        if (!row.cells.empty() && csv::trim(row.cells[0]).rfind('#', 0) == 0) {
            continue;
        }
        if (row_no == 1 && csv::trim(row.cells[0]) == "level") {
            continue;
        }
        if (row.cells.size() != 3) {
            throw ValidationError(fmt::format("edge list line {}: expected 'level, id_a, id_b'", row.line),
                                  row.line);
        }
        const auto level = csv::parse_long(row.cells[0]);
        if (!level) {
            throw ValidationError(fmt::format("edge list line {}: level is not an integer", row.line),
                                  row.line, "level");
        }
        edges.push_back({static_cast<AdminLevel>(*level), csv::trim(row.cells[1]), csv::trim(row.cells[2])});
    }
    return edges;
}

}  // namespace sae
