#pragma once

#include "sae/common.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <istream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace sae {

struct Area {
    AreaId id;
    std::string name;
    AdminLevel level = 0;
    std::optional<AreaId> parent_id;
};

struct EdgeSpec {
    AdminLevel level = 0;
    AreaId a;
    AreaId b;
};

// A closed ring of (x, y) vertices; the closing vertex may or may not be repeated.
using Ring = std::vector<std::array<double, 2>>;

// One area in geometry mode. Polygons are flattened to their rings (outer and
// holes alike); only boundary points matter for adjacency.
struct AreaFeature {
    Area area;
    std::vector<Ring> rings;
};

// Per-level structure. Local indices (0..n-1) follow the order in which the
// areas of that level were supplied.
struct LevelStructure {
    AdminLevel level = 0;
    std::vector<AreaId> ids;
    std::vector<std::pair<int, int>> edges;  // local indices, a < b, sorted
    Eigen::SparseMatrix<double> icar;        // graph Laplacian Q
    std::vector<std::vector<int>> components;
    std::vector<int> singletons;
    // Present when at least one component has two or more areas.
    std::optional<double> scale_factor;
    // Nonzero eigenvalues of the generalized inverse of scale_factor * Q,
    // collected over non-singleton components (empty without structure).
    std::vector<double> scaled_covariance_eigenvalues;

    std::size_t size() const { return ids.size(); }
    bool has_structure() const { return scale_factor.has_value(); }
};

class AreaGraph {
public:
    // Explicit adjacency. Throws ValidationError on duplicate ids, unknown ids,
    // self-loops, mixed-level edges or a broken hierarchy.
    static AreaGraph from_edges(std::vector<Area> areas, const std::vector<EdgeSpec>& edges);

    // Adjacency from shared boundary points: two same-level areas are
    // neighbours when a vertex of one coincides with a vertex of, or lies on a
    // segment of, the other (distance <= epsilon).
    static AreaGraph from_geometry(const std::vector<AreaFeature>& features, double epsilon = 0.0);

    const std::vector<Area>& areas() const { return areas_; }
    const Area& area(const AreaId& id) const;
    bool contains(const AreaId& id) const { return index_.count(id) > 0; }
    AdminLevel max_level() const { return static_cast<AdminLevel>(levels_.size()) - 1; }
    const LevelStructure& level(AdminLevel level) const;
    const AreaId& root() const { return levels_.at(0).ids.at(0); }

    // Local index of `id` within its level.
    int local_index(const AreaId& id) const;

    // Ancestor of `id` at `level` (itself when the levels match).
    const AreaId& ancestor_at(const AreaId& id, AdminLevel level) const;

    // Areas at `child_level` whose ancestor at `level_of(parent)` is `parent`.
    std::vector<AreaId> descendants_at(const AreaId& parent, AdminLevel child_level) const;

private:
    AreaGraph() = default;
    void finalize(std::vector<EdgeSpec> edges);

    std::vector<Area> areas_;
    std::unordered_map<AreaId, std::size_t> index_;
    std::unordered_map<AreaId, int> local_;
    std::vector<LevelStructure> levels_;
};

// Standard connected components over local indices; singletons are the
// components of size one, listed in index order.
struct Components {
    std::vector<std::vector<int>> groups;
    std::vector<int> singletons;
};
Components connected_components(const AreaGraph& graph, AdminLevel level);
Components connected_components(int n, const std::vector<std::pair<int, int>>& edges);

// Geometric mean of the diagonal of the sum-to-zero generalized inverse of a
// Laplacian-like matrix, over all areas in non-singleton components. Throws
// std::domain_error when every component is a singleton.
double structure_scale(const Eigen::SparseMatrix<double>& laplacian,
                       const std::vector<std::vector<int>>& components);

// Scale factor of the ICAR structure at `level`.
double icar_scale(const AreaGraph& graph, AdminLevel level);

// Parsing. A GeoJSON FeatureCollection with properties id, name, level,
// parent_id; Polygon, MultiPolygon or null geometry.
std::vector<AreaFeature> read_geojson(std::istream& in);
std::vector<EdgeSpec> read_edge_list(std::istream& in);

}  // namespace sae
