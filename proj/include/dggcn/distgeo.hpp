#ifndef DGGCN_DISTGEO_HPP
#define DGGCN_DISTGEO_HPP

// Distance-geometric representation of a 3D graph: bonded pairs carry the
// edge distance, pairs two bonds apart the angle distance (end-to-end length
// of an angle), pairs three bonds apart the dihedral distance. Each unordered
// pair is classified once, by its shortest-path hop count in the bond graph.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "chemio.hpp"
#include "error.hpp"
#include "tensor.hpp"

namespace dggcn {

enum class EdgeOrder : std::uint8_t { First = 1, Second = 2, Third = 3 };

inline int to_int(EdgeOrder o) noexcept { return static_cast<int>(o); }

struct GeoEdge {
    std::size_t src = 0; // message source j
    std::size_t dst = 0; // receiving node i
    EdgeOrder order = EdgeOrder::First;
    double distance = 0.0;
};

/// Unordered pair counts per order: U (edges), U^theta (angle edges), U^phi (dihedral edges).
struct EdgeCounts {
    std::size_t first = 0;
    std::size_t second = 0;
    std::size_t third = 0;

    std::size_t total() const noexcept { return first + second + third; }
    friend bool operator==(const EdgeCounts&, const EdgeCounts&) = default;
};

struct DistGeoGraph {
    std::string id;
    std::size_t num_nodes = 0;
    int max_order = 3;
    Tensor x;
    std::vector<GeoEdge> edges; // both directions of every pair
    EdgeCounts counts;
    std::optional<double> target;
};

inline double pair_distance(const Vec3& p, const Vec3& q) noexcept {
    const double dx = p[0] - q[0];
    const double dy = p[1] - q[1];
    const double dz = p[2] - q[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline void check_max_order(int max_order) {
    if (max_order < 1 || max_order > 3) {
        throw ConfigError("max_order must be 1, 2 or 3 (got " + std::to_string(max_order) + ")");
    }
}

using PairOrders = std::map<std::pair<std::size_t, std::size_t>, int>;

/// Shortest-path hop count for every unordered pair (i < j) within `max_order` bonds.
inline PairOrders khop_pairs(const std::vector<std::pair<std::size_t, std::size_t>>& bonds, std::size_t n,
                             int max_order) {
    check_max_order(max_order);
    std::vector<std::vector<std::size_t>> adj(n);
    for (auto [i, j] : bonds) {
        if (i >= n || j >= n) throw GraphError("bond index out of range");
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    PairOrders out;
    std::vector<int> depth(n);
    for (std::size_t s = 0; s < n; ++s) {
        std::fill(depth.begin(), depth.end(), -1);
        depth[s] = 0;
        std::queue<std::size_t> q;
        q.push(s);
        while (!q.empty()) {
            const std::size_t u = q.front();
            q.pop();
            if (depth[u] == max_order) continue;
            for (std::size_t v : adj[u]) {
                if (depth[v] >= 0) continue;
                depth[v] = depth[u] + 1;
                if (v > s) out.emplace(std::make_pair(s, v), depth[v]);
                q.push(v);
            }
        }
    }
    return out;
}

inline DistGeoGraph build_distgeo(const Graph3D& g, int max_order) {
    const std::size_t n = g.atoms.size();
    DistGeoGraph out;
    out.id = g.id;
    out.num_nodes = n;
    out.max_order = max_order;
    out.x = g.node_features;
    out.target = g.target;
    const PairOrders pairs = khop_pairs(g.bonds, n, max_order);
    out.edges.reserve(2 * pairs.size());
    for (const auto& [key, order] : pairs) {
        const auto [i, j] = key;
        const double d = pair_distance(g.atoms[i].position, g.atoms[j].position);
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw GraphError(g.id + ": atoms " + std::to_string(i) + " and " + std::to_string(j) +
                             " coincide (distance " + std::to_string(d) + ")");
        }
        const auto o = static_cast<EdgeOrder>(order);
        out.edges.push_back({j, i, o, d});
        out.edges.push_back({i, j, o, d});
        switch (o) {
        case EdgeOrder::First: ++out.counts.first; break;
        case EdgeOrder::Second: ++out.counts.second; break;
        case EdgeOrder::Third: ++out.counts.third; break;
        }
    }
    return out;
}

/// Edge list export used by `dggcn prepare --distgeo`.
inline nlohmann::json to_json(const DistGeoGraph& g) {
    nlohmann::json edges = nlohmann::json::array();
    for (const GeoEdge& e : g.edges) {
        edges.push_back({{"src", e.src}, {"dst", e.dst}, {"order", to_int(e.order)}, {"distance", e.distance}});
    }
    nlohmann::json j = {{"id", g.id},
                        {"num_nodes", g.num_nodes},
                        {"max_order", g.max_order},
                        {"counts", {{"edge", g.counts.first}, {"angle", g.counts.second}, {"dihedral", g.counts.third}}},
                        {"edges", edges}};
    j["target"] = g.target ? nlohmann::json(*g.target) : nlohmann::json(nullptr);
    return j;
}

} // namespace dggcn

#endif // DGGCN_DISTGEO_HPP
