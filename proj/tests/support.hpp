#ifndef DGGCN_TESTS_SUPPORT_HPP
#define DGGCN_TESTS_SUPPORT_HPP

// Reference implementations used as independent oracles, plus fixtures.
// Nothing here calls into the code it is used to check.

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <dggcn/dggcn.hpp>

namespace testsupport {

using dggcn::Graph3D;
using dggcn::Vec3;

/// All-pairs hop counts by Floyd-Warshall; unreachable pairs stay at a large value.
inline std::vector<std::vector<int>> hop_matrix(const std::vector<std::pair<std::size_t, std::size_t>>& bonds,
                                                std::size_t n) {
    constexpr int inf = 1 << 20;
    std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
    for (std::size_t i = 0; i < n; ++i) d[i][i] = 0;
    for (auto [i, j] : bonds) d[i][j] = d[j][i] = 1;
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
    return d;
}

/// Shortest hop count from `s` by expanding one frontier at a time over the edge list.
inline std::vector<int> bfs_levels(const std::vector<std::pair<std::size_t, std::size_t>>& bonds, std::size_t n,
                                   std::size_t s) {
    std::vector<int> level(n, -1);
    level[s] = 0;
    for (int depth = 0;; ++depth) {
        bool grew = false;
        for (auto [i, j] : bonds) {
            if (level[i] == depth && level[j] < 0) {
                level[j] = depth + 1;
                grew = true;
            }
            if (level[j] == depth && level[i] < 0) {
                level[i] = depth + 1;
                grew = true;
            }
        }
        if (!grew) break;
    }
    return level;
}

/// Random simple graph on `n` nodes (not necessarily connected).
inline std::vector<std::pair<std::size_t, std::size_t>> random_bonds(std::mt19937_64& rng, std::size_t n,
                                                                     double p) {
    std::bernoulli_distribution coin(p);
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (coin(rng)) out.emplace_back(i, j);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

/// Uniformly random rotation from a normalized quaternion.
inline std::array<std::array<double, 3>, 3> random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    double q[4];
    double norm = 0.0;
    for (double& v : q) {
        v = n(rng);
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : q) v /= norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
             {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
             {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

inline Graph3D rigid_motion(Graph3D g, std::mt19937_64& rng) {
    const auto r = random_rotation(rng);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    const Vec3 t{u(rng), u(rng), u(rng)};
    for (auto& a : g.atoms) {
        const Vec3 p = a.position;
        for (int i = 0; i < 3; ++i) a.position[i] = r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i];
    }
    return g;
}

/// Relabels atoms so that new index perm[i] holds old atom i.
inline Graph3D permute(const Graph3D& g, const std::vector<std::size_t>& perm) {
    Graph3D out = g;
    const std::size_t n = g.atoms.size();
    for (std::size_t i = 0; i < n; ++i) out.atoms[perm[i]] = g.atoms[i];
    for (auto& [i, j] : out.bonds) {
        i = perm[i];
        j = perm[j];
    }
    if (!g.node_features.empty()) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < g.node_features.cols(); ++c)
                out.node_features(perm[i], c) = g.node_features(i, c);
    }
    return out;
}

inline std::vector<std::size_t> random_permutation(std::mt19937_64& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

/// 0-1-2-3 chain on the x axis with unit spacing and featurized nodes.
inline Graph3D chain4() {
    Graph3D g;
    g.id = "chain4";
    for (int i = 0; i < 4; ++i) g.atoms.push_back({"C", 6, {static_cast<double>(i), 0.0, 0.0}});
    g.bonds = {{0, 1}, {1, 2}, {2, 3}};
    g.target = 1.0;
    return g;
}

/// Featurized random molecules in which every pair within three bonds is at least
/// `min_distance` apart, as in real conformers. Keeps power-law weights bounded.
inline std::vector<Graph3D> spaced_dataset(std::size_t count, std::uint64_t seed, double min_distance = 1.0) {
    std::mt19937_64 rng(seed);
    std::vector<Graph3D> out;
    while (out.size() < count) {
        Graph3D g = dggcn::random_molecule(rng, {}, "spaced_" + std::to_string(out.size()));
        const auto hops = hop_matrix(g.bonds, g.atoms.size());
        bool ok = true;
        for (std::size_t i = 0; i < g.atoms.size() && ok; ++i)
            for (std::size_t j = i + 1; j < g.atoms.size() && ok; ++j) {
                const auto& p = g.atoms[i].position;
                const auto& q = g.atoms[j].position;
                const double d2 = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) +
                                  (p[2] - q[2]) * (p[2] - q[2]);
                ok = hops[i][j] > 3 || d2 >= min_distance * min_distance;
            }
        if (ok) out.push_back(std::move(g));
    }
    const dggcn::FeatureScheme scheme = dggcn::FeatureScheme::fit(out);
    for (Graph3D& g : out) g = dggcn::featurize_nodes(std::move(g), scheme);
    return out;
}

inline const char* methane_sdf() {
    return "methane\n"
           "  handwritten\n"
           "\n"
           "  5  4  0  0  0  0  0  0  0  0999 V2000\n"
           "    0.0000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0\n"
           "    0.6291    0.6291    0.6291 H   0  0  0  0  0  0  0  0  0  0  0  0\n"
           "   -0.6291   -0.6291    0.6291 H   0  0  0  0  0  0  0  0  0  0  0  0\n"
           "   -0.6291    0.6291   -0.6291 H   0  0  0  0  0  0  0  0  0  0  0  0\n"
           "    0.6291   -0.6291   -0.6291 H   0  0  0  0  0  0  0  0  0  0  0  0\n"
           "  1  2  1  0\n"
           "  1  3  1  0\n"
           "  1  4  1  0\n"
           "  1  5  1  0\n"
           "M  END\n"
           ">  <target>\n"
           "-0.636\n"
           "\n"
           "$$$$\n";
}

// ---------------------------------------------------------------------------
// Loop-level reference of the whole network, written without the tape or Eigen.

using Mat = std::vector<std::vector<double>>;

inline double ref_ssp(double x) {
    return x > 0 ? x + std::log(0.5 + 0.5 * std::exp(-x)) : std::log(0.5 * std::exp(x) + 0.5);
}

inline Mat ref_dense(const Mat& x, const dggcn::Dense& d) {
    const std::size_t in = d.weight.rows(), out = d.weight.cols();
    Mat y(x.size(), std::vector<double>(out, 0.0));
    for (std::size_t r = 0; r < x.size(); ++r)
        for (std::size_t o = 0; o < out; ++o) {
            double s = d.bias.empty() ? 0.0 : d.bias[o];
            for (std::size_t i = 0; i < in; ++i) s += x[r][i] * d.weight(i, o);
            y[r][o] = s;
        }
    return y;
}

inline Mat ref_apply(Mat x, double (*f)(double)) {
    for (auto& row : x)
        for (double& v : row) v = f(v);
    return x;
}

/// Prediction for one graph, following the layer rule literally edge by edge.
inline double reference_forward(const dggcn::DistGeoGraph& g, const dggcn::ModelParams& p,
                                const dggcn::ModelConfig& cfg) {
    using dggcn::ModelKind;
    const std::size_t n = g.num_nodes;
    std::vector<const dggcn::GeoEdge*> edges;
    const int order = cfg.edge_order();
    for (const auto& e : g.edges)
        if (dggcn::to_int(e.order) <= order) edges.push_back(&e);
    std::vector<double> indeg(n, 0.0);
    for (const auto* e : edges) indeg[e->dst] += 1.0;

    Mat x(n, std::vector<double>(g.x.cols()));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < g.x.cols(); ++c) x[i][c] = g.x(i, c);
    x = ref_dense(x, p.embed);

    const std::size_t ng = cfg.num_gaussians;
    const double step = cfg.cutoff / static_cast<double>(ng - 1);
    const double gamma = cfg.gamma > 0 ? cfg.gamma : 1.0 / (2.0 * step * step);

    for (const auto& layer : p.layers) {
        const Mat h = ref_dense(x, layer.lin_in);
        Mat z(n, std::vector<double>(h.empty() ? 0 : h[0].size(), 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < z[i].size(); ++c) z[i][c] = h[i][c];
        for (const auto* e : edges) {
            double w = 1.0;
            if (cfg.kind == ModelKind::Geometric) w = std::pow(cfg.powerlaw_r0 / e->distance, cfg.powerlaw_n);
            if (cfg.kind == ModelKind::DgGcn) {
                w = e->distance > cfg.cutoff ? 0.0
                                             : 0.5 * (std::cos(std::numbers::pi * e->distance / cfg.cutoff) + 1.0);
            }
            std::vector<double> filt(z[0].size(), 1.0);
            if (cfg.kind == ModelKind::DgGcn) {
                const auto& net = layer.filters[cfg.per_order_filters ? dggcn::to_int(e->order) - 1 : 0];
                Mat rbf(1, std::vector<double>(ng));
                for (std::size_t k = 0; k < ng; ++k) {
                    const double mu = step * static_cast<double>(k);
                    rbf[0][k] = std::exp(-gamma * (e->distance - mu) * (e->distance - mu));
                }
                filt = ref_apply(ref_dense(ref_apply(ref_dense(rbf, net.hidden), ref_ssp), net.out), ref_ssp)[0];
            }
            for (std::size_t c = 0; c < filt.size(); ++c) z[e->dst][c] += w * h[e->src][c] * filt[c];
        }
        for (std::size_t i = 0; i < n; ++i)
            for (double& v : z[i]) v /= 1.0 + indeg[i];
        x = ref_apply(ref_dense(z, layer.lin_out), ref_ssp);
    }
    Mat pooled(1, std::vector<double>(x.empty() ? cfg.width : x[0].size(), 0.0));
    for (const auto& row : x)
        for (std::size_t c = 0; c < row.size(); ++c) pooled[0][c] += row[c];
    if (cfg.pooling == dggcn::Pooling::Mean && n > 0)
        for (double& v : pooled[0]) v /= static_cast<double>(n);
    return ref_dense(ref_apply(ref_dense(pooled, p.readout_hidden), ref_ssp), p.readout_out)[0][0];
}

} // namespace testsupport

#endif // DGGCN_TESTS_SUPPORT_HPP
