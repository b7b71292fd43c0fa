#ifndef DGGCN_MODEL_HPP
#define DGGCN_MODEL_HPP

// Graph convolution networks over a DistGeoGraph.
//
// All three model kinds share one stack:
//
//   embed -> K x conv -> pool (mean|sum) -> dense/ssp/dense -> scalar
//
// and differ only in how a conv layer weighs a message from j to i:
//
//   standard   bonded neighbours only, weight 1, no filter
//   geometric  edges up to max_order, fixed weight (R0/d)^n, no filter
//   dggcn      edges up to max_order, cosine cutoff weight times a filter
//              vector generated from the distance by a small dense network
//
// A conv layer computes
//
//   h   = x W_in
//   z_i = s_i h_i + sum_j a_ij (f(d_ij) * h_j)
//   x'  = ssp(z W_out + b_out)
//
// with s_i = 1/c_i, a_ij = w_ij / c_i and c_i = 1 + in-degree of i, or the
// symmetric variant s_i = 1/(1+deg_i), a_ij = w_ij / sqrt((1+deg_i)(1+deg_j)).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "distgeo.hpp"
#include "error.hpp"
#include "tensor.hpp"

namespace dggcn {

enum class ModelKind { Standard, Geometric, DgGcn };
enum class Pooling { Mean, Sum };
enum class Normalization { SelfDegree, Symmetric };

inline std::string to_string(ModelKind k) {
    switch (k) {
    case ModelKind::Standard: return "standard";
    case ModelKind::Geometric: return "geometric";
    case ModelKind::DgGcn: return "dggcn";
    }
    return "?";
}
inline std::string to_string(Pooling p) { return p == Pooling::Mean ? "mean" : "sum"; }
inline std::string to_string(Normalization n) { return n == Normalization::SelfDegree ? "self" : "symmetric"; }

inline ModelKind parse_model_kind(std::string_view s) {
    if (s == "standard") return ModelKind::Standard;
    if (s == "geometric") return ModelKind::Geometric;
    if (s == "dggcn") return ModelKind::DgGcn;
    throw ConfigError("unknown model '" + std::string(s) + "' (expected standard|geometric|dggcn)");
}
inline Pooling parse_pooling(std::string_view s) {
    if (s == "mean") return Pooling::Mean;
    if (s == "sum") return Pooling::Sum;
    throw ConfigError("unknown pooling '" + std::string(s) + "' (expected mean|sum)");
}
inline Normalization parse_normalization(std::string_view s) {
    if (s == "self") return Normalization::SelfDegree;
    if (s == "symmetric") return Normalization::Symmetric;
    throw ConfigError("unknown normalization '" + std::string(s) + "' (expected self|symmetric)");
}

// ---------------------------------------------------------------------------
// Scalar building blocks

/// Cosine cutoff 0.5 (cos(pi d / d_cutoff) + 1) for d <= d_cutoff, 0 beyond.
inline double cutoff_weight(double d, double d_cutoff) {
    if (!(d_cutoff > 0.0)) throw ConfigError("cutoff distance must be positive");
    if (d >= d_cutoff) return 0.0;
    return 0.5 * (std::cos(std::numbers::pi * d / d_cutoff) + 1.0);
}

/// Power-law edge weight (R0 / d)^n.
inline double powerlaw_weight(double d, double r0, double n) {
    if (!(d > 0.0)) throw GraphError("power-law weight needs a positive distance");
    return std::pow(r0 / d, n);
}

/// Gaussians exp(-gamma (d - mu_k)^2) with centres on a uniform grid over [0, cutoff].
struct GaussianBasis {
    std::vector<double> centers;
    double cutoff = 10.0;
    double gamma = 0.0;

    std::size_t size() const noexcept { return centers.size(); }

    /// `gamma <= 0` selects 1 / (2 spacing^2).
    static GaussianBasis uniform(std::size_t num_gaussians, double cutoff, double gamma = 0.0) {
        if (num_gaussians < 2) throw ConfigError("basis needs at least two gaussians");
        if (!(cutoff > 0.0) || !std::isfinite(cutoff)) throw ConfigError("basis cutoff must be positive and finite");
        GaussianBasis b;
        b.cutoff = cutoff;
        b.centers.resize(num_gaussians);
        const double step = cutoff / static_cast<double>(num_gaussians - 1);
        for (std::size_t k = 0; k < num_gaussians; ++k) b.centers[k] = step * static_cast<double>(k);
        b.centers.back() = cutoff;
        b.gamma = gamma > 0.0 ? gamma : 0.5 / (step * step);
        return b;
    }
};

inline std::vector<double> rbf_expand(double d, const GaussianBasis& basis) {
    std::vector<double> out(basis.size());
    for (std::size_t k = 0; k < basis.size(); ++k) {
        const double t = d - basis.centers[k];
        out[k] = std::exp(-basis.gamma * t * t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Configuration and parameters

struct ModelConfig {
    ModelKind kind = ModelKind::DgGcn;
    int max_order = 3;
    Pooling pooling = Pooling::Mean;
    std::size_t layers = 3;
    std::size_t width = 64;
    std::size_t num_gaussians = 50;
    double cutoff = 10.0;
    double gamma = 0.0; // 0 = derived from the centre spacing
    double powerlaw_r0 = 1.39;
    double powerlaw_n = 4.55;
    Normalization norm = Normalization::SelfDegree;
    bool per_order_filters = false;

    /// Standard GC always runs on bonds only.
    int edge_order() const noexcept { return kind == ModelKind::Standard ? 1 : max_order; }
    std::size_t readout_width() const noexcept { return std::max<std::size_t>(1, width / 2); }
    GaussianBasis basis() const { return GaussianBasis::uniform(num_gaussians, cutoff, gamma); }

    void validate() const {
        check_max_order(max_order);
        if (layers < 1) throw ConfigError("model needs at least one conv layer");
        if (width < 1) throw ConfigError("model width must be positive");
        if (!(cutoff > 0.0)) throw ConfigError("cutoff distance must be positive");
        if (kind == ModelKind::DgGcn && num_gaussians < 2) throw ConfigError("basis needs at least two gaussians");
    }
};

struct Dense {
    Tensor weight; // in x out
    Tensor bias;   // 1 x out, empty when the layer has no bias
};

/// Filter-generating network: rbf(d) -> dense -> ssp -> dense -> ssp.
struct FilterNet {
    Dense hidden;
    Dense out;
};

struct ConvLayer {
    Dense lin_in;                   // no bias
    std::vector<FilterNet> filters; // empty (no filter), 1 (shared) or 3 (one per order)
    Dense lin_out;
};

struct ModelParams {
    Dense embed;
    std::vector<ConvLayer> layers;
    Dense readout_hidden;
    Dense readout_out;

private:
    template <class Self>
    static auto collect(Self& self) {
        using T = std::conditional_t<std::is_const_v<Self>, const Tensor, Tensor>;
        using D = std::conditional_t<std::is_const_v<Self>, const Dense, Dense>;
        std::vector<std::pair<std::string, T*>> out;
        auto push = [&out](const std::string& prefix, D& d) {
            if (!d.weight.empty()) out.emplace_back(prefix + ".weight", &d.weight);
            if (!d.bias.empty()) out.emplace_back(prefix + ".bias", &d.bias);
        };
        push("embed", self.embed);
        for (std::size_t l = 0; l < self.layers.size(); ++l) {
            auto& layer = self.layers[l];
            const std::string p = "layers." + std::to_string(l);
            push(p + ".lin_in", layer.lin_in);
            for (std::size_t f = 0; f < layer.filters.size(); ++f) {
                const std::string q = p + ".filter." + std::to_string(f);
                push(q + ".hidden", layer.filters[f].hidden);
                push(q + ".out", layer.filters[f].out);
            }
            push(p + ".lin_out", layer.lin_out);
        }
        push("readout.hidden", self.readout_hidden);
        push("readout.out", self.readout_out);
        return out;
    }

public:
    /// Every non-empty tensor with a stable dotted name, in a fixed order.
    std::vector<std::pair<std::string, Tensor*>> named() { return collect(*this); }
    std::vector<std::pair<std::string, const Tensor*>> named() const { return collect(*this); }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for (auto& entry : named()) out.push_back(entry.second);
        return out;
    }

    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        for (auto& entry : named()) out.push_back(entry.second);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Tensor* t : tensors()) n += t->size();
        return n;
    }

};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits; stable across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline Dense glorot_dense(std::size_t in, std::size_t out, bool bias, std::mt19937_64& rng) {
    Dense d;
    d.weight = Tensor(in, out);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : d.weight.data()) w = (2.0 * unit_uniform(rng) - 1.0) * limit;
    if (bias) d.bias = Tensor(1, out);
    return d;
}

} // namespace detail

/// Glorot-uniform weights, zero biases.
inline ModelParams init_params(const ModelConfig& cfg, std::size_t in_dim, std::uint64_t seed) {
    cfg.validate();
    if (in_dim == 0) throw ConfigError("node feature dimension must be positive");
    std::mt19937_64 rng(seed);
    const std::size_t f = cfg.width;
    ModelParams p;
    p.embed = detail::glorot_dense(in_dim, f, true, rng);
    const std::size_t nfilters =
        cfg.kind != ModelKind::DgGcn ? 0 : (cfg.per_order_filters ? static_cast<std::size_t>(cfg.max_order) : 1);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        ConvLayer layer;
        layer.lin_in = detail::glorot_dense(f, f, false, rng);
        for (std::size_t k = 0; k < nfilters; ++k) {
            FilterNet fn;
            fn.hidden = detail::glorot_dense(cfg.num_gaussians, f, true, rng);
            fn.out = detail::glorot_dense(f, f, true, rng);
            layer.filters.push_back(std::move(fn));
        }
        layer.lin_out = detail::glorot_dense(f, f, true, rng);
        p.layers.push_back(std::move(layer));
    }
    p.readout_hidden = detail::glorot_dense(f, cfg.readout_width(), true, rng);
    p.readout_out = detail::glorot_dense(cfg.readout_width(), 1, true, rng);
    return p;
}

// ---------------------------------------------------------------------------
// Batching

/// Disjoint union of several graphs. Edges are sorted by order (stable), so the
/// edges of each order form one contiguous range.
struct GraphBatch {
    std::size_t num_graphs = 0;
    std::size_t num_nodes = 0;
    Tensor x;
    std::vector<std::size_t> src;
    std::vector<std::size_t> dst;
    std::vector<double> distance;
    std::array<std::size_t, 4> order_offset{}; // edges of order o are [order_offset[o-1], order_offset[o])
    std::vector<std::size_t> node_graph;
    std::vector<std::size_t> graph_sizes;
    std::vector<double> targets; // empty if any graph lacks a target

    std::size_t num_edges() const noexcept { return src.size(); }
};

/// Batches graphs keeping only edges of order <= `max_order`.
inline GraphBatch make_batch(std::span<const DistGeoGraph* const> graphs, int max_order) {
    check_max_order(max_order);
    GraphBatch b;
    b.num_graphs = graphs.size();
    std::size_t dim = 0;
    bool have_targets = true;
    for (const DistGeoGraph* g : graphs) {
        if (g->x.rows() != g->num_nodes) {
            throw GraphError(g->id + ": node features missing or inconsistent with node count");
        }
        if (b.num_nodes > 0 && g->num_nodes > 0 && g->x.cols() != dim) {
            throw ShapeError("make_batch: feature width " + std::to_string(g->x.cols()) + " != " + std::to_string(dim));
        }
        if (g->num_nodes > 0) dim = g->x.cols();
        if (max_order > g->max_order) {
            throw ConfigError(g->id + ": graph built with max_order " + std::to_string(g->max_order) +
                              " cannot serve max_order " + std::to_string(max_order));
        }
        b.num_nodes += g->num_nodes;
        have_targets = have_targets && g->target.has_value();
    }
    b.x = Tensor(b.num_nodes, dim);
    b.node_graph.reserve(b.num_nodes);
    std::size_t offset = 0;
    std::size_t gi = 0;
    for (const DistGeoGraph* g : graphs) {
        const auto src = g->x.data();
        std::copy(src.begin(), src.end(), b.x.data().begin() + static_cast<std::ptrdiff_t>(offset * dim));
        for (std::size_t i = 0; i < g->num_nodes; ++i) b.node_graph.push_back(gi);
        b.graph_sizes.push_back(g->num_nodes);
        if (have_targets) b.targets.push_back(*g->target);
        offset += g->num_nodes;
        ++gi;
    }
    b.order_offset[0] = 0;
    for (int o = 1; o <= 3; ++o) {
        if (o <= max_order) {
            offset = 0;
            for (const DistGeoGraph* g : graphs) {
                for (const GeoEdge& e : g->edges) {
                    if (to_int(e.order) != o) continue;
                    if (e.src >= g->num_nodes || e.dst >= g->num_nodes) {
                        throw GraphError(g->id + ": edge index out of range");
                    }
                    b.src.push_back(offset + e.src);
                    b.dst.push_back(offset + e.dst);
                    b.distance.push_back(e.distance);
                }
                offset += g->num_nodes;
            }
        }
        b.order_offset[static_cast<std::size_t>(o)] = b.src.size();
    }
    return b;
}

inline GraphBatch make_batch(const DistGeoGraph& g, int max_order) {
    const DistGeoGraph* one[] = {&g};
    return make_batch(std::span<const DistGeoGraph* const>(one, 1), max_order);
}

// ---------------------------------------------------------------------------
// Forward pass

/// Test hooks for the reduction identities.
struct ForwardOptions {
    bool unit_filter = false;   // filter vector fixed to ones (no FGNet)
    bool linear_layers = false; // conv layers skip the output ssp
};

/// Per-batch constants consumed by every conv layer.
struct EdgeCoefficients {
    Tensor self;  // N x 1
    Tensor edge;  // E x 1
    Tensor rbf;   // E x G, only for filtered models
};

inline EdgeCoefficients edge_coefficients(const GraphBatch& b, const ModelConfig& cfg, const ForwardOptions& opt) {
    const std::size_t n = b.num_nodes;
    const std::size_t e = b.num_edges();
    std::vector<double> deg(n, 0.0);
    for (std::size_t k = 0; k < e; ++k) deg[b.dst[k]] += 1.0;

    EdgeCoefficients c;
    c.self = Tensor(n, 1);
    c.edge = Tensor(e, 1);
    for (std::size_t i = 0; i < n; ++i) c.self[i] = 1.0 / (1.0 + deg[i]);
    for (std::size_t k = 0; k < e; ++k) {
        const double d = b.distance[k];
        double w = 1.0;
        switch (cfg.kind) {
        case ModelKind::Standard: w = 1.0; break;
        case ModelKind::Geometric: w = powerlaw_weight(d, cfg.powerlaw_r0, cfg.powerlaw_n); break;
        case ModelKind::DgGcn: w = cutoff_weight(d, cfg.cutoff); break;
        }
        const std::size_t i = b.dst[k];
        const std::size_t j = b.src[k];
        const double norm = cfg.norm == Normalization::SelfDegree ? 1.0 / (1.0 + deg[i])
                                                                   : 1.0 / std::sqrt((1.0 + deg[i]) * (1.0 + deg[j]));
        c.edge[k] = w * norm;
    }
    if (cfg.kind == ModelKind::DgGcn && !opt.unit_filter) {
        const GaussianBasis basis = cfg.basis();
        const auto g = static_cast<Eigen::Index>(basis.size());
        const Eigen::Map<const Eigen::ArrayXd> centers(basis.centers.data(), g);
        c.rbf = Tensor::uninitialized(e, basis.size());
        for (std::size_t k = 0; k < e; ++k) {
            Eigen::Map<Eigen::ArrayXd> row(c.rbf.row(k).data(), g);
            row = (-basis.gamma * (b.distance[k] - centers).square()).exp();
        }
    }
    return c;
}

inline Var apply_dense(Tape& tape, const Var& x, const Dense& d) {
    const Var w = tape.parameter(d.weight);
    if (d.bias.empty()) return matmul(x, w);
    const Var b = tape.parameter(d.bias);
    return dense(x, w, &b);
}

/// Filter vectors for a block of rbf rows: ssp(ssp(rbf W1 + b1) W2 + b2).
inline Var filter_forward(Tape& tape, const Var& rbf, const FilterNet& net) {
    return ssp(apply_dense(tape, ssp(apply_dense(tape, rbf, net.hidden)), net.out));
}

namespace detail {

inline Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
    Tensor out = Tensor::uninitialized(end - begin, t.cols());
    std::copy(t.data().begin() + static_cast<std::ptrdiff_t>(begin * t.cols()),
              t.data().begin() + static_cast<std::ptrdiff_t>(end * t.cols()), out.data().begin());
    return out;
}

} // namespace detail

/// One convolution layer on a batch; see the header comment for the update rule.
inline Var conv_layer(Tape& tape, const Var& x, const ConvLayer& layer, const GraphBatch& b,
                      const EdgeCoefficients& coef, const ForwardOptions& opt) {
    const Var h = apply_dense(tape, x, layer.lin_in);
    Var msg = gather_rows(h, b.src);
    // rbf is only expanded for filtered models, so baselines ignore any filter weights.
    if (!layer.filters.empty() && !coef.rbf.empty()) {
        Var filt;
        if (layer.filters.size() == 1) {
            filt = filter_forward(tape, tape.constant(coef.rbf), layer.filters.front());
        } else {
            std::vector<Var> parts;
            for (std::size_t o = 0; o < layer.filters.size(); ++o) {
                const std::size_t lo = b.order_offset[o], hi = b.order_offset[o + 1];
                if (hi == lo) continue;
                parts.push_back(filter_forward(tape, tape.constant(detail::slice_rows(coef.rbf, lo, hi)), layer.filters[o]));
            }
            filt = parts.empty() ? tape.constant(Tensor(0, h.cols())) : concat_rows(parts);
        }
        msg = mul(msg, filt);
    }
    msg = mul(msg, tape.constant(coef.edge));
    const Var agg = segment_sum(msg, b.dst, b.num_nodes);
    const Var z = add(mul(h, tape.constant(coef.self)), agg);
    const Var y = apply_dense(tape, z, layer.lin_out);
    return opt.linear_layers ? y : ssp(y);
}

/// Node states after the embedding and all conv layers (N x width).
inline Var node_states(Tape& tape, const ModelParams& p, const ModelConfig& cfg, const GraphBatch& b,
                       const ForwardOptions& opt = {}) {
    const EdgeCoefficients coef = edge_coefficients(b, cfg, opt);
    Var x = apply_dense(tape, tape.constant(b.x), p.embed);
    for (const ConvLayer& layer : p.layers) x = conv_layer(tape, x, layer, b, coef, opt);
    return x;
}

/// Pools node states per graph (B x width).
inline Var pool(Tape& tape, const Var& nodes, const GraphBatch& b, Pooling pooling) {
    const Var pooled = segment_sum(nodes, b.node_graph, b.num_graphs);
    if (pooling == Pooling::Sum) return pooled;
    Tensor inv(b.num_graphs, 1);
    for (std::size_t g = 0; g < b.num_graphs; ++g) {
        inv[g] = b.graph_sizes[g] > 0 ? 1.0 / static_cast<double>(b.graph_sizes[g]) : 0.0;
    }
    return mul(pooled, tape.constant(std::move(inv)));
}

inline Var readout(Tape& tape, const Var& pooled, const ModelParams& p) {
    return apply_dense(tape, ssp(apply_dense(tape, pooled, p.readout_hidden)), p.readout_out);
}

/// Batched prediction (B x 1) in the model's (normalized) target units.
inline Var forward(Tape& tape, const ModelParams& p, const ModelConfig& cfg, const GraphBatch& b,
                   const ForwardOptions& opt = {}) {
    if (b.x.cols() != p.embed.weight.rows()) {
        throw ShapeError("node features " + b.x.shape_string() + " do not match embedding " +
                         p.embed.weight.shape_string());
    }
    return readout(tape, pool(tape, node_states(tape, p, cfg, b, opt), b, cfg.pooling), p);
}

inline std::vector<double> predict(const ModelParams& p, const ModelConfig& cfg, const GraphBatch& b,
                                   const ForwardOptions& opt = {}) {
    Tape tape;
    const Var out = forward(tape, p, cfg, b, opt);
    return out.value().to_vector();
}

/// Applies one conv layer to node states `x` of a single graph whose edges are `edges`.
inline Tensor cfconv_forward(const Tensor& x, std::span<const GeoEdge> edges, const ConvLayer& layer,
                             const ModelConfig& cfg, const ForwardOptions& opt = {}) {
    DistGeoGraph g;
    g.num_nodes = x.rows();
    g.x = x;
    g.edges.assign(edges.begin(), edges.end());
    g.max_order = 3;
    for (const GeoEdge& e : edges) {
        if (e.src >= x.rows() || e.dst >= x.rows()) {
            throw GraphError("cfconv_forward: edge (" + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                             ") out of range for " + std::to_string(x.rows()) + " nodes");
        }
    }
    const GraphBatch b = make_batch(g, 3);
    Tape tape;
    const EdgeCoefficients coef = edge_coefficients(b, cfg, opt);
    return conv_layer(tape, tape.constant(b.x), layer, b, coef, opt).value();
}

namespace detail {

inline double predict_one(const DistGeoGraph& g, const ModelParams& p, const ModelConfig& cfg,
                          const ForwardOptions& opt) {
    return predict(p, cfg, make_batch(g, cfg.edge_order()), opt).front();
}

} // namespace detail

/// DG-GCN prediction for one graph; uses every edge up to cfg.max_order.
inline double dggcn_forward(const DistGeoGraph& g, const ModelParams& p, ModelConfig cfg,
                            const ForwardOptions& opt = {}) {
    cfg.kind = ModelKind::DgGcn;
    return detail::predict_one(g, p, cfg, opt);
}

/// Standard GC prediction: bonds only, unit weights, no filter.
inline double standard_gc_forward(const DistGeoGraph& g, const ModelParams& p, ModelConfig cfg,
                                  const ForwardOptions& opt = {}) {
    cfg.kind = ModelKind::Standard;
    return detail::predict_one(g, p, cfg, opt);
}

/// Geometric GC prediction with fixed power-law weights (r0 / d)^n.
inline double geometric_gc_forward(const DistGeoGraph& g, const ModelParams& p, ModelConfig cfg, double r0, double n,
                                   const ForwardOptions& opt = {}) {
    cfg.kind = ModelKind::Geometric;
    cfg.powerlaw_r0 = r0;
    cfg.powerlaw_n = n;
    return detail::predict_one(g, p, cfg, opt);
}

} // namespace dggcn

#endif // DGGCN_MODEL_HPP
