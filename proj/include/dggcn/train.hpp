#ifndef DGGCN_TRAIN_HPP
#define DGGCN_TRAIN_HPP

// Training, evaluation, checkpoints and result tables.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "adam.hpp"
#include "autodiff.hpp"
#include "chemio.hpp"
#include "config.hpp"
#include "distgeo.hpp"
#include "error.hpp"
#include "model.hpp"

namespace dggcn {

// ---------------------------------------------------------------------------
// Metrics helpers

inline double mse(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw ShapeError("mse: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(target.size()) +
                         " targets");
    }
    if (pred.empty()) throw ShapeError("mse of empty vectors");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

inline double rmse(std::span<const double> pred, std::span<const double> target) {
    return std::sqrt(mse(pred, target));
}

/// Differentiable mean squared error of a B x 1 prediction against constant targets.
inline Var mse_loss(const Var& pred, std::span<const double> target) {
    if (target.empty()) throw ShapeError("mse_loss of empty vectors");
    if (pred.value().size() != target.size()) {
        throw ShapeError("mse_loss: prediction " + pred.value().shape_string() + " vs " +
                         std::to_string(target.size()) + " targets");
    }
    const Var t = pred.tape()->constant(Tensor(pred.rows(), pred.cols(), std::vector<double>(target.begin(), target.end())));
    return mean(square(sub(pred, t)));
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw ShapeError("median of an empty list");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Standardization fitted on training targets.
struct TargetScaler {
    double mean = 0.0;
    double stddev = 1.0;

    static TargetScaler fit(std::span<const double> values, bool enabled) {
        TargetScaler s;
        if (!enabled || values.empty()) return s;
        double m = 0.0;
        for (double v : values) m += v;
        m /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - m) * (v - m);
        var /= static_cast<double>(values.size());
        s.mean = m;
        s.stddev = var > 0.0 ? std::sqrt(var) : 1.0;
        return s;
    }

    double normalize(double y) const noexcept { return (y - mean) / stddev; }
    double denormalize(double z) const noexcept { return z * stddev + mean; }
};

// ---------------------------------------------------------------------------
// Data preparation

struct PreparedData {
    FeatureScheme scheme;
    TargetScaler scaler;
    std::vector<DistGeoGraph> train;
    std::vector<DistGeoGraph> val;
    std::vector<DistGeoGraph> test;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<DistGeoGraph> to_distgeo(const std::vector<Graph3D>& graphs, const FeatureScheme& scheme,
                                            int max_order, std::vector<std::string>& warnings) {
    std::vector<DistGeoGraph> out;
    out.reserve(graphs.size());
    for (const Graph3D& g : graphs) {
        if (!g.target) throw ConfigError("molecule '" + g.id + "' has no target");
        out.push_back(build_distgeo(featurize_nodes(g, scheme, &warnings), max_order));
    }
    return out;
}

} // namespace detail

/// Featurizes and converts a split. The vocabulary and target scaler are fitted on the
/// training partition unless given explicitly (as when evaluating a checkpoint).
inline PreparedData prepare_split(const DatasetSplit& split, const RunConfig& cfg,
                                  const std::optional<FeatureScheme>& scheme = std::nullopt,
                                  const std::optional<TargetScaler>& scaler = std::nullopt) {
    PreparedData p;
    p.scheme = scheme ? *scheme : FeatureScheme::fit(split.train);
    const int order = cfg.model.edge_order();
    p.train = detail::to_distgeo(split.train, p.scheme, order, p.warnings);
    p.val = detail::to_distgeo(split.val, p.scheme, order, p.warnings);
    p.test = detail::to_distgeo(split.test, p.scheme, order, p.warnings);
    if (scaler) {
        p.scaler = *scaler;
    } else {
        std::vector<double> y;
        for (const DistGeoGraph& g : p.train) y.push_back(*g.target);
        p.scaler = TargetScaler::fit(y, cfg.normalize_targets);
    }
    return p;
}

inline SplitIndices resolve_split(std::size_t n, const RunConfig& cfg) {
    if (!cfg.split_file.empty()) {
        std::ifstream in(cfg.split_file);
        if (!in) throw ConfigError("cannot open split file '" + cfg.split_file + "'");
        return split_indices_from_json(nlohmann::json::parse(in), n);
    }
    SplitSizes sizes = cfg.split;
    if (sizes.train + sizes.val + sizes.test == 0) {
        // 80/10/10 when nothing is configured.
        sizes.val = n / 10;
        sizes.test = n / 10;
        sizes.train = n - sizes.val - sizes.test;
    }
    return split_indices(n, sizes, cfg.split_seed);
}

inline PreparedData prepare_data(const std::vector<Graph3D>& molecules, const RunConfig& cfg) {
    return prepare_split(apply_split(molecules, resolve_split(molecules.size(), cfg)), cfg);
}

// ---------------------------------------------------------------------------
// Training

struct Metrics {
    double rmse = 0.0;       // test RMSE of the selected model, original units
    double val_rmse = 0.0;   // validation RMSE of the selected model
    double train_rmse = 0.0; // training RMSE of the selected model
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::vector<double> train_loss; // per epoch, mean batch MSE in normalized units
    std::vector<double> val_loss;   // per epoch, validation MSE in normalized units
    double seconds = 0.0;
    std::vector<double> test_predictions;
    std::vector<double> test_targets;
};

struct TrainResult {
    ModelParams params;
    Metrics metrics;
};

using EpochCallback = std::function<void(std::size_t epoch, double train_loss, double val_rmse)>;

/// Predictions in original target units.
inline std::vector<double> predict_all(const ModelParams& params, const ModelConfig& cfg,
                                       const std::vector<DistGeoGraph>& graphs, const TargetScaler& scaler,
                                       std::size_t chunk = 256) {
    std::vector<double> out;
    out.reserve(graphs.size());
    std::vector<const DistGeoGraph*> ptrs;
    for (std::size_t begin = 0; begin < graphs.size(); begin += chunk) {
        ptrs.clear();
        for (std::size_t i = begin; i < std::min(graphs.size(), begin + chunk); ++i) ptrs.push_back(&graphs[i]);
        const auto pred = predict(params, cfg, make_batch(ptrs, cfg.edge_order()));
        for (double z : pred) out.push_back(scaler.denormalize(z));
    }
    return out;
}

inline std::vector<double> targets_of(const std::vector<DistGeoGraph>& graphs) {
    std::vector<double> y;
    y.reserve(graphs.size());
    for (const DistGeoGraph& g : graphs) y.push_back(*g.target);
    return y;
}

/// Minibatch Adam on the training partition with model selection on validation RMSE.
/// Deterministic for a given config (single-threaded).
inline TrainResult train_model(const PreparedData& data, const RunConfig& cfg, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (data.train.empty()) throw ConfigError("training partition is empty");
    const auto t0 = std::chrono::steady_clock::now();
    const ModelConfig& mc = cfg.model;
    const std::size_t in_dim = data.scheme.dimension();

    TrainResult result{init_params(mc, in_dim, cfg.seed), {}};
    ModelParams& params = result.params;
    Metrics& m = result.metrics;
    std::vector<Tensor*> tensors = params.tensors();
    std::vector<const Tensor*> const_tensors(tensors.begin(), tensors.end());

    const auto& val_set = data.val.empty() ? data.train : data.val;
    const std::vector<double> val_y = targets_of(val_set);
    auto val_rmse_of = [&](const ModelParams& p) { return rmse(predict_all(p, mc, val_set, data.scaler), val_y); };

    ModelParams best = params;
    double best_val = val_rmse_of(params);
    std::size_t since_best = 0;
    AdamState adam;
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(data.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<const DistGeoGraph*> batch_graphs;
    std::vector<double> batch_targets;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        double loss_sum = 0.0;
        std::size_t nbatches = 0;
        try {
            for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
                const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
                batch_graphs.clear();
                batch_targets.clear();
                for (std::size_t k = begin; k < end; ++k) {
                    const DistGeoGraph& g = data.train[order[k]];
                    batch_graphs.push_back(&g);
                    batch_targets.push_back(data.scaler.normalize(*g.target));
                }
                const GraphBatch batch = make_batch(batch_graphs, mc.edge_order());
                Tape tape;
                const Var loss = mse_loss(forward(tape, params, mc, batch), batch_targets);
                const std::vector<Tensor> grads = tape.backward(loss, const_tensors);
                adam_step(tensors, grads, adam, cfg.optim);
                loss_sum += loss.value().item();
                ++nbatches;
            }
        } catch (const NumericError& e) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        const double train_loss = loss_sum / static_cast<double>(nbatches);
        const double v = val_rmse_of(params);
        m.train_loss.push_back(train_loss);
        m.val_loss.push_back((v / data.scaler.stddev) * (v / data.scaler.stddev));
        m.epochs_run = epoch;
        if (on_epoch) on_epoch(epoch, train_loss, v);
        if (v < best_val) {
            best_val = v;
            best = params;
            m.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience && cfg.patience > 0) {
            break;
        }
    }

    params = std::move(best);
    m.val_rmse = best_val;
    m.train_rmse = rmse(predict_all(params, mc, data.train, data.scaler), targets_of(data.train));
    if (!data.test.empty()) {
        m.test_targets = targets_of(data.test);
        m.test_predictions = predict_all(params, mc, data.test, data.scaler);
        m.rmse = rmse(m.test_predictions, m.test_targets);
    }
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

inline TrainResult train_model(const DatasetSplit& split, const RunConfig& cfg, const EpochCallback& on_epoch = {}) {
    return train_model(prepare_split(split, cfg), cfg, on_epoch);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json tensor_json(const Tensor& t) {
    return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.to_vector()}};
}

inline nlohmann::json checkpoint_json(const ModelParams& params, const RunConfig& cfg, const FeatureScheme& scheme,
                                      const TargetScaler& scaler) {
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, t] : params.named()) tensors[name] = tensor_json(*t);
    nlohmann::json basis = nullptr;
    if (cfg.model.kind == ModelKind::DgGcn) {
        const GaussianBasis b = cfg.model.basis();
        basis = {{"num_gaussians", b.size()}, {"cutoff", b.cutoff}, {"gamma", b.gamma}, {"centers", b.centers}};
    }
    return {{"format_version", kFormatVersion},
            {"kind", "dggcn-checkpoint"},
            {"config", to_json(cfg)},
            {"basis", basis},
            {"vocabulary", scheme.vocabulary},
            {"target_scaler", {{"mean", scaler.mean}, {"stddev", scaler.stddev}}},
            {"params", tensors}};
}

struct Checkpoint {
    RunConfig config;
    FeatureScheme scheme;
    TargetScaler scaler;
    ModelParams params;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    const int version = j.value("format_version", 0);
    if (version != kFormatVersion || j.value("kind", std::string{}) != "dggcn-checkpoint") {
        throw ConfigError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kFormatVersion) + ")");
    }
    Checkpoint c;
    try {
        c.config = run_config_from_json(j.at("config"));
        c.scheme.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
        c.scaler.mean = j.at("target_scaler").at("mean").get<double>();
        c.scaler.stddev = j.at("target_scaler").at("stddev").get<double>();
        c.params = init_params(c.config.model, c.scheme.dimension(), 0);
        const auto& saved = j.at("params");
        for (auto& [name, t] : c.params.named()) {
            const auto& e = saved.at(name);
            const std::size_t rows = e.at("rows").get<std::size_t>();
            const std::size_t cols = e.at("cols").get<std::size_t>();
            if (rows != t->rows() || cols != t->cols()) {
                throw ConfigError("checkpoint tensor '" + name + "' has shape " + Tensor::shape_string(rows, cols) +
                                  ", expected " + t->shape_string());
            }
            *t = Tensor(rows, cols, e.at("data").get<std::vector<double>>());
        }
        if (saved.size() != c.params.named().size()) throw ConfigError("checkpoint has unexpected extra tensors");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed checkpoint: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------
// Result tables

inline nlohmann::json to_json(const Metrics& m, bool with_predictions = true) {
    nlohmann::json j = {{"rmse", m.rmse},
                        {"val_rmse", m.val_rmse},
                        {"train_rmse", m.train_rmse},
                        {"best_epoch", m.best_epoch},
                        {"epochs_run", m.epochs_run},
                        {"seconds", m.seconds},
                        {"train_loss", m.train_loss},
                        {"val_loss", m.val_loss}};
    if (with_predictions) {
        j["test_predictions"] = m.test_predictions;
        j["test_targets"] = m.test_targets;
    }
    return j;
}

struct GridRow {
    RunConfig config;
    std::optional<Metrics> metrics;
    std::string error;
};

using GridProgress = std::function<void(std::size_t index, const GridRow& row)>;

/// Runs every config on `molecules`. Cells are independent; up to `jobs` run at once.
/// A failing cell records its error and the grid continues.
inline std::vector<GridRow> run_grid(const std::vector<Graph3D>& molecules, const std::vector<RunConfig>& grid,
                                     std::size_t jobs = 1, const GridProgress& progress = {}) {
    std::vector<GridRow> rows(grid.size());
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < grid.size(); i = next++) {
            GridRow row{grid[i], std::nullopt, {}};
            try {
                row.metrics = train_model(prepare_data(molecules, grid[i]), grid[i]).metrics;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            std::lock_guard lock(mu);
            rows[i] = std::move(row);
            if (progress) progress(i, rows[i]);
        }
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, grid.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return rows;
}

inline void write_results_csv(std::ostream& out, const std::vector<GridRow>& rows) {
    out << "dataset,model,max_order,pooling,seed,rmse,seconds\n";
    for (const GridRow& r : rows) {
        const ModelConfig& m = r.config.model;
        out << r.config.dataset_name << ',' << to_string(m.kind) << ',' << m.edge_order() << ','
            << to_string(m.pooling) << ',' << r.config.seed << ',';
        if (r.metrics) {
            out << nlohmann::json(r.metrics->rmse).dump() << ',' << nlohmann::json(r.metrics->seconds).dump();
        } else {
            out << "nan,nan";
        }
        out << '\n';
    }
}

inline nlohmann::json results_json(const std::vector<GridRow>& rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (const GridRow& r : rows) {
        nlohmann::json j = {{"config", to_json(r.config)}};
        if (r.metrics) {
            j["metrics"] = to_json(*r.metrics);
        } else {
            j["error"] = r.error;
        }
        runs.push_back(std::move(j));
    }
    return {{"format_version", kFormatVersion}, {"runs", runs}};
}

struct SummaryRow {
    std::string dataset;
    ModelKind model = ModelKind::DgGcn;
    int max_order = 1;
    Pooling pooling = Pooling::Mean;
    std::vector<double> rmses; // successful seeds, grid order
    double median_rmse = std::nan("");
};

/// Groups rows by (dataset, model, max_order, pooling) in first-appearance order and
/// takes the median test RMSE over seeds.
inline std::vector<SummaryRow> summarize(const std::vector<GridRow>& rows) {
    std::vector<SummaryRow> out;
    std::map<std::tuple<std::string, int, int, int>, std::size_t> index;
    for (const GridRow& r : rows) {
        const ModelConfig& m = r.config.model;
        const auto key = std::make_tuple(r.config.dataset_name, static_cast<int>(m.kind), m.edge_order(),
                                         static_cast<int>(m.pooling));
        auto [it, fresh] = index.emplace(key, out.size());
        if (fresh) out.push_back({r.config.dataset_name, m.kind, m.edge_order(), m.pooling, {}, std::nan("")});
        if (r.metrics) out[it->second].rmses.push_back(r.metrics->rmse);
    }
    for (SummaryRow& s : out) {
        if (!s.rmses.empty()) s.median_rmse = median(s.rmses);
    }
    return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << "dataset,model,max_order,pooling,seeds,median_rmse,rmse_per_seed\n";
    for (const SummaryRow& s : rows) {
        out << s.dataset << ',' << to_string(s.model) << ',' << s.max_order << ',' << to_string(s.pooling) << ','
            << s.rmses.size() << ',' << (s.rmses.empty() ? std::string("nan") : nlohmann::json(s.median_rmse).dump())
            << ',';
        for (std::size_t i = 0; i < s.rmses.size(); ++i) {
            out << (i ? ";" : "") << nlohmann::json(s.rmses[i]).dump();
        }
        out << '\n';
    }
}

/// The comparison rows of the benchmark table: Standard GC, Geometric GC (3rd order),
/// DG-GCN at orders 1/2/3 with mean pooling, and DG-GCN order 3 with sum pooling.
inline std::vector<RunConfig> benchmark_grid(const RunConfig& base, std::span<const std::uint64_t> seeds) {
    struct Row {
        ModelKind kind;
        int order;
        Pooling pooling;
    };
    const Row table[] = {{ModelKind::Standard, 1, Pooling::Mean}, {ModelKind::Geometric, 3, Pooling::Mean},
                         {ModelKind::DgGcn, 1, Pooling::Mean},    {ModelKind::DgGcn, 2, Pooling::Mean},
                         {ModelKind::DgGcn, 3, Pooling::Mean},    {ModelKind::DgGcn, 3, Pooling::Sum}};
    std::vector<RunConfig> out;
    for (const Row& r : table) {
        for (std::uint64_t s : seeds) {
            RunConfig c = base;
            c.model.kind = r.kind;
            c.model.max_order = r.order;
            c.model.pooling = r.pooling;
            c.seed = s;
            out.push_back(c);
        }
    }
    return out;
}

} // namespace dggcn

#endif // DGGCN_TRAIN_HPP
