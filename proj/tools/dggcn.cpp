// Command-line driver: prepare, train, eval, grid, gradcheck.
//
// Exit codes: 0 success, 1 run failure, 2 usage or input error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <dggcn/dggcn.hpp>

namespace fs = std::filesystem;
using namespace dggcn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRun = 1;
constexpr int kExitUsage = 2;

/// Input problems that should map to exit code 2.
struct InputError : Error {
    using Error::Error;
};

struct CommonArgs {
    std::string config;
    std::string dataset;
    std::string targets;
    std::string model;
    int max_order = 0;
    std::string pooling;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config, "key/value config file")->check(CLI::ExistingFile);
    cmd->add_option("--dataset", a.dataset, "SDF or JSON-lines dataset");
    cmd->add_option("--targets", a.targets, "CSV of id,target rows attached by molecule id");
    cmd->add_option("--model", a.model, "standard | geometric | dggcn")
        ->check(CLI::IsMember({"standard", "geometric", "dggcn"}));
    cmd->add_option("--max-order", a.max_order, "neighbor order 1..3")->check(CLI::Range(1, 3));
    cmd->add_option("--pooling", a.pooling, "mean | sum")->check(CLI::IsMember({"mean", "sum"}));
    cmd->add_option("--seed", a.seed, "model seed");
    cmd->add_option("--set", a.overrides, "dotted key=value override, repeatable");
    cmd->add_option("--out", a.out, "output directory (default: $DGGCN_RESULTS_DIR or ./results)");
}

/// Defaults, then the config file, then dedicated flags, then --set overrides.
RunConfig effective_config(const CommonArgs& a, RunConfig base = {}) {
    RunConfig c = a.config.empty() ? std::move(base) : load_config_file(a.config, std::move(base));
    if (!a.dataset.empty()) c.dataset_path = a.dataset;
    if (!a.targets.empty()) c.targets_csv = a.targets;
    if (!a.model.empty()) c.model.kind = parse_model_kind(a.model);
    if (a.max_order != 0) c.model.max_order = a.max_order;
    if (!a.pooling.empty()) c.model.pooling = parse_pooling(a.pooling);
    if (a.seed) c.seed = *a.seed;
    for (const std::string& o : a.overrides) apply_override(c, o);
    if (c.dataset_name.empty() && !c.dataset_path.empty()) c.dataset_name = fs::path(c.dataset_path).stem().string();
    c.validate();
    return c;
}

fs::path output_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("DGGCN_RESULTS_DIR"); env != nullptr && *env != '\0') return env;
    return "results";
}

void echo_config(const RunConfig& c) { std::cout << "effective config: " << to_json(c).dump() << "\n"; }

std::vector<Graph3D> load_dataset(const std::string& path, const std::string& targets_csv,
                                  const std::string& target_field) {
    if (path.empty()) throw InputError("no dataset given (use --dataset or dataset = ... in the config)");
    if (!fs::exists(path)) throw InputError("dataset '" + path + "' does not exist");
    std::vector<RecordError> errors;
    SdfOptions opt;
    opt.target_field = target_field;
    std::vector<Graph3D> mols = load_molecules(path, targets_csv, opt, &errors);
    for (const RecordError& e : errors) std::cerr << "warning: record " << e.record << ": " << e.message << "\n";
    if (mols.empty()) throw InputError("no parsable molecules in '" + path + "'");
    return mols;
}

std::vector<Graph3D> load_dataset(const RunConfig& c) {
    return load_dataset(c.dataset_path, c.targets_csv, c.target_field);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << j.dump(1) << "\n";
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InputError("'" + path + "' is not valid JSON: " + e.what());
    }
}

// ---------------------------------------------------------------------------

struct PrepareArgs {
    std::string input;
    std::string output;
    std::string targets;
    std::string target_field = "target";
    std::string distgeo;
    int max_order = 3;
};

int run_prepare(const PrepareArgs& a) {
    std::vector<Graph3D> mols = load_dataset(a.input, a.targets, a.target_field);
    check_max_order(a.max_order);
    std::size_t with_target = 0;
    EdgeCounts total;
    std::vector<DistGeoGraph> dumps;
    for (const Graph3D& g : mols) {
        if (g.target) ++with_target;
        DistGeoGraph d = build_distgeo(g, a.max_order);
        total.first += d.counts.first;
        total.second += d.counts.second;
        total.third += d.counts.third;
        if (!a.distgeo.empty()) dumps.push_back(std::move(d));
    }
    if (!a.output.empty()) {
        const fs::path out(a.output);
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        std::ofstream f(out);
        if (!f) throw Error("cannot write '" + a.output + "'");
        write_jsonl(f, mols);
    }
    if (!a.distgeo.empty()) {
        const fs::path out(a.distgeo);
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        std::ofstream f(out);
        if (!f) throw Error("cannot write '" + a.distgeo + "'");
        for (const DistGeoGraph& d : dumps) f << to_json(d).dump() << "\n";
    }
    std::cout << "molecules: " << mols.size() << " (" << with_target << " with targets)\n";
    std::cout << "atom pairs up to order " << a.max_order << ": order1=" << total.first
              << " order2=" << total.second << " order3=" << total.third << " total=" << total.total() << "\n";
    if (!a.output.empty()) std::cout << "wrote " << mols.size() << " molecules to " << a.output << "\n";
    return kExitOk;
}

int run_train(const CommonArgs& a, bool quiet) {
    const RunConfig cfg = effective_config(a);
    echo_config(cfg);
    const std::vector<Graph3D> mols = load_dataset(cfg);
    const PreparedData data = prepare_data(mols, cfg);
    for (const std::string& w : data.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "split: train=" << data.train.size() << " val=" << data.val.size() << " test=" << data.test.size()
              << "\n";
    const TrainResult r = train_model(data, cfg, [&](std::size_t epoch, double loss, double val) {
        if (!quiet) std::cerr << "epoch " << epoch << " train_mse=" << loss << " val_rmse=" << val << "\n";
    });
    const fs::path dir = output_dir(a.out);
    write_json(dir / "checkpoint.json", checkpoint_json(r.params, cfg, data.scheme, data.scaler));
    write_json(dir / "metrics.json",
               {{"format_version", kFormatVersion}, {"config", to_json(cfg)}, {"metrics", to_json(r.metrics)}});
    std::cout << std::setprecision(17) << "test_rmse=" << r.metrics.rmse << " val_rmse=" << r.metrics.val_rmse
              << " best_epoch=" << r.metrics.best_epoch << " epochs=" << r.metrics.epochs_run << std::setprecision(4)
              << " seconds=" << r.metrics.seconds << "\n";
    std::cout << "wrote " << (dir / "checkpoint.json").string() << " and " << (dir / "metrics.json").string() << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string dataset;
    std::string targets;
    std::string partition = "test";
};

int run_eval(const EvalArgs& a) {
    Checkpoint ck = [&] {
        try {
            return checkpoint_from_json(read_json(a.checkpoint));
        } catch (const ConfigError& e) {
            throw InputError(e.what());
        }
    }();
    RunConfig& cfg = ck.config;
    if (!a.dataset.empty()) cfg.dataset_path = a.dataset;
    if (!a.targets.empty()) cfg.targets_csv = a.targets;
    echo_config(cfg);
    const std::vector<Graph3D> mols = load_dataset(cfg);
    std::vector<Graph3D> graphs;
    if (a.partition == "all") {
        graphs = mols;
    } else {
        const DatasetSplit split = apply_split(mols, resolve_split(mols.size(), cfg));
        graphs = a.partition == "train" ? split.train : a.partition == "val" ? split.val : split.test;
    }
    DatasetSplit only;
    only.test = std::move(graphs);
    const PreparedData data = prepare_split(only, cfg, ck.scheme, ck.scaler);
    const std::vector<double> pred = predict_all(ck.params, cfg.model, data.test, data.scaler);
    std::cout << std::setprecision(17) << a.partition << "_rmse=" << rmse(pred, targets_of(data.test))
              << " molecules=" << data.test.size() << "\n";
    return kExitOk;
}

struct GridArgs {
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t jobs = 1;
    bool single = false;
};

int run_grid_cmd(const CommonArgs& a, const GridArgs& g) {
    const RunConfig base = effective_config(a);
    echo_config(base);
    const std::vector<Graph3D> mols = load_dataset(base);
    std::vector<RunConfig> grid;
    if (g.single) {
        for (std::uint64_t s : g.seeds) {
            RunConfig c = base;
            c.seed = s;
            grid.push_back(c);
        }
    } else {
        grid = benchmark_grid(base, g.seeds);
    }
    const std::vector<GridRow> rows = run_grid(mols, grid, g.jobs, [&](std::size_t i, const GridRow& row) {
        const ModelConfig& m = row.config.model;
        std::cerr << "[" << i + 1 << "/" << grid.size() << "] " << to_string(m.kind) << " order=" << m.edge_order()
                  << " pooling=" << to_string(m.pooling) << " seed=" << row.config.seed << ": ";
        if (row.metrics) {
            std::cerr << "rmse=" << row.metrics->rmse << " (" << row.metrics->seconds << "s)\n";
        } else {
            std::cerr << "FAILED " << row.error << "\n";
        }
    });
    const fs::path dir = output_dir(a.out);
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "results.csv");
        write_results_csv(f, rows);
    }
    write_json(dir / "results.json", results_json(rows));
    const std::vector<SummaryRow> summary = summarize(rows);
    {
        std::ofstream f(dir / "summary.csv");
        write_summary_csv(f, summary);
    }
    write_summary_csv(std::cout, summary);
    std::size_t failed = 0;
    for (const GridRow& r : rows) failed += r.metrics ? 0 : 1;
    std::cout << "wrote " << rows.size() << " runs to " << dir.string() << "\n";
    if (failed > 0) {
        std::cerr << failed << " run(s) failed\n";
        return kExitRun;
    }
    return kExitOk;
}

struct GradcheckArgs {
    std::size_t molecules = 5;
    double tolerance = 1e-3;
    double step = 1e-5;
};

int run_gradcheck(const CommonArgs& a, const GradcheckArgs& g) {
    // A narrow network keeps the finite-difference sweep over every parameter short;
    // the architecture is unchanged. Override with --set model.width=... etc.
    RunConfig base;
    base.model.width = 16;
    base.model.num_gaussians = 20;
    RunConfig cfg = effective_config(a, base);
    echo_config(cfg);
    std::vector<Graph3D> mols = random_dataset(g.molecules, cfg.seed);
    std::vector<DistGeoGraph> graphs;
    for (const Graph3D& m : mols) graphs.push_back(build_distgeo(m, cfg.model.edge_order()));
    std::vector<const DistGeoGraph*> ptrs;
    std::vector<double> targets;
    for (const DistGeoGraph& d : graphs) {
        ptrs.push_back(&d);
        targets.push_back(*d.target);
    }
    const GraphBatch batch = make_batch(ptrs, cfg.model.edge_order());
    ModelParams params = init_params(cfg.model, batch.x.cols(), cfg.seed);
    const GradCheckReport r = check_model_gradients(params, cfg.model, batch, targets, g.step);
    const bool pass = r.max_rel_err < g.tolerance;
    std::cout << (pass ? "PASS" : "FAIL") << " max_rel_err=" << std::setprecision(3) << std::scientific
              << r.max_rel_err << " checked=" << r.checked << " worst=" << r.worst_tensor << "[" << r.worst_index
              << "]\n";
    return pass ? kExitOk : kExitRun;
}

} // namespace

int main(int argc, char** argv) {
    retain_heap_memory();
    CLI::App app{"Distance-geometric graph convolutions for molecular property regression"};
    app.require_subcommand(1);

    PrepareArgs prep;
    auto* prepare = app.add_subcommand("prepare", "parse molecules, write JSON-lines and edge summaries");
    prepare->add_option("input", prep.input, "SDF or JSON-lines input")->required();
    prepare->add_option("--out", prep.output, "JSON-lines output path");
    prepare->add_option("--targets", prep.targets, "CSV of id,target rows");
    prepare->add_option("--target-field", prep.target_field, "SDF data item holding the target");
    prepare->add_option("--distgeo", prep.distgeo, "also write one distance-geometric graph per line here");
    prepare->add_option("--max-order", prep.max_order, "neighbor order 1..3")->check(CLI::Range(1, 3));

    CommonArgs train_args;
    bool quiet = false;
    auto* train = app.add_subcommand("train", "train one model, write checkpoint.json and metrics.json");
    add_common(train, train_args);
    train->add_flag("--quiet", quiet, "no per-epoch progress");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "RMSE of a checkpoint on a partition of its dataset");
    eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint.json from train")->required();
    eval->add_option("--dataset", eval_args.dataset, "override the dataset path stored in the checkpoint");
    eval->add_option("--targets", eval_args.targets, "CSV of id,target rows");
    eval->add_option("--partition", eval_args.partition, "train | val | test | all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}));

    CommonArgs grid_args;
    GridArgs grid_opts;
    auto* grid = app.add_subcommand("grid", "run the model comparison table over several seeds");
    add_common(grid, grid_args);
    grid->add_option("--seeds", grid_opts.seeds, "model seeds")->delimiter(',');
    grid->add_option("--jobs", grid_opts.jobs, "runs in parallel")->check(CLI::PositiveNumber);
    grid->add_flag("--single", grid_opts.single, "only the configured model, once per seed");

    CommonArgs gc_args;
    GradcheckArgs gc_opts;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of all model gradients");
    add_common(gradcheck, gc_args);
    gradcheck->add_option("--molecules", gc_opts.molecules, "random molecules in the batch")
        ->check(CLI::PositiveNumber);
    gradcheck->add_option("--tolerance", gc_opts.tolerance, "maximum relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*prepare) return run_prepare(prep);
        if (*train) return run_train(train_args, quiet);
        if (*eval) return run_eval(eval_args);
        if (*grid) return run_grid_cmd(grid_args, grid_opts);
        if (*gradcheck) return run_gradcheck(gc_args, gc_opts);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const GraphError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRun;
    }
    return kExitUsage;
}
