#ifndef DGGCN_CONFIG_HPP
#define DGGCN_CONFIG_HPP

// RunConfig and its two serializations: JSON (embedded in every checkpoint and
// results record) and a small TOML-like key/value file:
//
//   # comment
//   dataset = data/esol.sdf
//   [model]
//   kind = dggcn
//   max_order = 3
//
// Section headers prefix the following keys ("model.kind"). Values may be
// quoted. Every key accepted here is listed in set_config_value().

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "adam.hpp"
#include "chemio.hpp"
#include "error.hpp"
#include "model.hpp"

namespace dggcn {

inline constexpr int kFormatVersion = 1;

struct RunConfig {
    std::string dataset_name;
    std::string dataset_path;
    std::string targets_csv;
    std::string target_field = "target";
    std::string split_file;
    ModelConfig model;
    AdamOptions optim;
    std::size_t epochs = 500;
    std::size_t patience = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    SplitSizes split{};
    bool normalize_targets = true;

    void validate() const {
        model.validate();
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (!(optim.lr > 0.0)) throw ConfigError("optim.lr must be positive");
    }
};

namespace detail {

inline std::string unquote(std::string_view v) {
    v = trim(v);
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\''))) {
        v = v.substr(1, v.size() - 2);
    }
    return std::string(v);
}

template <class T>
T config_number(std::string_view key, std::string_view value) {
    const auto v = parse_number<T>(value);
    if (!v) throw ConfigError("config key '" + std::string(key) + "': invalid number '" + std::string(value) + "'");
    return *v;
}

inline double config_double(std::string_view key, std::string_view value) {
    const std::string_view v = trim(value);
    if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    return config_number<double>(key, v);
}

inline bool config_bool(std::string_view key, std::string_view value) {
    const std::string_view v = trim(value);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + std::string(key) + "': expected true|false, got '" + std::string(v) + "'");
}

} // namespace detail

/// Applies one dotted key. Unknown keys are an error.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view raw) {
    using namespace detail;
    const std::string v = unquote(raw);
    if (key == "dataset.name" || key == "dataset_name") c.dataset_name = v;
    else if (key == "dataset.path" || key == "dataset") c.dataset_path = v;
    else if (key == "dataset.targets_csv") c.targets_csv = v;
    else if (key == "dataset.target_field") c.target_field = v;
    else if (key == "split.file") c.split_file = v;
    else if (key == "split.train") c.split.train = config_number<std::size_t>(key, v);
    else if (key == "split.val") c.split.val = config_number<std::size_t>(key, v);
    else if (key == "split.test") c.split.test = config_number<std::size_t>(key, v);
    else if (key == "split.seed") c.split_seed = config_number<std::uint64_t>(key, v);
    else if (key == "model.kind" || key == "model") c.model.kind = parse_model_kind(v);
    else if (key == "model.max_order" || key == "max_order") c.model.max_order = config_number<int>(key, v);
    else if (key == "model.pooling" || key == "pooling") c.model.pooling = parse_pooling(v);
    else if (key == "model.layers") c.model.layers = config_number<std::size_t>(key, v);
    else if (key == "model.width") c.model.width = config_number<std::size_t>(key, v);
    else if (key == "model.num_gaussians") c.model.num_gaussians = config_number<std::size_t>(key, v);
    else if (key == "model.cutoff") c.model.cutoff = config_double(key, v);
    else if (key == "model.gamma") c.model.gamma = config_double(key, v);
    else if (key == "model.powerlaw_r0") c.model.powerlaw_r0 = config_double(key, v);
    else if (key == "model.powerlaw_n") c.model.powerlaw_n = config_double(key, v);
    else if (key == "model.norm") c.model.norm = parse_normalization(v);
    else if (key == "model.per_order_filters") c.model.per_order_filters = config_bool(key, v);
    else if (key == "optim.lr") c.optim.lr = config_double(key, v);
    else if (key == "optim.beta1") c.optim.beta1 = config_double(key, v);
    else if (key == "optim.beta2") c.optim.beta2 = config_double(key, v);
    else if (key == "optim.eps") c.optim.eps = config_double(key, v);
    else if (key == "train.epochs" || key == "epochs") c.epochs = config_number<std::size_t>(key, v);
    else if (key == "train.patience") c.patience = config_number<std::size_t>(key, v);
    else if (key == "train.batch_size") c.batch_size = config_number<std::size_t>(key, v);
    else if (key == "train.seed" || key == "seed") c.seed = config_number<std::uint64_t>(key, v);
    else if (key == "train.normalize_targets") c.normalize_targets = config_bool(key, v);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// Parses "key=value" (as given on the command line) and applies it.
inline void apply_override(RunConfig& c, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
    }
    set_config_value(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline void apply_config_stream(RunConfig& c, std::istream& in) {
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view l = detail::trim(line);
        if (const auto hash = l.find('#'); hash != std::string_view::npos) l = detail::trim(l.substr(0, hash));
        if (l.empty()) continue;
        if (l.front() == '[') {
            if (l.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
            section = std::string(detail::trim(l.substr(1, l.size() - 2)));
            continue;
        }
        const auto eq = l.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string key(detail::trim(l.substr(0, eq)));
        if (!section.empty()) key = section + "." + key;
        try {
            set_config_value(c, key, l.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    apply_config_stream(base, in);
    return base;
}

inline nlohmann::json to_json(const RunConfig& c) {
    const ModelConfig& m = c.model;
    auto num = [](double x) {
        return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(x > 0 ? "inf" : "-inf");
    };
    return {
        {"format_version", kFormatVersion},
        {"dataset", {{"name", c.dataset_name}, {"path", c.dataset_path}, {"targets_csv", c.targets_csv},
                     {"target_field", c.target_field}}},
        {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}, {"seed", c.split_seed},
                   {"file", c.split_file}}},
        {"model", {{"kind", to_string(m.kind)}, {"max_order", m.max_order}, {"pooling", to_string(m.pooling)},
                   {"layers", m.layers}, {"width", m.width}, {"num_gaussians", m.num_gaussians},
                   {"cutoff", num(m.cutoff)}, {"gamma", m.gamma}, {"powerlaw_r0", m.powerlaw_r0},
                   {"powerlaw_n", m.powerlaw_n}, {"norm", to_string(m.norm)},
                   {"per_order_filters", m.per_order_filters}}},
        {"optim", {{"lr", c.optim.lr}, {"beta1", c.optim.beta1}, {"beta2", c.optim.beta2}, {"eps", c.optim.eps}}},
        {"train", {{"epochs", c.epochs}, {"patience", c.patience}, {"batch_size", c.batch_size}, {"seed", c.seed},
                   {"normalize_targets", c.normalize_targets}}},
    };
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    const int version = j.value("format_version", 0);
    if (version != kFormatVersion) {
        throw ConfigError("config format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kFormatVersion) + ")");
    }
    RunConfig c;
    // Walk the nested objects and feed the flattened keys through set_config_value
    // so both serializations share one validation path.
    for (const auto& [section, obj] : j.items()) {
        if (section == "format_version") continue;
        if (!obj.is_object()) throw ConfigError("config section '" + section + "' is not an object");
        for (const auto& [key, value] : obj.items()) {
            const std::string text = value.is_string() ? value.get<std::string>() : value.dump();
            set_config_value(c, section + "." + key, text);
        }
    }
    return c;
}

} // namespace dggcn

#endif // DGGCN_CONFIG_HPP
