#ifndef DGGCN_CHEMIO_HPP
#define DGGCN_CHEMIO_HPP

// Molecule ingestion: MDL V2000 SDF, (id, target) CSV sidecars, the JSON-lines
// interchange format, node featurization and dataset splits.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "elements.hpp"
#include "error.hpp"
#include "tensor.hpp"

namespace dggcn {

using Vec3 = std::array<double, 3>;

struct Atom {
    std::string element;
    int atomic_number = 0;
    Vec3 position{};
};

/// Constitutional graph with 3D coordinates. Bonds are undirected index pairs.
struct Graph3D {
    std::string id;
    std::vector<Atom> atoms;
    std::vector<std::pair<std::size_t, std::size_t>> bonds;
    Tensor node_features; // N x d, empty until featurized
    std::optional<double> target;

    std::size_t num_atoms() const noexcept { return atoms.size(); }
};

/// Unordered pair key (smaller index first).
inline std::pair<std::size_t, std::size_t> ordered_pair(std::size_t i, std::size_t j) noexcept {
    return i < j ? std::make_pair(i, j) : std::make_pair(j, i);
}

/// Throws GraphError if `g` violates the Graph3D invariants.
inline void validate(const Graph3D& g) {
    const std::size_t n = g.atoms.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Atom& a = g.atoms[i];
        if (a.atomic_number < 1) {
            throw GraphError(g.id + ": atom " + std::to_string(i) + " has atomic number " +
                             std::to_string(a.atomic_number));
        }
        for (double c : a.position) {
            if (!std::isfinite(c)) throw GraphError(g.id + ": atom " + std::to_string(i) + " has a non-finite coordinate");
        }
    }
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (auto [i, j] : g.bonds) {
        if (i >= n || j >= n) {
            throw GraphError(g.id + ": bond (" + std::to_string(i) + "," + std::to_string(j) +
                             ") out of range for " + std::to_string(n) + " atoms");
        }
        if (i == j) throw GraphError(g.id + ": self-loop on atom " + std::to_string(i));
        if (!seen.insert(ordered_pair(i, j)).second) {
            throw GraphError(g.id + ": duplicate bond (" + std::to_string(i) + "," + std::to_string(j) + ")");
        }
    }
    if (!g.node_features.empty() && g.node_features.rows() != n) {
        throw GraphError(g.id + ": node feature rows " + std::to_string(g.node_features.rows()) +
                         " != atom count " + std::to_string(n));
    }
}

inline std::vector<std::size_t> bond_degrees(const Graph3D& g) {
    std::vector<std::size_t> deg(g.atoms.size(), 0);
    for (auto [i, j] : g.bonds) {
        ++deg[i];
        ++deg[j];
    }
    return deg;
}

// ---------------------------------------------------------------------------
// SDF

struct RecordError {
    std::size_t record = 0; // 0-based record index in the stream
    std::string message;
};

struct SdfResult {
    std::vector<Graph3D> molecules;
    std::vector<RecordError> errors;
};

struct SdfOptions {
    /// Data item holding the scalar label ("> <target>"); empty disables lookup.
    std::string target_field = "target";
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string_view column(std::string_view line, std::size_t pos, std::size_t len) {
    if (pos >= line.size()) return {};
    return trim(line.substr(pos, len));
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

inline Graph3D parse_sdf_record(const std::vector<std::string>& lines, const SdfOptions& opt) {
    if (lines.size() < 4) throw ParseError("header block or counts line missing");
    Graph3D g;
    g.id = std::string(trim(lines[0]));
    const std::string_view counts = lines[3];
    if (counts.find("V3000") != std::string_view::npos) throw ParseError("V3000 records are not supported");
    const auto natoms = parse_number<int>(column(counts, 0, 3));
    const auto nbonds = parse_number<int>(column(counts, 3, 3));
    if (!natoms || !nbonds || *natoms < 0 || *nbonds < 0) {
        throw ParseError("malformed counts line '" + std::string(trim(counts)) + "'");
    }
    const std::size_t na = static_cast<std::size_t>(*natoms);
    const std::size_t nb = static_cast<std::size_t>(*nbonds);
    if (lines.size() < 4 + na + nb) throw ParseError("record truncated before the end of the bond block");

    g.atoms.reserve(na);
    for (std::size_t i = 0; i < na; ++i) {
        const std::string_view line = lines[4 + i];
        Atom a;
        for (std::size_t k = 0; k < 3; ++k) {
            const auto v = parse_number<double>(column(line, 10 * k, 10));
            if (!v || !std::isfinite(*v)) {
                throw ParseError("atom " + std::to_string(i + 1) + ": non-numeric coordinate '" +
                                 std::string(column(line, 10 * k, 10)) + "'");
            }
            a.position[k] = *v;
        }
        a.element = std::string(column(line, 31, 3));
        a.atomic_number = atomic_number(a.element);
        if (a.atomic_number == 0) {
            throw ParseError("atom " + std::to_string(i + 1) + ": unknown element '" + a.element + "'");
        }
        g.atoms.push_back(std::move(a));
    }

    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t b = 0; b < nb; ++b) {
        const std::string_view line = lines[4 + na + b];
        const auto i = parse_number<int>(column(line, 0, 3));
        const auto j = parse_number<int>(column(line, 3, 3));
        if (!i || !j) throw ParseError("bond " + std::to_string(b + 1) + ": malformed bond line");
        if (*i < 1 || *j < 1 || *i > *natoms || *j > *natoms) {
            throw ParseError("bond " + std::to_string(b + 1) + ": atom index out of range (" + std::to_string(*i) +
                             "," + std::to_string(*j) + ") for " + std::to_string(na) + " atoms");
        }
        if (*i == *j) throw ParseError("bond " + std::to_string(b + 1) + ": self-loop");
        const auto key = ordered_pair(static_cast<std::size_t>(*i - 1), static_cast<std::size_t>(*j - 1));
        if (!seen.insert(key).second) throw ParseError("bond " + std::to_string(b + 1) + ": duplicate bond");
        g.bonds.emplace_back(static_cast<std::size_t>(*i - 1), static_cast<std::size_t>(*j - 1));
    }

    // Properties block up to "M  END", then "> <name>" data items.
    std::size_t k = 4 + na + nb;
    while (k < lines.size() && trim(lines[k]) != "M  END") ++k;
    for (++k; k < lines.size(); ++k) {
        const std::string_view line = lines[k];
        if (line.empty() || line.front() != '>') continue;
        const auto lt = line.find('<');
        const auto gt = line.find('>', lt == std::string_view::npos ? 1 : lt);
        if (lt == std::string_view::npos || gt == std::string_view::npos) continue;
        const std::string_view name = line.substr(lt + 1, gt - lt - 1);
        if (opt.target_field.empty() || name != opt.target_field) continue;
        if (k + 1 >= lines.size()) throw ParseError("data item <" + std::string(name) + "> has no value");
        const auto v = parse_number<double>(lines[k + 1]);
        if (!v || !std::isfinite(*v)) {
            throw ParseError("data item <" + std::string(name) + ">: non-numeric value '" +
                             std::string(trim(lines[k + 1])) + "'");
        }
        g.target = *v;
    }
    return g;
}

} // namespace detail

/// Reads a multi-record V2000 SDF stream. Records that fail to parse are skipped
/// and reported in SdfResult::errors with their record index.
inline SdfResult parse_sdf(std::istream& in, const SdfOptions& opt = {}) {
    SdfResult result;
    std::vector<std::string> block;
    std::string line;
    std::size_t index = 0;
    auto flush = [&] {
        const bool blank = std::all_of(block.begin(), block.end(),
                                       [](const std::string& l) { return detail::trim(l).empty(); });
        if (!blank) {
            try {
                result.molecules.push_back(detail::parse_sdf_record(block, opt));
            } catch (const ParseError& e) {
                result.errors.push_back({index, e.what()});
            }
            ++index;
        }
        block.clear();
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line) == "$$$$") {
            flush();
        } else {
            block.push_back(line);
        }
    }
    flush();
    return result;
}

inline SdfResult parse_sdf(std::string_view bytes, const SdfOptions& opt = {}) {
    std::istringstream in{std::string(bytes)};
    return parse_sdf(in, opt);
}

// ---------------------------------------------------------------------------
// CSV sidecar: header line, then "id,target" rows.

inline std::unordered_map<std::string, double> read_targets_csv(std::istream& in) {
    std::unordered_map<std::string, double> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view row = detail::trim(line);
        if (row.empty()) continue;
        const auto comma = row.find(',');
        if (comma == std::string_view::npos) {
            throw ParseError("targets csv line " + std::to_string(lineno) + ": expected 'id,target'");
        }
        const std::string_view id = detail::trim(row.substr(0, comma));
        const auto value = detail::parse_number<double>(row.substr(comma + 1));
        if (!value) {
            if (lineno == 1) continue; // header
            throw ParseError("targets csv line " + std::to_string(lineno) + ": non-numeric target");
        }
        out[std::string(id)] = *value;
    }
    return out;
}

/// Sets each molecule's target from `targets` by id. Throws if any id is missing.
inline void attach_targets(std::vector<Graph3D>& graphs, const std::unordered_map<std::string, double>& targets) {
    for (Graph3D& g : graphs) {
        auto it = targets.find(g.id);
        if (it == targets.end()) throw ParseError("no target for molecule '" + g.id + "'");
        g.target = it->second;
    }
}

// ---------------------------------------------------------------------------
// JSON-lines interchange

inline nlohmann::json to_json(const Graph3D& g) {
    nlohmann::json atoms = nlohmann::json::array();
    for (const Atom& a : g.atoms) {
        atoms.push_back({{"element", a.element}, {"xyz", {a.position[0], a.position[1], a.position[2]}}});
    }
    nlohmann::json bonds = nlohmann::json::array();
    for (auto [i, j] : g.bonds) bonds.push_back({i, j});
    nlohmann::json j = {{"id", g.id}, {"atoms", atoms}, {"bonds", bonds}};
    j["target"] = g.target ? nlohmann::json(*g.target) : nlohmann::json(nullptr);
    return j;
}

inline Graph3D graph_from_json(const nlohmann::json& j) {
    Graph3D g;
    try {
        g.id = j.value("id", std::string{});
        for (const auto& a : j.at("atoms")) {
            Atom atom;
            atom.element = a.at("element").get<std::string>();
            atom.atomic_number = atomic_number(atom.element);
            if (atom.atomic_number == 0) throw ParseError("unknown element '" + atom.element + "'");
            const auto& xyz = a.at("xyz");
            if (xyz.size() != 3) throw ParseError("xyz must have three components");
            for (std::size_t k = 0; k < 3; ++k) atom.position[k] = xyz.at(k).get<double>();
            g.atoms.push_back(std::move(atom));
        }
        for (const auto& b : j.at("bonds")) {
            if (b.size() != 2) throw ParseError("bond must be a pair");
            g.bonds.emplace_back(b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>());
        }
        if (j.contains("target") && !j.at("target").is_null()) g.target = j.at("target").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid molecule object: ") + e.what());
    }
    try {
        validate(g);
    } catch (const GraphError& e) {
        throw ParseError(e.what());
    }
    return g;
}

inline void write_jsonl(std::ostream& out, const std::vector<Graph3D>& graphs) {
    for (const Graph3D& g : graphs) out << to_json(g).dump() << '\n';
}

inline std::vector<Graph3D> read_jsonl(std::istream& in) {
    std::vector<Graph3D> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        try {
            out.push_back(graph_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("jsonl line " + std::to_string(lineno) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError("jsonl line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Featurization

/// One-hot element encoding over a fitted vocabulary, followed by one "unknown"
/// slot and the bond degree as a scalar: d = |vocabulary| + 2.
struct FeatureScheme {
    std::vector<std::string> vocabulary; // ordered by atomic number

    static FeatureScheme fit(const std::vector<Graph3D>& graphs) {
        std::set<int> zs;
        for (const Graph3D& g : graphs) {
            for (const Atom& a : g.atoms) zs.insert(a.atomic_number);
        }
        FeatureScheme s;
        for (int z : zs) s.vocabulary.emplace_back(element_symbol(z));
        return s;
    }

    std::size_t dimension() const noexcept { return vocabulary.size() + 2; }
    std::size_t unknown_slot() const noexcept { return vocabulary.size(); }
    std::size_t degree_slot() const noexcept { return vocabulary.size() + 1; }

    std::optional<std::size_t> slot(std::string_view element) const {
        for (std::size_t i = 0; i < vocabulary.size(); ++i) {
            if (vocabulary[i] == element) return i;
        }
        return std::nullopt;
    }
};

/// Returns a copy of `g` with node_features set. Elements outside the vocabulary go to
/// the unknown slot and produce one warning each in `warnings` (if given).
inline Graph3D featurize_nodes(Graph3D g, const FeatureScheme& scheme, std::vector<std::string>* warnings = nullptr) {
    const auto deg = bond_degrees(g);
    Tensor x(g.atoms.size(), scheme.dimension());
    for (std::size_t i = 0; i < g.atoms.size(); ++i) {
        const auto s = scheme.slot(g.atoms[i].element);
        if (s) {
            x(i, *s) = 1.0;
        } else {
            x(i, scheme.unknown_slot()) = 1.0;
            if (warnings) {
                warnings->push_back(g.id + ": element '" + g.atoms[i].element + "' (atom " + std::to_string(i) +
                                    ") not in vocabulary, using unknown slot");
            }
        }
        x(i, scheme.degree_slot()) = static_cast<double>(deg[i]);
    }
    g.node_features = std::move(x);
    return g;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSizes {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

struct DatasetSplit {
    std::vector<Graph3D> train;
    std::vector<Graph3D> val;
    std::vector<Graph3D> test;
};

/// Seeded Fisher-Yates permutation of [0, n). Uses mt19937_64 directly so the result
/// does not depend on the standard library's distribution implementations.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

inline SplitIndices split_indices(std::size_t n, SplitSizes sizes, std::uint64_t seed) {
    const std::size_t total = sizes.train + sizes.val + sizes.test;
    if (total > n) {
        throw ConfigError("split sizes " + std::to_string(sizes.train) + "/" + std::to_string(sizes.val) + "/" +
                          std::to_string(sizes.test) + " exceed dataset size " + std::to_string(n));
    }
    const auto perm = seeded_permutation(n, seed);
    SplitIndices s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(sizes.train));
    s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(sizes.train),
                 perm.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.val));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.val),
                  perm.begin() + static_cast<std::ptrdiff_t>(total));
    return s;
}

/// Explicit split file: {"train": [...], "val": [...], "test": [...]} with 0-based indices.
inline SplitIndices split_indices_from_json(const nlohmann::json& j, std::size_t n) {
    SplitIndices s;
    try {
        s.train = j.at("train").get<std::vector<std::size_t>>();
        s.val = j.at("val").get<std::vector<std::size_t>>();
        s.test = j.at("test").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid split file: ") + e.what());
    }
    std::vector<bool> used(n, false);
    for (const auto* part : {&s.train, &s.val, &s.test}) {
        for (std::size_t i : *part) {
            if (i >= n) throw ConfigError("split file index " + std::to_string(i) + " out of range");
            if (used[i]) throw ConfigError("split file index " + std::to_string(i) + " appears twice");
            used[i] = true;
        }
    }
    return s;
}

inline DatasetSplit apply_split(const std::vector<Graph3D>& graphs, const SplitIndices& idx) {
    DatasetSplit out;
    for (std::size_t i : idx.train) out.train.push_back(graphs.at(i));
    for (std::size_t i : idx.val) out.val.push_back(graphs.at(i));
    for (std::size_t i : idx.test) out.test.push_back(graphs.at(i));
    return out;
}

inline DatasetSplit split_dataset(const std::vector<Graph3D>& graphs, SplitSizes sizes, std::uint64_t seed) {
    return apply_split(graphs, split_indices(graphs.size(), sizes, seed));
}

// ---------------------------------------------------------------------------
// File-level loading

/// Loads an .sdf (optionally with a CSV sidecar) or a .jsonl dataset. Parse failures
/// of individual SDF records are appended to `errors` (if given) and skipped.
inline std::vector<Graph3D> load_molecules(const std::string& path, const std::string& targets_csv = {},
                                           const SdfOptions& opt = {}, std::vector<RecordError>* errors = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::vector<Graph3D> graphs;
    const bool jsonl = path.size() >= 6 && path.ends_with(".jsonl");
    if (jsonl) {
        graphs = read_jsonl(in);
    } else {
        SdfResult r = parse_sdf(in, opt);
        if (errors) errors->insert(errors->end(), r.errors.begin(), r.errors.end());
        graphs = std::move(r.molecules);
    }
    if (!targets_csv.empty()) {
        std::ifstream tin(targets_csv);
        if (!tin) throw ParseError("cannot open '" + targets_csv + "'");
        attach_targets(graphs, read_targets_csv(tin));
    }
    return graphs;
}

} // namespace dggcn

#endif // DGGCN_CHEMIO_HPP
