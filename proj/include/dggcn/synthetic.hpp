#ifndef DGGCN_SYNTHETIC_HPP
#define DGGCN_SYNTHETIC_HPP

// Random molecule-like graphs for property tests and gradient checks.

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "chemio.hpp"

namespace dggcn {

struct SyntheticOptions {
    std::size_t min_atoms = 2;
    std::size_t max_atoms = 12;
    std::size_t max_ring_closures = 2;
    double bond_length = 1.5;
};

/// Random spanning tree plus a few ring-closing bonds; each atom sits one bond length
/// from its tree parent in a random direction. Target is a random scalar.
inline Graph3D random_molecule(std::mt19937_64& rng, const SyntheticOptions& opt = {}, const std::string& id = "synthetic") {
    static const char* const kElements[] = {"C", "C", "C", "N", "O", "O", "S", "F", "Cl"};
    std::uniform_int_distribution<std::size_t> natoms(opt.min_atoms, opt.max_atoms);
    std::uniform_int_distribution<std::size_t> element(0, std::size(kElements) - 1);
    std::normal_distribution<double> normal(0.0, 1.0);

    Graph3D g;
    g.id = id;
    const std::size_t n = natoms(rng);
    for (std::size_t i = 0; i < n; ++i) {
        Atom a;
        a.element = kElements[element(rng)];
        a.atomic_number = atomic_number(a.element);
        if (i > 0) {
            const std::size_t parent = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
            double dir[3];
            double norm = 0.0;
            do {
                norm = 0.0;
                for (double& d : dir) {
                    d = normal(rng);
                    norm += d * d;
                }
            } while (norm < 1e-12);
            norm = std::sqrt(norm);
            for (std::size_t k = 0; k < 3; ++k) {
                a.position[k] = g.atoms[parent].position[k] + opt.bond_length * dir[k] / norm;
            }
            g.bonds.emplace_back(parent, i);
        }
        g.atoms.push_back(std::move(a));
    }
    std::set<std::pair<std::size_t, std::size_t>> bonded;
    for (auto [i, j] : g.bonds) bonded.insert(ordered_pair(i, j));
    if (n >= 3) {
        const std::size_t closures = std::uniform_int_distribution<std::size_t>(0, opt.max_ring_closures)(rng);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t c = 0; c < closures; ++c) {
            const std::size_t i = pick(rng), j = pick(rng);
            if (i == j || !bonded.insert(ordered_pair(i, j)).second) continue;
            g.bonds.emplace_back(i, j);
        }
    }
    g.target = normal(rng);
    return g;
}

/// `count` random molecules featurized with a vocabulary fitted on the set itself.
inline std::vector<Graph3D> random_dataset(std::size_t count, std::uint64_t seed, const SyntheticOptions& opt = {}) {
    std::mt19937_64 rng(seed);
    std::vector<Graph3D> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_molecule(rng, opt, "synthetic_" + std::to_string(i)));
    const FeatureScheme scheme = FeatureScheme::fit(out);
    for (Graph3D& g : out) g = featurize_nodes(std::move(g), scheme);
    return out;
}

} // namespace dggcn

#endif // DGGCN_SYNTHETIC_HPP
