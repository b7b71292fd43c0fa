#ifndef DGGCN_ELEMENTS_HPP
#define DGGCN_ELEMENTS_HPP

#include <array>
#include <string>
#include <string_view>

namespace dggcn {

inline constexpr std::array<std::string_view, 119> kElementSymbols = {
    "",   "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",
    "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga",
    "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag",
    "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu",
    "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au",
    "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am",
    "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg",
    "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

/// Atomic number for a symbol, or 0 if the symbol is unknown.
inline int atomic_number(std::string_view symbol) noexcept {
    for (std::size_t z = 1; z < kElementSymbols.size(); ++z) {
        if (kElementSymbols[z] == symbol) return static_cast<int>(z);
    }
    return 0;
}

inline std::string_view element_symbol(int z) noexcept {
    if (z < 1 || z >= static_cast<int>(kElementSymbols.size())) return {};
    return kElementSymbols[static_cast<std::size_t>(z)];
}

} // namespace dggcn

#endif // DGGCN_ELEMENTS_HPP
