"""Periodic table lookups shared by the structure parsers."""

from __future__ import annotations

# fmt: off
SYMBOLS = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
    "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm",
    "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds",
    "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
)
# fmt: on

ATOMIC_NUMBERS: dict[str, int] = {s: i + 1 for i, s in enumerate(SYMBOLS)}
# Hydrogen isotopes show up under their own symbols in some files.
ATOMIC_NUMBERS["D"] = 1
ATOMIC_NUMBERS["T"] = 1

MAX_ATOMIC_NUMBER = len(SYMBOLS)


def normalize_symbol(raw: str) -> str:
    """Map a raw element string (any case, padded) to its canonical symbol."""
    return raw.strip().capitalize()


def atomic_number_for(raw: str) -> int | None:
    """Atomic number for an element string, or None if unknown."""
    return ATOMIC_NUMBERS.get(normalize_symbol(raw))


def symbol_for(z: int) -> str:
    if not 1 <= z <= MAX_ATOMIC_NUMBER:
        raise ValueError(f"atomic number out of range: {z}")
    return SYMBOLS[z - 1]
