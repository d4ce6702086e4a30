"""Stable-isotope registry: nuclear spins, g-factors, natural abundances.

The bundled table (data/isotopes.csv) covers every stable isotope of
elements 1..83; technetium and promethium have none and are absent. Each
row stores the signed g-factor g = mu/I in nuclear magnetons. The loader
validates per-element abundance closure, so any element present can be
trusted to sum to 100% within 0.1 percentage points.

Tables are immutable after loading and safe to share across threads.
"""
from __future__ import annotations

import functools
import importlib.resources
from dataclasses import dataclass
from fractions import Fraction

from .errors import ParseError, TableLookupError, ValidationError

_HEADER = "element,Z,A,abundance_percent,spin,g_factor"


@dataclass(frozen=True)
class Isotope:
    """One nuclide. `spin` is the quantum number I, `g_factor` is mu/I."""

    element_symbol: str
    atomic_number: int
    mass_number: int
    spin: float
    g_factor: float
    abundance_percent: float

    @property
    def abundance(self) -> float:
        """Natural abundance as a fraction in [0, 1]."""
        return self.abundance_percent / 100.0

    @property
    def spinful(self) -> bool:
        return self.spin > 0

    def __str__(self) -> str:
        return f"{self.mass_number}{self.element_symbol}"


def _spin_to_text(spin: float) -> str:
    frac = Fraction(spin).limit_denominator(2)
    if float(frac) != spin:
        raise ValueError(f"spin {spin} is not a half-integer")
    return str(frac)


class IsotopeTable:
    """Immutable registry keyed by (element_symbol, mass_number)."""

    def __init__(self, entries: list[Isotope]):
        self._by_key: dict[tuple[str, int], Isotope] = {}
        self._by_element: dict[str, list[Isotope]] = {}
        for iso in entries:
            key = (iso.element_symbol, iso.mass_number)
            if key in self._by_key:
                raise ValidationError(f"duplicate isotope {iso}")
            self._by_key[key] = iso
            self._by_element.setdefault(iso.element_symbol, []).append(iso)
        for sym, isos in self._by_element.items():
            isos.sort(key=lambda i: i.mass_number)
            zs = {i.atomic_number for i in isos}
            if len(zs) != 1:
                raise ValidationError(f"conflicting atomic numbers for {sym}: {sorted(zs)}")
            total = sum(i.abundance_percent for i in isos)
            if not 99.9 <= total <= 100.1:
                raise ValidationError(
                    f"abundances for {sym} sum to {total:.4f}%, expected 100% within 0.1"
                )

    def __len__(self) -> int:
        return len(self._by_key)

    def __eq__(self, other) -> bool:
        return isinstance(other, IsotopeTable) and self._by_key == other._by_key

    def __contains__(self, element: str) -> bool:
        return element in self._by_element

    def get(self, element: str, mass_number: int) -> Isotope:
        try:
            return self._by_key[(element, mass_number)]
        except KeyError:
            raise TableLookupError(f"no isotope {mass_number}{element} in table") from None

    def isotopes_of(self, element: str) -> list[Isotope]:
        """All isotopes of an element, ascending mass number."""
        try:
            return list(self._by_element[element])
        except KeyError:
            raise TableLookupError(f"element {element!r} not in isotope table") from None

    def spinful_isotopes_of(self, element: str) -> list[Isotope]:
        """Isotopes with I > 0, ascending mass number."""
        return [i for i in self.isotopes_of(element) if i.spinful]

    def elements(self) -> list[str]:
        """Element symbols, ascending atomic number."""
        return sorted(self._by_element, key=lambda s: self._by_element[s][0].atomic_number)

    def atomic_number(self, element: str) -> int:
        return self.isotopes_of(element)[0].atomic_number

    def entries(self) -> list[Isotope]:
        return sorted(self._by_key.values(), key=lambda i: (i.atomic_number, i.mass_number))


def load_isotope_table(source: str) -> IsotopeTable:
    """Parse isotope CSV text into a validated table.

    Format: header `element,Z,A,abundance_percent,spin,g_factor`, one row
    per nuclide, spin rendered as 0, 1/2, 1, 3/2, ... Raises ParseError
    with the offending line number, or ValidationError for rows that parse
    but break an invariant (range, duplicates, abundance closure).
    """
    lines = source.splitlines()
    if not lines or lines[0].strip() != _HEADER:
        raise ParseError(f"expected header {_HEADER!r}", line=1)
    entries = []
    for lineno, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 6:
            raise ParseError(f"expected 6 fields, got {len(parts)}", line=lineno)
        sym, z_s, a_s, ab_s, spin_s, g_s = parts
        if not sym[:1].isalpha():
            raise ParseError(f"bad element symbol {sym!r}", line=lineno)
        try:
            z = int(z_s)
            a = int(a_s)
            abundance = float(ab_s)
            spin = Fraction(spin_s)
            g = float(g_s)
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if spin < 0 or spin.denominator not in (1, 2):
            raise ParseError(f"spin {spin_s!r} is not a non-negative half-integer", line=lineno)
        if not 0.0 <= abundance <= 100.0:
            raise ValidationError(f"line {lineno}: abundance {abundance}% outside [0, 100]")
        if spin == 0 and g != 0.0:
            raise ValidationError(f"line {lineno}: spin-0 isotope {a}{sym} must store g = 0")
        if z < 1 or a < z:
            raise ValidationError(f"line {lineno}: implausible Z={z}, A={a}")
        entries.append(Isotope(sym, z, a, float(spin), g, abundance))
    return IsotopeTable(entries)


def dump_isotope_table(table: IsotopeTable) -> str:
    """Serialize a table back to the CSV format load_isotope_table reads."""
    lines = [_HEADER]
    for iso in table.entries():
        lines.append(
            f"{iso.element_symbol},{iso.atomic_number},{iso.mass_number},"
            f"{iso.abundance_percent!r},{_spin_to_text(iso.spin)},{iso.g_factor!r}"
        )
    return "\n".join(lines) + "\n"


@functools.lru_cache(maxsize=1)
def load_bundled_table() -> IsotopeTable:
    """The table shipped with the package."""
    text = importlib.resources.files("spinbath").joinpath("data/isotopes.csv").read_text("utf-8")
    return load_isotope_table(text)


def spinful_isotopes_of(table: IsotopeTable, element: str) -> list[Isotope]:
    """Isotopes of `element` with nonzero spin, ascending mass number."""
    return table.spinful_isotopes_of(element)


def isotope_densities(
    table: IsotopeTable, element_densities: dict[str, float]
) -> list[tuple[Isotope, float]]:
    """Per-isotope number densities from element densities (cm^-3).

    Spin-0 isotopes are omitted; every returned density is
    abundance * element density, so the list is exactly linear in the
    input map. Elements are processed in atomic-number order.
    """
    for sym, n in element_densities.items():
        if n < 0:
            raise ValidationError(f"negative density for {sym}")
    out = []
    for sym in sorted(element_densities, key=lambda s: table.atomic_number(s)):
        n_el = element_densities[sym]
        for iso in table.spinful_isotopes_of(sym):
            out.append((iso, float(iso.abundance * n_el)))
    return out
