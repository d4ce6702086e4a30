"""Crystal cells and defect-centered supercell construction.

Lengths are in angstroms throughout; densities come out in cm^-3. A
supercell is always expressed relative to the defect: the chosen site
sits at the origin and is removed from the site list, since the electron
spin replaces whatever nucleus lived there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError

_A3_TO_CM3 = 1e-24


@dataclass(frozen=True)
class Site:
    element: str
    frac: tuple[float, float, float]
    occupancy: float = 1.0


@dataclass(frozen=True)
class CrystalCell:
    """Lattice rows are a, b, c in angstroms; sites use fractional coords."""

    lattice: np.ndarray
    sites: tuple[Site, ...]

    def __post_init__(self):
        lat = np.asarray(self.lattice, dtype=float)
        if lat.shape != (3, 3):
            raise DomainError(f"lattice must be 3x3, got {lat.shape}")
        vol = abs(np.linalg.det(lat))
        if not np.isfinite(vol) or vol < 1e-6:
            raise DomainError("degenerate cell: lattice vectors do not span a volume")
        lat.setflags(write=False)
        object.__setattr__(self, "lattice", lat)
        sites = []
        for s in self.sites:
            if not 0.0 < s.occupancy <= 1.0:
                raise ValidationError(
                    f"occupancy {s.occupancy} for {s.element} outside (0, 1]"
                )
            frac = tuple(float(x) % 1.0 for x in s.frac)
            sites.append(Site(s.element, frac, float(s.occupancy)))
        object.__setattr__(self, "sites", tuple(sites))

    @property
    def volume_a3(self) -> float:
        return float(abs(np.linalg.det(self.lattice)))

    def element_densities(self) -> dict[str, float]:
        """Occupancy-weighted number density per element, in cm^-3."""
        counts: dict[str, float] = {}
        for s in self.sites:
            counts[s.element] = counts.get(s.element, 0.0) + s.occupancy
        vol_cm3 = self.volume_a3 * _A3_TO_CM3
        return {el: c / vol_cm3 for el, c in sorted(counts.items())}


@dataclass(frozen=True)
class Supercell:
    """Sites within a radius of the defect, defect-centered cartesian."""

    elements: tuple[str, ...]
    positions: np.ndarray  # (N, 3) angstrom, defect at origin
    occupancies: np.ndarray  # (N,)
    radius: float
    defect_element: str

    def __post_init__(self):
        for name in ("positions", "occupancies"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.elements)


def build_supercell(cell: CrystalCell, radius: float, defect_site: int = 0) -> Supercell:
    """Enumerate all lattice sites with 0 < r <= radius of the defect.

    The defect replaces the atom at `defect_site` in the home cell; every
    periodic image of that site other than the home image is kept. Site
    order is (r^2, i, j, k, site index), which nests: enlarging the radius
    appends sites without reordering the existing prefix.
    """
    if radius <= 0:
        raise DomainError(f"radius must be positive, got {radius}")
    if not 0 <= defect_site < len(cell.sites):
        raise DomainError(f"defect_site {defect_site} outside 0..{len(cell.sites) - 1}")
    lat = cell.lattice
    frac = np.array([s.frac for s in cell.sites], dtype=float)
    defect_pos = frac[defect_site] @ lat

    # Images live at x.L with integer x; |x_i| <= R_eff * ||col_i(L^-1)||.
    slack = float(np.linalg.norm(lat, axis=1).sum())
    r_eff = radius + slack
    inv = np.linalg.inv(lat)
    n_max = np.ceil(r_eff * np.linalg.norm(inv, axis=0)).astype(int)
    axes = [np.arange(-n, n + 1) for n in n_max]
    gi, gj, gk = np.meshgrid(*axes, indexing="ij")
    shifts = np.stack([gi.ravel(), gj.ravel(), gk.ravel()], axis=1).astype(float)

    n_cells, n_sites = len(shifts), len(cell.sites)
    pos = (shifts[:, None, :] + frac[None, :, :]).reshape(-1, 3) @ lat - defect_pos
    r2 = np.einsum("ij,ij->i", pos, pos)
    keep = (r2 > 1e-12) & (r2 <= radius * radius * (1.0 + 1e-12))
    idx = np.nonzero(keep)[0]

    cell_idx, site_idx = np.divmod(idx, n_sites)
    i, j, k = (shifts[cell_idx, c].astype(int) for c in range(3))
    order = np.lexsort((site_idx, k, j, i, r2[idx]))
    idx = idx[order]
    site_idx = site_idx[order]

    elements = tuple(cell.sites[s].element for s in site_idx)
    occupancies = np.array([cell.sites[s].occupancy for s in site_idx])
    return Supercell(
        elements=elements,
        positions=pos[idx],
        occupancies=occupancies,
        radius=float(radius),
        defect_element=cell.sites[defect_site].element,
    )


def min_interatomic_distance(cell: CrystalCell, elem_a: str, elem_b: str) -> float:
    """Closest approach between atoms of two elements (angstrom).

    For elem_a == elem_b this is the nearest distinct-atom distance.
    Searches anchors in the home cell against a 3x3x3 block of images,
    which always covers nearest neighbours.
    """
    lat = cell.lattice
    frac = np.array([s.frac for s in cell.sites], dtype=float)
    anchors = [i for i, s in enumerate(cell.sites) if s.element == elem_a]
    targets = [i for i, s in enumerate(cell.sites) if s.element == elem_b]
    if not anchors or not targets:
        raise DomainError(f"cell has no {elem_a}/{elem_b} pair")
    rng = (-1, 0, 1)
    shifts = np.array([(i, j, k) for i in rng for j in rng for k in rng], dtype=float)
    target_pos = ((shifts[:, None, :] + frac[None, targets, :]).reshape(-1, 3)) @ lat
    best = math.inf
    for ai in anchors:
        d = np.linalg.norm(target_pos - frac[ai] @ lat, axis=1)
        d = d[d > 1e-6]
        if d.size:
            best = min(best, float(d.min()))
    if not math.isfinite(best):
        raise DomainError(f"no finite {elem_a}-{elem_b} distance in cell")
    return best
