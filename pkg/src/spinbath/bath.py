"""Stochastic nuclear-spin baths and CCE cluster enumeration.

Sampling is a pure function of (inputs, integer seed). The lattice
sampler consumes exactly two uniform draws per site in supercell order,
and build_supercell orders sites by distance from the defect, so a bath
drawn in a large supercell restricted to a smaller radius is identical
to the bath drawn directly in the smaller supercell with the same seed.
Convergence tests lean on that nesting to compare radii without
resampling noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .crystal import Supercell
from .errors import DomainError, UnsupportedOrderError
from .isotopes import Isotope, IsotopeTable

PAIR_MODES = ("all", "homonuclear-only", "heteronuclear-only")


@dataclass(frozen=True)
class BathSpin:
    position: np.ndarray  # angstrom, defect at origin
    isotope: Isotope

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,):
            raise DomainError(f"position must be a 3-vector, got shape {pos.shape}")
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)
        if self.isotope.spin <= 0:
            raise DomainError(f"bath spin {self.isotope} has no nuclear spin")


@dataclass(frozen=True)
class BathInstance:
    spins: tuple[BathSpin, ...]
    seed: int
    radius: float
    provenance: str  # "lattice" | "random-uniform"
    positions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.spins:
            pos = np.stack([s.position for s in self.spins])
        else:
            pos = np.zeros((0, 3))
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return len(self.spins)

    def species_key(self, i: int) -> tuple[str, int]:
        iso = self.spins[i].isotope
        return (iso.element_symbol, iso.mass_number)

    def to_csv(self) -> str:
        """Debug dump: one row per spin, positions in angstroms."""
        lines = ["x_A,y_A,z_A,element,A"]
        for s in self.spins:
            x, y, z = (float(c) for c in s.position)
            lines.append(
                f"{x!r},{y!r},{z!r},{s.isotope.element_symbol},{s.isotope.mass_number}"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ClusterSet:
    singles: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.singles) + len(self.pairs)


def sample_lattice_bath(sites: Supercell, table: IsotopeTable, seed: int) -> BathInstance:
    """Assign isotopes to supercell sites by natural abundance.

    Each site consumes two uniforms: one picks the isotope among all of
    the element's isotopes (spin-0 included, so the stream advances
    identically whatever is kept), one retains the site with probability
    = occupancy. Only spinful assignments survive. Partially occupied
    sites are independent Bernoulli draws.
    """
    rng = np.random.default_rng(seed)
    n = len(sites)
    u = rng.random((n, 2))

    chosen = np.full(n, -1)
    iso_lists: dict[str, list[Isotope]] = {}
    elements = np.array(sites.elements)
    for el in dict.fromkeys(sites.elements):
        isos = table.isotopes_of(el)  # ascending mass number
        iso_lists[el] = isos
        cum = np.cumsum([i.abundance_percent for i in isos])
        cum /= cum[-1]
        mask = elements == el
        idx = np.searchsorted(cum, u[mask, 0], side="right")
        chosen[mask] = np.minimum(idx, len(isos) - 1)

    keep = u[:, 1] < sites.occupancies
    spins = []
    for i in np.nonzero(keep)[0]:
        iso = iso_lists[elements[i]][chosen[i]]
        if iso.spin > 0:
            spins.append(BathSpin(position=sites.positions[i], isotope=iso))
    return BathInstance(
        spins=tuple(spins), seed=int(seed), radius=sites.radius, provenance="lattice"
    )


def sample_random_bath(
    isotope: Isotope, density: float, radius: float, seed: int
) -> BathInstance:
    """Poisson-distributed uniform bath of one isotope in a ball.

    density is in cm^-3, radius in angstroms.
    """
    if density < 0:
        raise DomainError(f"density must be non-negative, got {density}")
    if radius <= 0:
        raise DomainError(f"radius must be positive, got {radius}")
    if isotope.spin <= 0:
        raise DomainError(f"{isotope} has no nuclear spin")
    rng = np.random.default_rng(seed)
    volume_cm3 = (4.0 / 3.0) * np.pi * (radius * 1e-8) ** 3
    n = int(rng.poisson(density * volume_cm3))
    direction = rng.normal(size=(n, 3))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    r = radius * rng.random(n) ** (1.0 / 3.0)
    positions = direction / norms * r[:, None]
    spins = tuple(BathSpin(position=p, isotope=isotope) for p in positions)
    return BathInstance(
        spins=spins, seed=int(seed), radius=float(radius), provenance="random-uniform"
    )


_REFERENCE_DENSITY_CM3 = 1.8861e21  # natural 13C in diamond


def density_scaled_cutoffs(
    density: float, r_bath: float = 35.0, r_pair: float = 10.0
) -> tuple[float, float]:
    """Scale cutoff radii so a random bath keeps a fixed expected spin count.

    The reference radii are sized for diamond's natural 13C density; scaling
    both by (n_ref / n)^(1/3) keeps the truncation error density-independent,
    which matters when comparing T2 across densities.
    """
    if density <= 0:
        raise DomainError(f"density must be positive, got {density}")
    scale = (_REFERENCE_DENSITY_CM3 / density) ** (1.0 / 3.0)
    return r_bath * scale, r_pair * scale


def enumerate_clusters(bath: BathInstance, order: int, r_pair: float) -> ClusterSet:
    """All singles, plus (for order 2) pairs within r_pair of each other."""
    if order not in (1, 2):
        raise UnsupportedOrderError(f"CCE order {order} not supported; use 1 or 2")
    if r_pair <= 0:
        raise DomainError(f"r_pair must be positive, got {r_pair}")
    singles = tuple(range(len(bath)))
    if order == 1 or len(bath) < 2:
        return ClusterSet(singles=singles, pairs=())
    pos = bath.positions
    diff = pos[:, None, :] - pos[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    ii, jj = np.nonzero(np.triu(d2 <= r_pair * r_pair, k=1))
    return ClusterSet(singles=singles, pairs=tuple(zip(ii.tolist(), jj.tolist())))


def partition_by_species(bath: BathInstance, clusters: ClusterSet, mode: str) -> ClusterSet:
    """Filter pairs by isotope identity; singles always pass through."""
    if mode not in PAIR_MODES:
        raise DomainError(f"pair mode must be one of {PAIR_MODES}, got {mode!r}")
    if mode == "all":
        return clusters
    keep_same = mode == "homonuclear-only"
    pairs = tuple(
        (i, j)
        for i, j in clusters.pairs
        if (bath.species_key(i) == bath.species_key(j)) == keep_same
    )
    return ClusterSet(singles=clusters.singles, pairs=pairs)
