"""Hahn-echo coherence of a central electron spin in a nuclear bath.

All Hamiltonians are in rad/s. The electron is S = 1/2 and enters only
through its projection: between ideal pulses the joint Hamiltonian
commutes with S_z, so each cluster evolves under two conditional
Hamiltonians h(+) and h(-) (hyperfine term signed by m_s = +-1/2). The
echo signal of a cluster is

    L(t) = Tr[u(-) u(+) u(-)^dag u(+)^dag] / dim,   u(s) = exp(-i h(s) t/2),

normalized so L(0) = 1. cluster_coherence_reference evolves the full
electron (x) cluster space through (pi/2)x - t/2 - (pi)x - t/2 instead
and exists to pin the fast path: both must agree to 1e-10.

CCE-1 multiplies single-spin signals; CCE-2 multiplies in pair
correlation factors L_ij / (L_i L_j), guarded deep in the decay tail
where both sides underflow.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bath import (
    BathInstance,
    BathSpin,
    ClusterSet,
    PAIR_MODES,
    enumerate_clusters,
    partition_by_species,
    sample_lattice_bath,
    sample_random_bath,
)
from .constants import ANGSTROM, HBAR, MU0_OVER_4PI, MU_B, MU_N
from .crystal import CrystalCell, build_supercell
from .errors import DomainError, UnsupportedOrderError
from .fitting import CoherenceCurve
from .isotopes import Isotope, IsotopeTable, isotope_densities
from .scaling import UNBOUNDED, combine_t2, t2_isotope
from .spin_kernel import embed, spin_operators

_DIV_GUARD = 1e-10


@dataclass(frozen=True)
class SimulationConfig:
    """Knobs for one ensemble simulation; immutable and thread-safe."""

    field_T: float
    electron_g: float = 2.0
    order: int = 2
    t_max: float | None = None  # None: 3x the scaling-law prediction
    n_times: int = 201
    n_instances: int = 20
    master_seed: int = 0
    r_bath: float = 35.0
    r_pair: float = 10.0
    pair_mode: str = "all"
    threads: int | None = None  # None: available parallelism

    def __post_init__(self):
        if self.field_T <= 0:
            raise DomainError(f"field_T must be positive, got {self.field_T}")
        if self.order not in (1, 2):
            raise UnsupportedOrderError(f"CCE order {self.order} not supported")
        if self.t_max is not None and self.t_max <= 0:
            raise DomainError(f"t_max must be positive, got {self.t_max}")
        if self.n_times < 2:
            raise DomainError(f"n_times must be at least 2, got {self.n_times}")
        if self.n_instances < 1:
            raise DomainError(f"n_instances must be at least 1, got {self.n_instances}")
        if self.r_bath <= 0 or self.r_pair <= 0:
            raise DomainError("r_bath and r_pair must be positive")
        if self.pair_mode not in PAIR_MODES:
            raise DomainError(f"pair_mode must be one of {PAIR_MODES}")
        if self.threads is not None and self.threads < 1:
            raise DomainError(f"threads must be at least 1, got {self.threads}")

    def time_grid(self, t_max: float | None = None) -> np.ndarray:
        resolved = t_max if t_max is not None else self.t_max
        if resolved is None:
            raise DomainError("t_max is unset; supply one or use ensemble_coherence")
        return np.linspace(0.0, resolved, self.n_times)


@dataclass(frozen=True)
class RandomBathSpec:
    """Uniform random bath of a single isotope at a given density (cm^-3)."""

    isotope: Isotope
    density_cm3: float


def nuclear_larmor(isotope: Isotope, field_T: float) -> float:
    """Signed Larmor angular frequency g mu_N B / hbar (rad/s)."""
    return isotope.g_factor * MU_N * field_T / HBAR


def electron_larmor(electron_g: float, field_T: float) -> float:
    return electron_g * MU_B * field_T / HBAR


def hyperfine_vector(
    position, isotope: Isotope, electron_g: float = 2.0
) -> np.ndarray:
    """Secular hyperfine field A (rad/s): coupling is S_z (A . I).

    A_k = (mu0/4pi) g_e mu_B g_i mu_N / hbar * (delta_zk - 3 nz nk) / r^3,
    position in angstroms. The Fermi contact term is omitted (point-dipole
    model).
    """
    pos = np.asarray(position, dtype=float)
    r = np.linalg.norm(pos)
    if r == 0:
        raise DomainError("hyperfine vector undefined at the defect position")
    n_hat = pos / r
    c = MU0_OVER_4PI * electron_g * MU_B * isotope.g_factor * MU_N / HBAR
    delta_z = np.array([0.0, 0.0, 1.0])
    return c / (r * ANGSTROM) ** 3 * (delta_z - 3.0 * n_hat[2] * n_hat)


def nuclear_dipolar_hamiltonian(spin_i: BathSpin, spin_j: BathSpin) -> np.ndarray:
    """Full dipole-dipole coupling on the pair product space (rad/s)."""
    rij = spin_j.position - spin_i.position
    r = np.linalg.norm(rij)
    if r == 0:
        raise DomainError("coincident nuclei have no finite dipolar coupling")
    n_hat = rij / r
    b = (
        MU0_OVER_4PI
        * MU_N**2
        / HBAR
        * spin_i.isotope.g_factor
        * spin_j.isotope.g_factor
        / (r * ANGSTROM) ** 3
    )
    ops_i = spin_operators(spin_i.isotope.spin)
    ops_j = spin_operators(spin_j.isotope.spin)
    di, dj = ops_i[0].shape[0], ops_j[0].shape[0]
    dims = [di, dj]
    ii = [embed(op, 0, dims) for op in ops_i]
    jj = [embed(op, 1, dims) for op in ops_j]
    dot = sum(a @ b_ for a, b_ in zip(ii, jj))
    proj_i = sum(n_hat[k] * ii[k] for k in range(3))
    proj_j = sum(n_hat[k] * jj[k] for k in range(3))
    return b * (dot - 3.0 * (proj_i @ proj_j))


def _conditional_hamiltonians(cluster, bath: BathInstance, config: SimulationConfig):
    """h(+), h(-) on the cluster product space, and its dimension."""
    spins = [bath.spins[i] for i in cluster]
    dims = [round(2 * s.isotope.spin) + 1 for s in spins]
    dim = int(np.prod(dims)) if dims else 1
    h_zeeman = np.zeros((dim, dim), dtype=complex)
    h_hyper = np.zeros((dim, dim), dtype=complex)
    for k, s in enumerate(spins):
        ops = [embed(op, k, dims) for op in spin_operators(s.isotope.spin)]
        h_zeeman -= nuclear_larmor(s.isotope, config.field_T) * ops[2]
        a_vec = hyperfine_vector(s.position, s.isotope, config.electron_g)
        h_hyper += sum(a_vec[c] * ops[c] for c in range(3))
    for k in range(len(spins)):
        for l in range(k + 1, len(spins)):
            pair_h = nuclear_dipolar_hamiltonian(spins[k], spins[l])
            h_zeeman += _embed_pair(pair_h, k, l, dims)
    return h_zeeman + 0.5 * h_hyper, h_zeeman - 0.5 * h_hyper, dim


def _embed_pair(pair_op: np.ndarray, k: int, l: int, dims) -> np.ndarray:
    """Lift an operator on slots (k, l) into the full product space."""
    full = np.eye(1, dtype=complex)
    dk, dl = dims[k], dims[l]
    # reshape pair_op into slot-wise factors is messier than a permute:
    # build in the (k, l, rest) ordering then transpose axes.
    order = [k, l] + [m for m in range(len(dims)) if m not in (k, l)]
    rest = [dims[m] for m in order[2:]]
    op = np.kron(pair_op, np.eye(int(np.prod(rest)) if rest else 1, dtype=complex))
    shaped = op.reshape([dims[m] for m in order] * 2)
    inv = np.argsort(order)
    n = len(dims)
    shaped = shaped.transpose(list(inv) + [n + m for m in inv])
    dim = int(np.prod(dims))
    return shaped.reshape(dim, dim)


def _echo_traces(h_plus: np.ndarray, h_minus: np.ndarray, taus: np.ndarray) -> np.ndarray:
    """Tr[u(-) u(+) u(-)^dag u(+)^dag] for each tau, batched over time.

    Uses eigendecompositions h(s) = V diag(lam) V^dag and
    W = V(+)^dag V(-): with Q(tau) = W exp(-i lam(-) tau) W^dag,
    the trace is sum_ab exp(+i (lam+_a - lam+_b) tau) |Q_ab|^2.
    """
    lam_p, v_p = np.linalg.eigh(h_plus)
    lam_m, v_m = np.linalg.eigh(h_minus)
    w = v_p.conj().T @ v_m
    d = len(lam_p)
    # G[c, (a b)] = W_ac conj(W_bc): Q_flat = phases_minus @ G
    g = (w.T[:, :, None] * w.conj().T[:, None, :]).reshape(d, d * d)
    phases_minus = np.exp(-1j * np.outer(taus, lam_m))
    q_flat = phases_minus @ g
    delta_plus = (lam_p[:, None] - lam_p[None, :]).reshape(-1)
    phase_plus = np.exp(1j * np.outer(taus, delta_plus))
    return np.einsum("ta,ta->t", phase_plus, np.abs(q_flat) ** 2)


def cluster_coherence(
    cluster, bath: BathInstance, config: SimulationConfig, times=None
) -> np.ndarray:
    """Hahn-echo signal of one cluster, complex, L(0) = 1.

    `cluster` is a tuple of bath indices with at most 2 members.
    """
    cluster = tuple(cluster)
    if len(cluster) > 2:
        raise UnsupportedOrderError(
            f"cluster of {len(cluster)} spins exceeds the pairwise expansion"
        )
    t = np.asarray(config.time_grid() if times is None else times, dtype=float)
    if not cluster:
        return np.ones(len(t), dtype=complex)
    h_plus, h_minus, dim = _conditional_hamiltonians(cluster, bath, config)
    return _echo_traces(h_plus, h_minus, t / 2.0) / dim


def cluster_coherence_reference(
    cluster, bath: BathInstance, config: SimulationConfig, times=None
) -> np.ndarray:
    """Full joint-space evolution of (pi/2)x - t/2 - (pi)x - t/2.

    The electron is carried explicitly: rho(0) = |-1/2><-1/2| (x) 1/d,
    pulses are ideal x-rotations on the electron, and the signal is
    Tr[rho(t) S+] normalized by its t = 0 value. Slower than
    cluster_coherence by design; used to validate it.
    """
    cluster = tuple(cluster)
    t = np.asarray(config.time_grid() if times is None else times, dtype=float)
    spins = [bath.spins[i] for i in cluster]
    dims = [2] + [round(2 * s.isotope.spin) + 1 for s in spins]
    dim_b = int(np.prod(dims[1:]))
    sx, sy, sz = spin_operators(0.5)
    s_plus = embed(sx + 1j * sy, 0, dims)
    sz_e = embed(sz, 0, dims)

    h = electron_larmor(config.electron_g, config.field_T) * sz_e
    for k, s in enumerate(spins):
        ops = [embed(op, k + 1, dims) for op in spin_operators(s.isotope.spin)]
        h -= nuclear_larmor(s.isotope, config.field_T) * ops[2]
        a_vec = hyperfine_vector(s.position, s.isotope, config.electron_g)
        h += sz_e @ sum(a_vec[c] * ops[c] for c in range(3))
    for k in range(len(spins)):
        for l in range(k + 1, len(spins)):
            pair_h = nuclear_dipolar_hamiltonian(spins[k], spins[l])
            h += _embed_pair(pair_h, k + 1, l + 1, [2] + dims[1:])

    evals, vecs = np.linalg.eigh(h)
    sx_full = embed(sx, 0, dims)
    ex, vx = np.linalg.eigh(sx_full)
    r90 = (vx * np.exp(-1j * ex * np.pi / 2)) @ vx.conj().T
    r180 = (vx * np.exp(-1j * ex * np.pi)) @ vx.conj().T

    rho0 = embed(np.diag([0.0, 1.0]), 0, dims).astype(complex) / dim_b
    out = np.empty(len(t), dtype=complex)
    for idx, tv in enumerate(t):
        u = (vecs * np.exp(-1j * evals * tv / 2.0)) @ vecs.conj().T
        seq = u @ r180 @ u @ r90
        rho = seq @ rho0 @ seq.conj().T
        out[idx] = np.trace(rho @ s_plus)
    seq0 = r180 @ r90
    rho_0t = seq0 @ rho0 @ seq0.conj().T
    denom = np.trace(rho_0t @ s_plus)
    return out / denom


def _guarded_pair_factor(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """num/den, clamped to |factor| <= 1 (phase kept) when den underflows."""
    out = np.ones_like(num)
    nz = den != 0
    raw = num[nz] / den[nz]
    mag = np.abs(raw)
    clamp = (np.abs(den[nz]) < _DIV_GUARD) & (mag > 1.0)
    raw[clamp] = raw[clamp] / mag[clamp]
    out[nz] = raw
    return out


def cce_curve(
    bath: BathInstance, clusters: ClusterSet, config: SimulationConfig, times=None
) -> np.ndarray:
    """Cluster-correlation expansion of the bath's echo signal (complex)."""
    t = np.asarray(config.time_grid() if times is None else times, dtype=float)
    total = np.ones(len(t), dtype=complex)
    singles = {}
    for i in clusters.singles:
        singles[i] = cluster_coherence((i,), bath, config, t)
        total = total * singles[i]
    for i, j in clusters.pairs:
        pair = cluster_coherence((i, j), bath, config, t)
        li = singles[i] if i in singles else cluster_coherence((i,), bath, config, t)
        lj = singles[j] if j in singles else cluster_coherence((j,), bath, config, t)
        total = total * _guarded_pair_factor(pair, li * lj)
    return total


def predicted_t2(structure_or_density, table: IsotopeTable):
    """Scaling-law T2 for a cell or random-bath spec, or UNBOUNDED."""
    if isinstance(structure_or_density, RandomBathSpec):
        spec = structure_or_density
        if spec.density_cm3 <= 0:
            return UNBOUNDED
        return t2_isotope(spec.isotope.g_factor, spec.isotope.spin, spec.density_cm3)
    cell = structure_or_density
    comps = [
        (t2_isotope(iso.g_factor, iso.spin, n), 2.0)
        for iso, n in isotope_densities(table, cell.element_densities())
        if n > 0
    ]
    return combine_t2(comps)


def _instance_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def ensemble_coherence(
    structure_or_density,
    table: IsotopeTable,
    config: SimulationConfig,
    defect_site: int = 0,
) -> CoherenceCurve:
    """Average |L(t)| over independently seeded bath instances.

    Accepts a CrystalCell (lattice bath at natural abundance) or a
    RandomBathSpec. stderr is the per-time sample standard deviation
    across instances (0 when n_instances = 1). The reduction runs in
    instance order, so results are bitwise independent of thread count.
    """
    if config.t_max is None:
        pred = predicted_t2(structure_or_density, table)
        if pred is UNBOUNDED:
            raise DomainError(
                "bath has no spinful isotopes; t_max cannot be derived, set it explicitly"
            )
        times = config.time_grid(3.0 * pred)
    else:
        times = config.time_grid()

    if isinstance(structure_or_density, CrystalCell):
        sites = build_supercell(structure_or_density, config.r_bath, defect_site)

        def make_bath(seed: int) -> BathInstance:
            return sample_lattice_bath(sites, table, seed)

    elif isinstance(structure_or_density, RandomBathSpec):
        spec = structure_or_density

        def make_bath(seed: int) -> BathInstance:
            return sample_random_bath(spec.isotope, spec.density_cm3, config.r_bath, seed)

    else:
        raise DomainError(
            f"expected CrystalCell or RandomBathSpec, got {type(structure_or_density)!r}"
        )

    def one_instance(index: int) -> np.ndarray:
        bath = make_bath(_instance_seed(config.master_seed, index))
        clusters = enumerate_clusters(bath, config.order, config.r_pair)
        clusters = partition_by_species(bath, clusters, config.pair_mode)
        return np.abs(cce_curve(bath, clusters, config, times))

    m = config.n_instances
    workers = config.threads if config.threads is not None else (os.cpu_count() or 1)
    workers = max(1, min(workers, m))
    if workers == 1:
        signals = [one_instance(k) for k in range(m)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            signals = list(pool.map(one_instance, range(m)))
    stack = np.stack(signals)
    mean = stack.mean(axis=0)
    stderr = stack.std(axis=0, ddof=1) if m > 1 else np.zeros_like(mean)
    return CoherenceCurve(times_s=times, values=mean, stderr=stderr)
