"""Algebraic coherence-time model and its calibration pipeline.

The per-isotope law T2_i = c |g_i|^a I_i^b n_i^d (seconds, densities in
cm^-3) combines across baths as (sum T2_i^-eta_i)^(-1/eta'). Hosts with
no spinful isotope get the UNBOUNDED sentinel rather than an overflow
float: screening must rank them as a category, not a magnitude.

calibrate_constants re-derives the constants from fitted simulation data
in three stages: per-isotope density fits, a shared-slope regression of
the per-isotope prefactors against |g|, and a final fit of the per-spin
intercepts against I.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import MU0_OVER_4PI, MU_N
from .errors import CalibrationError, DomainError, HomonuclearPairError
from .fitting import fit_power_law
from .isotopes import Isotope, IsotopeTable

_ANGSTROM = 1e-10


class _UnboundedType:
    """Sentinel for hosts whose nuclear bath imposes no T2 limit."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNBOUNDED"

    def __reduce__(self):
        return (_UnboundedType, ())


UNBOUNDED = _UnboundedType()


@dataclass(frozen=True)
class ScalingConstants:
    c: float = 1.5e18  # cm^-3 s
    g_exponent: float = -1.6
    i_exponent: float = -1.1
    n_exponent: float = -1.0
    ge_exponent: float = -0.375

    def __post_init__(self):
        if self.c <= 0:
            raise DomainError(f"scaling constant c must be positive, got {self.c}")
        for name in ("g_exponent", "i_exponent", "n_exponent", "ge_exponent"):
            if getattr(self, name) >= 0:
                raise DomainError(f"{name} must be negative, got {getattr(self, name)}")


DEFAULT_CONSTANTS = ScalingConstants()


@dataclass(frozen=True)
class DecouplingEstimate:
    b_dec: float  # tesla
    pair: tuple[Isotope, Isotope]
    l: float  # angstrom


def t2_isotope(
    g: float, spin: float, n: float, constants: ScalingConstants = DEFAULT_CONSTANTS
) -> float:
    """Single-isotope T2 in seconds at spin density n (cm^-3)."""
    if n <= 0:
        raise DomainError(f"density must be positive, got {n}")
    if spin <= 0:
        raise DomainError(f"spin must be positive, got {spin}")
    if g == 0:
        raise DomainError("g-factor must be nonzero")
    return float(
        constants.c
        * abs(g) ** constants.g_exponent
        * spin**constants.i_exponent
        * n**constants.n_exponent
    )


def transition_prefactor(
    g_eff: float, constants: ScalingConstants = DEFAULT_CONSTANTS
) -> float:
    """Prefactor c adjusted for an effective electron g away from 2."""
    if g_eff <= 0:
        raise DomainError(f"effective g must be positive, got {g_eff}")
    return constants.c * (g_eff / 2.0) ** constants.ge_exponent


def combine_t2(components, eta_prime: float = 2.0):
    """Combine per-bath (T2_i, eta_i) into one T2; empty -> UNBOUNDED."""
    pairs = list(components)
    if not pairs:
        return UNBOUNDED
    total = 0.0
    for t2_i, eta_i in pairs:
        if t2_i <= 0:
            raise DomainError(f"component T2 must be positive, got {t2_i}")
        total += t2_i ** (-eta_i)
    return float(total ** (-1.0 / eta_prime))


def _exact_combined_t2(t2s, etas) -> float:
    """Solve sum_i (T2 / T2_i)^eta_i = 1 by bisection to 1e-12 relative."""

    def f(t):
        return sum((t / t2_i) ** eta_i for t2_i, eta_i in zip(t2s, etas)) - 1.0

    hi = min(t2s)  # f(hi) >= 0 since one ratio is already 1
    lo = hi * 1e-6
    while f(lo) > 0:
        lo *= 1e-3
        if lo < 1e-300:
            raise DomainError("bisection bracket collapsed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


def combination_error_bound_check(
    ratio: float, eta_i: float | None = None, eta_j: float | None = None
) -> float:
    """Worst-case relative deviation of the eta'=2 combination formula.

    Compares combine_t2 against the exact implicit definition for a
    two-component bath with T2_j / T2_i = ratio. With eta values given,
    evaluates that point; with both omitted, returns the maximum over a
    21x21 grid of (eta_i, eta_j) in [2, 3].
    """
    if not 0 < ratio <= 1:
        raise DomainError(f"ratio must be in (0, 1], got {ratio}")
    if (eta_i is None) != (eta_j is None):
        raise DomainError("provide both eta values or neither")

    def deviation(ei, ej):
        # the approximation assumes eta = 2 everywhere; the reference uses
        # the true stretching exponents in the implicit definition
        approx = combine_t2([(1.0, 2.0), (ratio, 2.0)])
        exact = _exact_combined_t2((1.0, ratio), (ei, ej))
        return abs(approx - exact) / exact

    if eta_i is not None:
        return deviation(eta_i, eta_j)
    grid = np.linspace(2.0, 3.0, 21)
    return max(deviation(ei, ej) for ei in grid for ej in grid)


def decoupling_field(iso_i: Isotope, iso_j: Isotope, l: float) -> DecouplingEstimate:
    """Field above which the i-j pair's flip-flops are frozen (tesla).

    l is the nearest-neighbor distance in angstroms. Identical g-factors
    never decouple (the pair stays resonant at any field).
    """
    if l <= 0:
        raise DomainError(f"distance must be positive, got {l}")
    gi, gj = iso_i.g_factor, iso_j.g_factor
    if gi == gj:
        raise HomonuclearPairError(
            f"{iso_i} and {iso_j} share g = {gi}; no decoupling field exists"
        )
    b = MU0_OVER_4PI * MU_N / (l * _ANGSTROM) ** 3 * abs(gi * gj / (gi - gj))
    return DecouplingEstimate(b_dec=b, pair=(iso_i, iso_j), l=float(l))


def element_table(
    table: IsotopeTable,
    n_element: float,
    constants: ScalingConstants = DEFAULT_CONSTANTS,
    exclude: frozenset[str] = frozenset({"He"}),
):
    """T2 per hypothetical single-element host at natural abundance.

    Every element in the table appears (minus `exclude`), keyed in
    atomic-number order; spin-free hosts map to UNBOUNDED. Helium is
    excluded by default: it has no ambient-pressure solid phase to host
    a defect.
    """
    if n_element <= 0:
        raise DomainError(f"element density must be positive, got {n_element}")
    out = {}
    for el in table.elements():
        if el in exclude:
            continue
        comps = []
        for iso in table.spinful_isotopes_of(el):
            n_i = iso.abundance * n_element
            if n_i > 0:
                comps.append((t2_isotope(iso.g_factor, iso.spin, n_i, constants), 2.0))
        out[el] = combine_t2(comps)
    return out


@dataclass(frozen=True)
class CalibrationResult:
    constants: ScalingConstants
    stderr_c: float
    stderr_g_exponent: float
    stderr_i_exponent: float
    per_isotope: dict  # "13C" -> {"a_i": float, "n_exponent": float}

    def to_json_dict(self) -> dict:
        return {
            "c_cm3_s": self.constants.c,
            "g_exponent": self.constants.g_exponent,
            "i_exponent": self.constants.i_exponent,
            "n_exponent": self.constants.n_exponent,
            "ge_exponent": self.constants.ge_exponent,
            "stderr_c_cm3_s": self.stderr_c,
            "stderr_g_exponent": self.stderr_g_exponent,
            "stderr_i_exponent": self.stderr_i_exponent,
            "per_isotope": self.per_isotope,
        }


def calibrate_constants(dataset) -> CalibrationResult:
    """Re-derive ScalingConstants from (Isotope, n_i, T2_i) triples.

    Stage 1 fits T2 vs n per isotope, checks the exponent is -1.0 within
    0.1, then locks it to -1.0 and extracts a_i as the geometric mean of
    T2*n. Stage 2 regresses log a_i on log|g_i| with one intercept per
    distinct I (shared slope beta). Stage 3 fits those intercepts against
    I; two distinct I values are solved exactly, three or more by a
    power-law fit. Raises CalibrationError naming whichever axis lacks
    span.
    """
    by_iso: dict[tuple[str, int], list[tuple[float, float]]] = {}
    iso_obj: dict[tuple[str, int], Isotope] = {}
    for iso, n_i, t2_i in dataset:
        if n_i <= 0 or t2_i <= 0:
            raise DomainError(f"calibration point ({n_i}, {t2_i}) must be positive")
        key = (iso.element_symbol, iso.mass_number)
        by_iso.setdefault(key, []).append((float(n_i), float(t2_i)))
        iso_obj[key] = iso

    if len(by_iso) < 4:
        raise CalibrationError(
            f"need at least 4 isotopes to calibrate, got {len(by_iso)}"
        )

    a_i: dict[tuple[str, int], float] = {}
    per_isotope_report = {}
    for key, pts in by_iso.items():
        densities = {n for n, _ in pts}
        if len(densities) < 3:
            raise CalibrationError(
                f"isotope {key[1]}{key[0]} has {len(densities)} distinct densities; "
                "need at least 3 to fit the density axis"
            )
        fit = fit_power_law([(n, t2) for n, t2 in pts])
        if abs(fit.exponent - (-1.0)) > 0.1:
            raise CalibrationError(
                f"density exponent for {key[1]}{key[0]} is {fit.exponent:.3f}, "
                "outside -1.0 +/- 0.1; the density grid is not in the scaling regime"
            )
        a = math.exp(np.mean([math.log(t2 * n) for n, t2 in pts]))
        a_i[key] = a
        per_isotope_report[f"{key[1]}{key[0]}"] = {
            "a_i_cm3_s": a,
            "n_exponent": fit.exponent,
            "stderr_n_exponent": fit.stderr_exponent,
        }

    spins = sorted({iso_obj[k].spin for k in by_iso})
    if len(spins) < 2:
        raise CalibrationError(
            "all isotopes share I = {}; need at least 2 distinct nuclear spin "
            "values to fit the I axis".format(spins[0])
        )

    # log a_i = log b(I) + beta log|g_i|, one shared beta
    keys = sorted(a_i)
    n_rows = len(keys)
    n_cols = 1 + len(spins)
    design = np.zeros((n_rows, n_cols))
    target = np.zeros(n_rows)
    for r, key in enumerate(keys):
        iso = iso_obj[key]
        design[r, 0] = math.log(abs(iso.g_factor))
        design[r, 1 + spins.index(iso.spin)] = 1.0
        target[r] = math.log(a_i[key])
    if np.linalg.matrix_rank(design) < n_cols:
        raise CalibrationError(
            "g-factor axis is degenerate: isotopes within an I series need "
            "distinct |g| values"
        )
    sol, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    beta = float(sol[0])
    log_b = sol[1:]
    resid = target - design @ sol
    dof = max(n_rows - n_cols, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(design.T @ design)
    stderr_beta = math.sqrt(max(cov[0, 0], 0.0))
    stderr_log_b = np.sqrt(np.maximum(np.diag(cov)[1:], 0.0))

    if len(spins) >= 3:
        fit = fit_power_law(
            [
                (spins[j], math.exp(log_b[j]), math.exp(log_b[j]) * stderr_log_b[j])
                if stderr_log_b[j] > 0
                else (spins[j], math.exp(log_b[j]))
                for j in range(len(spins))
            ]
        )
        c_fit, i_exp, stderr_i = fit.coefficient, fit.exponent, fit.stderr_exponent
        stderr_log_c = stderr_i * abs(math.log(spins[0])) if spins[0] != 1 else 0.0
    else:
        i0, i1 = spins
        denom = math.log(i0 / i1)
        i_exp = float((log_b[0] - log_b[1]) / denom)
        c_fit = math.exp(log_b[0] - i_exp * math.log(i0))
        stderr_i = math.sqrt(stderr_log_b[0] ** 2 + stderr_log_b[1] ** 2) / abs(denom)
        d_logc = np.array([1.0 - math.log(i0) / denom, math.log(i0) / denom])
        stderr_log_c = math.sqrt(
            (d_logc[0] * stderr_log_b[0]) ** 2 + (d_logc[1] * stderr_log_b[1]) ** 2
        )

    try:
        constants = ScalingConstants(
            c=c_fit, g_exponent=beta, i_exponent=i_exp, n_exponent=-1.0
        )
    except DomainError as exc:
        raise CalibrationError(f"calibrated constants are unphysical: {exc}") from None
    return CalibrationResult(
        constants=constants,
        stderr_c=c_fit * stderr_log_c,
        stderr_g_exponent=stderr_beta,
        stderr_i_exponent=stderr_i,
        per_isotope=per_isotope_report,
    )
