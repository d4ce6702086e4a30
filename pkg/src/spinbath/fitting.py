"""Curve fitting: stretched-exponential decay and log-log power laws.

The stretched-exponential fit works in linear space with a damped
Gauss-Newton loop over theta = (ln T2, ln eta), so both parameters stay
positive by construction and the Jacobian is analytic. Points below a
floor (default |L| < 0.02) are excluded: the deep tail of a cluster
expansion is numerically unreliable and would otherwise drag the fit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FitError, FitRangeError

_GRAD_TOL = 1e-10
_MAX_ITERS = 200


@dataclass(frozen=True)
class CoherenceCurve:
    """|L(t)| samples with per-point ensemble standard errors."""

    times_s: np.ndarray
    values: np.ndarray
    stderr: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=float)
        v = np.asarray(self.values, dtype=float)
        e = np.asarray(self.stderr, dtype=float)
        if not (t.shape == v.shape == e.shape) or t.ndim != 1:
            raise DomainError("curve arrays must be 1-D and equal length")
        for name, arr in (("times_s", t), ("values", v), ("stderr", e)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.times_s)


@dataclass(frozen=True)
class T2Fit:
    t2: float
    eta: float
    residual: float
    stderr_t2: float
    stderr_eta: float

    def to_json_dict(self) -> dict:
        return {
            "t2_s": self.t2,
            "eta": self.eta,
            "stderr_t2_s": self.stderr_t2,
            "stderr_eta": self.stderr_eta,
            "rms_residual": self.residual,
        }


@dataclass(frozen=True)
class PowerLawFit:
    coefficient: float
    exponent: float
    stderr_exponent: float


def _model_and_jacobian(theta, t):
    ln_t2, ln_eta = theta
    t2, eta = np.exp(ln_t2), np.exp(ln_eta)
    u = np.zeros_like(t)
    pos = t > 0
    u[pos] = (t[pos] / t2) ** eta
    m = np.exp(-u)
    d_lnt2 = m * eta * u
    d_lneta = np.zeros_like(t)
    # d m / d ln(eta) = -m * eta * u * ln(t/t2); the t = 0 limit is 0
    d_lneta[pos] = -m[pos] * eta * u[pos] * np.log(t[pos] / t2)
    return m, np.stack([d_lnt2, d_lneta], axis=1)


def _initial_eta_t2(t, y):
    below = np.nonzero(y <= np.exp(-1.0))[0]
    if below.size:
        k = below[0]
        if k == 0:
            t2_0 = t[0] if t[0] > 0 else t[t > 0][0]
        else:
            y0, y1 = y[k - 1], y[k]
            frac = (y0 - np.exp(-1.0)) / (y0 - y1) if y0 != y1 else 0.5
            t2_0 = t[k - 1] + frac * (t[k] - t[k - 1])
    else:
        # has not reached 1/e; extrapolate from the last point assuming eta ~ 2
        t2_0 = t[-1] / max(np.sqrt(-np.log(max(y[-1], 1e-6))), 0.3)
    return max(t2_0, t[t > 0][0] * 1e-3)


def fit_stretched_exponential(
    curve: CoherenceCurve,
    floor: float = 0.02,
    weighted: bool = True,
    stderr_floor_frac: float = 0.05,
) -> T2Fit:
    """Fit |L(t)| to exp(-(t/T2)^eta).

    Weights are 1/stderr^2 with each stderr floored at stderr_floor_frac
    times the largest one: sample standard deviations from a few dozen
    instances are themselves noisy, and the near-zero spread on the early
    shoulder would otherwise outweigh the decay knee by many orders of
    magnitude and pin eta. An all-zero stderr column means an unweighted
    fit. Raises FitRangeError when the curve never decays below 0.9 or
    too few points survive the floor, FitError on non-convergence or an
    eta outside [0.5, 6].
    """
    if len(curve) < 8:
        raise FitRangeError(f"need at least 8 points, got {len(curve)}")
    keep = curve.values >= floor
    t = curve.times_s[keep]
    y = curve.values[keep]
    sig = curve.stderr[keep]
    if len(t) < 8:
        raise FitRangeError(f"only {len(t)} points remain above the floor {floor}")
    if y.min() > 0.9:
        raise FitRangeError(
            f"curve only decays to {y.min():.4f}; extend t_max so it falls below 0.9"
        )

    if weighted and np.any(sig > 0):
        sig_eff = np.maximum(sig, stderr_floor_frac * sig.max())
        w = 1.0 / sig_eff**2
    else:
        w = np.ones_like(y)

    best = None
    t2_0 = _initial_eta_t2(t, y)
    for eta_0 in (1.0, 2.0, 3.0):
        theta = np.array([np.log(t2_0), np.log(eta_0)])
        m, _ = _model_and_jacobian(theta, t)
        sse = float(np.sum(w * (y - m) ** 2))
        if best is None or sse < best[1]:
            best = (theta, sse)
    theta, sse = best

    lam = 1e-3
    converged = False
    for _ in range(_MAX_ITERS):
        m, jac = _model_and_jacobian(theta, t)
        r = y - m
        g = jac.T @ (w * r)
        scale = max(float(np.sum(w * y * y)), 1e-300)
        if np.linalg.norm(g) < _GRAD_TOL * scale:
            converged = True
            break
        jtj = jac.T @ (w[:, None] * jac)
        stepped = False
        for _ in range(25):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj)), g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                m_new, _ = _model_and_jacobian(theta + step, t)
                sse_new = float(np.sum(w * (y - m_new) ** 2))
                if sse_new <= sse:
                    theta = theta + step
                    if sse - sse_new <= 1e-14 * max(sse, 1e-300):
                        converged = True
                    sse = sse_new
                    lam = max(lam / 10.0, 1e-12)
                    stepped = True
                    break
            lam *= 10.0
        if converged:
            break
        if not stepped:
            converged = sse < 1e-28
            break
    if not converged:
        m, jac = _model_and_jacobian(theta, t)
        g = jac.T @ (w * (y - m))
        raise FitError(
            f"stretched-exponential fit did not converge: sse={sse:.3e}, "
            f"|grad|={np.linalg.norm(g):.3e}, theta={theta}"
        )

    t2, eta = float(np.exp(theta[0])), float(np.exp(theta[1]))
    if not 0.5 <= eta <= 6.0:
        raise FitError(f"fitted eta = {eta:.3f} outside the trusted range [0.5, 6]")

    m, jac = _model_and_jacobian(theta, t)
    resid = y - m
    dof = max(len(t) - 2, 1)
    s2 = float(np.sum(w * resid**2)) / dof
    jtj = jac.T @ (w[:, None] * jac)
    try:
        cov = s2 * np.linalg.inv(jtj)
        stderr_lnt2 = float(np.sqrt(max(cov[0, 0], 0.0)))
        stderr_lneta = float(np.sqrt(max(cov[1, 1], 0.0)))
    except np.linalg.LinAlgError:
        stderr_lnt2 = stderr_lneta = float("nan")
    rms = float(np.sqrt(np.mean(resid**2)))
    return T2Fit(
        t2=t2,
        eta=eta,
        residual=rms,
        stderr_t2=t2 * stderr_lnt2,
        stderr_eta=eta * stderr_lneta,
    )


def fit_power_law(points) -> PowerLawFit:
    """Fit y = c * x^p by linear regression in log-log space.

    `points` holds (x, y) or (x, y, sigma_y) tuples; sigma weighting
    applies only when every point carries a positive sigma. Exact (to
    rounding) on noiseless power-law data; order-independent.
    """
    rows = []
    for p in points:
        if len(p) == 2:
            x, y = p
            sig = None
        else:
            x, y, sig = p
        if x <= 0 or y <= 0:
            raise DomainError(f"power-law fit needs positive data, got ({x}, {y})")
        rows.append((float(x), float(y), sig))
    if len(rows) < 3:
        raise DomainError(f"power-law fit needs at least 3 points, got {len(rows)}")
    rows.sort(key=lambda r: (r[0], r[1]))
    x = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    sigs = [r[2] for r in rows]
    if all(s is not None and s > 0 for s in sigs):
        w = (y / np.array(sigs, dtype=float)) ** 2
    else:
        w = np.ones_like(y)

    lx, ly = np.log(x), np.log(y)
    # solve() on the rank-1 normal matrix can return garbage without raising
    if np.ptp(lx) < 1e-12:
        raise FitError("power-law fit is degenerate (all x identical?)")
    design = np.stack([np.ones_like(lx), lx], axis=1)
    a = design.T @ (w[:, None] * design)
    b = design.T @ (w * ly)
    try:
        beta = np.linalg.solve(a, b)
        cov = np.linalg.inv(a)
    except np.linalg.LinAlgError:
        raise FitError("power-law fit is degenerate (all x identical?)") from None
    resid = ly - design @ beta
    dof = max(len(x) - 2, 1)
    s2 = float(np.sum(w * resid**2)) / dof
    return PowerLawFit(
        coefficient=float(np.exp(beta[0])),
        exponent=float(beta[1]),
        stderr_exponent=float(np.sqrt(max(s2 * cov[1, 1], 0.0))),
    )
