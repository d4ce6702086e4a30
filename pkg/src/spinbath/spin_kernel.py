"""Dense spin operators and small-matrix propagators.

Everything here works in rad/s: Hamiltonians are energies divided by
hbar, so exp(-i H t) never touches physical constants. Matrices stay
dense complex128; cluster dimensions are tiny (a two-spin cluster of
I=5/2 nuclei is 36x36), so eigendecomposition beats any sparse route.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import DomainError

_HERMITICITY_RTOL = 1e-10


@lru_cache(maxsize=64)
def _spin_operators_cached(two_i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dim = two_i + 1
    i_val = two_i / 2.0
    m = i_val - np.arange(dim)  # basis ordered m = I, I-1, ..., -I
    # <m+1| S+ |m> = sqrt(I(I+1) - m(m+1))
    raise_elems = np.sqrt(i_val * (i_val + 1.0) - m[1:] * (m[1:] + 1.0))
    sp = np.zeros((dim, dim), dtype=complex)
    sp[np.arange(dim - 1), np.arange(1, dim)] = raise_elems
    sm = sp.conj().T
    sx = 0.5 * (sp + sm)
    sy = -0.5j * (sp - sm)
    sz = np.diag(m.astype(complex))
    for op in (sx, sy, sz):
        op.setflags(write=False)
    return sx, sy, sz


def spin_operators(spin: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Sx, Sy, Sz) for quantum number `spin`, basis m = I ... -I.

    The arrays are cached and write-protected; copy before mutating.
    """
    two_i = round(2 * spin)
    if two_i < 0 or abs(2 * spin - two_i) > 1e-12:
        raise DomainError(f"spin must be a non-negative half-integer, got {spin}")
    return _spin_operators_cached(two_i)


def embed(op: np.ndarray, slot: int, dims: list[int]) -> np.ndarray:
    """Lift a single-site operator into the tensor product of `dims`.

    Kronecker ordering is dims[0] (x) dims[1] (x) ..., so slot 0 varies
    slowest. The operator must be square and match dims[slot].
    """
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise DomainError(f"operator must be square, got shape {op.shape}")
    if not 0 <= slot < len(dims):
        raise DomainError(f"slot {slot} outside dims of length {len(dims)}")
    if op.shape[0] != dims[slot]:
        raise DomainError(f"operator dim {op.shape[0]} != dims[{slot}] = {dims[slot]}")
    left = math.prod(dims[:slot])
    right = math.prod(dims[slot + 1 :])
    return np.kron(np.kron(np.eye(left, dtype=complex), op), np.eye(right, dtype=complex))


def check_hermitian(h: np.ndarray) -> np.ndarray:
    """Validate Hermiticity to relative 1e-10; returns the array."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DomainError(f"Hamiltonian must be square, got shape {h.shape}")
    scale = np.abs(h).max()
    dev = np.abs(h - h.conj().T).max()
    if dev > _HERMITICITY_RTOL * max(scale, 1.0):
        raise DomainError(f"Hamiltonian is not Hermitian: max |H - H^dag| = {dev:.3e}")
    return h


def propagator(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) through eigendecomposition of a Hermitian H (rad/s)."""
    h = check_hermitian(h)
    evals, vecs = np.linalg.eigh(h)
    phases = np.exp(-1j * evals * t)
    return (vecs * phases) @ vecs.conj().T
