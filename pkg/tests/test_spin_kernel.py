from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from spinbath.errors import DomainError
from spinbath.spin_kernel import check_hermitian, embed, propagator, spin_operators

from .oracles import spin_matrices


@pytest.mark.parametrize("two_i", range(1, 10))
def test_commutator_algebra(two_i):
    ix, iy, iz = spin_operators(Fraction(two_i, 2))
    for a, b, c in ((ix, iy, iz), (iy, iz, ix), (iz, ix, iy)):
        np.testing.assert_allclose(a @ b - b @ a, 1j * c, atol=1e-12)


@pytest.mark.parametrize("two_i", range(1, 10))
def test_casimir(two_i):
    spin = two_i / 2
    ix, iy, iz = spin_operators(spin)
    total = ix @ ix + iy @ iy + iz @ iz
    np.testing.assert_allclose(
        total, spin * (spin + 1) * np.eye(two_i + 1), atol=1e-12
    )


@pytest.mark.parametrize("two_i", range(1, 8))
def test_matches_ladder_construction(two_i):
    ours = spin_operators(two_i / 2)
    reference = spin_matrices(two_i / 2)
    for a, b in zip(ours, reference):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_operators_are_write_protected():
    ix, _, _ = spin_operators(0.5)
    with pytest.raises(ValueError):
        ix[0, 0] = 99.0


def test_rejects_non_half_integer_spin():
    with pytest.raises(DomainError):
        spin_operators(0.3)
    with pytest.raises(DomainError):
        spin_operators(-0.5)


@st.composite
def _hermitian(draw, max_dim=5):
    dim = draw(st.integers(min_value=2, max_value=max_dim))
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (m + m.conj().T) / 2


@given(h=_hermitian(), t=st.floats(min_value=-5.0, max_value=5.0))
@settings(max_examples=60)
def test_propagator_is_unitary(h, t):
    u = propagator(h, t)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(h.shape[0]), atol=1e-10)


@given(
    h=_hermitian(),
    t1=st.floats(min_value=-2.0, max_value=2.0),
    t2=st.floats(min_value=-2.0, max_value=2.0),
)
@settings(max_examples=60)
def test_propagator_group_property(h, t1, t2):
    u12 = propagator(h, t1 + t2)
    np.testing.assert_allclose(u12, propagator(h, t1) @ propagator(h, t2), atol=1e-9)
    np.testing.assert_allclose(propagator(h, 0.0), np.eye(h.shape[0]), atol=1e-12)


@given(h=_hermitian(), t=st.floats(min_value=-3.0, max_value=3.0))
@settings(max_examples=40)
def test_propagator_matches_expm(h, t):
    np.testing.assert_allclose(propagator(h, t), expm(-1j * h * t), atol=1e-9)


def test_embed_places_operator_in_slot():
    ix, _, iz = spin_operators(0.5)
    dims = [2, 3, 2]
    full = embed(iz, 2, dims)
    direct = np.kron(np.kron(np.eye(2), np.eye(3)), iz)
    np.testing.assert_allclose(full, direct, atol=1e-14)
    full0 = embed(ix, 0, dims)
    direct0 = np.kron(ix, np.eye(6))
    np.testing.assert_allclose(full0, direct0, atol=1e-14)


def test_embedded_distinct_slots_commute():
    ix, iy, _ = spin_operators(0.5)
    dims = [2, 2, 2]
    a = embed(ix, 0, dims)
    b = embed(iy, 2, dims)
    np.testing.assert_allclose(a @ b, b @ a, atol=1e-14)


def test_check_hermitian():
    good = np.array([[1.0, 1j], [-1j, 2.0]])
    check_hermitian(good)
    with pytest.raises(DomainError):
        check_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))
