import itertools
import math

import numpy as np
import pytest

from spinbath.bath import (
    BathInstance,
    BathSpin,
    density_scaled_cutoffs,
    enumerate_clusters,
    partition_by_species,
    sample_lattice_bath,
    sample_random_bath,
)
from spinbath.cif import parse_cif
from spinbath.crystal import build_supercell
from spinbath.errors import DomainError, UnsupportedOrderError

from .test_cif import FIXTURES


@pytest.fixture(scope="module")
def diamond_cell():
    return parse_cif((FIXTURES / "diamond.cif").read_text())


@pytest.fixture(scope="module")
def quartz_cell():
    return parse_cif((FIXTURES / "quartz.cif").read_text())


def test_lattice_bath_abundance_within_4_sigma(diamond_cell, table):
    sites = build_supercell(diamond_cell, 35.0)
    counts = []
    for seed in range(5):
        counts.append(len(sample_lattice_bath(sites, table, seed)))
    p = table.get("C", 13).abundance
    n = len(sites)
    sigma = math.sqrt(n * p * (1 - p))
    for c in counts:
        assert abs(c - n * p) < 4 * sigma
    assert len(set(counts)) > 1  # different seeds give different baths


def test_lattice_bath_determinism(diamond_cell, table):
    sites = build_supercell(diamond_cell, 25.0)
    a = sample_lattice_bath(sites, table, 7)
    b = sample_lattice_bath(sites, table, 7)
    assert len(a) == len(b)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert [s.isotope for s in a.spins] == [s.isotope for s in b.spins]


def test_lattice_bath_nesting(diamond_cell, table):
    # a bath drawn at 35 A, truncated to 20 A, equals the 20 A bath
    big = sample_lattice_bath(build_supercell(diamond_cell, 35.0), table, 3)
    small = sample_lattice_bath(build_supercell(diamond_cell, 20.0), table, 3)
    r_big = np.linalg.norm(big.positions, axis=1)
    inside = np.nonzero(r_big <= 20.0)[0]
    assert len(inside) == len(small)
    np.testing.assert_array_equal(big.positions[inside], small.positions)


def test_lattice_bath_occupancy_thins(table):
    from spinbath.crystal import CrystalCell, Site

    full_cell = CrystalCell(
        lattice=np.eye(3) * 3.0, sites=(Site(element="C", frac=(0, 0, 0)),)
    )
    half_cell = CrystalCell(
        lattice=np.eye(3) * 3.0, sites=(Site(element="C", frac=(0, 0, 0), occupancy=0.5),)
    )
    n_full = sum(
        len(sample_lattice_bath(build_supercell(full_cell, 30.0), table, s))
        for s in range(20)
    )
    n_half = sum(
        len(sample_lattice_bath(build_supercell(half_cell, 30.0), table, s))
        for s in range(20)
    )
    assert n_half < n_full
    assert n_half == pytest.approx(n_full / 2, rel=0.25)


def test_lattice_bath_mixed_species(quartz_cell, table):
    sites = build_supercell(quartz_cell, 30.0)
    bath = sample_lattice_bath(sites, table, 11)
    species = {s.isotope.element_symbol for s in bath.spins}
    assert species == {"Si", "O"}
    for s in bath.spins:
        assert s.isotope.spin > 0


def test_random_bath_poisson_count_within_4_sigma(table):
    iso = table.get("C", 13)
    density, radius = 1e20, 60.0
    mean = density * (4.0 / 3.0) * math.pi * (radius * 1e-8) ** 3
    for seed in range(5):
        n = len(sample_random_bath(iso, density, radius, seed))
        assert abs(n - mean) < 4 * math.sqrt(mean)


def test_random_bath_isotropy_and_radial_law(table):
    iso = table.get("C", 13)
    bath = sample_random_bath(iso, 1e21, 80.0, 0)
    pos = bath.positions
    r = np.linalg.norm(pos, axis=1)
    assert r.max() <= 80.0
    # mean unit vector should vanish like 1/sqrt(N)
    unit = pos / r[:, None]
    assert np.linalg.norm(unit.mean(axis=0)) < 3.0 / math.sqrt(len(bath))
    # uniform density: (r/R)^3 is uniform on [0, 1]; KS distance ~ 1/sqrt(N)
    u = np.sort((r / 80.0) ** 3)
    ks = np.abs(u - (np.arange(1, len(u) + 1) - 0.5) / len(u)).max()
    assert ks < 2.0 / math.sqrt(len(u))


def test_random_bath_determinism(table):
    iso = table.get("Si", 29)
    a = sample_random_bath(iso, 1e20, 40.0, 123)
    b = sample_random_bath(iso, 1e20, 40.0, 123)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert a.provenance == "random-uniform"


def test_random_bath_validation(table):
    c13 = table.get("C", 13)
    with pytest.raises(DomainError):
        sample_random_bath(c13, -1.0, 30.0, 0)
    with pytest.raises(DomainError):
        sample_random_bath(c13, 1e20, 0.0, 0)
    with pytest.raises(DomainError):
        sample_random_bath(table.get("C", 12), 1e20, 30.0, 0)


def test_bath_spin_validation(table):
    with pytest.raises(DomainError):
        BathSpin(position=np.zeros(2), isotope=table.get("C", 13))
    with pytest.raises(DomainError):
        BathSpin(position=np.zeros(3), isotope=table.get("O", 16))


def test_empty_bath(table):
    bath = sample_random_bath(table.get("C", 13), 1e10, 10.0, 0)
    assert len(bath) == 0
    assert bath.positions.shape == (0, 3)
    clusters = enumerate_clusters(bath, 2, 10.0)
    assert clusters.singles == () and clusters.pairs == ()


def test_to_csv_round_trips_floats(table):
    bath = sample_random_bath(table.get("C", 13), 1e20, 20.0, 5)
    lines = bath.to_csv().strip().split("\n")
    assert lines[0] == "x_A,y_A,z_A,element,A"
    assert len(lines) == len(bath) + 1
    for line, spin in zip(lines[1:], bath.spins):
        x, y, z, el, a = line.split(",")
        assert float(x) == spin.position[0]
        assert "np" not in line
        assert (el, int(a)) == ("C", 13)


def test_enumerate_clusters_matches_bruteforce(table):
    bath = sample_random_bath(table.get("C", 13), 3e20, 30.0, 9)
    r_pair = 12.0
    clusters = enumerate_clusters(bath, 2, r_pair)
    assert clusters.singles == tuple(range(len(bath)))
    expected = {
        (i, j)
        for i, j in itertools.combinations(range(len(bath)), 2)
        if np.linalg.norm(bath.positions[i] - bath.positions[j]) <= r_pair
    }
    assert set(clusters.pairs) == expected
    for i, j in clusters.pairs:
        assert i < j


def test_enumerate_clusters_order_1(table):
    bath = sample_random_bath(table.get("C", 13), 3e20, 25.0, 2)
    clusters = enumerate_clusters(bath, 1, 10.0)
    assert clusters.pairs == ()
    assert len(clusters) == len(bath)


def test_enumerate_clusters_rejects_order_3(table):
    bath = sample_random_bath(table.get("C", 13), 1e20, 20.0, 0)
    with pytest.raises(UnsupportedOrderError):
        enumerate_clusters(bath, 3, 10.0)
    with pytest.raises(DomainError):
        enumerate_clusters(bath, 2, 0.0)


def _two_species_bath(table):
    si29 = table.get("Si", 29)
    o17 = table.get("O", 17)
    spins = (
        BathSpin(position=np.array([3.0, 0.0, 0.0]), isotope=si29),
        BathSpin(position=np.array([0.0, 4.0, 0.0]), isotope=si29),
        BathSpin(position=np.array([0.0, 0.0, 5.0]), isotope=o17),
    )
    return BathInstance(spins=spins, seed=0, radius=10.0, provenance="lattice")


def test_partition_by_species(table):
    bath = _two_species_bath(table)
    clusters = enumerate_clusters(bath, 2, 100.0)
    assert len(clusters.pairs) == 3
    homo = partition_by_species(bath, clusters, "homonuclear-only")
    hetero = partition_by_species(bath, clusters, "heteronuclear-only")
    assert homo.pairs == ((0, 1),)
    assert set(hetero.pairs) == {(0, 2), (1, 2)}
    assert homo.singles == hetero.singles == clusters.singles
    assert partition_by_species(bath, clusters, "all") is clusters
    with pytest.raises(DomainError):
        partition_by_species(bath, clusters, "hetero")


def test_partition_treats_different_isotopes_as_heteronuclear(table):
    # same element, different mass number: these flip-flop off-resonance
    si29 = table.get("Si", 29)
    h1 = table.get("H", 1)
    h2 = table.get("H", 2)
    spins = (
        BathSpin(position=np.array([1.0, 0.0, 0.0]), isotope=h1),
        BathSpin(position=np.array([0.0, 1.0, 0.0]), isotope=h2),
        BathSpin(position=np.array([0.0, 0.0, 1.0]), isotope=si29),
    )
    bath = BathInstance(spins=spins, seed=0, radius=5.0, provenance="lattice")
    clusters = enumerate_clusters(bath, 2, 50.0)
    homo = partition_by_species(bath, clusters, "homonuclear-only")
    assert homo.pairs == ()


def test_density_scaled_cutoffs():
    r_bath, r_pair = density_scaled_cutoffs(1.8861e21)
    assert r_bath == pytest.approx(35.0, rel=1e-12)
    assert r_pair == pytest.approx(10.0, rel=1e-12)
    # 8x dilution doubles both radii
    r_bath_8, r_pair_8 = density_scaled_cutoffs(1.8861e21 / 8.0)
    assert r_bath_8 == pytest.approx(70.0, rel=1e-12)
    assert r_pair_8 == pytest.approx(20.0, rel=1e-12)
    with pytest.raises(DomainError):
        density_scaled_cutoffs(0.0)


def test_positions_write_protected(table):
    bath = sample_random_bath(table.get("C", 13), 1e20, 20.0, 1)
    with pytest.raises(ValueError):
        bath.positions[0, 0] = 0.0
    with pytest.raises(ValueError):
        bath.spins[0].position[0] = 0.0
