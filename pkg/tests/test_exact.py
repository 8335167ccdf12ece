import warnings
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from tcltransport.exact import (InitialStateKind, OccupationSeries, Picture, Propagator, Source,
                                average_series, energy, infinite_time_average, occupations,
                                prepare_initial_state, propagate)
from tcltransport.exceptions import DomainError, NumericalError, PictureError
from tcltransport.model import (LatticeSpec, ModelParams, WeakCouplingWarning, build_hamiltonians,
                                partition_model)


def model(spec, **kw):
    base = dict(lambda_H=6.25e-2, lambda_R=5e-4, seed=1)
    base.update(kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WeakCouplingWarning)
        h = build_hamiltonians(spec, ModelParams(**base))
    return h, partition_model(h)


@pytest.fixture(scope="module")
def small_z():
    return model(LatticeSpec(8, 5, 3, "z"), lambda_R=5e-3)


@pytest.mark.parametrize("kind", list(InitialStateKind))
def test_initial_state_support(small_z, kind):
    h, part = small_z
    psi = prepare_initial_state(part, 1, kind, seed=4, level=7)
    assert psi.norm == pytest.approx(1.0, abs=1e-14)
    occ = occupations(propagate(h, psi, [0.0]), part)
    assert occ.P[0] == pytest.approx([0, 1, 0], abs=1e-14)


def test_initial_state_errors(small_z):
    _, part = small_z
    with pytest.raises(DomainError):
        prepare_initial_state(part, 3)
    with pytest.raises(DomainError):
        prepare_initial_state(part, -1)
    with pytest.raises(DomainError):
        prepare_initial_state(part, 0, "single_level", level=part.n)
    with pytest.raises(DomainError):
        prepare_initial_state(part, 0, "single_level")


def test_random_phase_energy_in_band():
    h, part = model(LatticeSpec(30, 20, 3, "z"), seed=2)
    e = part.band_energies[0]
    width = e[-1] - e[0]
    for seed in range(3):
        psi = prepare_initial_state(part, 0, seed=seed)
        E = energy(h, psi)
        assert e[0] < E < e[-1]
        assert abs(E - e.mean()) <= 3 * width / (2 * np.sqrt(part.n))


def test_single_level_stationary_without_random_coupling():
    h, part = model(LatticeSpec(8, 5, 3, "z"), lambda_R=0.0)
    psi = prepare_initial_state(part, 1, "single_level", level=3)
    occ = occupations(propagate(h, psi, np.linspace(0, 500, 11)), part)
    assert np.allclose(occ.P, [[0, 1, 0]] * 11, atol=1e-12)


def test_occupations_constant_without_random_coupling():
    h, part = model(LatticeSpec(8, 5, 3, "z"), lambda_R=0.0)
    psi = prepare_initial_state(part, 0, seed=9)
    occ = occupations(propagate(h, psi, np.linspace(0, 1e3, 21)), part)
    assert np.allclose(occ.P, occ.P[0], atol=1e-12)


@pytest.mark.parametrize("lam", [0.1, 0.37, 1.0])
def test_rabi_oracle(lam):
    H = np.array([[0.0, lam], [lam, 0.0]])
    t = np.linspace(0, 20, 101)
    traj = propagate(H, np.array([1.0, 0.0]), t)
    assert np.allclose(np.abs(traj.states[:, 0]) ** 2, np.cos(lam * t) ** 2, atol=1e-13)
    cheb = propagate(H, np.array([1.0, 0.0]), t, dense_dimension=0)
    assert np.allclose(np.abs(cheb.states[:, 0]) ** 2, np.cos(lam * t) ** 2, atol=1e-9)


@pytest.mark.parametrize("dense_dimension", [4000, 0])
def test_unitarity_energy_and_reversal(small_z, dense_dimension):
    h, part = small_z
    psi0 = prepare_initial_state(part, 0, seed=3)
    t = np.linspace(0, 400, 41)
    prop = Propagator(h, dense_dimension)
    assert prop.method == ("dense" if dense_dimension else "chebyshev")
    traj = propagate(h, psi0, t, propagator=prop)
    norms = np.linalg.norm(traj.states, axis=1)
    assert np.max(np.abs(norms - 1)) <= 1e-10
    E0 = energy(h, psi0)
    Es = np.array([energy(h, s) for s in traj.states])
    assert np.max(np.abs(Es - E0)) <= 1e-9 * abs(E0)
    back = prop.evolve(traj.states[-1], -t[-1])
    assert np.linalg.norm(back - psi0.amplitudes) <= 1e-8


def test_chebyshev_matches_dense(small_z):
    h, part = small_z
    psi0 = prepare_initial_state(part, 2, seed=1)
    t = np.linspace(0, 300, 7)
    a = propagate(h, psi0, t).states
    b = propagate(h, psi0, t, dense_dimension=0).states
    assert np.max(np.abs(a - b)) <= 1e-8


def test_propagate_against_expm():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    H = (A + A.conj().T) / 2
    psi = rng.normal(size=12) + 0j
    psi /= np.linalg.norm(psi)
    traj = propagate(H, psi, [0.0, 0.7, 2.0])
    for t, s in zip(traj.t, traj.states):
        assert np.allclose(s, expm(-1j * H * t) @ psi, atol=1e-12)


def test_propagate_rejects_bad_input():
    H = np.eye(2)
    with pytest.raises(DomainError):
        propagate(H, np.array([1, 0]), [0.0, 2.0, 1.0])
    with pytest.raises(DomainError):
        propagate(H, np.array([1, 0]), [0.5, 1.0])
    with pytest.raises(ValueError):
        propagate(H, np.array([1, 0, 0]), [0.0])
    with pytest.raises(NumericalError):
        Propagator(np.array([[0, 1], [0, 0]]))


def test_occupations_normalised(small_z):
    h, part = small_z
    psi0 = prepare_initial_state(part, 0, seed=5)
    occ = occupations(propagate(h, psi0, np.linspace(0, 2000, 51)), part)
    assert occ.picture is Picture.SCHROEDINGER and occ.source is Source.EXACT
    assert occ.max_normalization_error() <= 1e-8
    assert occ.P.min() >= -1e-12 and occ.P.max() <= 1 + 1e-12
    assert occ.P[-1, 0] < 0.99  # something moved


def test_infinite_time_average_rabi():
    H = np.array([[0.0, 0.3], [0.3, 0.0]])
    # one site per subunit
    two_sites = SimpleNamespace(N=2, subunits=[np.array([0]), np.array([1])])
    P = infinite_time_average(Propagator(H), np.array([1.0, 0.0]), two_sites)
    assert P == pytest.approx([0.5, 0.5], abs=1e-14)


def test_infinite_time_average_matches_long_run(small_z):
    h, part = small_z
    psi0 = prepare_initial_state(part, 0, seed=6)
    prop = Propagator(h)
    limit = infinite_time_average(prop, psi0, part)
    assert limit.sum() == pytest.approx(1.0, abs=1e-12)
    t = np.linspace(0, 2e6, 4001)
    occ = occupations(propagate(h, psi0, t, propagator=prop), part)
    assert np.allclose(occ.P.mean(axis=0), limit, atol=0.01)


def test_series_csv_roundtrip(tmp_path):
    s = OccupationSeries([0.0, 0.5, 1.0], [[1, 0], [0.75, 0.25], [0.5, 0.5]],
                         Picture.INTERACTION, Source.TCL)
    p = tmp_path / "occ.csv"
    s.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,P1,P2,picture,source"
    assert lines[2] == "0.5,0.75,0.25,interaction,tcl"
    back = OccupationSeries.from_csv(p)
    assert np.array_equal(back.P, s.P) and np.array_equal(back.t, s.t)
    assert back.picture is Picture.INTERACTION and back.source is Source.TCL


def test_series_check_and_average():
    a = OccupationSeries([0, 1], [[1, 0], [0.5, 0.5]])
    b = OccupationSeries([0, 1], [[1, 0], [0.7, 0.3]])
    m = average_series([a, b])
    assert m.P[1] == pytest.approx([0.6, 0.4])
    with pytest.raises(NumericalError):
        OccupationSeries([0], [[0.6, 0.6]]).check()
    with pytest.raises(PictureError):
        average_series([a, OccupationSeries([0, 1], a.P, Picture.INTERACTION)])


@settings(max_examples=25, deadline=None)
@given(d=st.integers(2, 24), seed=st.integers(0, 2**32), t=st.floats(0.01, 50.0))
def test_random_hamiltonians_unitary(d, seed, t):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = sp.csr_matrix((A + A.conj().T) / 2)
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    psi /= np.linalg.norm(psi)
    dense = Propagator(H)
    cheb = Propagator(H, dense_dimension=0)
    a, b = dense.evolve(psi, t), cheb.evolve(psi, t)
    assert abs(np.linalg.norm(a) - 1) <= 1e-10
    assert np.linalg.norm(a - b) <= 1e-8
    assert abs(energy(H, a) - energy(H, psi)) <= 1e-9 * max(1.0, abs(energy(H, psi)))
    assert np.linalg.norm(dense.evolve(a, -t) - psi) <= 1e-8
