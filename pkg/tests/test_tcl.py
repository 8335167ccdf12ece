import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from tcltransport.exact import OccupationSeries, Picture, Source
from tcltransport.exceptions import DomainError, PictureError
from tcltransport.model import (LatticeSpec, ModelParams, WeakCouplingWarning, build_hamiltonians,
                                partition_model)
from tcltransport.tcl import (RateKind, RateMatrix, RatePolicy, back_transform, chain_hamiltonian,
                              golden_rule_rate, laplacian, linear_regime_check,
                              regularized_dos_integral, rate_report, renormalization_factor,
                              sinc_sum_rate, solve_rate_equation, time_linear_rate,
                              transfer_kernel, validate_renormalized_dos_integral, write_json)

FIG = dict(lambda_H=6.25e-2, lambda_R=5e-4)


def params(**kw):
    base = dict(FIG)
    base.update(kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WeakCouplingWarning)
        return ModelParams(**base)


# -- rates ------------------------------------------------------------------


def test_golden_rule_value():
    g = golden_rule_rate(params(), 600, 8 * 6.25e-2)
    assert g == pytest.approx(2 * np.pi * 3e-4, rel=1e-14)
    assert g == pytest.approx(1.8849555921538759e-3, rel=1e-14)
    assert golden_rule_rate(params(lambda_R=0.0), 600, 0.5) == 0.0
    assert golden_rule_rate(params(), 1200, 0.5) == pytest.approx(2 * g)


def test_linear_regime_values():
    z = linear_regime_check(params(), 600, 0.5)
    assert z.q == pytest.approx(0.0236870506, rel=1e-8)
    assert z.passes
    x = linear_regime_check(params(), 600, 4 * np.sqrt(600) * 5e-4)
    assert x.q == pytest.approx(np.pi**2 / 4, rel=1e-12)
    assert not x.passes
    qs = [linear_regime_check(params(lambda_R=lam), 600, 0.5).q for lam in (1e-4, 1e-6, 1e-9)]
    assert qs[0] > qs[1] > qs[2] and qs[2] < 1e-10


def test_time_linear_value():
    t = np.array([0.0, 1.0, 50.0])
    assert time_linear_rate(params(), 600, t) == pytest.approx(3e-4 * t, rel=1e-14)
    assert time_linear_rate(params(), 600, 0.0) == 0.0
    with pytest.raises(DomainError):
        time_linear_rate(params(), 600, -1.0)


def test_policy_effective_times():
    p = params()
    gr = RatePolicy.golden_rule(p, 600)
    tl = RatePolicy.time_linear(p, 600)
    t = np.linspace(0, 100, 11)
    assert gr.effective_time(t) == pytest.approx(gr.rate(t) * t)
    assert tl.effective_time(t) == pytest.approx(600 * 2.5e-7 * t**2)
    with pytest.raises(DomainError):
        RatePolicy(RateKind.GOLDEN_RULE, 1e-3, 10)


# -- renormalized integral -------------------------------------------------


def test_regularized_integral_limit():
    n, d = 600, 0.5
    rep = validate_renormalized_dos_integral(n, d, [d * 10.0**-k for k in range(1, 7)])
    assert rep.target == pytest.approx(720000.0)
    assert rep.rel_error[-1] <= 0.01
    assert rep.monotone


def test_regularized_integral_against_direct_quadrature():
    n, d, lam = 600, 0.5, 1e-6 * 0.5
    alpha = renormalization_factor(d, lam)
    assert alpha == pytest.approx(np.pi / np.sqrt(2 * np.log(d / lam - 1)))
    breaks = np.geomspace(lam, d / 2, 40)
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        total += quad(lambda E: n**2 / (np.pi**2 * E * (d - E)), a, b, epsrel=1e-12)[0]
    assert regularized_dos_integral(n, d, lam) == pytest.approx(2 * alpha**2 * total, rel=1e-9)


def test_constant_density_identity():
    n, d = 37, 0.8
    g = n / d
    val = 2 * quad(lambda E: g**2, 0, d / 2)[0]
    assert val == pytest.approx(n**2 / d, rel=1e-14)


@pytest.mark.parametrize("lam", [0.0, -0.1, 0.25, 0.3])
def test_regularized_integral_domain(lam):
    with pytest.raises(DomainError):
        regularized_dos_integral(10, 0.5, lam)


# -- sinc sum ---------------------------------------------------------------


@pytest.fixture(scope="module")
def small_partition():
    h = build_hamiltonians(LatticeSpec(6, 3, 3, "z"), params(seed=4))
    return partition_model(h)


def brute_sinc(part, mu, t, lam):
    """Double loop over band eigenpairs."""
    V = part.hamiltonians.random_block(mu)
    Ua, Ub = part.band_states[mu], part.band_states[mu + 1]
    Ea, Eb = part.band_energies[mu], part.band_energies[mu + 1]
    total = 0.0
    for k in range(part.n):
        for l in range(part.n):
            m = np.vdot(Ua[:, k], V @ Ub[:, l])
            w = Ea[k] - Eb[l]
            total += abs(m) ** 2 * (t if abs(w * t) < 1e-6 else np.sin(w * t) / w)
    return 2 * lam**2 / part.n * total


def test_sinc_sum_matches_double_loop(small_partition):
    lam = small_partition.hamiltonians.params.lambda_R
    for mu in (0, 1):
        for t in (0.3, 7.0, 150.0):
            fast = sinc_sum_rate(small_partition, None, t, mu=mu)
            assert fast == pytest.approx(brute_sinc(small_partition, mu, t, lam), rel=1e-12)


def test_sinc_sum_trivial_cases(small_partition):
    assert sinc_sum_rate(small_partition, None, 0.0) == 0.0
    assert sinc_sum_rate(small_partition, None, 40.0, lambda_R=0.0) == 0.0
    with pytest.raises(ValueError):
        sinc_sum_rate(small_partition, np.zeros((3, 3)), 1.0)


def test_sinc_effective_time_is_integral(small_partition):
    pol = RatePolicy.sinc_sum(small_partition)
    t = 80.0
    val = quad(lambda s: pol.rate(s, 1), 0, t, limit=200, epsrel=1e-11)[0]
    assert pol.effective_time(t, 1) == pytest.approx(val, rel=1e-8)


def test_short_time_sinc_matches_time_linear():
    h = build_hamiltonians(LatticeSpec(3, 20, 30, "x"), params(seed=0, topology="dense_band"))
    part = partition_model(h)
    Ea, Eb = part.band_energies[0], part.band_energies[1]
    wmax = np.max(np.abs(Ea[:, None] - Eb[None, :]))
    t = np.linspace(0.05, 1.0, 12) / wmax
    sinc = sinc_sum_rate(part, None, t)
    lin = time_linear_rate(h.params, part.n, t)
    assert np.all(np.abs(sinc / lin - 1) <= 0.20)


# -- rate equation ------------------------------------------------------------


def test_laplacian_structure():
    L = laplacian(5)
    assert np.allclose(L.sum(axis=0), 0)
    assert np.allclose(L, L.T)
    assert L[0, 0] == -1 and L[2, 2] == -2 and L[0, 1] == 1
    w = np.linalg.eigvalsh(L)
    assert np.all(w <= 1e-12)
    assert np.sum(np.abs(w) < 1e-12) == 1
    with pytest.raises(DomainError):
        RateMatrix(np.array([1.0, -0.5])).matrix()


def test_uniform_is_stationary():
    pol = RatePolicy.golden_rule(params(), 600)
    t = np.linspace(0, 5000, 11)
    out = solve_rate_equation(pol, 6, np.full(6, 1 / 6), t)
    assert np.allclose(out.P, 1 / 6, atol=1e-14)


@pytest.mark.parametrize("method", ["expm", "ode"])
def test_two_subunit_closed_form(method):
    pol = RatePolicy.golden_rule(params(), 600)
    g = pol.rate(0.0)
    t = np.linspace(0, 4 / g, 41)
    out = solve_rate_equation(pol, 2, [1.0, 0.0], t, method=method)
    assert out.picture is Picture.INTERACTION and out.source is Source.TCL
    assert np.allclose(out.P[:, 0], (1 + np.exp(-2 * g * t)) / 2, atol=1e-10)


def test_three_subunits_equilibrate():
    pol = RatePolicy.golden_rule(params(), 600)
    g = pol.rate(0.0)
    out = solve_rate_equation(pol, 3, [1, 0, 0], [0.0, 40 / g])
    assert np.allclose(out.P[-1], 1 / 3, atol=1e-12)


@pytest.mark.parametrize("case", ["fig3", "fig5", "fig6"])
def test_expm_and_ode_agree(case):
    p = params()
    if case == "fig3":
        pol, N, t = RatePolicy.golden_rule(p, 600), 3, np.linspace(0, 2660, 1331)
    elif case == "fig5":
        pol, N, t = RatePolicy.time_linear(p, 600), 3, np.linspace(0, 250, 501)
    else:
        pol, N, t = RatePolicy.time_linear(p, 600), 300, np.linspace(0, 800, 401)
    P0 = np.zeros(N)
    P0[N // 2 if N > 3 else 0] = 1
    a = solve_rate_equation(pol, N, P0, t, method="expm")
    b = solve_rate_equation(pol, N, P0, t, method="ode")
    assert np.max(np.abs(a.P - b.P)) <= 1e-8


def test_bond_dependent_rates(small_partition):
    pol = RatePolicy.sinc_sum(small_partition)
    assert not pol.uniform
    t = np.linspace(0, 3000, 31)
    out = solve_rate_equation(pol, 3, [1, 0, 0], t)
    assert np.max(np.abs(out.P.sum(axis=1) - 1)) <= 1e-10
    with pytest.raises(DomainError):
        solve_rate_equation(pol, 3, [1, 0, 0], t, method="expm")


def test_rate_equation_input_errors():
    pol = RatePolicy.golden_rule(params(), 600)
    with pytest.raises(DomainError):
        solve_rate_equation(pol, 3, [0.5, 0.2, 0.2], [0, 1])
    with pytest.raises(DomainError):
        solve_rate_equation(pol, 3, [1.2, -0.2, 0.0], [0, 1])
    with pytest.raises(ValueError):
        solve_rate_equation(pol, 3, [1, 0], [0, 1])


@settings(max_examples=40, deadline=None)
@given(N=st.integers(2, 40), rates=st.lists(st.floats(0, 2.0), min_size=39, max_size=39),
       seed=st.integers(0, 2**32), T=st.floats(0.0, 50.0))
def test_rate_solutions_conserve_probability(N, rates, seed, T):
    P0 = np.random.default_rng(seed).dirichlet(np.ones(N))
    G = RateMatrix(np.array(rates[:N - 1])).matrix()
    assert np.allclose(G.sum(axis=0), 0, atol=1e-14)
    assert np.all(G - np.diag(np.diag(G)) >= 0)
    P = expm(G * T) @ P0
    assert abs(P.sum() - 1) <= 1e-10 and P.min() >= -1e-12
    pol = RatePolicy(RateKind.GOLDEN_RULE, 1e-3, 10, 0.2 + rates[0])
    out = solve_rate_equation(pol, N, P0, np.linspace(0, T * 1e3, 5))
    assert np.max(np.abs(out.P.sum(axis=1) - 1)) <= 1e-10
    assert out.P.min() >= -1e-12


# -- back-transformation -------------------------------------------------------


def test_chain_hamiltonian_is_literal_restriction():
    from tcltransport.model import build_hamiltonians as build, full_space_hamiltonian

    N, lamH = 6, 0.17
    h = build(LatticeSpec(N, 1, 1, "x"), params(lambda_H=lamH, lambda_R=0.0))
    F = full_space_hamiltonian(h)
    idx = [1 << (N - 1 - j) for j in range(N)]
    block = F[idx][:, idx].toarray() - h.H_loc.toarray()
    assert np.allclose(chain_hamiltonian(N, lamH), block, atol=1e-13)


def test_kernel_trivial_cases():
    h = chain_hamiltonian(5, 0.3)
    assert np.allclose(transfer_kernel(h, 0.0)[0], np.eye(5))
    assert np.allclose(transfer_kernel(chain_hamiltonian(5, 0.0), [3.0, 70.0]), np.eye(5))


@settings(max_examples=40, deadline=None)
@given(N=st.integers(2, 60), lamH=st.floats(0, 1.0), t=st.floats(0, 1e3))
def test_kernel_doubly_stochastic(N, lamH, t):
    K = transfer_kernel(chain_hamiltonian(N, lamH), t)[0]
    assert np.all(K >= 0)
    assert np.allclose(K.sum(axis=0), 1, atol=1e-10)
    assert np.allclose(K.sum(axis=1), 1, atol=1e-10)


def test_back_transform_matches_full_conjugation():
    lamH = 6.25e-2
    h = build_hamiltonians(LatticeSpec(3, 3, 4, "x"), params(seed=2))
    part = partition_model(h)
    P_int = np.array([[1.0, 0, 0], [0.6, 0.3, 0.1], [0.2, 0.5, 0.3]])
    t = np.array([0.0, 7.0, 31.0])
    series = OccupationSeries(t, P_int, Picture.INTERACTION, Source.TCL)
    fast = back_transform(series, chain_hamiltonian(3, lamH))
    HH = lamH * h.H_H.toarray()
    Pi = [part.projector(mu).toarray() for mu in range(3)]
    for i, ti in enumerate(t):
        U = expm(-1j * HH * ti)
        rho = sum(P_int[i, nu] * Pi[nu] / part.n for nu in range(3))
        rho_s = U @ rho @ U.conj().T
        lit = [np.trace(Pi[mu] @ rho_s).real for mu in range(3)]
        assert np.allclose(fast.P[i], lit, atol=1e-12)
    assert fast.picture is Picture.SCHROEDINGER


def test_back_transform_identity_and_errors():
    s = OccupationSeries([0.0, 5.0], [[1, 0, 0], [0.5, 0.3, 0.2]], Picture.INTERACTION, Source.TCL)
    out = back_transform(s, chain_hamiltonian(3, 0.0))
    assert np.allclose(out.P, s.P)
    with pytest.raises(PictureError):
        back_transform(out, chain_hamiltonian(3, 0.1))
    with pytest.raises(ValueError):
        back_transform(s, chain_hamiltonian(4, 0.1))


def test_rate_report_json(tmp_path):
    rep = rate_report(params(), 600, partition="z", times=[10.0])
    path = tmp_path / "r.json"
    write_json(path, rep)
    back = json.loads(path.read_text())
    assert back["golden_rule_rate"] == pytest.approx(2 * np.pi * 3e-4)
    assert back["linear_regime"]["passes"] is True
    assert back["time_linear"]["rate"] == [pytest.approx(3e-3)]
    x = rate_report(params(), 600, partition="x")
    assert x["linear_regime"]["q"] == pytest.approx(np.pi**2 / 4)
