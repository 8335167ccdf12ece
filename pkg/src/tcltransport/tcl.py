"""Second-order TCL rate equations for subunit occupations.

The projected dynamics reduce to ``dP/dt = gamma(t) L P`` with ``L`` the
open-chain Laplacian. Three rate models are provided: the finite-time sinc
sum over band transitions, its Golden-Rule limit, and the time-linear
short-time form used for transport along the chains.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.linalg import eigh_tridiagonal

from .exact import OccupationSeries, Picture, Source
from .exceptions import DomainError, NumericalError, PictureError
from .model import HEISENBERG_BOND, ModelParams, Partition, restrict_bonds

SINC_ZERO = 1e-6  # |omega t| below which sin(omega t)/omega -> t
LINEAR_REGIME_THRESHOLD = 0.1


class RateKind(str, enum.Enum):
    SINC_SUM = "sinc_sum"
    GOLDEN_RULE = "golden_rule"
    TIME_LINEAR = "time_linear"


def golden_rule_rate(params: ModelParams, n: int, delta_eps: float) -> float:
    """``2 pi lambda_R^2 n / (hbar delta_eps)``."""
    if not delta_eps > 0:
        raise DomainError("band width must be positive")
    return 2 * np.pi * params.lambda_R**2 * n / (params.hbar * delta_eps)


def time_linear_rate(params: ModelParams, n: int, t):
    """``2 n lambda_R^2 t / hbar^2``; valid while ``|omega| t <~ 1`` for most transitions."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be non-negative")
    g = 2 * n * params.lambda_R**2 * t / params.hbar**2
    return g if g.ndim else float(g)


def heisenberg_bandwidth(params: ModelParams) -> float:
    """Width of the single-excitation band of a long Heisenberg chain."""
    return 8 * params.lambda_H


def gue_bandwidth(params: ModelParams, n: int) -> float:
    return 4 * np.sqrt(n) * params.lambda_R


def _sinc_terms(omega, t):
    """``sin(omega t)/omega`` and ``(1 - cos(omega t))/omega^2`` with their limits."""
    x = omega * t
    small = np.abs(x) < SINC_ZERO
    safe = np.where(small, 1.0, omega)
    s = np.where(small, t, np.sin(x) / safe)
    c = np.where(small, t * t / 2, (1 - np.cos(x)) / safe**2)
    return s, c


@dataclass(frozen=True, eq=False)
class BandTransitions:
    """Transition frequencies and squared couplings between two bands."""

    omega: np.ndarray
    weight: np.ndarray

    @classmethod
    def from_partition(cls, partition: Partition, mu: int, coupling=None) -> "BandTransitions":
        Vkl = partition.band_coupling(mu, coupling)
        omega = partition.band_energies[mu][:, None] - partition.band_energies[mu + 1][None, :]
        return cls(omega.ravel(), (np.abs(Vkl) ** 2).ravel())


def sinc_sum_rate(partition: Partition, coupling, t, *, mu: int = 0,
                  lambda_R: float | None = None, hbar: float = 1.0):
    """Decay rate between subunits ``mu`` and ``mu + 1`` at time(s) ``t``.

    ``(2 lambda_R^2 / (n hbar^2)) sum_kl |<k|V|l>|^2 sin(w_kl t) / w_kl`` with
    the bare coupling block ``V`` (``None`` selects the random block of the
    model) and ``lambda_R`` defaulting to the model value.
    """
    if coupling is not None:
        V = np.asarray(coupling)
        if V.shape != (len(partition.subunits[mu]), len(partition.subunits[mu + 1])):
            raise ValueError(f"coupling block of shape {V.shape} does not match the subunits")
    lam = partition.hamiltonians.params.lambda_R if lambda_R is None else lambda_R
    tr = BandTransitions.from_partition(partition, mu, coupling)
    return _sinc_rate(tr, np.asarray(t, dtype=float), lam, partition.n, hbar)


def _sinc_rate(tr: BandTransitions, t, lam, n, hbar, integrated=False):
    pref = 2 * lam**2 / (n * hbar**2)
    out = np.empty(t.shape)
    for i, ti in np.ndenumerate(t):
        s, c = _sinc_terms(tr.omega / hbar, ti)
        out[i] = pref * np.dot(tr.weight, c if integrated else s)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class RatePolicy:
    """A rate model for every bond ``(mu, mu+1)`` of the subunit chain."""

    kind: RateKind
    lambda_R: float
    n: int
    delta_eps: float | None = None
    hbar: float = 1.0
    transitions: tuple = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", RateKind(self.kind))
        if self.lambda_R < 0 or self.n <= 0:
            raise DomainError("rate parameters must be non-negative")
        if self.kind is RateKind.GOLDEN_RULE and not (self.delta_eps and self.delta_eps > 0):
            raise DomainError("golden-rule rate needs a positive band width")
        if self.kind is RateKind.SINC_SUM and not self.transitions:
            raise DomainError("sinc-sum rate needs band transitions")

    @classmethod
    def golden_rule(cls, params: ModelParams, n: int, delta_eps: float | None = None):
        delta_eps = heisenberg_bandwidth(params) if delta_eps is None else delta_eps
        return cls(RateKind.GOLDEN_RULE, params.lambda_R, n, delta_eps, params.hbar)

    @classmethod
    def time_linear(cls, params: ModelParams, n: int):
        return cls(RateKind.TIME_LINEAR, params.lambda_R, n, None, params.hbar)

    @classmethod
    def sinc_sum(cls, partition: Partition):
        p = partition.hamiltonians.params
        trs = tuple(BandTransitions.from_partition(partition, mu) for mu in range(partition.N - 1))
        return cls(RateKind.SINC_SUM, p.lambda_R, partition.n, None, p.hbar, trs)

    @property
    def uniform(self) -> bool:
        """True when every bond shares the same rate function."""
        return self.kind is not RateKind.SINC_SUM or len(self.transitions) <= 1

    def _bonds(self, N):
        if self.kind is RateKind.SINC_SUM and len(self.transitions) != N - 1:
            raise ValueError(f"policy has {len(self.transitions)} bonds, chain has {N - 1}")

    def rate(self, t, bond: int = 0):
        t = np.asarray(t, dtype=float)
        if self.kind is RateKind.GOLDEN_RULE:
            g = np.full(t.shape, 2 * np.pi * self.lambda_R**2 * self.n / (self.hbar * self.delta_eps))
            return g if g.ndim else float(g)
        if self.kind is RateKind.TIME_LINEAR:
            g = 2 * self.n * self.lambda_R**2 * t / self.hbar**2
            return g if g.ndim else float(g)
        return _sinc_rate(self.transitions[bond], t, self.lambda_R, self.n, self.hbar)

    def effective_time(self, t, bond: int = 0):
        """``tau(t) = integral_0^t gamma(t') dt'``."""
        t = np.asarray(t, dtype=float)
        if self.kind is RateKind.GOLDEN_RULE:
            tau = self.rate(t) * t
        elif self.kind is RateKind.TIME_LINEAR:
            tau = self.n * self.lambda_R**2 * t * t / self.hbar**2
        else:
            tau = _sinc_rate(self.transitions[bond], t, self.lambda_R, self.n, self.hbar,
                             integrated=True)
        return tau if np.ndim(tau) else float(tau)

    def bond_rates(self, t: float, N: int) -> np.ndarray:
        self._bonds(N)
        if self.uniform:
            return np.full(N - 1, self.rate(t))
        return np.array([self.rate(t, b) for b in range(N - 1)])

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "lambda_R": self.lambda_R, "n": self.n,
                "delta_eps": self.delta_eps, "hbar": self.hbar}


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Generator ``G`` of ``dP/dt = G P`` for given bond rates."""

    bond_rates: np.ndarray

    @property
    def N(self) -> int:
        return len(self.bond_rates) + 1

    def matrix(self) -> np.ndarray:
        g = np.asarray(self.bond_rates, dtype=float)
        if np.any(g < 0):
            raise DomainError("negative transition rate")
        G = np.diag(g, 1) + np.diag(g, -1)
        G -= np.diag(G.sum(axis=0))
        return G


def laplacian(N: int) -> np.ndarray:
    """Open-chain discrete Laplacian (end sites have a single neighbour)."""
    if N < 1:
        raise DomainError("need at least one subunit")
    return RateMatrix(np.ones(N - 1)).matrix()


def _check_probability(P0, N):
    P0 = np.asarray(P0, dtype=float)
    if P0.shape != (N,):
        raise ValueError(f"initial probabilities must have length {N}")
    if np.any(P0 < 0) or abs(P0.sum() - 1) > 1e-10:
        raise DomainError("initial probabilities must be non-negative and sum to 1")
    return P0


def solve_rate_equation(policy: RatePolicy, N: int, P0, t_grid, *,
                        method: str = "auto") -> OccupationSeries:
    """Solve ``dP/dt = gamma(t) L P`` on the grid (interaction picture).

    ``method="expm"`` uses ``P(t) = exp(L tau(t)) P0`` and requires a rate
    shared by every bond; ``"ode"`` integrates the bond-rate equation with
    an adaptive eighth-order Runge-Kutta scheme; ``"auto"`` picks the former
    when possible.
    """
    P0 = _check_probability(P0, N)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise DomainError("time grid must be non-negative and ascending")
    policy._bonds(N)
    if method == "auto":
        method = "expm" if policy.uniform else "ode"
    if method == "expm":
        if not policy.uniform:
            raise DomainError("matrix-exponential solution needs a bond-independent rate")
        tau = np.atleast_1d(policy.effective_time(t_grid))
        if np.any(tau < 0):
            raise DomainError("negative effective time")
        P = _laplacian_flow(N, P0, tau)
    elif method == "ode":
        P = _ode_flow(policy, N, P0, t_grid)
    else:
        raise ValueError(f"unknown method {method!r}")
    return OccupationSeries(t_grid, P, Picture.INTERACTION, Source.TCL)


def _laplacian_flow(N, P0, tau):
    if N == 1:
        return np.ones((tau.size, 1))
    d = np.full(N, -2.0)
    d[0] = d[-1] = -1.0
    w, V = eigh_tridiagonal(d, np.ones(N - 1))
    c = V.T @ P0
    P = (np.exp(np.outer(tau, np.minimum(w, 0.0))) * c) @ V.T
    return P


def _ode_flow(policy, N, P0, t_grid):
    def rhs(t, P):
        g = policy.bond_rates(t, N)
        if np.any(g < 0):
            raise DomainError(f"negative rate at t = {t:g}")
        flow = g * (P[1:] - P[:-1])
        out = np.zeros_like(P)
        out[:-1] += flow
        out[1:] -= flow
        return out

    if t_grid.size == 0:
        return np.empty((0, N))
    t0 = 0.0
    sol = solve_ivp(rhs, (t0, max(t_grid[-1], t0)), P0, method="DOP853",
                    t_eval=t_grid, rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise NumericalError(f"rate-equation integration failed: {sol.message}")
    return sol.y.T


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearRegimeDiagnostic:
    q: float
    threshold: float
    passes: bool


def linear_regime_check(params: ModelParams, n: int, delta_eps: float,
                        threshold: float = LINEAR_REGIME_THRESHOLD) -> LinearRegimeDiagnostic:
    """Golden-Rule validity measure ``q = 4 pi^2 n lambda_R^2 / delta_eps^2``."""
    if not delta_eps > 0:
        raise DomainError("band width must be positive")
    q = 4 * np.pi**2 * n * params.lambda_R**2 / delta_eps**2
    return LinearRegimeDiagnostic(float(q), threshold, bool(q < threshold))


def renormalization_factor(delta_eps: float, Lambda: float) -> float:
    return float(np.pi / np.sqrt(2 * np.log(delta_eps / Lambda - 1)))


def regularized_dos_integral(n: float, delta_eps: float, Lambda: float) -> float:
    """``2 alpha^2 int_Lambda^{delta_eps/2} g_chain(E)^2 dE`` by quadrature.

    Integrated in ``s = ln E`` so the ``1/E`` growth near ``Lambda`` is flat.
    """
    if not 0 < Lambda < delta_eps / 2:
        raise DomainError(f"cutoff must lie in (0, delta_eps/2), got {Lambda!r}")
    alpha = renormalization_factor(delta_eps, Lambda)

    def integrand(s):
        E = np.exp(s)
        return n**2 / (np.pi**2 * E * (delta_eps - E)) * E

    val, _ = quad(integrand, np.log(Lambda), np.log(delta_eps / 2),
                  epsabs=0, epsrel=1e-12, limit=200)
    return 2 * alpha**2 * val


@dataclass(frozen=True)
class DosIntegralReport:
    n: float
    delta_eps: float
    Lambda: list
    alpha: list
    F: list
    target: float
    rel_error: list
    monotone: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def validate_renormalized_dos_integral(n, delta_eps, Lambda_sequence) -> DosIntegralReport:
    """Evaluate the regularized integral along a decreasing cutoff sequence."""
    lams = [float(x) for x in Lambda_sequence]
    if not lams:
        raise DomainError("empty cutoff sequence")
    F = [regularized_dos_integral(n, delta_eps, lam) for lam in lams]
    alpha = [renormalization_factor(delta_eps, lam) for lam in lams]
    target = n**2 / delta_eps
    order = np.argsort(lams)[::-1]
    Fs = np.array(F)[order]
    d = np.diff(Fs)
    tol = 1e-9 * target
    monotone = bool(np.all(d >= -tol) or np.all(d <= tol))
    return DosIntegralReport(n, delta_eps, lams, alpha, F, target,
                             [abs(f - target) / target for f in F], monotone)


# ---------------------------------------------------------------------------


def chain_hamiltonian(N: int, lambda_H: float) -> np.ndarray:
    """``lambda_H`` times the single-excitation restriction of an ``N``-site Heisenberg chain."""
    bonds = np.column_stack([np.arange(N - 1), np.arange(1, N)])
    return (lambda_H * restrict_bonds(N, bonds, HEISENBERG_BOND)).toarray()


def transfer_kernel(h_chain, t) -> np.ndarray:
    """``K[mu, nu](t) = |<mu| exp(-i h_chain t) |nu>|^2``; shape ``(len(t), N, N)``."""
    h_chain = np.asarray(h_chain)
    w, V = np.linalg.eigh(h_chain)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    K = np.empty((t.size, *h_chain.shape))
    for i, ti in enumerate(t):
        U = (V * np.exp(-1j * w * ti)) @ V.conj().T
        K[i] = np.abs(U) ** 2
    return K


def back_transform(series: OccupationSeries, h_chain) -> OccupationSeries:
    """Map interaction-picture occupations to the Schroedinger picture."""
    if series.picture is not Picture.INTERACTION:
        raise PictureError("back-transformation expects an interaction-picture series")
    if np.shape(h_chain) != (series.N, series.N):
        raise ValueError("chain Hamiltonian does not match the number of subunits")
    K = transfer_kernel(h_chain, series.t)
    P = np.einsum("tmn,tn->tm", K, series.P)
    return OccupationSeries(series.t, P, Picture.SCHROEDINGER, series.source)


# ---------------------------------------------------------------------------


def rate_report(params: ModelParams, n: int, *, partition: str = "z",
                times=(), threshold: float = LINEAR_REGIME_THRESHOLD) -> dict:
    """Rates and regime diagnostics for one parameter point, JSON-ready."""
    if partition == "z":
        delta_eps = heisenberg_bandwidth(params)
        gamma = golden_rule_rate(params, n, delta_eps) if delta_eps > 0 else None
    else:
        delta_eps = gue_bandwidth(params, n)
        gamma = None
    regime = linear_regime_check(params, n, delta_eps, threshold) if delta_eps > 0 else None
    times = [float(t) for t in times]
    return {
        "partition": partition,
        "lambda_H": params.lambda_H,
        "lambda_R": params.lambda_R,
        "n": n,
        "delta_eps": delta_eps,
        "golden_rule_rate": gamma,
        "linear_regime": None if regime is None else regime.__dict__,
        "time_linear": {"t": times, "rate": [time_linear_rate(params, n, t) for t in times]},
        "heisenberg_vs_rate": [{"t": t, "lambda_H_t": params.lambda_H * t,
                                "gamma_t": time_linear_rate(params, n, t)} for t in times],
    }


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, enum.Enum):
        return o.value
    raise TypeError(f"cannot serialise {type(o).__name__}")
