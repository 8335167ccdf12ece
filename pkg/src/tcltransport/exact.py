"""Unitary dynamics in the single-excitation sector and subunit occupations."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import jv

from .exceptions import DomainError, NumericalError, PictureError
from .model import HamiltonianSet, Partition

DENSE_DIMENSION = 4000
CHEBYSHEV_TOL = 1e-9


class Picture(str, enum.Enum):
    SCHROEDINGER = "schroedinger"
    INTERACTION = "interaction"


class Source(str, enum.Enum):
    EXACT = "exact"
    TCL = "tcl"


class InitialStateKind(str, enum.Enum):
    RANDOM_PHASE = "random_phase"
    SINGLE_LEVEL = "single_level"
    UNIFORM = "uniform"


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    t: float = 0.0

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True, eq=False)
class OccupationSeries:
    """Subunit probabilities ``P[i, mu]`` at times ``t[i]``."""

    t: np.ndarray
    P: np.ndarray
    picture: Picture = Picture.SCHROEDINGER
    source: Source = Source.EXACT

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape[0] != t.size:
            raise ValueError(f"{t.size} times but {P.shape[0]} rows of probabilities")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "picture", Picture(self.picture))
        object.__setattr__(self, "source", Source(self.source))

    @property
    def N(self) -> int:
        return self.P.shape[1]

    def max_normalization_error(self) -> float:
        return float(np.max(np.abs(self.P.sum(axis=1) - 1))) if self.t.size else 0.0

    def check(self, tol: float = 1e-8) -> None:
        if self.max_normalization_error() > tol:
            raise NumericalError(f"probabilities sum to 1 only within "
                                 f"{self.max_normalization_error():.3g}")
        if self.P.min() < -tol or self.P.max() > 1 + tol:
            raise NumericalError("probabilities outside [0, 1]")

    def window(self, t_lo: float, t_hi: float) -> "OccupationSeries":
        sel = (self.t >= t_lo) & (self.t <= t_hi)
        return OccupationSeries(self.t[sel], self.P[sel], self.picture, self.source)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"P{mu + 1}" for mu in range(self.N)] + ["picture", "source"])
            for ti, row in zip(self.t, self.P):
                w.writerow([f"{ti:.17g}"] + [f"{p:.17g}" for p in row]
                           + [self.picture.value, self.source.value])

    @classmethod
    def from_csv(cls, path) -> "OccupationSeries":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[0] != "t" or header[-2:] != ["picture", "source"]:
            raise ValueError(f"{path}: not an occupation series")
        N = len(header) - 3
        t = np.array([float(r[0]) for r in body])
        P = np.array([[float(x) for x in r[1:1 + N]] for r in body]).reshape(len(body), N)
        pictures = {r[-2] for r in body}
        sources = {r[-1] for r in body}
        if len(pictures) > 1 or len(sources) > 1:
            raise ValueError(f"{path}: mixed picture/source tags")
        return cls(t, P, pictures.pop() if pictures else Picture.SCHROEDINGER,
                   sources.pop() if sources else Source.EXACT)


def average_series(series) -> OccupationSeries:
    """Ensemble average of series sharing a time grid and tags."""
    series = list(series)
    first = series[0]
    for s in series[1:]:
        if s.P.shape != first.P.shape or not np.array_equal(s.t, first.t):
            raise ValueError("series must share a time grid to be averaged")
        if (s.picture, s.source) != (first.picture, first.source):
            raise PictureError("cannot average series with different tags")
    P = np.mean([s.P for s in series], axis=0)
    return OccupationSeries(first.t, P, first.picture, first.source)


# ---------------------------------------------------------------------------


def prepare_initial_state(partition: Partition, mu0: int,
                          kind: InitialStateKind = InitialStateKind.RANDOM_PHASE,
                          seed=0, level: int | None = None) -> StateVector:
    """Pure state supported on the band of subunit ``mu0`` (0-based)."""
    kind = InitialStateKind(kind)
    if int(mu0) != mu0 or not 0 <= mu0 < partition.N:
        raise DomainError(f"subunit index {mu0!r} outside 0..{partition.N - 1}")
    n = partition.n
    if kind is InitialStateKind.RANDOM_PHASE:
        phases = np.random.default_rng(seed).uniform(0, 2 * np.pi, n)
        c = np.exp(1j * phases) / np.sqrt(n)
    elif kind is InitialStateKind.UNIFORM:
        c = np.full(n, 1 / np.sqrt(n), dtype=complex)
    else:
        if level is None or int(level) != level or not 0 <= level < n:
            raise DomainError(f"band level {level!r} outside 0..{n - 1}")
        c = np.zeros(n, dtype=complex)
        c[int(level)] = 1.0
    psi = partition.embed(int(mu0), c)
    return StateVector(psi / np.linalg.norm(psi), 0.0)


# ---------------------------------------------------------------------------


def _as_operator(h):
    H = h.total() if isinstance(h, HamiltonianSet) else h
    return sp.csr_matrix(H) if not sp.issparse(H) else H.tocsr()


class Propagator:
    """``exp(-i H t)`` for a Hermitian ``H``.

    Dense eigendecomposition up to ``dense_dimension``; beyond that a
    Chebyshev expansion whose truncation error per step is below ``tol``.
    """

    def __init__(self, h, dense_dimension: int = DENSE_DIMENSION, tol: float = CHEBYSHEV_TOL):
        H = _as_operator(h)
        if H.shape[0] != H.shape[1]:
            raise ValueError("Hamiltonian must be square")
        scale = max(abs(H).max(), 1e-300) if H.nnz else 1.0
        if H.nnz and abs(H - H.getH()).max() > 1e-12 * scale:
            raise NumericalError("Hamiltonian is not Hermitian")
        self.H = H
        self.dimension = H.shape[0]
        self.tol = tol
        self.method = "dense" if self.dimension <= dense_dimension else "chebyshev"
        if self.method == "dense":
            try:
                self.energies, self.vectors = np.linalg.eigh(H.toarray())
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"eigendecomposition failed: {exc}") from None
        else:
            # Gershgorin bounds on the spectrum
            A = abs(H)
            radius = np.asarray(A.sum(axis=1)).ravel() - np.abs(H.diagonal())
            d = H.diagonal().real
            self.e_min = float(np.min(d - radius))
            self.e_max = float(np.max(d + radius))

    def evolve(self, psi, t: float) -> np.ndarray:
        """Return ``exp(-i H t) psi``; ``t`` may be negative."""
        psi = np.asarray(psi, dtype=complex)
        if self.method == "dense":
            c = self.vectors.conj().T @ psi
            return self.vectors @ (np.exp(-1j * self.energies * t) * c)
        return self._chebyshev(psi, t)

    def _chebyshev(self, psi, t):
        half = (self.e_max - self.e_min) / 2
        mid = (self.e_max + self.e_min) / 2
        if half <= 0:
            return np.exp(-1j * mid * t) * psi
        a = half * abs(t)
        # J_k(a) decays super-exponentially once k > a
        K = int(a + 10)
        while K < 10_000 and abs(jv(K, a)) > self.tol / 4:
            K += 10
        coeffs = jv(np.arange(K + 1), a)
        sign = -1j if t >= 0 else 1j
        Hs = (self.H - mid * sp.identity(self.dimension, format="csr")) / half
        v_prev, v = psi, Hs @ psi
        out = coeffs[0] * v_prev + 2 * sign * coeffs[1] * v
        factor = sign
        for k in range(2, K + 1):
            v_prev, v = v, 2 * (Hs @ v) - v_prev
            factor *= sign
            out = out + 2 * factor * coeffs[k] * v
        return np.exp(-1j * mid * t) * out


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # shape (len(t), d)

    def state(self, i: int) -> StateVector:
        return StateVector(self.states[i], float(self.t[i]))


def propagate(h, psi0, t_grid, *, dense_dimension: int = DENSE_DIMENSION,
              propagator: Propagator | None = None) -> Trajectory:
    """Evolve ``psi0`` over an ascending time grid starting at 0."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or t_grid[0] != 0 or np.any(np.diff(t_grid) <= 0):
        raise DomainError("time grid must be strictly ascending from 0")
    psi0 = psi0.amplitudes if isinstance(psi0, StateVector) else np.asarray(psi0, dtype=complex)
    prop = propagator or Propagator(h, dense_dimension)
    if psi0.shape != (prop.dimension,):
        raise ValueError(f"state of length {psi0.size} for a dimension-{prop.dimension} operator")
    states = np.empty((t_grid.size, prop.dimension), dtype=complex)
    if prop.method == "dense":
        c = prop.vectors.conj().T @ psi0
        phases = np.exp(-1j * np.outer(t_grid, prop.energies))
        states[:] = (phases * c) @ prop.vectors.T
    else:
        states[0] = psi0
        for i in range(1, t_grid.size):
            states[i] = prop.evolve(states[i - 1], t_grid[i] - t_grid[i - 1])
    return Trajectory(t_grid, states)


def energy(h, psi) -> float:
    H = _as_operator(h)
    psi = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi)
    return float(np.real(np.vdot(psi, H @ psi)))


def occupations(trajectory: Trajectory, partition: Partition) -> OccupationSeries:
    """``P_mu(t) = <psi(t)| Pi_mu |psi(t)>`` for every subunit."""
    if trajectory.states.shape[1] != partition.dimension:
        raise ValueError("trajectory and partition dimensions differ")
    P = np.empty((trajectory.t.size, partition.N))
    for mu, (sites, U) in enumerate(zip(partition.subunits, partition.band_states)):
        amps = trajectory.states[:, sites] @ U.conj()
        P[:, mu] = np.sum(np.abs(amps) ** 2, axis=1)
    return OccupationSeries(trajectory.t, P, Picture.SCHROEDINGER, Source.EXACT)


def infinite_time_average(propagator: Propagator, psi0, partition: Partition,
                          degeneracy_tol: float = 1e-12) -> np.ndarray:
    """Long-time average of ``P_mu(t)`` (dephased, dense propagators only).

    Eigenvalues closer than ``degeneracy_tol`` are treated as one degenerate
    subspace, inside which coherences do not dephase.
    """
    if propagator.method != "dense":
        raise NumericalError("infinite-time average needs the dense eigendecomposition")
    psi0 = psi0.amplitudes if isinstance(psi0, StateVector) else np.asarray(psi0)
    e, V = propagator.energies, propagator.vectors
    c = V.conj().T @ psi0
    breaks = np.flatnonzero(np.diff(e) > degeneracy_tol) + 1
    P = np.zeros(partition.N)
    for idx in np.split(np.arange(e.size), breaks):
        comp = V[:, idx] @ c[idx]
        w = np.abs(comp) ** 2
        for mu, sites in enumerate(partition.subunits):
            P[mu] += w[sites].sum()
    return P
