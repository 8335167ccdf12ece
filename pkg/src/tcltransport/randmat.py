"""Random-matrix sampling and level-density utilities.

Densities are normalised to the number of levels ``n``: integrating ``g``
over its band gives ``n``. Cumulative counts are computed on the angle
variable ``E = lo + (hi - lo) (1 - cos theta) / 2``, which turns the inverse
square-root edges of the chain density into a bounded integrand.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import PchipInterpolator

from .exceptions import DomainError

_GRID = 2**14 + 1


def sample_gue(n: int, variance: float, seed) -> np.ndarray:
    """Draw an ``n x n`` GUE matrix.

    Off-diagonal real and imaginary parts are i.i.d. normal with the given
    ``variance``; diagonal entries are real with variance ``2 * variance``.
    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    if int(n) != n or n < 2:
        raise DomainError(f"GUE size must be an integer >= 2, got {n!r}")
    if not variance > 0:
        raise DomainError(f"variance must be positive, got {variance!r}")
    rng = np.random.default_rng(seed)
    s = np.sqrt(variance)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    # (A + A^H)/2 has off-diagonal parts of variance 1/2 and a real diagonal
    # of variance 1; scale both to the target.
    return s * (A + A.conj().T) / np.sqrt(2.0)


class DensityKind(str, enum.Enum):
    CHAIN = "chain"
    SEMICIRCLE = "semicircle"
    CONSTANT = "constant"


def _check(delta_eps, n):
    if not delta_eps > 0:
        raise DomainError(f"band width must be positive, got {delta_eps!r}")
    if not n > 0:
        raise DomainError(f"level count must be positive, got {n!r}")


def chain_dos(delta_eps: float, n: float, E):
    """Level density of a Heisenberg chain band on ``(0, delta_eps)``.

    Diverges at both edges, so ``E`` must lie strictly inside the band.
    """
    _check(delta_eps, n)
    E = np.asarray(E, dtype=float)
    if np.any(E <= 0) or np.any(E >= delta_eps):
        raise DomainError("chain density is singular at and undefined beyond the band edges")
    u = 2 * E / delta_eps - 1
    g = 2 * n / (np.pi * delta_eps) / np.sqrt(1 - u * u)
    return g if g.ndim else float(g)


def semicircle_dos(delta_eps: float, n: float, E):
    """Semicircle density of width ``delta_eps`` centred at zero."""
    _check(delta_eps, n)
    E = np.asarray(E, dtype=float)
    r2 = delta_eps**2 / 4 - E * E
    g = np.where(r2 > 0, 8 * n / (np.pi * delta_eps**2) * np.sqrt(np.clip(r2, 0, None)), 0.0)
    return g if g.ndim else float(g)


def constant_dos(delta_eps: float, n: float, E):
    _check(delta_eps, n)
    E = np.asarray(E, dtype=float)
    g = np.where((E >= 0) & (E <= delta_eps), n / delta_eps, 0.0)
    return g if g.ndim else float(g)


@dataclass(frozen=True)
class SpectralDensity:
    kind: DensityKind
    delta_eps: float
    n: int

    def __post_init__(self):
        object.__setattr__(self, "kind", DensityKind(self.kind))
        _check(self.delta_eps, self.n)

    @property
    def band(self) -> tuple[float, float]:
        if self.kind is DensityKind.SEMICIRCLE:
            return -self.delta_eps / 2, self.delta_eps / 2
        return 0.0, float(self.delta_eps)

    def __call__(self, E):
        fn = {DensityKind.CHAIN: chain_dos, DensityKind.SEMICIRCLE: semicircle_dos,
              DensityKind.CONSTANT: constant_dos}[self.kind]
        return fn(self.delta_eps, self.n, E)

    def _theta_integrand(self, theta):
        lo, hi = self.band
        E = lo + (hi - lo) * (1 - np.cos(theta)) / 2
        jac = (hi - lo) * np.sin(theta) / 2
        inner = (theta > 0) & (theta < np.pi)
        out = np.zeros_like(theta)
        out[inner] = self(E[inner]) * jac[inner]
        if self.kind is DensityKind.CHAIN:
            # g * dE/dtheta is exactly n/pi; fill in the edge limits
            out[~inner] = self.n / np.pi
        return out

    def _angle_table(self, points: int = _GRID):
        theta = np.linspace(0.0, np.pi, points)
        f = self._theta_integrand(theta)
        if not np.all(np.isfinite(f)):
            raise DomainError("density is not integrable on its band")
        return theta, cumulative_simpson(f, x=theta, initial=0.0)

    def energy(self, theta):
        lo, hi = self.band
        return lo + (hi - lo) * (1 - np.cos(theta)) / 2

    def cumulative_table(self, points: int = _GRID):
        """Return ``(E, count)`` on a dense grid spanning the band."""
        theta, count = self._angle_table(points)
        return self.energy(theta), count

    def total(self) -> float:
        return float(self._angle_table()[1][-1])


def staircase_from_dos(density: SpectralDensity) -> np.ndarray:
    """Predicted eigenvalues ``E(x)``, ``x = 1..n``, from the level density.

    ``E(x)`` solves ``count(E) = x - 1/2``.
    """
    theta, count = density._angle_table()
    step = np.diff(count)
    if np.any(step < -1e-12):
        raise DomainError("cumulative level count is not monotone")
    targets = np.arange(1, int(density.n) + 1) - 0.5
    if np.all(step > 0):
        return density.energy(PchipInterpolator(count, theta)(targets))
    return density.energy(np.interp(targets, count, theta))


def empirical_bandwidth(eigenvalues) -> float:
    e = np.asarray(eigenvalues)
    return float(e.max() - e.min())


def write_spectrum_csv(path, energies) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "energy"])
        for i, e in enumerate(np.asarray(energies, dtype=float), start=1):
            w.writerow([i, f"{e:.17g}"])


def read_spectrum_csv(path) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return np.atleast_1d(data["energy"])
