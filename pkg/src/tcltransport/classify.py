"""Spatial variance of the excitation and diffusive/ballistic labelling."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .exact import OccupationSeries
from .exceptions import DomainError

BOUNDARY_THRESHOLD = 1e-3
MIN_FIT_SAMPLES = 10


class TransportClass(str, enum.Enum):
    DIFFUSIVE = "diffusive"
    BALLISTIC = "ballistic"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class Thresholds:
    diffusive: tuple = (0.85, 1.15)
    ballistic: tuple = (1.85, 2.15)

    def label(self, alpha: float) -> TransportClass:
        if self.diffusive[0] <= alpha <= self.diffusive[1]:
            return TransportClass.DIFFUSIVE
        if self.ballistic[0] <= alpha <= self.ballistic[1]:
            return TransportClass.BALLISTIC
        return TransportClass.INDETERMINATE


def spatial_variance(series: OccupationSeries, mu0: int) -> np.ndarray:
    """``sigma^2(t) = sum_mu P_mu(t) (mu - mu0)^2`` with 0-based ``mu0``."""
    if int(mu0) != mu0 or not 0 <= mu0 < series.N:
        raise DomainError(f"mu0 = {mu0!r} outside 0..{series.N - 1}")
    d2 = (np.arange(series.N) - mu0) ** 2
    return series.P @ d2


def boundary_contact_time(series: OccupationSeries,
                          threshold: float = BOUNDARY_THRESHOLD) -> float:
    """First time the population of either end subunit exceeds ``threshold``."""
    ends = np.maximum(series.P[:, 0], series.P[:, -1])
    hit = np.flatnonzero(ends > threshold)
    return float(series.t[hit[0]]) if hit.size else float("inf")


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    prefactor: float
    ci: tuple
    window: tuple
    samples: int


def fit_power_law(t, variance, window=None, *, n_boot: int = 1000, seed: int = 0,
                  confidence: float = 0.95) -> PowerLawFit:
    """Least-squares fit of ``log var = log c + alpha log t``.

    ``window = (t_lo, t_hi)`` selects the samples (inclusive); the confidence
    interval comes from a pairs bootstrap.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(variance, dtype=float)
    lo, hi = (0.0, np.inf) if window is None else window
    sel = (t > 0) & (t >= lo) & (t <= hi)
    if sel.sum() < MIN_FIT_SAMPLES:
        raise DomainError(f"fit window holds {sel.sum()} samples, need {MIN_FIT_SAMPLES}")
    tw, vw = t[sel], v[sel]
    if np.any(vw <= 0):
        raise DomainError("variance must be positive inside the fit window")
    x, y = np.log(tw), np.log(vw)
    alpha, logc = np.polyfit(x, y, 1)
    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(n_boot):
        idx = rng.integers(0, x.size, x.size)
        if np.ptp(x[idx]) == 0:
            continue
        boots.append(np.polyfit(x[idx], y[idx], 1)[0])
    q = (1 - confidence) / 2
    ci = (float(np.quantile(boots, q)), float(np.quantile(boots, 1 - q))) if boots else (alpha, alpha)
    return PowerLawFit(float(alpha), float(np.exp(logc)), ci,
                       (float(tw[0]), float(tw[-1])), int(sel.sum()))


@dataclass(frozen=True, eq=False)
class TransportReport:
    t: np.ndarray
    variance: np.ndarray
    fit: PowerLawFit
    label: TransportClass
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"label": self.label.value, "fit": asdict(self.fit),
                "diagnostics": self.diagnostics}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True, default=_plain)
            fh.write("\n")

    def variance_csv(self, path) -> None:
        write_variance_csv(path, self.t, self.variance)


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def write_variance_csv(path, t, variance) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "var"])
        for ti, vi in zip(t, variance):
            w.writerow([f"{ti:.17g}", f"{vi:.17g}"])


def classify_run(series: OccupationSeries, mu0: int, *, window=None,
                 thresholds: Thresholds = Thresholds(),
                 boundary_threshold: float = BOUNDARY_THRESHOLD,
                 diagnostics: dict | None = None, n_boot: int = 1000,
                 seed: int = 0) -> TransportReport:
    """Variance, power-law fit and label for one run.

    Without an explicit ``window`` the fit uses every positive time before
    an end subunit is reached.
    """
    var = spatial_variance(series, mu0)
    contact = boundary_contact_time(series, boundary_threshold)
    if window is None:
        window = (0.0, contact if np.isfinite(contact) else series.t[-1])
        if np.isfinite(contact):
            # stop strictly before the contact sample
            earlier = series.t[series.t < contact]
            window = (0.0, float(earlier[-1]) if earlier.size else 0.0)
    fit = fit_power_law(series.t, var, window, n_boot=n_boot, seed=seed)
    diag = {"boundary_contact_time": contact}
    diag.update(diagnostics or {})
    return TransportReport(series.t, var, fit, thresholds.label(fit.alpha), diag)
