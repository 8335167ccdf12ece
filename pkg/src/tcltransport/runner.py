"""Experiment orchestration: model -> exact / TCL -> classification -> files."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .classify import Thresholds, classify_run, write_variance_csv
from .config import ExperimentConfig, RateChoice, RunKind
from .exact import (OccupationSeries, Picture, Propagator, Source, average_series,
                    infinite_time_average, occupations, prepare_initial_state, propagate)
from .exceptions import DimensionError
from .model import WeakCouplingWarning, build_hamiltonians, partition_model
from .randmat import (DensityKind, SpectralDensity, empirical_bandwidth, staircase_from_dos,
                      write_spectrum_csv)
from .tcl import (RatePolicy, back_transform, chain_hamiltonian, golden_rule_rate, gue_bandwidth,
                  heisenberg_bandwidth, linear_regime_check, rate_report, solve_rate_equation,
                  time_linear_rate, validate_renormalized_dos_integral, write_json)

log = logging.getLogger(__name__)

WORKERS_ENV = "TCLTRANSPORT_WORKERS"


@dataclass(frozen=True)
class DeviationReport:
    max_abs: list
    rms: list
    t_of_max: list

    @property
    def overall_max(self) -> float:
        return float(max(self.max_abs)) if self.max_abs else 0.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["overall_max"] = self.overall_max
        return d


def compare_series(a: OccupationSeries, b: OccupationSeries, window=None) -> DeviationReport:
    """Per-subunit deviation of ``b`` from ``a``.

    ``b`` is linearly interpolated onto the time grid of ``a`` when the grids
    differ; ``window = (t_lo, t_hi)`` restricts the comparison.
    """
    if a.N != b.N:
        raise DimensionError(f"series have {a.N} and {b.N} subunits")
    t = a.t
    if np.array_equal(a.t, b.t):
        Pb = b.P
    else:
        if t[0] < b.t[0] or t[-1] > b.t[-1]:
            raise DimensionError("second series does not cover the first time grid")
        Pb = np.column_stack([np.interp(t, b.t, b.P[:, mu]) for mu in range(b.N)])
    sel = np.ones(t.size, dtype=bool) if window is None else (t >= window[0]) & (t <= window[1])
    if not sel.any():
        raise DimensionError("comparison window holds no samples")
    d = np.abs(a.P[sel] - Pb[sel])
    imax = np.argmax(d, axis=0)
    return DeviationReport([float(x) for x in d.max(axis=0)],
                           [float(x) for x in np.sqrt(np.mean(d**2, axis=0))],
                           [float(t[sel][i]) for i in imax])


def decay_window_x(n: int, lambda_R: float) -> float:
    """End of the initial decay for transport along the chains: ``1 / (sqrt(n) lambda_R)``."""
    return 1.0 / (np.sqrt(n) * lambda_R)


# ---------------------------------------------------------------------------
# per-seed work units (top level so they can be sent to worker processes)


def _model(cfg: ExperimentConfig, seed: int):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WeakCouplingWarning)
        params = cfg.params.__class__(cfg.params.lambda_H, cfg.params.lambda_R, seed,
                                      cfg.params.delta_E, cfg.params.topology)
    h = build_hamiltonians(cfg.spec, params, max_dimension=cfg.max_dimension)
    return h, partition_model(h)


def exact_run(cfg: ExperimentConfig, seed: int):
    """Exact occupations for one seed, plus their infinite-time average when available."""
    h, part = _model(cfg, seed)
    psi0 = prepare_initial_state(part, cfg.mu0, cfg.initial_state, seed=seed, level=cfg.level)
    prop = Propagator(h, cfg.dense_dimension)
    traj = propagate(h, psi0, cfg.time_grid(), propagator=prop)
    occ = occupations(traj, part)
    occ.check()
    limit = infinite_time_average(prop, psi0, part) if prop.method == "dense" else None
    return occ, limit


def sinc_run(cfg: ExperimentConfig, seed: int, t) -> dict:
    h, part = _model(cfg, seed)
    policy = RatePolicy.sinc_sum(part)
    return {"rate": np.array([policy.rate(t, b) for b in range(part.N - 1)]),
            "tau": np.array([policy.effective_time(t, b) for b in range(part.N - 1)]),
            "band_widths": [part.band_width(mu) for mu in range(part.N)]}


def spectrum_run(cfg: ExperimentConfig, seed: int) -> dict:
    h, part = _model(cfg, seed)
    out = []
    fixed = h.local_part(include_random=False).diagonal().real
    for mu in range(part.N):
        # centre of the band set by the non-random local terms
        shift = fixed[part.subunits[mu]].mean()
        if cfg.kind is RunKind.DOS_CHECK:
            shift -= heisenberg_bandwidth(cfg.params) / 2
        out.append(part.band_energies[mu] - shift)
    return {"energies": out}


def _map(fn, cfg, seeds, *args):
    workers = max(1, int(os.environ.get(WORKERS_ENV, "1")))
    if workers == 1 or len(seeds) == 1:
        return [fn(cfg, s, *args) for s in seeds]
    with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
        return list(pool.map(fn, [cfg] * len(seeds), seeds, *[[a] * len(seeds) for a in args]))


# ---------------------------------------------------------------------------


class Bundle:
    """Output directory with a manifest of content hashes and timings."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []
        self.timings: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def path(self, name) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(p)
        return p

    def time(self, label, start):
        self.timings[label] = self.timings.get(label, 0.0) + time.perf_counter() - start

    def close(self, cfg: ExperimentConfig, summary: dict) -> dict:
        self.timings["total"] = time.perf_counter() - self._t0
        hashes = {}
        for p in sorted(set(self.files)):
            hashes[str(p.relative_to(self.root))] = hashlib.sha256(p.read_bytes()).hexdigest()
        manifest = {"version": __version__, "kind": cfg.kind.value, "seeds": list(cfg.seeds),
                    "files": hashes, "timings_s": self.timings, "summary": summary}
        write_json(self.root / "manifest.json", manifest)
        return manifest


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> dict:
    """Run one configured experiment and write its artifact bundle.

    Returns the manifest (also written as ``manifest.json``).
    """
    bundle = Bundle(output_dir or cfg.output_dir)
    bundle.path("config.echo").write_text(cfg.to_text())
    if cfg.spec.M > cfg.max_dimension and cfg.kind not in (
            RunKind.VARIANCE_X, RunKind.VARIANCE_Z, RunKind.RATE_REPORT):
        raise DimensionError(f"dimension {cfg.spec.M} exceeds the cap {cfg.max_dimension}")
    handler = {
        RunKind.EXACT_VS_TCL_Z: _exact_vs_tcl,
        RunKind.EXACT_VS_TCL_X: _exact_vs_tcl,
        RunKind.VARIANCE_X: _variance,
        RunKind.VARIANCE_Z: _variance,
        RunKind.DOS_CHECK: _spectrum_check,
        RunKind.GUE_CHECK: _spectrum_check,
        RunKind.RATE_REPORT: _rate_report,
    }[cfg.kind]
    summary = handler(cfg, bundle)
    return bundle.close(cfg, summary)


def _tcl_series(cfg: ExperimentConfig, t) -> tuple[OccupationSeries, OccupationSeries | None]:
    """TCL occupations (Schroedinger picture) and, for x, the interaction-picture series."""
    s, p = cfg.spec, cfg.params
    P0 = np.zeros(s.N)
    P0[cfg.mu0] = 1.0
    if cfg.rate is RateChoice.TIME_LINEAR:
        policy = RatePolicy.time_linear(p, s.n)
    elif cfg.rate is RateChoice.GOLDEN_RULE:
        delta = heisenberg_bandwidth(p) if s.partition.value == "z" else gue_bandwidth(p, s.n)
        policy = RatePolicy.golden_rule(p, s.n, delta)
    else:
        raise DimensionError("sinc-sum TCL needs a model instance; use rate_report")
    inter = solve_rate_equation(policy, s.N, P0, t)
    if s.partition.value == "x":
        return back_transform(inter, chain_hamiltonian(s.N, p.lambda_H)), inter
    # for the z split the projector commutes with the local part: pictures coincide
    return OccupationSeries(inter.t, inter.P, Picture.SCHROEDINGER, Source.TCL), None


def _exact_vs_tcl(cfg: ExperimentConfig, bundle: Bundle) -> dict:
    t = cfg.time_grid()
    start = time.perf_counter()
    results = _map(exact_run, cfg, list(cfg.seeds))
    series = [r[0] for r in results]
    limits = [r[1] for r in results if r[1] is not None]
    bundle.time("exact", start)
    for seed, occ in zip(cfg.seeds, series):
        occ.to_csv(bundle.path(f"seed_{seed}/exact.csv"))
    mean = average_series(series)
    mean.to_csv(bundle.path("exact_mean.csv"))

    start = time.perf_counter()
    tcl, inter = _tcl_series(cfg, t)
    bundle.time("tcl", start)
    tcl.to_csv(bundle.path("tcl.csv"))
    if inter is not None:
        inter.to_csv(bundle.path("tcl_interaction.csv"))

    dev = {"full": compare_series(mean, tcl).as_dict()}
    s, p = cfg.spec, cfg.params
    if s.partition.value == "z":
        gamma = golden_rule_rate(p, s.n, heisenberg_bandwidth(p))
        dev["relaxation_time"] = 1 / gamma
        dev["window"] = [0.0, 3 / gamma]
        dev["windowed"] = compare_series(mean, tcl, (0.0, 3 / gamma)).as_dict()
        late = mean.window(4 / gamma, 5 / gamma)
        if late.t.size:
            dev["late_window"] = [4 / gamma, 5 / gamma]
            dev["late_window_mean"] = late.P.mean(axis=0).tolist()
    else:
        tw = decay_window_x(s.n, p.lambda_R)
        dev["window"] = [0.0, tw]
        dev["windowed"] = compare_series(mean, tcl, (0.0, tw)).as_dict()
    if limits:
        dev["infinite_time_average"] = np.mean(limits, axis=0).tolist()
    write_json(bundle.path("deviation.json"), dev)
    write_json(bundle.path("rates.json"), rate_report(p, s.n, partition=s.partition.value,
                                                      times=[t[-1]]))
    return {"max_deviation": dev["windowed"]["overall_max"], "window": dev["window"]}


def _variance(cfg: ExperimentConfig, bundle: Bundle) -> dict:
    s, p = cfg.spec, cfg.params
    t = cfg.time_grid()
    start = time.perf_counter()
    tcl, inter = _tcl_series(cfg, t)
    bundle.time("tcl", start)
    tcl.to_csv(bundle.path("tcl.csv"))
    if inter is not None:
        inter.to_csv(bundle.path("tcl_interaction.csv"))
    if s.partition.value == "z":
        delta = heisenberg_bandwidth(p)
    else:
        delta = gue_bandwidth(p, s.n)
    regime = linear_regime_check(p, s.n, delta, cfg.linear_threshold) if delta > 0 else None
    t_end = float(t[-1])
    diag = {"linear_regime_q": None if regime is None else regime.q,
            "linear_regime_pass": None if regime is None else regime.passes,
            "lambda_H_t": p.lambda_H * t_end,
            "gamma_t": time_linear_rate(p, s.n, t_end)}
    diag["heisenberg_to_rate_ratio"] = (diag["lambda_H_t"] / diag["gamma_t"]
                                        if diag["gamma_t"] > 0 else None)
    report = classify_run(tcl, cfg.mu0, thresholds=Thresholds(),
                          boundary_threshold=cfg.boundary_threshold, diagnostics=diag,
                          n_boot=cfg.bootstrap)
    # evaluate the Heisenberg/rate comparison at the end of the fit window
    tw = report.fit.window[1]
    report.diagnostics.update({"fit_end_lambda_H_t": p.lambda_H * tw,
                               "fit_end_gamma_t": time_linear_rate(p, s.n, tw)})
    write_variance_csv(bundle.path("variance.csv"), report.t, report.variance)
    report.to_json(bundle.path("transport.json"))
    return {"label": report.label.value, "alpha": report.fit.alpha, "ci": report.fit.ci}


def _spectrum_check(cfg: ExperimentConfig, bundle: Bundle) -> dict:
    s, p = cfg.spec, cfg.params
    start = time.perf_counter()
    runs = _map(spectrum_run, cfg, list(cfg.seeds))
    bundle.time("spectra", start)
    if cfg.kind is RunKind.GUE_CHECK:
        delta = gue_bandwidth(p, s.n)
        density = SpectralDensity(DensityKind.SEMICIRCLE, delta, s.n)
    else:
        delta = heisenberg_bandwidth(p)
        density = SpectralDensity(DensityKind.CHAIN, delta, s.n)
    predicted = staircase_from_dos(density)
    write_spectrum_csv(bundle.path("predicted_staircase.csv"), predicted)
    devs, widths = [], []
    for seed, run in zip(cfg.seeds, runs):
        for mu, e in enumerate(run["energies"]):
            if mu == cfg.mu0:
                write_spectrum_csv(bundle.path(f"seed_{seed}/spectrum.csv"), e)
            devs.append(float(np.max(np.abs(e - predicted)) / delta))
            widths.append(empirical_bandwidth(e))
    report = {"density": density.kind.value, "predicted_bandwidth": delta,
              "mean_bandwidth": float(np.mean(widths)),
              "bandwidth_rel_error": float(abs(np.mean(widths) - delta) / delta),
              "max_staircase_deviation_rel": float(max(devs)),
              "mean_staircase_deviation_rel": float(np.mean(devs)),
              "blocks": len(devs)}
    if cfg.kind is RunKind.DOS_CHECK:
        lams = [delta * 10.0**-k for k in range(1, 7)]
        report["renormalized_integral"] = validate_renormalized_dos_integral(
            s.n, delta, lams).as_dict()
    write_json(bundle.path("spectrum.json"), report)
    return {k: report[k] for k in ("bandwidth_rel_error", "max_staircase_deviation_rel")}


def _rate_report(cfg: ExperimentConfig, bundle: Bundle) -> dict:
    s, p = cfg.spec, cfg.params
    report = {"z": rate_report(p, s.n, partition="z", threshold=cfg.linear_threshold),
              "x": rate_report(p, s.n, partition="x", threshold=cfg.linear_threshold)}
    if s.partition.value == "z" and s.M <= cfg.max_dimension and p.lambda_H > 0:
        gamma = golden_rule_rate(p, s.n, heisenberg_bandwidth(p))
        t = np.linspace(0.1, 1.0, 46) / gamma
        start = time.perf_counter()
        runs = _map(sinc_run, cfg, list(cfg.seeds), t)
        bundle.time("sinc_sum", start)
        rates = np.mean([r["rate"] for r in runs], axis=0)  # (bonds, times)
        ratio = rates / gamma
        with open(bundle.path("sinc_rate.csv"), "w") as fh:
            fh.write("t," + ",".join(f"gamma{b + 1}" for b in range(rates.shape[0]))
                     + ",golden_rule\n")
            for i, ti in enumerate(t):
                fh.write(f"{ti:.17g}," + ",".join(f"{r:.17g}" for r in rates[:, i])
                         + f",{gamma:.17g}\n")
        report["sinc_sum"] = {"window": [float(t[0]), float(t[-1])],
                              "max_rel_deviation": float(np.max(np.abs(ratio - 1))),
                              "mean_ratio": float(np.mean(ratio)),
                              "band_widths": [r["band_widths"] for r in runs]}
    write_json(bundle.path("rates.json"), report)
    return {"golden_rule_rate": report["z"]["golden_rule_rate"],
            "q_z": report["z"]["linear_regime"]["q"] if report["z"]["linear_regime"] else None,
            "q_x": report["x"]["linear_regime"]["q"] if report["x"]["linear_regime"] else None}


def summarize(directory) -> str:
    """Human-readable summary of a bundle directory."""
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text())
    lines = [f"{root}: {manifest['kind']} (seeds {manifest['seeds']})"]
    for key, value in manifest.get("summary", {}).items():
        lines.append(f"  {key}: {value}")
    lines.append(f"  files: {len(manifest['files'])}, total time "
                 f"{manifest['timings_s'].get('total', 0):.2f} s")
    return "\n".join(lines)


def verify_manifest(directory) -> list[str]:
    """Files whose content no longer matches the manifest hash."""
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text())
    bad = []
    for name, digest in manifest["files"].items():
        p = root / name
        if not p.is_file() or hashlib.sha256(p.read_bytes()).hexdigest() != digest:
            bad.append(name)
    return bad
