"""Seeded experiment runner behind the ``mpoqem-bench`` command.

Each experiment expands its configuration into parameter points, runs every
point for ``reps`` seeds and writes three files into the output directory:

* ``<id>_rows.csv``: one row per (point, seed), or per (point, seed, D') for
  the noise-inverse experiment. The first line is a ``#`` comment carrying
  the creation time; everything below it depends only on the configuration.
* ``<id>_summary.csv``: per-point statistics of the metric columns.
* ``<id>_manifest.json``: configuration echo, fits, timing and failures.

Column schemas are listed in ``docs/csv_schema.md``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .circuit import NoiseProfile, compile_ideal_mpo, compile_noisy_mpo, generate_test_circuit
from .fit import arithmetic_stats, fit_power_law, geometric_stats, intercept_gap
from .inverse import mpo_inverse
from .mpo import compose, identity_mpo, relative_distance_mpo, trace_infidelity_mpo
from .pipeline import PipelineParams, StateSimConfig, each_gate_floor, noise_inverse, run_pipeline

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "mpo-inverse-sweep",
    "noise-inverse-dprime",
    "deep-qem",
    "size-scaling",
    "err-threshold",
    "pepo-inverse",
    "alpha-vs-nq",
)
FAMILIES = ("depolarizing", "dephasing", "bit_flip", "amplitude_damping")
# distances this small are zero to double precision; clip before taking logs
GEOMETRIC_FLOOR = 1e-16


class ConfigError(ValueError):
    """An experiment configuration is invalid."""


@dataclass
class ExperimentConfig:
    """Ranges and settings of one experiment. List fields are swept jointly."""

    experiment: str
    n_qubits: list[int] = field(default_factory=lambda: [10])
    depths: list[int] = field(default_factory=lambda: [4])
    eps2: list[float] = field(default_factory=lambda: [1e-2])
    families: list[str] = field(default_factory=lambda: ["depolarizing"])
    inverse_bonds: list[int] = field(default_factory=lambda: [5])
    d_primes: list[int] = field(default_factory=lambda: [1])
    global_rates: list[float] = field(default_factory=lambda: [0.0])
    reps: int = 20
    seed: int = 0
    d0: int = 4
    eps1_ratio: float = 0.1
    correction_eps1: float = 1e-3
    bond_dim: int | None = 5
    chi: int | None = None
    grid: list[int] = field(default_factory=lambda: [3, 3])
    placement: str = "staggered"
    max_sweeps: int = 30
    threads: int = 1

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        for name in ("n_qubits", "depths", "eps2", "families", "inverse_bonds", "d_primes", "global_rates"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        bad = [f for f in self.families if f not in FAMILIES and f != "mixed"]
        if bad:
            raise ConfigError(f"unknown noise families {bad}")
        if any(n < 2 for n in self.n_qubits):
            raise ConfigError("n_qubits entries must be >= 2")
        if any(d < 1 for d in self.depths) or any(e < 0 for e in self.eps2):
            raise ConfigError("depths must be positive and rates non-negative")
        if self.experiment in ("deep-qem", "size-scaling", "err-threshold", "alpha-vs-nq"):
            if any(d % self.d0 for d in self.depths):
                raise ConfigError(f"depths must be multiples of d0={self.d0}")
        if len(self.grid) != 2 or min(self.grid) < 1:
            raise ConfigError("grid must be [rows, cols]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def preset(experiment: str, paper_scale: bool = False) -> ExperimentConfig:
    """Default configuration of an experiment at desk or published scale."""
    deep = dict(eps2=[1e-2], global_rates=[0.05], d_primes=[1], families=["depolarizing"])
    table: dict[str, dict[str, Any]] = {
        "mpo-inverse-sweep": dict(families=list(FAMILIES), eps2=[1e-3, 1e-2, 1e-1], global_rates=[0.0, 0.01]),
        "noise-inverse-dprime": dict(eps2=[1e-3, 1e-2, 1e-1], d_primes=[1, 2, 3, 4], global_rates=[0.0, 0.01]),
        "deep-qem": dict(deep, depths=[4, 8, 12, 16]),
        "size-scaling": dict(deep, n_qubits=[4, 6, 8, 10], depths=[12]),
        "err-threshold": dict(deep, eps2=[0.05, 0.1, 0.15, 0.2], depths=[12]),
        "pepo-inverse": dict(eps2=[1e-3, 1e-2, 1e-1], depths=[4], reps=3, grid=[3, 3], max_sweeps=15),
        "alpha-vs-nq": dict(deep, n_qubits=[4, 6, 8, 10], depths=[4, 8, 12, 16], reps=10),
    }
    published: dict[str, dict[str, Any]] = {
        "mpo-inverse-sweep": dict(n_qubits=[20], reps=200),
        "noise-inverse-dprime": dict(n_qubits=[20], reps=200),
        "deep-qem": dict(n_qubits=[20], depths=[4, 8, 12, 16, 20], reps=200),
        "size-scaling": dict(n_qubits=[8, 12, 16, 20], depths=[20], reps=200),
        "err-threshold": dict(n_qubits=[20], depths=[20], reps=200),
        "pepo-inverse": dict(grid=[6, 6], depths=[8], reps=10),
        "alpha-vs-nq": dict(n_qubits=[8, 12, 16, 20], depths=[4, 8, 12, 16, 20], reps=200),
    }
    if experiment not in table:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    kwargs = dict(table[experiment])
    if paper_scale:
        kwargs.update(published[experiment])
    return ExperimentConfig(experiment=experiment, **kwargs)


def load_config(path, experiment: str, paper_scale: bool = False) -> ExperimentConfig:
    """Preset for ``experiment`` overridden by a TOML file.

    Keys may sit at the top level or in a table named after the experiment.
    """
    data = tomllib.loads(Path(path).read_text())
    overrides = {k: v for k, v in data.items() if not isinstance(v, dict)}
    overrides.update(data.get(experiment, {}))
    overrides.pop("experiment", None)
    cfg = preset(experiment, paper_scale)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return dataclasses.replace(cfg, **overrides)


# ---------------------------------------------------------------------------
# per-point workers (top level so they pickle into worker processes)


def _profile(family: str, eps2: float, eps1_ratio: float, global_rate: float, period: int = 1) -> NoiseProfile:
    return NoiseProfile(family=family, eps2=eps2, eps1=eps2 * eps1_ratio, global_rate=global_rate, global_period=period)


def _run_inverse_point(cfg: ExperimentConfig, point: dict, seed: int) -> list[dict]:
    prof = _profile(point["family"], point["eps2"], cfg.eps1_ratio, point["global_rate"])
    spec = generate_test_circuit(point["n_qubits"], point["depth"], seed, prof, cfg.placement)
    u, _ = compile_noisy_mpo(spec)
    u0 = compile_ideal_mpo(spec)
    inv, rep = mpo_inverse(u, point["inverse_bond"], cfg.max_sweeps, seed=seed)
    return [
        {
            "noisy": relative_distance_mpo(u, u0),
            "inverse": relative_distance_mpo(compose(inv, u), identity_mpo(spec.n_qubits)),
            "sweeps": rep.sweeps_used,
            "converged": int(rep.converged),
            "trace_infidelity": trace_infidelity_mpo(inv),
            "max_increase": rep.max_increase(),
        }
    ]


def _run_dprime_point(cfg: ExperimentConfig, point: dict, seed: int) -> list[dict]:
    prof = _profile(point["family"], point["eps2"], cfg.eps1_ratio, point["global_rate"])
    spec = generate_test_circuit(point["n_qubits"], point["depth"], seed, prof, cfg.placement)
    u, _ = compile_noisy_mpo(spec)
    u0 = compile_ideal_mpo(spec)
    inv, _ = mpo_inverse(u, point["inverse_bond"], cfg.max_sweeps, seed=seed)
    noisy = relative_distance_mpo(u, u0)
    inverse = relative_distance_mpo(compose(inv, u), identity_mpo(spec.n_qubits))
    floor = each_gate_floor(spec) if point["global_rate"] > 0 else 0.0
    rows = []
    for dp in cfg.d_primes:
        ni = noise_inverse(u0, inv, dp)
        rows.append(
            {
                "d_prime": dp,
                "noisy": noisy,
                "inverse": inverse,
                "mitigated": relative_distance_mpo(compose(ni.mpo, u), u0),
                "each_gate_floor": floor,
            }
        )
    return rows


def _run_qem_point(cfg: ExperimentConfig, point: dict, seed: int) -> list[dict]:
    prof = _profile(point["family"], point["eps2"], cfg.eps1_ratio, point["global_rate"], cfg.d0)
    spec = generate_test_circuit(point["n_qubits"], point["depth"], seed, prof, cfg.placement, d0=cfg.d0)
    params = PipelineParams(
        bond_dim=cfg.bond_dim,
        inverse_bond=point["inverse_bond"],
        d_prime=1,
        correction_eps1=cfg.correction_eps1,
        max_sweeps=cfg.max_sweeps,
        sim=StateSimConfig(chi=cfg.chi),
        compute_channel_distances=False,
    )
    rec = run_pipeline(spec, params)
    return [
        {
            "unmitigated": rec.unmitigated,
            "mitigated": rec.mitigated,
            "ratio": rec.ratio,
            "all_converged": int(all(p.inverse_converged for p in rec.parts)),
        }
    ]


def _run_pepo_point(cfg: ExperimentConfig, point: dict, seed: int) -> list[dict]:
    from .pepo import (
        BoundaryContractionConfig,
        distance_to_identity,
        generate_test_circuit_2d,
        pepo_compose,
        pepo_from_circuit_2d,
        pepo_inverse,
        relative_distance_pepo,
    )

    rows, cols = cfg.grid
    spec = generate_test_circuit_2d(rows, cols, point["depth"], seed, eps2=point["eps2"], eps1=point["eps2"] * cfg.eps1_ratio)
    u = pepo_from_circuit_2d(spec)
    u0 = pepo_from_circuit_2d(spec, ideal=True)
    bcfg = BoundaryContractionConfig(chi=cfg.chi)
    inv, rep = pepo_inverse(u, point["inverse_bond"], bcfg, cfg.max_sweeps, seed=seed)
    ecfg = dataclasses.replace(bcfg, chi=rep.chi)
    return [
        {
            "noisy": relative_distance_pepo(u, u0, ecfg),
            "inverse": distance_to_identity(pepo_compose(inv, u), ecfg),
            "sweeps": rep.sweeps_used,
            "converged": int(rep.converged),
            "trace_infidelity": rep.trace_infidelity_history[-1],
            "consistency_gap": rep.consistency_gap,
        }
    ]


@dataclass(frozen=True)
class _Family:
    keys: tuple[str, ...]
    metrics: tuple[str, ...]
    statistic: str
    runner: Callable[[ExperimentConfig, dict, int], list[dict]]
    extra_keys: tuple[str, ...] = ()


_QEM_KEYS = ("family", "eps2", "global_rate", "inverse_bond", "n_qubits", "depth")
_SPECS: dict[str, _Family] = {
    "mpo-inverse-sweep": _Family(
        _QEM_KEYS,
        ("noisy", "inverse", "sweeps", "converged", "trace_infidelity", "max_increase"),
        "geometric",
        _run_inverse_point,
    ),
    "noise-inverse-dprime": _Family(
        _QEM_KEYS, ("noisy", "inverse", "mitigated", "each_gate_floor"), "geometric", _run_dprime_point, ("d_prime",)
    ),
    "deep-qem": _Family(_QEM_KEYS, ("unmitigated", "mitigated", "ratio", "all_converged"), "arithmetic", _run_qem_point),
    "size-scaling": _Family(_QEM_KEYS, ("unmitigated", "mitigated", "ratio", "all_converged"), "arithmetic", _run_qem_point),
    "err-threshold": _Family(_QEM_KEYS, ("unmitigated", "mitigated", "ratio", "all_converged"), "arithmetic", _run_qem_point),
    "alpha-vs-nq": _Family(_QEM_KEYS, ("unmitigated", "mitigated", "ratio", "all_converged"), "arithmetic", _run_qem_point),
    "pepo-inverse": _Family(
        ("rows", "cols", "eps2", "inverse_bond", "depth"),
        ("noisy", "inverse", "sweeps", "converged", "trace_infidelity", "consistency_gap"),
        "geometric",
        _run_pepo_point,
    ),
}
# counters and flags are summarized arithmetically whatever the family statistic
_ARITHMETIC_ALWAYS = {"sweeps", "converged", "all_converged", "max_increase", "consistency_gap", "ratio"}


def points(cfg: ExperimentConfig) -> list[dict]:
    """Parameter points in a fixed order."""
    if cfg.experiment == "pepo-inverse":
        rows, cols = cfg.grid
        return [
            {"rows": rows, "cols": cols, "eps2": e, "inverse_bond": b, "depth": d}
            for e, b, d in itertools.product(cfg.eps2, cfg.inverse_bonds, cfg.depths)
        ]
    return [
        {"family": f, "eps2": e, "global_rate": g, "inverse_bond": b, "n_qubits": n, "depth": d}
        for f, e, g, b, n, d in itertools.product(
            cfg.families, cfg.eps2, cfg.global_rates, cfg.inverse_bonds, cfg.n_qubits, cfg.depths
        )
    ]


def seeds(cfg: ExperimentConfig) -> list[int]:
    return [cfg.seed + r for r in range(cfg.reps)]


def _task(args) -> tuple[int, int, list[dict], str]:
    cfg, idx, point, seed = args
    spec = _SPECS[cfg.experiment]
    try:
        return idx, seed, spec.runner(cfg, point, seed), "ok"
    except Exception as exc:  # a failing seed is recorded, the run goes on
        log.warning("point %d seed %d failed: %s", idx, seed, exc)
        return idx, seed, [], f"error: {type(exc).__name__}: {exc}"


def columns(experiment: str) -> list[str]:
    spec = _SPECS[experiment]
    return list(spec.keys) + ["seed"] + list(spec.extra_keys) + list(spec.metrics) + ["status"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _csv_text(header: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in header})
    return buf.getvalue()


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    summary: list[dict]
    fits: dict
    failures: list[dict]
    wall_clock: float

    def rows_csv(self) -> str:
        return _csv_text(columns(self.config.experiment), self.rows)

    def summary_csv(self) -> str:
        return _csv_text(summary_columns(self.config.experiment), self.summary)


def summary_columns(experiment: str) -> list[str]:
    spec = _SPECS[experiment]
    return list(spec.keys) + list(spec.extra_keys) + ["metric", "statistic", "mean", "sd", "count"]


def summarize(experiment: str, rows: list[dict]) -> list[dict]:
    """Per-point statistics of every metric over successful seeds."""
    spec = _SPECS[experiment]
    group_keys = list(spec.keys) + list(spec.extra_keys)
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r.get("status", "ok") != "ok":
            continue
        groups.setdefault(tuple(r[k] for k in group_keys), []).append(r)
    out = []
    for key, members in groups.items():
        for metric in spec.metrics:
            vals = [float(m[metric]) for m in members]
            stat = "arithmetic" if metric in _ARITHMETIC_ALWAYS or spec.statistic == "arithmetic" else "geometric"
            mean, sd = arithmetic_stats(vals) if stat == "arithmetic" else geometric_stats(vals, GEOMETRIC_FLOOR)
            entry = dict(zip(group_keys, key))
            entry.update(metric=metric, statistic=stat, mean=mean, sd=sd, count=len(vals))
            out.append(entry)
    return out


def mean_of(summary: list[dict], metric: str, **match) -> float | None:
    for s in summary:
        if s["metric"] == metric and all(s.get(k) == v for k, v in match.items()):
            return s["mean"]
    return None


def fits(cfg: ExperimentConfig, summary: list[dict]) -> dict:
    """Power-law fits of mean distances where the experiment calls for them."""
    out: dict = {}

    def series(var: str, values: list, **fixed):
        pts = {"unmitigated": [], "mitigated": []}
        for v in values:
            for m in pts:
                mean = mean_of(summary, m, **{var: v}, **fixed)
                if mean is not None and mean > 0:
                    pts[m].append((float(v), mean))
        if min(len(p) for p in pts.values()) < 3:
            return None
        fu, fm = fit_power_law(pts["unmitigated"]), fit_power_law(pts["mitigated"])
        return {
            "unmitigated": {"exponent": fu.exponent, "intercept": fu.intercept, "r2": fu.r2},
            "mitigated": {"exponent": fm.exponent, "intercept": fm.intercept, "r2": fm.r2},
            "intercept_gap": intercept_gap(fu, fm),
            "suppression_factor": 10 ** intercept_gap(fu, fm),
        }

    if cfg.experiment == "deep-qem":
        for n in cfg.n_qubits:
            out[f"depth_fit_n{n}"] = series("depth", cfg.depths, n_qubits=n)
    elif cfg.experiment == "size-scaling":
        for d in cfg.depths:
            out[f"size_fit_depth{d}"] = series("n_qubits", cfg.n_qubits, depth=d)
    elif cfg.experiment == "alpha-vs-nq":
        for n in cfg.n_qubits:
            out[f"depth_fit_n{n}"] = series("depth", cfg.depths, n_qubits=n)
    elif cfg.experiment == "err-threshold":
        for e in cfg.eps2:
            u, m = mean_of(summary, "unmitigated", eps2=e), mean_of(summary, "mitigated", eps2=e)
            out[f"ratio_of_means_eps{e!r}"] = m / u if u else None
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every (point, seed) pair; results come back in (point, seed) order."""
    cfg.validate()
    start = time.perf_counter()
    pts = points(cfg)
    tasks = [(cfg, i, p, s) for i, p in enumerate(pts) for s in seeds(cfg)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))
    spec = _SPECS[cfg.experiment]
    rows, failures = [], []
    for idx, seed, metrics, status in results:
        base = dict(pts[idx], seed=seed)
        if status != "ok":
            failures.append(dict(base, status=status))
            rows.append(dict(base, status=status))
            continue
        for m in metrics:
            rows.append(dict(base, **m, status="ok"))
    for r in rows:
        for k in spec.metrics:
            r.setdefault(k, None)
    summary = summarize(cfg.experiment, rows)
    return ExperimentResult(cfg, rows, summary, fits(cfg, summary), failures, time.perf_counter() - start)


def write_outputs(result: ExperimentResult, out_dir) -> dict[str, Path]:
    """Write rows, summary and manifest; returns their paths keyed by kind."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp = result.config.experiment
    paths = {
        "rows": out / f"{exp}_rows.csv",
        "summary": out / f"{exp}_summary.csv",
        "manifest": out / f"{exp}_manifest.json",
    }
    created = datetime.now(timezone.utc).isoformat(timespec="seconds")
    comment = f"# mpoqem-bench {exp} created {created}\n"
    paths["rows"].write_text(comment + result.rows_csv())
    paths["summary"].write_text(comment + result.summary_csv())
    manifest = {
        "experiment": exp,
        "config": result.config.to_dict(),
        "statistic": _SPECS[exp].statistic,
        "geometric_floor": GEOMETRIC_FLOOR,
        "fits": result.fits,
        "failures": result.failures,
        "rows": len(result.rows),
        "wall_clock_seconds": result.wall_clock,
        "created": created,
        "versions": {"python": platform.python_version(), "numpy": np.__version__},
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return paths


def _parse_cell(v: str):
    if v == "":
        return None
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def load_rows(path) -> list[dict]:
    """Read a CSV written by :func:`write_outputs`, skipping ``#`` comment lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return [{k: _parse_cell(v) for k, v in r.items()} for r in csv.DictReader(lines)]


def check_summary(experiment: str, rows_path, summary_path, rtol: float = 1e-9) -> bool:
    """Recompute summary statistics from the rows file and compare with the summary file."""
    recomputed = summarize(experiment, load_rows(rows_path))
    stored = load_rows(summary_path)
    if len(recomputed) != len(stored):
        return False
    for a, b in zip(recomputed, stored):
        for k in ("mean", "sd"):
            if not np.isclose(float(a[k]), float(b[k]), rtol=rtol, atol=0.0):
                return False
        if a["metric"] != b["metric"] or a["count"] != b["count"]:
            return False
    return True


__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "check_summary",
    "columns",
    "load_config",
    "load_rows",
    "points",
    "preset",
    "run_experiment",
    "summarize",
    "write_outputs",
]
