"""Experiment orchestration: drops, sweeps, scheme comparisons and CSV output."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import scipy

from . import __version__
from .channel import build_correlation, sample_channel
from .combining import (
    SCHEMES,
    centralized_mmse_baseline,
    centralized_tmmse,
    estimate_team_statistics,
    local_mmse_baseline,
    local_stage,
    sort_aps,
    statistical_tmmse,
    unidirectional_tmmse,
)
from .config import ConfigurationError, CorrelationModel, SystemConfig, dbm_to_watt
from .evaluation import accumulate, cdf, finalize
from .geometry import deploy
from .pilot import ASSIGNMENT_RULE, assign_pilots, estimator_statistics, mmse_estimate, pilot_observation
from .rng import stream

log = logging.getLogger(__name__)

CSV_SCHEMA = 1
SWEEPABLE = {"L": "num_aps", "tau_p": "pilot_length", "N": "antennas_per_ap", "K": "num_ues"}
SORTED_LABEL = "uni_tmmse_sorted"
WORKERS_ENV = "TMMSE_WORKERS"
COLUMNS = ("sweep_param", "sweep_value", "scheme", "drop", "ue", "se", "mse", "team_mse",
           "alpha_re", "alpha_im", "standard_error", "floored", "flagged_trials")


@dataclass(frozen=True)
class ExperimentSpec:
    config: SystemConfig = field(default_factory=SystemConfig)
    schemes: tuple[str, ...] = SCHEMES
    drops: int = 50
    trials_per_drop: int = 500
    training_samples: int = 2000
    sweep: tuple[str, tuple[int, ...]] | None = None
    seed: int = 0
    sorted_aps: bool = False
    output_path: str | None = None
    centralized_method: str = "reduced"

    def __post_init__(self) -> None:
        if self.drops < 1 or self.trials_per_drop < 1 or self.training_samples < 1:
            raise ConfigurationError("drops, trials_per_drop and training_samples must be >= 1")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown or not self.schemes:
            raise ConfigurationError(f"unknown or empty scheme list: {sorted(unknown)}")
        if self.sorted_aps and "uni_tmmse" not in self.schemes:
            raise ConfigurationError("sorted_aps needs uni_tmmse among the schemes")
        if self.sweep is not None:
            name, values = self.sweep
            if name not in SWEEPABLE or not values:
                raise ConfigurationError(f"cannot sweep {name!r}; choose one of {sorted(SWEEPABLE)}")
            for value in values:
                self.config_for(value)  # validates

    def config_for(self, value: int | None) -> SystemConfig:
        if self.sweep is None or value is None:
            return self.config
        return self.config.with_(**{SWEEPABLE[self.sweep[0]]: int(value)})

    @property
    def sweep_values(self) -> tuple[int | None, ...]:
        return (None,) if self.sweep is None else tuple(self.sweep[1])

    @property
    def labels(self) -> tuple[str, ...]:
        labels = list(self.schemes)
        if self.sorted_aps:
            labels.insert(labels.index("uni_tmmse") + 1, SORTED_LABEL)
        return tuple(labels)

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "schemes": list(self.schemes),
            "drops": self.drops,
            "trials_per_drop": self.trials_per_drop,
            "training_samples": self.training_samples,
            "sweep": None if self.sweep is None else [self.sweep[0], list(self.sweep[1])],
            "seed": self.seed,
            "sorted_aps": self.sorted_aps,
            "centralized_method": self.centralized_method,
        }

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    rows: list[dict[str, Any]]
    metadata: dict[str, Any]

    def select(self, scheme: str | None = None, sweep_value=None) -> list[dict[str, Any]]:
        return [r for r in self.rows
                if (scheme is None or r["scheme"] == scheme)
                and (sweep_value is None or r["sweep_value"] == sweep_value)]

    def se(self, scheme: str, sweep_value=None) -> np.ndarray:
        return np.array([r["se"] for r in self.select(scheme, sweep_value)])


def _drop_rows(spec: ExperimentSpec, sweep_index: int, drop: int) -> tuple[list[dict], dict]:
    value = spec.sweep_values[sweep_index]
    config = spec.config_for(value)
    seed = spec.seed
    # Streams are keyed by drop only, so sweep points share geometry where shapes allow.
    deployment = deploy(config, stream(seed, "deployment", drop), stream(seed, "shadowing", drop))
    correlation = build_correlation(config, deployment)
    assignment = assign_pilots(config, stream(seed, "pilots", drop))
    est_stats = estimator_statistics(correlation, assignment, config)
    h = sample_channel(correlation, stream(seed, "channel", drop), spec.trials_per_drop)
    z = pilot_observation(h, assignment, config, stream(seed, "pilot_noise", drop))
    estimates = mmse_estimate(z, correlation, assignment, config, est_stats)
    local = local_stage(estimates, config)

    stats = None
    if {"uni_tmmse", "stat_tmmse"} & set(spec.schemes):
        stats = estimate_team_statistics(correlation, config, assignment, spec.training_samples,
                                         stream(seed, "training", drop, 0))
    combiners = []
    for scheme in spec.schemes:
        if scheme == "uni_tmmse":
            combiners.append(unidirectional_tmmse(local, stats))
            if spec.sorted_aps:
                order = sort_aps(deployment.betas)
                sorted_stats = estimate_team_statistics(correlation, config, assignment, spec.training_samples,
                                                        stream(seed, "training", drop, 1), order=order)
                combiners.append(unidirectional_tmmse(local, sorted_stats, scheme=SORTED_LABEL))
        elif scheme == "cent_tmmse":
            combiners.append(centralized_tmmse(local, spec.centralized_method))
        elif scheme == "stat_tmmse":
            combiners.append(statistical_tmmse(local, stats))
        elif scheme == "cent_mmse":
            combiners.append(centralized_mmse_baseline(estimates, config))
        elif scheme == "local_mmse":
            combiners.append(local_mmse_baseline(local))

    rows = []
    flagged = {}
    sweep_param = "" if spec.sweep is None else spec.sweep[0]
    for comb in combiners:
        report = finalize(accumulate(comb, h, config), config, comb.scheme)
        flagged[comb.scheme] = int(comb.flagged.sum())
        for k in range(config.num_ues):
            rows.append({
                "sweep_param": sweep_param,
                "sweep_value": "" if value is None else int(value),
                "scheme": comb.scheme,
                "drop": drop,
                "ue": k,
                "se": float(report.se[k]),
                "mse": float(report.mse[k]),
                "team_mse": float(report.team_mse[k]),
                "alpha_re": float(report.alpha_star[k].real),
                "alpha_im": float(report.alpha_star[k].imag),
                "standard_error": float(report.standard_error[k]),
                "floored": int(report.floored[k]),
                "flagged_trials": flagged[comb.scheme],
            })
    diag = {
        "clipped_shadowing_mass": deployment.clipped_mass,
        "discarded_training": 0 if stats is None else stats.discarded,
        "flagged_trials": flagged,
    }
    return rows, diag


def _task(args):
    spec, sweep_index, drop = args
    return _drop_rows(spec, sweep_index, drop)


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run(spec: ExperimentSpec, workers: int | None = None) -> RunRecord:
    """Run every (sweep value, drop) pair and collect one row per scheme and UE.

    Results are merged in (sweep value, drop) order, so output is identical
    for any worker count.
    """
    workers = default_workers() if workers is None else workers
    tasks = [(spec, s, d) for s in range(len(spec.sweep_values)) for d in range(spec.drops)]
    start = time.perf_counter()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    rows = [row for part, _ in results for row in part]
    metadata = _metadata(spec, results, time.perf_counter() - start, workers)
    record = RunRecord(rows, metadata)
    if spec.output_path:
        write_record(record, spec.output_path)
    return record


def _metadata(spec: ExperimentSpec, results, wall_time: float, workers: int) -> dict[str, Any]:
    return {
        "schema": CSV_SCHEMA,
        "spec_hash": spec.digest(),
        "spec": spec.to_dict(),
        "seed": spec.seed,
        "training_samples": spec.training_samples,
        "pilot_rule": ASSIGNMENT_RULE,
        "correlation_model": str(spec.config.correlation_model),
        "cdf_convention": "one sample per (drop, UE)",
        "carrier_frequency_hz": 2e9,
        "bandwidth_hz": 20e6,
        "discarded_training_realizations": int(sum(d["discarded_training"] for _, d in results)),
        "flagged_trials": int(sum(sum(d["flagged_trials"].values()) for _, d in results)),
        "clipped_shadowing_mass": float(sum(d["clipped_shadowing_mass"] for _, d in results)),
        "workers": workers,
        "wall_time_s": round(wall_time, 3),
        "versions": {"tmmse": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows: Sequence[dict[str, Any]], columns: Sequence[str], header: str) -> str:
    buf = io.StringIO()
    buf.write(f"# {header}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def metadata_path(path: str | os.PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_record(record: RunRecord, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"tmmse-csv schema={CSV_SCHEMA} spec_hash={record.metadata['spec_hash']}"
    path.write_text(rows_to_csv(record.rows, COLUMNS, header), encoding="utf-8")
    metadata_path(path).write_text(json.dumps(record.metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_rows(path: str | os.PathLike) -> list[dict[str, Any]]:
    """Read a run CSV back into rows (numeric fields parsed)."""
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    rows = []
    for raw in csv.DictReader(lines):
        row: dict[str, Any] = dict(raw)
        for key in ("se", "mse", "team_mse", "alpha_re", "alpha_im", "standard_error"):
            row[key] = float(row[key])
        for key in ("drop", "ue", "floored", "flagged_trials"):
            row[key] = int(row[key])
        row["sweep_value"] = int(row["sweep_value"]) if row["sweep_value"] != "" else ""
        rows.append(row)
    return rows


# --- figure presets -------------------------------------------------------

FIGURES = ("fig1", "fig2", "fig3", "fig4")
PLOT_KINDS = {"fig1": "fig1_cdf", "fig2": "fig2_sweepL", "fig3": "fig3_sweepTp", "fig4": "fig4_sweepN"}


def figure_spec(figure: str, **overrides: Any) -> ExperimentSpec:
    """Preset experiment for one of the four comparison figures."""
    if figure == "fig1":
        spec = ExperimentSpec(config=SystemConfig(num_aps=100, num_ues=10, antennas_per_ap=2, pilot_length=10))
    elif figure == "fig2":
        spec = ExperimentSpec(config=SystemConfig(num_ues=10, antennas_per_ap=2, pilot_length=10),
                              schemes=("uni_tmmse", "cent_tmmse", "stat_tmmse"),
                              sweep=("L", (20, 40, 60, 80, 100)))
    elif figure == "fig3":
        spec = ExperimentSpec(config=SystemConfig(num_aps=50, num_ues=20, antennas_per_ap=2),
                              schemes=("uni_tmmse", "cent_tmmse"),
                              sweep=("tau_p", (5, 10, 20, 40, 80)))
    elif figure == "fig4":
        spec = ExperimentSpec(config=SystemConfig(num_aps=100, num_ues=10, pilot_length=10),
                              schemes=("uni_tmmse", "cent_tmmse"),
                              sweep=("N", (1, 2, 4)), sorted_aps=True)
    else:
        raise ConfigurationError(f"unknown figure {figure!r}")
    return replace(spec, **overrides) if overrides else spec


def emit_plot_data(record: RunRecord, figure: str, path: str | os.PathLike | None = None) -> str:
    """Plot-ready CSV: CDF columns per scheme (fig1) or sweep means (fig2-4)."""
    kind = PLOT_KINDS.get(figure, figure)
    schemes = list(dict.fromkeys(r["scheme"] for r in record.rows))
    if not schemes:
        raise ConfigurationError("record has no rows")
    header = f"tmmse-plot {kind} spec_hash={record.metadata.get('spec_hash', '')}"
    if kind == "fig1_cdf":
        curves = {s: cdf(record.se(s)) for s in schemes}
        n = len(next(iter(curves.values())).values)
        columns = [c for s in schemes for c in (f"se_{s}", f"cdf_{s}")]
        rows = [{**{f"se_{s}": float(curves[s].values[i]) for s in schemes},
                 **{f"cdf_{s}": float(curves[s].probabilities[i]) for s in schemes}} for i in range(n)]
    elif kind in ("fig2_sweepL", "fig3_sweepTp", "fig4_sweepN"):
        expected = {"fig2_sweepL": "L", "fig3_sweepTp": "tau_p", "fig4_sweepN": "N"}[kind]
        params = {r["sweep_param"] for r in record.rows}
        if params != {expected}:
            raise ConfigurationError(f"{kind} needs a sweep over {expected}, record has {sorted(params)}")
        if kind == "fig4_sweepN" and not {"uni_tmmse", SORTED_LABEL} <= set(schemes):
            raise ConfigurationError("fig4_sweepN needs both sorted and unsorted unidirectional TMMSE")
        values = list(dict.fromkeys(r["sweep_value"] for r in record.rows))
        columns = ["sweep_value", "scheme", "mean_se", "standard_error", "samples"]
        rows = []
        for scheme in schemes:
            for value in values:
                se = record.se(scheme, value)
                rows.append({"sweep_value": value, "scheme": scheme, "mean_se": float(se.mean()),
                             "standard_error": float(se.std(ddof=1) / np.sqrt(se.size)) if se.size > 1 else float("nan"),
                             "samples": int(se.size)})
    else:
        raise ConfigurationError(f"unknown plot kind {figure!r}")
    text = rows_to_csv(rows, columns, header)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    return text


# --- config files ----------------------------------------------------------

_CONFIG_KEYS = {
    "num_aps": int, "num_ues": int, "antennas_per_ap": int, "pilot_length": int,
    "coherence_block": int, "area_side": float, "shadowing_std": float,
    "shadowing_decorrelation": float,
}


def parse_sweep(text: str) -> tuple[str, tuple[int, ...]]:
    """``"L=20,60,100"`` -> ``("L", (20, 60, 100))``."""
    try:
        name, values = text.split("=", 1)
        return name.strip(), tuple(int(v) for v in values.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse sweep {text!r}; expected e.g. L=20,60,100") from exc


def parse_schemes(items: Iterable[str]) -> tuple[str, ...]:
    out: list[str] = []
    for item in items:
        out.extend(s.strip() for s in item.split(",") if s.strip())
    return tuple(out)


def load_config_text(text: str, base: ExperimentSpec | None = None) -> ExperimentSpec:
    """Parse flat ``key = value`` text into an ExperimentSpec.

    System keys: num_aps, num_ues, antennas_per_ap, pilot_length,
    coherence_block, tx_power_dbm, noise_power_dbm, area_side, shadowing_std,
    shadowing_decorrelation, correlation_model. Experiment keys: schemes,
    drops, trials_per_drop, training_samples, sweep, seed, sorted_aps,
    output_path, centralized_method.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string("[experiment]\n" + text)
    items = dict(parser["experiment"])
    base = base or ExperimentSpec()
    cfg_changes: dict[str, Any] = {}
    spec_changes: dict[str, Any] = {}
    for key, raw in items.items():
        if key in _CONFIG_KEYS:
            cfg_changes[key] = _CONFIG_KEYS[key](raw)
        elif key == "tx_power_dbm":
            cfg_changes["tx_power"] = dbm_to_watt(float(raw))
        elif key == "noise_power_dbm":
            cfg_changes["noise_power"] = dbm_to_watt(float(raw))
        elif key == "correlation_model":
            cfg_changes["correlation_model"] = CorrelationModel.parse(raw)
        elif key == "schemes":
            spec_changes["schemes"] = parse_schemes([raw])
        elif key in ("drops", "trials_per_drop", "training_samples", "seed"):
            spec_changes[key] = int(raw)
        elif key == "sweep":
            spec_changes["sweep"] = parse_sweep(raw) if raw.strip() else None
        elif key == "sorted_aps":
            spec_changes["sorted_aps"] = parser["experiment"].getboolean(key)
        elif key in ("output_path", "centralized_method"):
            spec_changes[key] = raw.strip()
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    config = base.config.with_(**cfg_changes) if cfg_changes else base.config
    return replace(base, config=config, **spec_changes)


def load_config(path: str | os.PathLike, base: ExperimentSpec | None = None) -> ExperimentSpec:
    return load_config_text(Path(path).read_text(encoding="utf-8"), base)
