"""Seeded sweeps over n: run, aggregate, fit, classify and persist."""
import dataclasses
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from .. import rng
from ..analysis import (
    RegimeVerdict,
    ScalingFit,
    check_theta,
    classify_regime,
    fit_exponent,
    fit_global_constant,
    log_probes,
    reference_curves,
)
from ..config import NetworkConfig, TauModel, coerce_value, read_flat_config
from ..errors import AdhocCapacityError, InvalidConfigError, SweepFailedError
from ..rdp.analysis import GModel, q_lower_bound, q_upper_bound, xi_reference
from ..simulate import METRIC_COLUMNS, MIN_HORIZON, run_simulation
from .presets import DEFAULT_K_COEFF, DEFAULT_TAU, DEFAULT_TAU_COEFF, SCENARIOS, scenario_presets

logger = logging.getLogger(__name__)

FITTED = {
    "throughput": "throughput_per_node",
    "xi": "xi_measured",
    "lambda": "lambda_measured",
}
DORMANCY_SLACK = 1.1
SANDWICH_SHARE = 0.9


def derive_seed(base: int, n: int, replication: int) -> int:
    """Stable 64-bit seed for one sweep point.

    Adding replications or n values never changes the seeds of the others.
    """
    digest = hashlib.blake2b(f"{base}:{n}:{replication}".encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def _as_int_list(value) -> Tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        return tuple(int(coerce_value(v)) for v in value)
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"n_values must be a list of integers, got {value!r}") from exc


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep: a base network, the n grid, replications and a scenario.

    Preset scenarios set the tau model and G model of the base config;
    ``custom`` keeps the ones given in it.
    """

    base: NetworkConfig = field(default_factory=NetworkConfig)
    n_values: Tuple[int, ...] = (256, 1024, 4096, 16384)
    replications: int = 8
    scenario: str = "example1"
    horizon_slots: int = 4000
    output_dir: str = "data/sweeps"
    scenario_tau: float = DEFAULT_TAU
    scenario_tau_coeff: float = DEFAULT_TAU_COEFF
    scenario_k_coeff: float = DEFAULT_K_COEFF

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        problems = []
        ns = self.n_values
        if len(ns) < 3:
            problems.append(f"n_values needs at least 3 sizes for the fits, got {len(ns)}")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            problems.append(f"n_values must be strictly increasing, got {list(ns)}")
        if ns and ns[0] < 2:
            problems.append("every n must be >= 2")
        if self.replications < 1:
            problems.append(f"replications must be >= 1, got {self.replications}")
        if self.scenario not in SCENARIOS:
            problems.append(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.horizon_slots < MIN_HORIZON:
            problems.append(f"horizon_slots must be >= {MIN_HORIZON}, got {self.horizon_slots}")
        if problems:
            raise InvalidConfigError("Invalid ExperimentSpec: " + "; ".join(problems))

    @property
    def models(self) -> Tuple[TauModel, GModel]:
        if self.scenario == "custom":
            return self.base.tau_model, self.base.gmodel
        tau_model, gmodel = scenario_presets(
            self.scenario,
            tau=self.scenario_tau,
            tau_coeff=self.scenario_tau_coeff,
            k_coeff=self.scenario_k_coeff,
        )
        return tau_model, gmodel.with_gamma(self.base.gmodel.gamma)

    def network(self, n: int, replication: int) -> NetworkConfig:
        tau_model, gmodel = self.models
        return self.base.replace(
            n=n,
            seed=derive_seed(self.base.seed, n, replication),
            tau_model=tau_model,
            gmodel=gmodel,
        )

    def to_mapping(self) -> Dict[str, Any]:
        out = self.base.to_mapping()
        for f in dataclasses.fields(self):
            if f.name != "base":
                out[f.name] = getattr(self, f.name)
        out["n_values"] = list(self.n_values)
        return out

    @property
    def spec_hash(self) -> str:
        mapping = self.to_mapping()
        mapping.pop("output_dir")
        text = json.dumps(mapping, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()

    @classmethod
    def field_names(cls):
        return {f.name for f in dataclasses.fields(cls)} - {"base"}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "ExperimentSpec":
        """Split flat keys between the spec and its base NetworkConfig."""
        own = {k: v for k, v in mapping.items() if k in cls.field_names()}
        rest = {k: v for k, v in mapping.items() if k not in own}
        kw = {k: coerce_value(v) for k, v in own.items()}
        if "n_values" in kw:
            kw["n_values"] = _as_int_list(own["n_values"])
        for name in ("replications", "horizon_slots"):
            if name in kw:
                kw[name] = int(kw[name])
        if "output_dir" in kw:
            kw["output_dir"] = str(kw["output_dir"])
        return cls(base=NetworkConfig.from_mapping(rest), **kw)


def load_spec(path) -> ExperimentSpec:
    return ExperimentSpec.from_mapping(read_flat_config(path))


@dataclass
class RunRecord:
    """Everything one sweep produced."""

    spec_hash: str
    spec: Dict[str, Any]
    metrics: pd.DataFrame
    summary: pd.DataFrame
    fits: Dict[str, Optional[ScalingFit]]
    verdict: RegimeVerdict
    failures: List[Dict[str, Any]]
    seeds: List[Tuple[int, int, int]]
    started: str = ""
    finished: str = ""
    generator: str = rng.GENERATOR_NAME
    acceptance: Dict[str, Any] = field(default_factory=dict)

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "spec_hash": self.spec_hash,
            "spec": self.spec,
            "generator": self.generator,
            "seeds": [list(s) for s in self.seeds],
            "fits": {k: (v.to_dict() if v else None) for k, v in self.fits.items()},
            "verdict": self.verdict.to_dict(),
            "acceptance": self.acceptance,
            "failures": self.failures,
            "started": self.started,
            "finished": self.finished,
        }


def run_point(config: NetworkConfig, horizon_slots: int, replication: int) -> Dict[str, Any]:
    metrics = run_simulation(config, horizon_slots)
    row = metrics.to_row()
    row["replication"] = replication
    return row


def _now() -> str:
    return pd.Timestamp.utcnow().isoformat()


def _failure(n, replication, seed, exc) -> Dict[str, Any]:
    logger.warning(
        "point n=%d rep=%d failed: %s", n, replication, exc,
        extra={"n": n, "replication": replication, "seed": seed, "status": "failed"},
    )
    return {"n": n, "replication": replication, "seed": seed,
            "error": f"{type(exc).__name__}: {exc}"}


def record_dir(output_dir, spec_hash: str) -> Path:
    return Path(output_dir) / spec_hash[:12]


class MetricsAppender:
    """Appends each finished point to ``metrics.csv`` in completion order.

    Called from the parent process only. ``write_record`` later replaces the
    file by the sorted table.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.unlink(missing_ok=True)
        self.rows = 0

    def __call__(self, row: Mapping[str, Any]):
        frame = pd.DataFrame([row], columns=METRIC_COLUMNS)
        frame.to_csv(self.path, mode="a", header=self.rows == 0, index=False)
        self.rows += 1


def _collect(spec: ExperimentSpec, workers: int, on_row=None):
    tasks = [
        (n, rep, spec.network(n, rep))
        for n in spec.n_values
        for rep in range(spec.replications)
    ]
    rows, failures = [], []

    def done(n, rep, seed, row):
        rows.append(row)
        if on_row is not None:
            on_row(row)
        logger.info(
            "point n=%d rep=%d done", n, rep,
            extra={"n": n, "replication": rep, "seed": seed, "status": "ok",
                   "throughput_per_node": row["throughput_per_node"]},
        )

    if workers == 1:
        for n, rep, config in tasks:
            try:
                done(n, rep, config.seed, run_point(config, spec.horizon_slots, rep))
            except Exception as exc:
                failures.append(_failure(n, rep, config.seed, exc))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(run_point, config, spec.horizon_slots, rep): (n, rep, config.seed)
                for n, rep, config in tasks
            }
            for future in as_completed(futures):
                n, rep, seed = futures[future]
                try:
                    done(n, rep, seed, future.result())
                except Exception as exc:
                    failures.append(_failure(n, rep, seed, exc))

    seeds = [(n, rep, config.seed) for n, rep, config in tasks]
    failures.sort(key=lambda f: (f["n"], f["replication"]))
    return rows, failures, seeds


def aggregate(metrics: pd.DataFrame) -> pd.DataFrame:
    """Median, min and max per n of every measured column."""
    cols = [c for c in METRIC_COLUMNS if c not in ("n", "seed")]
    grouped = metrics.groupby("n")[cols]
    out = grouped.median().add_suffix("_median")
    out = out.join(grouped.min().add_suffix("_min")).join(grouped.max().add_suffix("_max"))
    out["replications"] = metrics.groupby("n").size()
    return out.reset_index()


def _fit(summary: pd.DataFrame, column: str) -> Optional[ScalingFit]:
    values = summary[["n", f"{column}_median"]].to_numpy(dtype=float)
    points = [(n, v) for n, v in values if np.isfinite(v) and v > 0]
    try:
        return fit_exponent(points)
    except AdhocCapacityError as exc:
        logger.warning("no exponent fit for %s: %s", column, exc)
        return None


def check_acceptance(record: RunRecord, gmodel: GModel, tau_model: TauModel,
                     w: float = 1.0, theta: float = 0.5) -> Dict[str, Any]:
    """Bound checks over every simulated point of a sweep.

    Dormancy: T <= 1.1 W tau / xi at every point. Interference: a constant
    c from the smaller sizes still bounds T sqrt(n ln n) / W at the larger
    ones, within 10%, and that ratio does not grow with n. Sandwich: share of points whose q lies between the two
    Q bounds at the measured reception rate and load.
    """
    df = record.metrics
    out: Dict[str, Any] = {}

    tau_m = df["tau_measured"].to_numpy(dtype=float)
    xi_m = df["xi_measured"].to_numpy(dtype=float)
    thr = df["throughput_per_node"].to_numpy(dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(np.isinf(xi_m), 0.0, w * tau_m / xi_m)
    checkable = np.isfinite(bound)
    out["dormancy_violations"] = int(np.sum(thr[checkable] > DORMANCY_SLACK * bound[checkable]))

    try:
        const = fit_global_constant(zip(df["n"], thr), w)
        out["interference_constant"] = const.c
        out["interference_ratio_slope"] = const.slope
        out["interference_violations"] = const.violations
        out["interference_checked"] = const.checked
        out["interference_ok"] = const.ok
    except AdhocCapacityError as exc:
        out["interference_constant"] = None
        out["interference_error"] = str(exc)
        out["interference_ok"] = False

    inside = total = 0
    for row in df.itertuples():
        lam_rdp = row.lambda_measured / theta
        if not (lam_rdp > 0 and np.isfinite(row.nbar_r) and np.isfinite(row.q_measured)):
            continue
        lo = q_lower_bound(gmodel, row.nbar_r, lam_rdp, int(row.n))
        hi = q_upper_bound(gmodel, row.nbar_r, lam_rdp, int(row.n))
        total += 1
        inside += lo <= row.q_measured <= hi
    out["sandwich_points"] = total
    out["sandwich_share"] = inside / total if total else None
    out["sandwich_ok"] = bool(total and inside / total >= SANDWICH_SHARE)

    summary = record.summary
    ns = [int(n) for n in summary["n"]]
    try:
        xi_points = list(zip(ns, summary["xi_measured_median"]))
        xi_ref = [(n, xi_reference(gmodel, n)) for n in ns]
        out["xi_spread"] = check_theta(xi_points, xi_ref).spread
    except AdhocCapacityError as exc:
        out["xi_spread"] = None
        logger.warning("xi spread not available: %s", exc)
    try:
        curves = reference_curves(ns, w, tau_model, gmodel).set_index("n")
        predicted = [(n, curves.loc[n, "predicted"]) for n in ns]
        t_points = list(zip(ns, summary["throughput_per_node_median"]))
        out["throughput_spread"] = check_theta(t_points, predicted).spread
    except AdhocCapacityError as exc:
        out["throughput_spread"] = None
        logger.warning("throughput spread not available: %s", exc)
    return out


def write_record(record: RunRecord, output_dir) -> Path:
    out = record_dir(output_dir, record.spec_hash)
    out.mkdir(parents=True, exist_ok=True)
    record.metrics[METRIC_COLUMNS].to_csv(out / "metrics.csv", index=False)
    record.metrics.to_csv(out / "diagnostics.csv", index=False)
    record.summary.to_csv(out / "summary.csv", index=False)
    with open(out / "record.json", "w") as f:
        json.dump(record.to_json_dict(), f, indent=2, default=_json_default)
    logger.info("sweep written to %s", out)
    return out


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (TauModel, GModel)):
        return value.to_string()
    return str(value)


def run_sweep(
    spec: ExperimentSpec, workers: Optional[int] = None, persist: bool = True
) -> RunRecord:
    """Run every (n, replication) point of ``spec`` and summarize.

    A failing point is recorded and the sweep goes on;
    ``SweepFailedError`` is raised only when no point succeeds. With
    ``persist`` every finished point is appended to ``metrics.csv`` as it
    completes, so an interrupted sweep keeps what it measured.
    """
    workers = workers or os.cpu_count() or 1
    started = _now()
    logger.info(
        "sweep %s: scenario %s, n=%s, %d replications, %d workers",
        spec.spec_hash[:12], spec.scenario, list(spec.n_values), spec.replications, workers,
    )
    appender = None
    if persist:
        appender = MetricsAppender(record_dir(spec.output_dir, spec.spec_hash) / "metrics.csv")
    rows, failures, seeds = _collect(spec, workers, on_row=appender)
    if not rows:
        raise SweepFailedError(f"all {len(seeds)} sweep points failed")

    metrics = pd.DataFrame(rows).sort_values(["n", "replication"]).reset_index(drop=True)
    summary = aggregate(metrics)
    fits = {name: _fit(summary, column) for name, column in FITTED.items()}
    for name, fit in fits.items():
        if fit is not None:
            logger.info("%s exponent %.3f (r^2 %.3f)", name, fit.slope, fit.r_squared)

    tau_model, gmodel = spec.models
    lo = spec.n_values[0]
    verdict = classify_regime(tau_model, gmodel, log_probes(lo, max(spec.n_values[-1], 100 * lo)),
                              w=spec.base.w)

    record = RunRecord(
        spec_hash=spec.spec_hash,
        spec=spec.to_mapping(),
        metrics=metrics,
        summary=summary,
        fits=fits,
        verdict=verdict,
        failures=failures,
        seeds=seeds,
        started=started,
    )
    record.acceptance = check_acceptance(record, gmodel, tau_model, spec.base.w, spec.base.theta)
    record.finished = _now()
    if persist:
        write_record(record, spec.output_dir)
    return record
