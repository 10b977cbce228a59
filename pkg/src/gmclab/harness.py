"""Experiment configs, the append-only result store, and the experiment runner."""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import estimators as est
from .analytic import ChaosParams
from .errors import ConfigError, DomainError, GmcLabError
from .fields import KERNELS
from .regions import parse_region
from .rng import Streams

STORE_ENV = "GMCLAB_STORE"
DEFAULT_STORE = "gmclab_store.ndjson"

EstimatorName = Literal["reflection_2d", "reflection_1d", "tail_naive", "tail_localized",
                        "tail_singular_direct"]
TAIL_ESTIMATORS = ("tail_naive", "tail_localized", "tail_singular_direct")


class ExperimentConfig(BaseModel):
    """Everything that determines an experiment's output.

    Two configs with equal :meth:`fingerprint` produce identical payloads.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: str = Field(min_length=1)
    estimator: EstimatorName
    gamma: float = Field(gt=0.0, lt=2.0)
    alpha: Optional[float] = None
    kernel: Optional[str] = None
    region: Optional[str] = None
    n_samples: int = Field(gt=0)
    thresholds: list[float] = Field(default_factory=list)
    method: Literal["auto", "polar", "grid"] = "auto"
    stratified: bool = False
    form: Literal["exceedance", "localized"] = "exceedance"
    radius: float = 0.5
    step: float = Field(default=est.DEFAULT_STEP, gt=0.0)
    n_modes: int = Field(default=16, ge=1)
    s_max: float = Field(default=2000.0, gt=0.0)
    rel_tol: float = Field(default=1e-3, gt=0.0, lt=1.0)
    grid_spacing: float = Field(default=1.0 / 32.0, gt=0.0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    block_size: int = Field(default=4096, ge=1)
    workers: int = Field(default=1, ge=1)
    half_step_check: bool = False

    @field_validator("kernel")
    @classmethod
    def _kernel_known(cls, v):
        if v is not None and v not in KERNELS:
            raise ValueError(f"unknown kernel {v!r}; expected one of {sorted(KERNELS)}")
        return v

    @field_validator("region")
    @classmethod
    def _region_parses(cls, v):
        if v is not None:
            try:
                parse_region(v)
            except DomainError as exc:
                raise ValueError(str(exc)) from None
        return v

    @field_validator("thresholds")
    @classmethod
    def _thresholds_sorted(cls, v):
        if any(t < 0 or not math.isfinite(t) for t in v):
            raise ValueError("thresholds must be finite and nonnegative")
        if any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("thresholds must be sorted")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        problems = []
        dim = 1 if (self.estimator == "reflection_1d" or self.kernel == "boundary_1d"
                    or (self.region or "").startswith("interval")) else 2
        try:
            ChaosParams(self.gamma, dim)
        except DomainError as exc:
            problems.append(f"gamma: {exc}")
        if self.estimator in TAIL_ESTIMATORS and not self.thresholds:
            problems.append("thresholds: required for tail estimators")
        if self.estimator in ("tail_naive", "tail_localized") and self.region is None:
            problems.append("region: required for this estimator")
        if self.estimator in ("reflection_2d", "reflection_1d") and self.n_samples < 1000:
            problems.append("n_samples: reflection estimators need at least 1000 samples")
        if self.estimator == "reflection_2d" and self.alpha is not None:
            q = self.gamma / 2 + 2 / self.gamma
            if not self.gamma / 2 < self.alpha < q:
                problems.append(f"alpha: must lie in ({self.gamma / 2:g}, {q:g})")
        if self.estimator == "tail_singular_direct" and not 0 < self.radius < 1:
            problems.append("radius: must lie in (0, 1)")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def canonical(self) -> str:
        """Sorted-key JSON of all fields except ``workers``, which never changes results."""
        d = self.model_dump(mode="json")
        d.pop("workers")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def path_config(self) -> est.PathConfig:
        return est.PathConfig(step=self.step, n_modes=self.n_modes, s_max=self.s_max,
                              rel_tol=self.rel_tol)

    def streams(self) -> Streams:
        return Streams(self.seed, self.experiment, self.block_size, self.workers)


def validate_config(data: dict) -> ExperimentConfig:
    """Build a config, collecting every failing field into one ConfigError."""
    try:
        return ExperimentConfig(**data)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            msg = err["msg"].removeprefix("Value error, ")
            problems.append(f"{loc}: {msg}" if loc else msg)
        raise ConfigError(problems) from None
    except TypeError as exc:
        raise ConfigError([str(exc)]) from None


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read a YAML or JSON config file (JSON is valid YAML)."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read config {p}: {exc.strerror or exc}"]) from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"cannot parse config {p}: {exc}"]) from None
    if not isinstance(data, dict):
        raise ConfigError([f"config {p} must be a mapping of field names to values"])
    return validate_config(data)


# ---------------------------------------------------------------------------
# Result store


def _payload_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class Record:
    record_id: str
    experiment: str
    config_sha: str
    kind: str              # "report", "curve" or "failure"
    payload: dict
    meta: dict

    def report(self) -> est.EstimateReport:
        if self.kind != "report":
            raise TypeError(f"record {self.record_id} holds a {self.kind}, not an estimate report")
        return est.EstimateReport.from_json_dict(self.payload)

    def curve(self) -> est.TailCurve:
        if self.kind != "curve":
            raise TypeError(f"record {self.record_id} holds a {self.kind}, not a tail curve")
        return est.TailCurve.from_json_dict(self.payload)


class ResultStore:
    """Append-only NDJSON log with a checksum per line.

    Each line is ``{"id", "experiment", "config_sha", "kind", "payload", "sha256", "meta"}``
    where ``sha256`` covers the payload only. ``meta`` holds wall-clock data
    only when the caller asks for it, so by default two runs of the same
    configs produce byte-identical stores. Tail curves are also written to ``<store>.curves/<id>.csv``.
    Reading skips a torn final line left by a killed writer.
    """

    def __init__(self, path: Union[str, Path, None] = None):
        if path is None:
            path = os.environ.get(STORE_ENV, DEFAULT_STORE)
        self.path = Path(path)

    @property
    def curve_dir(self) -> Path:
        return self.path.with_name(self.path.name + ".curves")

    def _next_id(self, experiment: str, sha: str) -> str:
        n = sum(1 for r in self.records() if r.experiment == experiment and r.config_sha == sha)
        return f"{experiment}-{sha[:12]}-{n}"

    def append(self, experiment: str, config_sha: str, kind: str, payload: dict,
               meta: Optional[dict] = None) -> str:
        rid = self._next_id(experiment, config_sha)
        line = {"id": rid, "experiment": experiment, "config_sha": config_sha, "kind": kind,
                "payload": payload, "sha256": _payload_hash(payload), "meta": meta or {}}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(line, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        if kind == "curve":
            self.curve_dir.mkdir(parents=True, exist_ok=True)
            csv_text = est.TailCurve.from_json_dict(payload).to_csv()
            (self.curve_dir / f"{rid}.csv").write_text(csv_text, encoding="utf-8", newline="\n")
        return rid

    def records(self) -> list[Record]:
        if not self.path.exists():
            return []
        out = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                try:
                    d = json.loads(line)
                except json.JSONDecodeError:
                    continue
                if not isinstance(d, dict) or _payload_hash(d.get("payload")) != d.get("sha256"):
                    continue
                out.append(Record(d["id"], d["experiment"], d["config_sha"], d["kind"],
                                  d["payload"], d.get("meta", {})))
        return out

    def get(self, record_id: str) -> Record:
        for r in self.records():
            if r.record_id == record_id:
                return r
        raise KeyError(f"no record {record_id!r} in {self.path}")


# ---------------------------------------------------------------------------
# Running experiments


def execute(cfg: ExperimentConfig) -> Union[est.EstimateReport, est.TailCurve]:
    """Dispatch to the named estimator. Results depend only on the fingerprint."""
    rng = cfg.streams()
    pc = cfg.path_config()
    if cfg.estimator == "reflection_2d":
        alpha = cfg.gamma if cfg.alpha is None else cfg.alpha
        res = est.estimate_reflection_2d(alpha, cfg.gamma, cfg.n_samples, pc, rng,
                                         half_step_check=cfg.half_step_check)
    elif cfg.estimator == "reflection_1d":
        res = est.estimate_reflection_1d(cfg.gamma, cfg.n_samples, pc, rng,
                                         half_step_check=cfg.half_step_check)
    elif cfg.estimator == "tail_naive":
        res = est.tail_naive(cfg.region, cfg.gamma, list(cfg.thresholds), cfg.n_samples, rng,
                             kernel=cfg.kernel, grid=est.GridConfig(cfg.grid_spacing))
    elif cfg.estimator == "tail_localized":
        res = est.tail_localized(cfg.region, cfg.gamma, list(cfg.thresholds), cfg.n_samples, rng,
                                 kernel=cfg.kernel, method=cfg.method, path_cfg=pc,
                                 grid=est.GridConfig(cfg.grid_spacing),
                                 stratified=cfg.stratified,
                                 half_step_check=cfg.half_step_check)
    else:
        area = parse_region(cfg.region).area if cfg.region else 1.0
        res = est.tail_singular_direct(cfg.gamma, cfg.radius, list(cfg.thresholds), cfg.n_samples,
                                       rng, pc, form=cfg.form, area=area)
    if isinstance(res, est.EstimateReport):
        res.config_fingerprint = cfg.fingerprint()
    return res


@dataclass(frozen=True)
class RunOutcome:
    record_id: str
    result: Union[est.EstimateReport, est.TailCurve, GmcLabError]
    runtime_s: float

    @property
    def failed(self) -> bool:
        return isinstance(self.result, GmcLabError)


def run_experiment(cfg: ExperimentConfig, store: Optional[ResultStore] = None,
                   record_runtime: bool = False) -> RunOutcome:
    """Run the experiment and persist its result.

    Estimator failures are stored as failure records and returned, not raised.
    Wall-clock time goes into the store only when ``record_runtime`` is set.
    """
    store = store or ResultStore()
    sha = cfg.fingerprint()
    t0 = time.perf_counter()
    try:
        res = execute(cfg)
    except GmcLabError as exc:
        runtime = time.perf_counter() - t0
        payload = {"error": type(exc).__name__, "message": str(exc),
                   "config": json.loads(cfg.canonical())}
        meta = {"runtime_s": runtime} if record_runtime else None
        return RunOutcome(store.append(cfg.experiment, sha, "failure", payload, meta), exc, runtime)
    runtime = time.perf_counter() - t0
    if isinstance(res, est.EstimateReport):
        res.runtime_seconds = runtime if record_runtime else None
        payload, kind = res.to_json_dict(), "report"
    else:
        res.meta["config_sha"] = sha
        payload, kind = res.to_json_dict(), "curve"
    meta = {"runtime_s": runtime} if record_runtime else None
    return RunOutcome(store.append(cfg.experiment, sha, kind, payload, meta), res, runtime)


def result_to_text(res: Union[est.EstimateReport, est.TailCurve]) -> str:
    """The ``--out`` file body: JSON for reports, CSV for curves."""
    if isinstance(res, est.EstimateReport):
        return json.dumps(res.to_json_dict(), sort_keys=True, indent=2) + "\n"
    return res.to_csv()


def plot_rows(curve: est.TailCurve) -> list[tuple[float, float, float, float]]:
    theory = est.theory_curve(curve)
    return [(float(t), float(p), float(se), float(th)) for t, p, se, th in
            zip(curve.thresholds, curve.probabilities, curve.std_errors, theory)]

