"""Monte Carlo estimators: reflection coefficients and tail probabilities.

Most estimators share one engine. Around an insertion point the field is a
radial Brownian motion plus the lateral field, so every quantity of interest
is an integral over s >= 0 (and sometimes s <= 0) of exp(gamma x_s) times
the lateral chaos density, where x is a drifted or conditioned path. The
engine advances the path and the lateral modes together, accumulates the
integral, and retires each row once the rest of its integral is negligible.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .analytic import ChaosParams, coupling_q, tail_constant
from .errors import DomainError, FitError, HorizonError
from .fields import (CovarianceKernel, GridSampler, KernelVariant, LateralStream,
                     exact_log_disk, neumann_disk, boundary_1d)
from .gmc import ChaosMeasure, chaos_from_field
from .paths import DEFAULT_STEP, FreeStream, RadialStream, sample_max
from .regions import Disk, Interval, Region, Square, as_region, region_diameter
from .rng import draw, seed_record
from .stats import mean_and_se, median_of_means, nonincreasing

MIN_EXCEEDANCES = 20
TAIL_KINDS = ("naive", "localized", "singular_direct")


@dataclass(frozen=True)
class PathConfig:
    """Discretization of the radial/lateral engine.

    ``step`` is the s-grid spacing, ``n_modes`` the lateral mode cutoff and
    ``n_theta`` the angular grid (default 4 * n_modes). A row stops once its
    latest chunk adds less than ``rel_tol`` of its running total and the path
    is so low that rising back to a relevant level has probability below
    ``return_prob``. ``s_max`` is a hard cap.
    """

    step: float = DEFAULT_STEP
    n_modes: int = 16
    n_theta: Optional[int] = None
    rel_tol: float = 1e-3
    return_prob: float = 1e-4
    s_max: float = 2000.0
    chunk: int = 16
    batch: int = 2048
    freeze_s: float = 8.0

    @property
    def theta_count(self) -> int:
        return self.n_theta if self.n_theta is not None else 4 * self.n_modes

    def halved(self) -> "PathConfig":
        return replace(self, step=self.step / 2.0, chunk=self.chunk * 2)


# ---------------------------------------------------------------------------
# The streaming engine


@dataclass
class _Side:
    """Per-row inputs to one run of the engine."""

    path: object
    nu: float
    cut: Optional[np.ndarray] = None        # (B, n_theta) lower s-limit per direction
    level: Optional[np.ndarray] = None      # (B,) stop counting once the path is below -level
    extra: Optional[Callable] = None        # (rows, s, weights) -> multiplicative factor


def _integrate(lat: LateralStream, side: _Side, gamma: float, cfg: PathConfig,
               step: float, coarse: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Integral of exp(gamma x_s) * lateral chaos over s >= 0 for each row.

    Returns the integral on the s-grid of spacing ``step`` and, with ``coarse``,
    the same integral using only every other grid point (spacing 2 * step) from
    the same random numbers.
    """
    batch = lat.batch
    h = step
    cos_only = lat.cos_only
    theta_w = 1.0 if cos_only else 2.0 * math.pi / lat.n_theta
    zscale = 2.0 if cos_only else 2.0 * math.pi
    gap = math.log(1.0 / cfg.return_prob) / (2.0 * side.nu)
    remainder = math.log(zscale / (gamma * side.nu))
    rows = np.arange(batch)
    out = np.zeros(batch)
    out_c = np.zeros(batch)
    total = np.zeros(batch)
    total_c = np.zeros(batch)
    chunk_acc = np.zeros(batch)
    committed = np.zeros(batch) if side.level is not None else None
    committed_c = np.zeros(batch) if side.level is not None else None
    cut = side.cut
    level = side.level
    k = 0
    n_max = int(math.ceil(cfg.s_max / h))
    while True:
        s = k * h
        dens = lat.chaos_density(gamma)
        x = side.path.value()
        if cut is None:
            wt = h / 2.0 if k == 0 else h
            wt_c = h if k == 0 else 2.0 * h
            if side.extra is not None:
                dens = dens * side.extra(rows, s, None)
            inner = dens.sum(axis=1) * theta_w
            inner_c = inner * (wt_c if k % 2 == 0 else 0.0)
            inner = inner * wt
        else:
            lo = max(s - h / 2.0, 0.0)
            wgt = np.clip(s + h / 2.0 - np.maximum(cut, lo), 0.0, h)
            if side.extra is not None:
                dens = dens * side.extra(rows, s, wgt)
            inner = (dens * wgt).sum(axis=1) * theta_w
            if coarse and k % 2 == 0:
                lo_c = max(s - h, 0.0)
                wgt_c = np.clip(s + h - np.maximum(cut, lo_c), 0.0, 2.0 * h)
                inner_c = (dens * wgt_c).sum(axis=1) * theta_w
            else:
                inner_c = 0.0
        e = np.exp(gamma * x)
        contrib = e * inner
        total += contrib
        chunk_acc += contrib
        if coarse:
            total_c += e * inner_c
        if level is not None:
            still = x >= -level
            committed = np.where(still, total, committed)
            if coarse:
                committed_c = np.where(still, total_c, committed_c)
            if k > 0:
                # a step with both ends below -level may have crossed it in between
                # (Brownian bridge); the last passage is then mid-step on average
                d0, d1 = np.maximum(-level - x_prev, 0.0), np.maximum(-level - x, 0.0)
                crossed = ~still & (side.path.rng.random(x.shape) < np.exp(-2.0 * d0 * d1 / h))
                committed = np.where(crossed, total - 0.5 * contrib, committed)
                if coarse:
                    committed_c = np.where(crossed, total_c - 0.5 * e * inner_c, committed_c)
            x_prev = x
        k += 1
        if k % cfg.chunk == 0 or k > n_max:
            if level is not None:
                done = x + gap < -level
            else:
                with np.errstate(divide="ignore"):
                    logtot = np.log(cfg.rel_tol * total)
                done = (chunk_acc <= cfg.rel_tol * total) & \
                       (gamma * (x + gap) + remainder < logtot)
            if k > n_max and not np.all(done):
                raise HorizonError(f"{int(np.sum(~done))} rows did not settle by s={cfg.s_max:g}")
            if np.any(done):
                idx = rows[done]
                out[idx] = committed[done] if level is not None else total[done]
                if coarse:
                    out_c[idx] = committed_c[done] if level is not None else total_c[done]
                keep = ~done
                rows = rows[keep]
                total, total_c, chunk_acc = total[keep], total_c[keep], chunk_acc[keep]
                if level is not None:
                    committed, committed_c = committed[keep], committed_c[keep]
                    level, x_prev = level[keep], x_prev[keep]
                if cut is not None:
                    cut = cut[keep]
                lat.keep(keep)
                side.path.keep(keep)
                if rows.size == 0:
                    break
            chunk_acc[:] = 0.0
        lat.advance(h)
        side.path.advance(h)
    return out, out_c


def _path_stream(nu: float, batch: int, rng, conditioned: bool):
    return RadialStream(nu, batch, rng) if conditioned else FreeStream(nu, batch, rng)


def _two_sided(gamma: float, nu: float, batch: int, cfg: PathConfig, rng, cos_only: bool,
               coarse: bool, level: Optional[np.ndarray] = None,
               step: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Integral over the whole line of exp(gamma B) against the lateral chaos.

    Both sides are conditioned-negative paths. The lateral field at s < 0 is
    obtained by running the reversible mode dynamics forward from the shared
    state at s = 0. If ``level`` is given the negative side only counts up to
    the last time it is above -level.
    """
    h = cfg.step if step is None else step
    lat = LateralStream(cfg.n_modes, cfg.theta_count, batch, rng, cos_only=cos_only)
    state0 = lat.state()
    right, right_c = _integrate(lat, _Side(_path_stream(nu, batch, rng, True), nu),
                                gamma, cfg, h, coarse)
    lat.set_state(state0)
    left, left_c = _integrate(lat, _Side(_path_stream(nu, batch, rng, True), nu, level=level),
                              gamma, cfg, h, coarse)
    return right + left, right_c + left_c


def _batches(n: int, size: int):
    start = 0
    while start < n:
        b = min(size, n - start)
        yield start, b
        start += b


# ---------------------------------------------------------------------------
# Samplers (module-level so that worker processes can run them)


def reflection_samples(n: int, rng, alpha: float, gamma: float, cfg: PathConfig,
                       dim: int = 2, coarse: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Total weighted mass rho of n independent two-sided paths, and its coarse twin."""
    q = coupling_q(gamma, dim)
    nu = q - alpha
    out = np.empty(n)
    out_c = np.empty(n)
    for start, b in _batches(n, cfg.batch):
        r, rc = _two_sided(gamma, nu, b, cfg, rng, dim == 1, coarse)
        out[start:start + b] = r
        out_c[start:start + b] = rc
    return out, out_c


def direct_radial_samples(n: int, rng, gamma: float, cfg: PathConfig,
                          dim: int = 2) -> np.ndarray:
    """Integral over s >= 0 of exp(gamma (B_s - (q - gamma) s)) Z_s."""
    nu = coupling_q(gamma, dim) - gamma
    out = np.empty(n)
    for start, b in _batches(n, cfg.batch):
        lat = LateralStream(cfg.n_modes, cfg.theta_count, b, rng, cos_only=dim == 1)
        out[start:start + b], _ = _integrate(lat, _Side(FreeStream(nu, b, rng), nu),
                                             gamma, cfg, cfg.step)
    return out


def williams_samples(n: int, rng, gamma: float, cfg: PathConfig,
                     dim: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Pairs (M, I(M)) with M the maximum and I the integral from the last passage at -M."""
    nu = coupling_q(gamma, dim) - gamma
    m = np.empty(n)
    integ = np.empty(n)
    for start, b in _batches(n, cfg.batch):
        mm = sample_max(gamma, rng, b, dim=dim)
        integ[start:start + b], _ = _two_sided(gamma, nu, b, cfg, rng, dim == 1, False, level=mm)
        m[start:start + b] = mm
    return m, integ


def singular_direct_samples(n: int, rng, gamma: float, r: float,
                            cfg: PathConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Factors of the near-singularity mass: (r^(2-g^2) E_r, e^(gamma M), I(M))."""
    if not 0.0 < r < 1.0:
        raise DomainError(f"r must lie in (0, 1), got {r!r}")
    m, integ = williams_samples(n, rng, gamma, cfg)
    var = -math.log(r)
    e = np.exp(gamma * rng.standard_normal(n) * math.sqrt(var) - 0.5 * gamma * gamma * var)
    return r ** (2.0 - gamma * gamma) * e, np.exp(gamma * m), integ


# ---------------------------------------------------------------------------
# Localized tail sampler on the polar construction


def _neumann_extra(v: np.ndarray, gamma: float, rng, radius_bound: float, n_theta: int,
                   cos_only: bool, freeze_s: float):
    """Multiplicative weight for the Neumann part of the kernel along the rays.

    The Neumann kernel is ln 1/|x-y| + f(x,y) with f(x,y) = -ln|1 - x conj(y)|,
    which equals sum_n Re[(x conj y)^n]/n. The smooth field with covariance f is
    G(z) = Re P(z) for the random polynomial P(z) = sum_n (xi_n - i eta_n) z^n / sqrt(n),
    truncated once radius_bound^(2n)/n < 1e-12. The Girsanov shift adds
    gamma^2 f(z, v). Past ``freeze_s`` the weight is frozen at its value at v.
    """
    b = v.size
    rb = max(radius_bound, 1e-3)
    kmax = 1
    while rb ** (2 * kmax) / kmax >= 1e-12:
        kmax += 1
    ns = np.arange(1, kmax + 1)
    coef = (rng.standard_normal((b, kmax)) - 1j * rng.standard_normal((b, kmax))) / np.sqrt(ns)
    theta = np.array([0.0, math.pi]) if cos_only else 2.0 * math.pi * np.arange(n_theta) / n_theta
    u = np.exp(1j * theta)
    g2 = gamma * gamma

    def field(z: np.ndarray, c: np.ndarray) -> np.ndarray:
        acc = np.zeros(z.shape, dtype=complex)
        for k in range(kmax - 1, -1, -1):
            acc = (acc + c[:, k, None]) * z
        return acc.real

    fvv = -np.log1p(-np.abs(v) ** 2)
    frozen = np.exp(gamma * field(v[:, None], coef)[:, 0] + 0.5 * g2 * fvv)

    def extra(rows: np.ndarray, s: float, wgt: Optional[np.ndarray]) -> np.ndarray:
        if s > freeze_s:
            return np.broadcast_to(frozen[rows][:, None], (rows.size, u.size))
        vv = v[rows]
        z = vv[:, None] + math.exp(-s) * u[None, :]
        live = np.ones(z.shape, dtype=bool) if wgt is None else wgt > 0
        z = np.where(live, z, 0.0)
        fzz = -np.log1p(-np.abs(z) ** 2)
        fzv = -np.log(np.abs(1.0 - z * np.conj(vv)[:, None]))
        val = np.exp(gamma * field(z, coef[rows]) - 0.5 * g2 * fzz + g2 * fzv)
        return np.where(live, val, 0.0)

    return extra


def _check_polar(region: Region, kernel: CovarianceKernel) -> None:
    if kernel.variant not in (KernelVariant.EXACT_LOG_DISK, KernelVariant.NEUMANN_DISK,
                              KernelVariant.BOUNDARY_1D):
        raise DomainError(f"polar method does not support the {kernel.variant.value} kernel")
    if (kernel.dim == 1) != isinstance(region, Interval):
        raise DomainError("one-dimensional kernels need an interval region and vice versa")
    if not isinstance(region, (Disk, Square, Interval)):
        raise DomainError(f"polar method needs a disk, square or interval, got {region.spec()}")
    if region_diameter(region) > 1.0 + 1e-12:
        raise DomainError("polar method needs a region of diameter at most 1")
    if kernel.variant is KernelVariant.NEUMANN_DISK and _outer_radius(region) >= 1.0:
        raise DomainError("region must lie inside the unit disk")


def _outer_radius(region: Region) -> float:
    if isinstance(region, Disk):
        return abs(region.center) + region.r
    x0, x1, y0, y1 = region.bbox
    return max(abs(complex(x, y)) for x in (x0, x1) for y in (y0, y1))


def localized_polar_samples(n: int, rng, region: Region, gamma: float, cfg: PathConfig,
                            kernel: CovarianceKernel, stratified: bool = False,
                            coarse: bool = False
                            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Singularity-weighted masses M(v, O) at uniform insertion points v.

    Returns ``(M, stratum_label, M_coarse)``.
    """
    _check_polar(region, kernel)
    dim = kernel.dim
    nu = coupling_q(gamma, dim) - gamma
    cos_only = dim == 1
    n_theta = 2 if cos_only else cfg.theta_count
    theta = np.array([0.0, math.pi]) if cos_only else 2.0 * math.pi * np.arange(n_theta) / n_theta
    out = np.empty(n)
    out_c = np.empty(n)
    labels = np.empty(n, dtype=int)
    for start, b in _batches(n, cfg.batch):
        v, lab = region.sample_uniform(rng, b, stratified)
        ell = region.ray_length(v[:, None], theta[None, :])
        cut = -np.log(np.maximum(ell, 1e-300))
        extra = None
        if kernel.variant is KernelVariant.NEUMANN_DISK:
            extra = _neumann_extra(v, gamma, rng, _outer_radius(region), n_theta, cos_only, cfg.freeze_s)
        lat = LateralStream(cfg.n_modes, cfg.theta_count, b, rng, cos_only=cos_only)
        side = _Side(FreeStream(nu, b, rng), nu, cut=cut, extra=extra)
        out[start:start + b], out_c[start:start + b] = _integrate(lat, side, gamma, cfg,
                                                                  cfg.step, coarse)
        labels[start:start + b] = lab
    return out, labels, out_c


# ---------------------------------------------------------------------------
# Grid (Cholesky) samplers


@dataclass(frozen=True)
class GridConfig:
    spacing: float = 1.0 / 32.0
    batch: int = 1024


def _grid_setup(region: Region, kernel: CovarianceKernel, grid: GridConfig) -> GridSampler:
    nodes = region.grid_nodes(grid.spacing)
    if nodes.size == 0:
        raise DomainError("region contains no grid cells")
    area = grid.spacing ** kernel.dim
    return GridSampler(kernel, nodes, grid.spacing / 2.0, cell_area=area)


def naive_grid_samples(n: int, rng, region: Region, gamma: float, kernel: CovarianceKernel,
                       grid: GridConfig) -> np.ndarray:
    """Total chaos mass of the region on the regularized grid field."""
    sampler = _grid_setup(region, kernel, grid)
    out = np.empty(n)
    for start, b in _batches(n, grid.batch):
        meas = chaos_from_field(sampler.sample(rng, b), gamma)
        out[start:start + b] = meas.atoms.sum(axis=-1)
    return out


def _grid_strata(nodes: np.ndarray, region: Region) -> np.ndarray:
    x0, x1, y0, y1 = region.bbox
    i = np.clip(((nodes.real - x0) / max(x1 - x0, 1e-300) * 4).astype(int), 0, 3)
    if region.dim == 1:
        return np.clip(((nodes.real - x0) / max(x1 - x0, 1e-300) * 16).astype(int), 0, 15)
    j = np.clip(((nodes.imag - y0) / max(y1 - y0, 1e-300) * 4).astype(int), 0, 3)
    return 4 * i + j


def localized_grid_samples(n: int, rng, region: Region, gamma: float,
                           kernel: CovarianceKernel, grid: GridConfig,
                           stratified: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Girsanov-shifted grid masses: insertion cell c, weights exp(gamma^2 C[:, c]).

    With the regularized covariance used for sampling this reproduces the
    localization identity exactly on the discrete measure.
    """
    sampler = _grid_setup(region, kernel, grid)
    shift = np.exp(gamma * gamma * sampler.cov)
    n_cells = sampler.n_nodes
    strata = _grid_strata(sampler.geometry.nodes, region)
    present = np.unique(strata)
    out = np.empty(n)
    labels = np.empty(n, dtype=int)
    for start, b in _batches(n, grid.batch):
        if stratified:
            lab = present[(start + np.arange(b)) % present.size]
            cells = np.empty(b, dtype=int)
            for k in present:
                pool = np.flatnonzero(strata == k)
                sel = lab == k
                cells[sel] = pool[rng.integers(0, pool.size, int(sel.sum()))]
        else:
            cells = rng.integers(0, n_cells, b)
            lab = np.zeros(b, dtype=int)
        meas = chaos_from_field(sampler.sample(rng, b), gamma)
        out[start:start + b] = np.einsum("ij,ji->i", meas.atoms, shift[:, cells])
        labels[start:start + b] = lab
    return out, labels


def grid_stratum_weights(region: Region, grid: GridConfig) -> dict[int, float]:
    nodes = region.grid_nodes(grid.spacing)
    strata = _grid_strata(nodes, region)
    ks, counts = np.unique(strata, return_counts=True)
    return {int(k): c / nodes.size for k, c in zip(ks, counts)}


# ---------------------------------------------------------------------------
# Reports and curves


@dataclass
class EstimateReport:
    name: str
    point_estimate: float
    std_error: float
    median_of_means: float
    n_samples: int
    config_fingerprint: str = ""
    seed: Optional[dict] = None
    runtime_seconds: Optional[float] = None
    details: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"name": self.name, "estimate": self.point_estimate, "stderr": self.std_error,
                "mom": self.median_of_means, "n": self.n_samples, "seed": self.seed,
                "config_sha": self.config_fingerprint, "runtime_s": self.runtime_seconds,
                "details": self.details}

    @classmethod
    def from_json_dict(cls, d: dict) -> "EstimateReport":
        return cls(d["name"], d["estimate"], d["stderr"], d["mom"], d["n"], d.get("config_sha", ""),
                   d.get("seed"), d.get("runtime_s"), d.get("details", {}))


@dataclass
class TailCurve:
    """Tail probability estimates on a threshold grid.

    ``probabilities`` are the raw estimates; ``monotone`` is their
    nonincreasing (isotonic) cleanup. Points with fewer than 20 exceedances
    are flagged by ``low_confidence``.
    """

    thresholds: np.ndarray
    probabilities: np.ndarray
    std_errors: np.ndarray
    exceedances: np.ndarray
    kind: str
    n_samples: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        self.std_errors = np.asarray(self.std_errors, dtype=float)
        self.exceedances = np.asarray(self.exceedances, dtype=int)
        if np.any(np.diff(self.thresholds) < 0):
            raise DomainError("thresholds must be sorted")
        if self.kind not in TAIL_KINDS:
            raise DomainError(f"unknown estimator kind {self.kind!r}")

    @property
    def monotone(self) -> np.ndarray:
        return nonincreasing(self.probabilities, self.std_errors)

    @property
    def low_confidence(self) -> np.ndarray:
        return self.exceedances < MIN_EXCEEDANCES

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "p", "se", "kind"])
        for t, p, se in zip(self.thresholds, self.probabilities, self.std_errors):
            w.writerow([f"{t:.17g}", f"{p:.17g}", f"{se:.17g}", self.kind])
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n_samples,
                "t": [float(x) for x in self.thresholds],
                "p": [float(x) for x in self.probabilities],
                "se": [float(x) for x in self.std_errors],
                "exceedances": [int(x) for x in self.exceedances], "meta": self.meta}

    @classmethod
    def from_json_dict(cls, d: dict) -> "TailCurve":
        return cls(d["t"], d["p"], d["se"], d["exceedances"], d["kind"], d["n"], d.get("meta", {}))


def _stratified_mean(y: np.ndarray, labels: np.ndarray,
                     weights: Optional[dict] = None) -> tuple[float, float]:
    ks = np.unique(labels)
    if ks.size <= 1:
        return mean_and_se(y)
    est, var = 0.0, 0.0
    for k in ks:
        sel = y[labels == k]
        w = (1.0 / ks.size) if weights is None else weights[int(k)]
        m, se = mean_and_se(sel)
        est += w * m
        var += (w * se) ** 2 if math.isfinite(se) else 0.0
    return est, math.sqrt(var)


def curve_from_localized(masses: np.ndarray, area: float, thresholds: Sequence[float],
                         labels: Optional[np.ndarray] = None,
                         weights: Optional[dict] = None, meta: Optional[dict] = None) -> TailCurve:
    """|O| * E[1{M > t} / M] at each threshold."""
    masses = np.asarray(masses)
    lab = np.zeros(masses.size, dtype=int) if labels is None else labels
    ps, ses, ex = [], [], []
    for t in thresholds:
        hit = masses > t
        y = np.where(hit, area / masses, 0.0)
        p, se = _stratified_mean(y, lab, weights)
        ps.append(p)
        ses.append(se)
        ex.append(int(hit.sum()))
    return TailCurve(thresholds, ps, ses, ex, "localized", masses.size, dict(meta or {}))


def curve_from_exceedance(values: np.ndarray, thresholds: Sequence[float], kind: str,
                          meta: Optional[dict] = None) -> TailCurve:
    """Empirical P(value > t) with binomial standard errors (3/n bound when no hits)."""
    values = np.asarray(values)
    n = values.size
    ps, ses, ex = [], [], []
    for t in thresholds:
        c = int(np.sum(values > t))
        p = c / n
        ps.append(p)
        ses.append(math.sqrt(p * (1.0 - p) / n) if c > 0 else 3.0 / n)
        ex.append(c)
    return TailCurve(thresholds, ps, ses, ex, kind, n, dict(meta or {}))


def curve_from_singular(values: np.ndarray, thresholds: Sequence[float], form: str,
                        area: float = 1.0, meta: Optional[dict] = None) -> TailCurve:
    if form == "exceedance":
        c = curve_from_exceedance(values, thresholds, "singular_direct", meta)
    elif form == "localized":
        c = curve_from_localized(values, area, thresholds, meta=meta)
        c = replace(c, kind="singular_direct")
    else:
        raise DomainError(f"form must be 'exceedance' or 'localized', got {form!r}")
    c.meta["form"] = form
    return c


def report_from_values(name: str, values: np.ndarray, rng, t0: float,
                       details: Optional[dict] = None) -> EstimateReport:
    m, se = mean_and_se(values)
    return EstimateReport(name, m, se, median_of_means(values), int(values.size),
                          seed=seed_record(rng), runtime_seconds=time.perf_counter() - t0,
                          details=dict(details or {}))


# ---------------------------------------------------------------------------
# Public estimators


def _check_n(n: int, minimum: int = 1) -> None:
    if n < minimum:
        raise DomainError(f"n must be at least {minimum}, got {n}")


def estimate_reflection_2d(alpha: float, gamma: float, n: int,
                           path_cfg: Optional[PathConfig] = None, rng=None,
                           min_n: int = 1000, half_step_check: bool = False) -> EstimateReport:
    """Mean of rho^((2/gamma)(Q - alpha)) over two-sided conditioned paths."""
    params = ChaosParams(gamma, 2)
    q = params.q
    if not gamma / 2.0 < alpha < q:
        raise DomainError(f"alpha must lie in ({gamma / 2:g}, {q:g}), got {alpha!r}")
    _check_n(n, min_n)
    cfg = path_cfg or PathConfig()
    t0 = time.perf_counter()
    power = 2.0 / gamma * (q - alpha)
    rho, rho_c = draw(reflection_samples, n, rng, alpha=alpha, gamma=gamma, cfg=cfg, dim=2,
                      coarse=half_step_check)
    vals = rho ** power
    details = {"alpha": alpha, "gamma": gamma, "power": power,
               "infinite_variance": bool(2.0 * power >= 4.0 / gamma ** 2)}
    if half_step_check:
        details.update(_half_step_details(vals, rho_c ** power))
    return report_from_values("reflection_2d", vals, rng, t0, details)


def estimate_reflection_1d(gamma: float, n: int, path_cfg: Optional[PathConfig] = None,
                           rng=None, min_n: int = 1000,
                           half_step_check: bool = False) -> EstimateReport:
    """Boundary reflection coefficient: two angular points theta in {0, pi}."""
    params = ChaosParams(gamma, 1)
    _check_n(n, min_n)
    cfg = path_cfg or PathConfig()
    t0 = time.perf_counter()
    power = params.moment_power
    rho, rho_c = draw(reflection_samples, n, rng, alpha=gamma, gamma=gamma, cfg=cfg, dim=1,
                      coarse=half_step_check)
    vals = rho ** power
    details = {"gamma": gamma, "power": power,
               "infinite_variance": bool(2.0 * power >= 2.0 / gamma ** 2)}
    if half_step_check:
        details.update(_half_step_details(vals, rho_c ** power))
    return report_from_values("reflection_1d", vals, rng, t0, details)


def _half_step_details(fine: np.ndarray, coarse: np.ndarray) -> dict:
    """Compare the estimate at step h with the one at 2h from the same paths."""
    diff, diff_se = mean_and_se(fine - coarse)
    _, se = mean_and_se(fine)
    return {"coarse_estimate": mean_and_se(coarse)[0], "step_shift": diff,
            "step_shift_se": diff_se, "step_shift_in_se": abs(diff) / se if se > 0 else 0.0}


def sample_quantum_sphere(gamma: float, path_cfg: Optional[PathConfig] = None, rng=None,
                          horizon: float = 30.0) -> tuple[ChaosMeasure, float]:
    """Self-normalized cylinder measure exp(gamma B) N_gamma / rho and weight rho^p.

    Uses a fixed two-sided horizon so that the whole measure can be returned.
    """
    from .fields import sample_lateral_field
    from .fields import CylinderGeometry
    from .paths import sample_two_sided
    from .rng import as_generator

    ChaosParams(gamma, 2)
    cfg = path_cfg or PathConfig()
    g = as_generator(rng)
    h = cfg.step
    two = sample_two_sided(gamma, gamma, horizon, h, g)
    s = two.s_grid()
    # the lateral field on [-S, S]: run forward from s = -S (stationary, reversible)
    lat = sample_lateral_field(cfg.n_modes, s - s[0], cfg.theta_count, g)
    w = np.full(s.size, h)
    w[0] = w[-1] = h / 2.0
    dens = np.exp(gamma * lat.values - 0.5 * gamma * gamma * lat.variance)
    atoms = np.exp(gamma * two.values())[:, None] * dens * (2.0 * math.pi / cfg.theta_count) \
        * w[:, None]
    rho = float(atoms.sum())
    power = 2.0 / gamma * (coupling_q(gamma, 2) - gamma)
    geom = CylinderGeometry(s, cfg.theta_count, cfg.n_modes)
    meas = ChaosMeasure(geom, atoms / rho, gamma, {"rho": rho})
    return meas, rho ** power


def _tail_meta(gamma: float, dim: int, region: Optional[Region], kernel: Optional[str],
               geometry: float, method: str, **extra) -> dict:
    meta = {"gamma": gamma, "dim": dim, "geometry": geometry, "method": method}
    if region is not None:
        meta["region"] = region.spec()
    if kernel is not None:
        meta["kernel"] = kernel
    meta.update(extra)
    return meta


def _kernel_for(kernel, region: Region) -> CovarianceKernel:
    if isinstance(kernel, CovarianceKernel):
        return kernel
    if kernel is None:
        return boundary_1d() if region.dim == 1 else exact_log_disk()
    from .fields import KERNELS
    if kernel not in KERNELS:
        raise DomainError(f"unknown kernel {kernel!r}")
    return KERNELS[kernel]()


def tail_naive(region, gamma: float, thresholds: Sequence[float], n: int, rng=None,
               kernel=None, grid: Optional[GridConfig] = None) -> TailCurve:
    """Direct Monte Carlo of P(M(O) > t) on the Cholesky grid field."""
    region = as_region(region)
    k = _kernel_for(kernel, region)
    ChaosParams(gamma, k.dim)
    _check_n(n)
    grid = grid or GridConfig()
    masses = draw(naive_grid_samples, n, rng, region=region, gamma=gamma, kernel=k, grid=grid)
    return curve_from_exceedance(masses, thresholds, "naive",
                                 _tail_meta(gamma, k.dim, region, k.variant.value,
                                            region.area, "grid", spacing=grid.spacing))


def polar_supported(region: Region, kernel: CovarianceKernel) -> bool:
    try:
        _check_polar(region, kernel)
    except DomainError:
        return False
    return True


def tail_localized(region, gamma: float, thresholds: Sequence[float], n: int, rng=None,
                   kernel=None, method: str = "auto", path_cfg: Optional[PathConfig] = None,
                   grid: Optional[GridConfig] = None, stratified: bool = False,
                   half_step_check: bool = False) -> TailCurve:
    """|O| E[1{M(v,O) > t}/M(v,O)] with v uniform in O, M the singularity-weighted mass.

    ``method='polar'`` samples the field around v in log-polar coordinates
    (exact-log and Neumann disks, and the interval); ``method='grid'`` uses the
    Cholesky grid field and the exact discrete Girsanov shift. ``auto`` picks
    polar when the region allows it.
    """
    region = as_region(region)
    k = _kernel_for(kernel, region)
    params = ChaosParams(gamma, k.dim)
    _check_n(n)
    if method == "auto":
        method = "polar" if polar_supported(region, k) else "grid"
    if method == "polar":
        cfg = path_cfg or PathConfig()
        m, lab, m_c = draw(localized_polar_samples, n, rng, region=region, gamma=gamma, cfg=cfg,
                           kernel=k, stratified=stratified, coarse=half_step_check)
        meta = _tail_meta(gamma, k.dim, region, k.variant.value, region.area, "polar",
                          step=cfg.step, n_modes=cfg.n_modes, stratified=stratified)
        curve = curve_from_localized(m, region.area, thresholds, lab, meta=meta)
        if half_step_check:
            coarse = curve_from_localized(m_c, region.area, thresholds, lab)
            curve.meta["coarse_p"] = [float(x) for x in coarse.probabilities]
        return curve
    if method == "grid":
        grid = grid or GridConfig()
        m, lab = draw(localized_grid_samples, n, rng, region=region, gamma=gamma, kernel=k,
                      grid=grid, stratified=stratified)
        nodes = region.grid_nodes(grid.spacing)
        area = nodes.size * grid.spacing ** k.dim
        weights = grid_stratum_weights(region, grid) if stratified else None
        meta = _tail_meta(gamma, k.dim, region, k.variant.value, area, "grid",
                          spacing=grid.spacing, stratified=stratified)
        return curve_from_localized(m, area, thresholds, lab, weights, meta)
    raise DomainError(f"unknown method {method!r}; expected auto, polar or grid")


def tail_singular_direct(gamma: float, r: float, thresholds: Sequence[float], n: int, rng=None,
                         path_cfg: Optional[PathConfig] = None, form: str = "exceedance",
                         area: float = 1.0) -> TailCurve:
    """Tail of the near-singularity mass r^(2-g^2) E_r e^(gamma M) I(M).

    ``form='exceedance'`` gives P(X > t), whose t^(4/g^2 - 1) multiple tends to
    the reflection coefficient. ``form='localized'`` gives area * E[1{X>t}/X],
    whose t^(4/g^2) multiple tends to (1 - g^2/4) R area, the same constant as
    the localized estimator for a region of that area.
    """
    ChaosParams(gamma, 2)
    _check_n(n)
    cfg = path_cfg or PathConfig()
    a, b, c = draw(singular_direct_samples, n, rng, gamma=gamma, r=r, cfg=cfg)
    meta = _tail_meta(gamma, 2, None, "exact_log_disk", area, "singular_direct", r=r)
    return curve_from_singular(a * b * c, thresholds, form, area, meta)


# ---------------------------------------------------------------------------
# Fits


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    slope_se: float
    n_points: int

    def __iter__(self):
        return iter((self.slope, self.intercept, self.slope_se))


def fit_exponent(curve: TailCurve, t_min: float = 0.0, min_exceedances: int = MIN_EXCEEDANCES,
                 t_max: float = math.inf) -> FitResult:
    """Weighted least squares of ln p on ln t for t_min <= t <= t_max.

    Zero estimates and points with too few exceedances are dropped. Weights are
    p^2/se^2 (the inverse variance of ln p); if any standard error is zero an
    unweighted fit is used.
    """
    t, p, se = curve.thresholds, curve.probabilities, curve.std_errors
    ok = (t >= t_min) & (t <= t_max) & (t > 0) & (p > 0)
    if min_exceedances > 0:
        ok &= curve.exceedances >= min_exceedances
    if ok.sum() < 3:
        raise FitError(f"need at least 3 usable points, have {int(ok.sum())}")
    x = np.log(t[ok])
    y = np.log(p[ok])
    s = se[ok] / p[ok]
    w = np.ones_like(x) if np.any(s <= 0) else 1.0 / s ** 2
    a = np.stack([x, np.ones_like(x)], axis=1)
    aw = a * w[:, None]
    cov = np.linalg.inv(a.T @ aw)
    beta = cov @ (aw.T @ y)
    if np.any(s <= 0):
        resid = y - a @ beta
        dof = max(len(x) - 2, 1)
        cov = cov * float(resid @ resid) / dof
    return FitResult(float(beta[0]), float(beta[1]), float(math.sqrt(max(cov[0, 0], 0.0))),
                     int(ok.sum()))


def plateau(curve: TailCurve, exponent: float, t_min: Optional[float] = None,
            min_exceedances: int = MIN_EXCEEDANCES) -> tuple[float, float]:
    """Weighted mean of t^exponent * p over the upper decade of thresholds.

    The standard error returned is that of the most precise point; the points
    share samples, so a pooled error would be too optimistic.
    """
    t, p, se = curve.thresholds, curve.probabilities, curve.std_errors
    if t_min is None:
        t_min = t[-1] / 10.0
    ok = (t >= t_min) & (curve.exceedances >= min_exceedances) & (se > 0)
    if not ok.any():
        raise FitError("no usable points for a plateau")
    y = t[ok] ** exponent * p[ok]
    ys = t[ok] ** exponent * se[ok]
    w = 1.0 / ys ** 2
    return float(np.sum(w * y) / np.sum(w)), float(np.min(ys))


def theory_curve(curve: TailCurve) -> np.ndarray:
    """Leading-order asymptote at each threshold of a tail curve."""
    meta = curve.meta
    params = ChaosParams(meta["gamma"], meta.get("dim", 2))
    asym = tail_constant(params)
    return np.array([asym(t, meta.get("geometry", 1.0)) if t > 0 else math.nan
                     for t in curve.thresholds])
