"""Monte Carlo ensembles along a family of noise coefficients, compared with the deterministic limit.

For each member ``theta`` of the family, ``M`` stochastic Galerkin trajectories
are run from the same initial data and compared, on the shared record grid, with
one deterministic solution of the limit equation at the *same* truncation ``N``.
Per sample the distance is the supremum over record times of the ``H^-delta``
norm of the difference (for Boussinesq: the larger of that omega distance and
the discretised ``L^2(0,T; L^2)`` distance of xi).

Samples are processed in fixed chunks (``batch_size``) that do not depend on the
number of worker processes, so results are bitwise independent of ``threads``.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .dynamics import BrownianDriver, RecordingPlan, SdeConfig, TrajectoryRecord, simulate_batch
from .fields import SpectralScalarField, sobolev_norm, sobolev_weights
from .limit import DeterministicConfig, solve_boussinesq, solve_sqg
from .noise import NoiseCoefficients, scaling_ratio

DEFAULT_OBSERVABLE_SEED = 20240611


def default_observables(n: int, seed: int = DEFAULT_OBSERVABLE_SEED, band: int = 4) -> dict:
    """``e_(1,0)``, ``e_(0,1)``, ``e_(1,1)`` and one unit-norm random field on ``|k| <= band``."""
    rnd = SpectralScalarField.random(n, np.random.default_rng(seed), band=min(band, n))
    return {
        "e10": SpectralScalarField.basis((1, 0), n),
        "e01": SpectralScalarField.basis((0, 1), n),
        "e11": SpectralScalarField.basis((1, 1), n),
        "random": rnd * (1.0 / rnd.norm()),
    }


@dataclass(frozen=True)
class EnsembleSpec:
    """One scaling experiment. ``base.theta`` is ignored; each family member replaces it.

    ``initial`` holds ``(omega0,)`` for SQG or ``(xi0, omega0)`` for Boussinesq.
    ``deviation_epsilon = None`` resolves to ``0.1 ||omega0||_{H^-delta}``.
    """

    base: SdeConfig
    theta_family: Sequence[NoiseCoefficients]
    initial: tuple
    sample_count: int = 64
    seed: int = 0
    delta: float = 0.5
    observables: Mapping[str, SpectralScalarField] | None = None
    deviation_epsilon: float | None = None
    record_intervals: int = 50
    batch_size: int = 16
    threads: int = 1
    limit_scheme: str = "ExponentialRK2"

    def __post_init__(self):
        if self.sample_count < 2:
            raise ValueError(f"an ensemble needs at least 2 samples, got {self.sample_count}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.batch_size < 1 or self.threads < 1:
            raise ValueError("batch_size and threads must be >= 1")
        if not self.theta_family:
            raise ValueError("theta_family is empty")
        ratios = [scaling_ratio(t) for t in self.theta_family]
        if any(b >= a for a, b in zip(ratios, ratios[1:])):
            raise ValueError(f"theta_family must be strictly decreasing in flatness ratio, got {ratios}")
        init = self.initial
        if isinstance(init, SpectralScalarField):
            init = (init,)
        init = tuple(init)
        if len(init) != len(self.base.fields):
            raise ValueError(f"{self.base.equation} needs initial fields {self.base.fields}")
        object.__setattr__(self, "initial", init)
        if self.observables is None:
            object.__setattr__(self, "observables", default_observables(self.base.N))
        if self.deviation_epsilon is not None and not self.deviation_epsilon >= 0:
            raise ValueError("deviation_epsilon must be nonnegative")

    @property
    def epsilon(self) -> float:
        if self.deviation_epsilon is not None:
            return float(self.deviation_epsilon)
        return 0.1 * sobolev_norm(self.initial[-1], -self.delta)

    def limit_config(self) -> DeterministicConfig:
        b = self.base
        return DeterministicConfig(equation=b.equation, N=b.N, nu=b.nu, kappa=b.kappa, dt=b.dt,
                                   t_final=b.t_final, scheme=self.limit_scheme)

    def plan(self, snapshots: bool = True) -> RecordingPlan:
        return RecordingPlan(self.record_intervals, dict(self.observables), snapshots)


# --------------------------------------------------------------------------
# distances


def _sup_distance(snaps: np.ndarray, ref: np.ndarray, w: np.ndarray) -> np.ndarray:
    d = snaps - ref
    return np.sqrt(np.max(np.sum(w * d * d, axis=(-2, -1)), axis=-1))


def _l2_time_distance(snaps: np.ndarray, ref: np.ndarray, times: np.ndarray) -> np.ndarray:
    d = snaps - ref
    sq = np.sum(d * d, axis=(-2, -1))
    return np.sqrt(np.sum(0.5 * np.diff(times) * (sq[..., 1:] + sq[..., :-1]), axis=-1))


def sample_distances(snapshots: Mapping[str, np.ndarray], limit: TrajectoryRecord, delta: float) -> np.ndarray:
    """Per-sample distances from stacked snapshots ``{field: (M, R, box)}`` to the limit record."""
    w = sobolev_weights(limit.N, -delta)
    d = _sup_distance(snapshots["omega"], limit.snapshots["omega"], w)
    if "xi" in limit.fields:
        d = np.maximum(d, _l2_time_distance(snapshots["xi"], limit.snapshots["xi"], limit.times))
    return d


def trajectory_distance(rec: TrajectoryRecord, limit: TrajectoryRecord, delta: float) -> float:
    """The same distance recomputed field by field with :func:`sobolev_norm` (reference path)."""
    if not np.array_equal(rec.times, limit.times):
        raise ValueError("trajectory and limit are recorded on different grids")
    sup = 0.0
    for i in range(len(rec.times)):
        diff = rec.snapshot("omega", i) - limit.snapshot("omega", i)
        sup = max(sup, sobolev_norm(diff, -delta))
    if "xi" not in rec.fields:
        return sup
    sq = [(rec.snapshot("xi", i) - limit.snapshot("xi", i)).norm() ** 2 for i in range(len(rec.times))]
    l2 = 0.0
    for i in range(1, len(sq)):
        l2 += 0.5 * (rec.times[i] - rec.times[i - 1]) * (sq[i] + sq[i - 1])
    return max(sup, float(np.sqrt(l2)))


class DeviationEstimate(NamedTuple):
    p: float
    low: float
    high: float
    count: int
    total: int


def wilson_interval(count: int, total: int, z: float = 1.959963984540054) -> tuple[float, float]:
    p = count / total
    den = 1.0 + z * z / total
    centre = (p + z * z / (2 * total)) / den
    half = z * np.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / den
    lo = 0.0 if count == 0 else max(0.0, centre - half)  # exact endpoints at the boundary counts
    hi = 1.0 if count == total else min(1.0, centre + half)
    return lo, hi


def deviation_probability(samples, epsilon: float) -> DeviationEstimate:
    """Fraction of distances strictly above ``epsilon``, with a 95% Wilson interval."""
    d = np.asarray(samples, dtype=float).ravel()
    if d.size < 2:
        raise ValueError("deviation_probability needs at least 2 samples")
    count = int(np.sum(d > epsilon))
    lo, hi = wilson_interval(count, d.size)
    return DeviationEstimate(count / d.size, lo, hi, count, int(d.size))


def law_distance(samples_a, samples_b) -> float:
    """1-Wasserstein distance between two empirical distributions on the line."""
    a = np.asarray(samples_a, dtype=float).ravel()
    b = np.asarray(samples_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("law_distance needs two nonempty samples")
    return float(stats.wasserstein_distance(a, b))


class TrendFit(NamedTuple):
    slope: float
    intercept: float
    low: float  # 95% interval of the slope
    high: float
    stderr: float

    @property
    def excludes_zero(self) -> bool:
        return self.low > 0 or self.high < 0


def fit_trend(ratios, distances) -> TrendFit:
    """Least squares of ``log D`` on ``log ratio`` with a t-based 95% slope interval."""
    x = np.log(np.asarray(ratios, dtype=float))
    d = np.asarray(distances, dtype=float)
    if x.size < 3:
        raise ValueError("a trend fit needs at least 3 family members")
    if np.any(d <= 0):
        raise ValueError("distances must be positive for a log-log fit")
    if np.ptp(x) == 0:
        raise ValueError("all ratios are equal; the slope is undefined")
    y = np.log(d)
    res = stats.linregress(x, y)
    q = stats.t.ppf(0.975, x.size - 2) if x.size > 2 else np.inf
    se = float(res.stderr)
    return TrendFit(float(res.slope), float(res.intercept), float(res.slope - q * se),
                    float(res.slope + q * se), se)


# --------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleResult:
    theta: NoiseCoefficients
    ratio: float
    sample_index: np.ndarray
    distances: np.ndarray  # NaN for aborted samples
    observables: dict  # id -> (M, R) paths of <omega(t), phi>
    aborts: dict  # sample_index -> message
    times: np.ndarray
    records: list | None = None

    def terminal(self, obs: str) -> np.ndarray:
        return self.observables[obs][:, -1]

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.distances)


def _limit_record(spec: EnsembleSpec) -> TrajectoryRecord:
    cfg = spec.limit_config()
    plan = spec.plan(True)
    if spec.base.equation == "SQG":
        return solve_sqg(spec.initial[0], cfg, plan)
    return solve_boussinesq(spec.initial[0], spec.initial[1], cfg, plan)


def _run_chunk(args):
    cfg, initial, seed, indices, plan, limit, delta, keep = args
    recs = simulate_batch(cfg, initial, [BrownianDriver(seed, int(i)) for i in indices], plan)
    snaps = {f: np.stack([r.snapshots[f] for r in recs]) for f in cfg.fields}
    dist = sample_distances(snaps, limit, delta)
    obs = {k: np.stack([r.observables[k] for r in recs]) for k in plan.observables}
    aborts = {int(i): r.abort for i, r in zip(indices, recs) if r.aborted}
    for j, r in enumerate(recs):
        if r.aborted:
            dist[j] = np.nan
    return dist, obs, aborts, (recs if keep else None)


def _map(tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [_run_chunk(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_chunk, tasks))


def run_ensemble(spec: EnsembleSpec, theta: NoiseCoefficients, limit: TrajectoryRecord | None = None,
                 keep_records: bool = False) -> EnsembleResult:
    """Simulate samples ``1..M`` with noise ``theta`` and measure each against the limit solution."""
    limit = limit if limit is not None else _limit_record(spec)
    cfg = spec.base.with_(theta=theta)
    plan = spec.plan(True)
    idx = np.arange(1, spec.sample_count + 1)
    chunks = [idx[i:i + spec.batch_size] for i in range(0, idx.size, spec.batch_size)]
    tasks = [(cfg, spec.initial, spec.seed, c, plan, limit, spec.delta, keep_records) for c in chunks]
    parts = _map(tasks, spec.threads)
    dist = np.concatenate([p[0] for p in parts])
    obs = {k: np.concatenate([p[1][k] for p in parts]) for k in plan.observables}
    aborts: dict = {}
    for p in parts:
        aborts.update(p[2])
    records = [r for p in parts for r in p[3]] if keep_records else None
    return EnsembleResult(theta, scaling_ratio(theta), idx, dist, obs, aborts, limit.times.copy(), records)


@dataclass
class ReportRow:
    radius: float
    ratio: float
    mean_distance: float
    p_hat: float
    p_low: float
    p_high: float
    law_distance: float
    law_distances: dict
    aborted: int


@dataclass
class ConvergenceReport:
    rows: list
    fit: TrendFit | None
    epsilon: float
    delta: float
    results: list = field(default_factory=list)

    @property
    def distances(self) -> np.ndarray:
        return np.array([r.mean_distance for r in self.rows])

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows])

    @property
    def p_hats(self) -> np.ndarray:
        return np.array([r.p_hat for r in self.rows])

    @property
    def law_distances(self) -> np.ndarray:
        return np.array([r.law_distance for r in self.rows])


def half_ensemble_distance(result: EnsembleResult, obs: str) -> float:
    """Law distance of the terminal observable between samples ``1..M/2`` and the rest."""
    ok = result.ok
    vals = result.terminal(obs)
    half = result.sample_index.size // 2
    a = vals[:half][ok[:half]]
    b = vals[half:][ok[half:]]
    return law_distance(a, b)


def summarise(spec: EnsembleSpec, result: EnsembleResult) -> ReportRow:
    ok = result.ok
    d = result.distances[ok]
    dev = deviation_probability(d, spec.epsilon) if d.size >= 2 else DeviationEstimate(np.nan, 0, 1, 0, d.size)
    laws = {k: half_ensemble_distance(result, k) for k in result.observables}
    return ReportRow(result.theta.support_radius, result.ratio, float(np.mean(d)) if d.size else np.nan,
                     dev.p, dev.low, dev.high, float(np.mean(list(laws.values()))), laws,
                     int((~ok).sum()))


def run_scaling(spec: EnsembleSpec, keep_results: bool = True) -> ConvergenceReport:
    """Run every family member and reduce to one report row each (in family order)."""
    limit = _limit_record(spec)
    rows, results = [], []
    for theta in spec.theta_family:
        res = run_ensemble(spec, theta, limit)
        rows.append(summarise(spec, res))
        if keep_results:
            results.append(res)
    fit = None
    if len(rows) >= 3 and all(np.isfinite(r.mean_distance) and r.mean_distance > 0 for r in rows):
        fit = fit_trend([r.ratio for r in rows], [r.mean_distance for r in rows])
    return ConvergenceReport(rows, fit, spec.epsilon, spec.delta, results)


def default_threads() -> int:
    return max(1, os.cpu_count() or 1)


__all__ = [
    "ConvergenceReport", "DeviationEstimate", "EnsembleResult", "EnsembleSpec", "ReportRow", "TrendFit",
    "default_observables", "default_threads", "deviation_probability", "fit_trend",
    "half_ensemble_distance", "law_distance", "run_ensemble", "run_scaling", "sample_distances",
    "summarise", "trajectory_distance", "wilson_interval",
]
