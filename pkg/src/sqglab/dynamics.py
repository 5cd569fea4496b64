"""Time integration of the Galerkin-truncated SQG and Boussinesq systems with transport noise.

States are tuples of coefficient boxes (``(omega,)`` for SQG, ``(xi, omega)`` for
Boussinesq). Every array may carry leading batch axes, so an ensemble of
independent samples advances as one vectorised computation.

The noise enters only through the random divergence-free field
``W = c * sum_k theta_k dB^k sigma_k`` with ``c = 2 sqrt(nu) / ||theta||_2``; the
summed stochastic increment ``sum_k c theta_k G^k(f) dB^k`` is the single
projected product ``Pi_N(W . grad f)``. ``G^k`` vanishes for ``|k| > 2N``, so only
that finite part of the support of ``theta`` is ever read.

Writing ``Q = 1/2 c^2 sum_k theta_k^2 (G^k)^2`` for the Ito-Stratonovich
correction of the projected noise, the Ito drift carries ``nu Lap`` while the
equivalent Stratonovich drift carries the *net* multiplier ``nu Lap - Q``.
``Q`` is diagonal in the basis; the net multiplier is ``<= 0`` and vanishes
on every mode from which no noise product leaves the band ``|k| <= N``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .fields import (
    SpectralScalarField,
    advection_workspace,
    box,
    from_grid,
    grad_coeffs,
    grad_sq_norm,
    grid_size,
    laplacian_multiplier,
    pad,
    velocity_coeffs,
    sq_norm,
    to_grid,
)
from .lattice import TWO_PI, as_wavevector, global_mode_index
from .noise import NoiseCoefficients

EQUATIONS = ("SQG", "Boussinesq")
SCHEMES = ("ItoEulerMaruyama", "StratonovichHeun", "ExponentialEM", "SplitExponential")
EXPLICIT_SCHEMES = ("ItoEulerMaruyama", "StratonovichHeun")
CFL_REFRESH = 100


class SimulationAbort(RuntimeError):
    """A trajectory produced non-finite values; carries the step and time where it happened."""

    def __init__(self, message: str, step: int | None = None, time: float | None = None):
        super().__init__(message)
        self.step = step
        self.time = time


class StabilityError(ValueError):
    """The time step exceeds the stability bound of the selected scheme."""


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SdeConfig:
    """Parameters of one stochastic Galerkin run.

    ``linear`` is a test switch that drops the transport nonlinearity (the
    fields are then advected by ``u = 0``); the buoyancy forcing ``d1 xi``
    is kept.
    """

    equation: str = "SQG"
    N: int = 16
    nu: float = 0.1
    kappa: float | None = None
    theta: NoiseCoefficients | None = None
    dt: float = 1e-4
    t_final: float = 0.5
    scheme: str = "ExponentialEM"
    linear: bool = False

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ValueError(f"equation must be one of {EQUATIONS}, got {self.equation!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"truncation N must be a positive integer, got {self.N}")
        if not self.nu >= 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_final > 0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if self.equation == "Boussinesq":
            k = 0.0 if self.kappa is None else self.kappa
            if not k >= 0:
                raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
            object.__setattr__(self, "kappa", float(k))
        if self.nu > 0 and (self.theta is None or self.theta.l2_norm == 0.0):
            raise ValueError("nonzero nu needs noise coefficients theta with ||theta||_2 > 0")
        steps = round(self.t_final / self.dt)
        if steps < 1 or abs(steps * self.dt - self.t_final) > 1e-9 * self.t_final:
            raise ValueError(f"t_final={self.t_final} is not a whole number of steps dt={self.dt}")

    @property
    def fields(self) -> tuple[str, ...]:
        return ("omega",) if self.equation == "SQG" else ("xi", "omega")

    @property
    def kappa_eff(self) -> float:
        return float(self.kappa or 0.0) if self.equation == "Boussinesq" else 0.0

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)

    @property
    def noise_amplitude(self) -> float:
        """``2 sqrt(nu) / ||theta||_2`` (zero when ``nu = 0``)."""
        if self.nu == 0:
            return 0.0
        return 2.0 * np.sqrt(self.nu) / self.theta.l2_norm

    def with_(self, **kw) -> "SdeConfig":
        return replace(self, **kw)


def explicit_dt_bound(cfg: SdeConfig) -> float:
    """Largest step for the explicit schemes: ``0.5 / (4 pi^2 N^2 (nu + kappa))``."""
    d = cfg.nu + cfg.kappa_eff
    return np.inf if d == 0 else 0.5 / (TWO_PI**2 * cfg.N**2 * d)


def advective_dt_bound(n: int, umax: float) -> float:
    """``0.1 / (2 pi N max|u|)``, the step limit of the exponential schemes."""
    return np.inf if umax == 0 else 0.1 / (TWO_PI * n * umax)


# --------------------------------------------------------------------------
# Brownian increments


@dataclass(frozen=True)
class BrownianDriver:
    """Counter-based source of the increments ``dB^k_n``.

    The normal variate of mode ``k`` at fine step ``n`` is entry
    ``global_mode_index(k)`` of a Philox stream keyed by ``(seed, sample_index)``
    whose counter starts at ``n``; it does not depend on which other modes are
    requested, on the batch, or on the thread running it. One step of size
    ``dt`` sums ``substeps`` fine increments, so drivers with ``substeps``
    ``2s`` and ``s`` at steps ``dt`` and ``dt/2`` follow the same Brownian path.
    """

    seed: int
    sample_index: int = 0
    substeps: int = 1

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @cached_property
    def key(self) -> np.ndarray:
        ss = np.random.SeedSequence([int(self.seed), int(self.sample_index)])
        return ss.generate_state(2, dtype=np.uint64)

    def normals(self, fine_step: int, count: int) -> np.ndarray:
        bg = np.random.Philox(key=self.key, counter=np.array([0, 0, int(fine_step), 0], dtype=np.uint64))
        return np.random.Generator(bg).standard_normal(count)

    def increments(self, n: int, mode_index: np.ndarray, dt: float) -> np.ndarray:
        """``dB^k`` over step ``n`` of size ``dt`` for the modes with the given global indices."""
        mode_index = np.asarray(mode_index, dtype=np.int64)
        if mode_index.size == 0:
            return np.zeros(0)
        count = int(mode_index.max()) + 1
        s = self.substeps
        key = self.key
        total = np.zeros(mode_index.shape)
        for r in range(s):
            bg = np.random.Philox(key=key, counter=np.array([0, 0, n * s + r, 0], dtype=np.uint64))
            total += np.random.Generator(bg).standard_normal(count)[mode_index]
        return total * np.sqrt(dt / s)

    def increment_map(self, n: int, modes, dt: float) -> dict:
        """``{k: dB^k_n}`` for the given modes."""
        modes = [as_wavevector(k) for k in modes]
        idx = np.array([global_mode_index(k) for k in modes])
        return dict(zip(modes, self.increments(n, idx, dt)))


# --------------------------------------------------------------------------
# the projected transport noise


def _net_correction(n: int, k1, k2, th, c: float, nu: float) -> np.ndarray:
    """Diagonal of ``nu Lap - 1/2 c^2 sum theta_k^2 (G^k)^2`` on the box of truncation ``n``.

    ``||G^k e_j||^2 = 4 pi^2 (k_perp . j)^2 / |k|^2 * (1[|k+j|<=n] + 1[|k-j|<=n]) / 2``.
    """
    b = box(n)
    j1, j2 = b.k1[b.mask].astype(float), b.k2[b.mask].astype(float)
    out = np.zeros(b.shape)
    q = np.zeros(j1.shape)
    nn = n * n
    for s in range(0, len(k1), 512):
        a1, a2, t = k1[s:s + 512, None], k2[s:s + 512, None], th[s:s + 512, None]
        dot = a2 * j1 - a1 * j2
        kept = (((a1 + j1) ** 2 + (a2 + j2) ** 2 <= nn).astype(float)
                + ((a1 - j1) ** 2 + (a2 - j2) ** 2 <= nn).astype(float))
        q += np.sum(t * t * dot * dot / (a1 * a1 + a2 * a2) * kept, axis=0)
    q *= 0.5 * c * c * TWO_PI**2 * 0.5
    out[b.mask] = -(TWO_PI**2) * nu * b.knorm2[b.mask] + q
    return out


class TransportNoise:
    """The projected noise ``f -> Pi_N(W . grad f)`` of one ``(N, theta, nu)``."""

    def __init__(self, n: int, theta: NoiseCoefficients | None, nu: float):
        self.n = n
        self.nu = float(nu)
        if theta is None or nu == 0:
            self.k1 = self.k2 = np.zeros(0, int)
            self.theta = np.zeros(0)
            self.amplitude = 0.0
        else:
            self.k1, self.k2, self.theta = theta.modes(max_norm=2 * n)
            self.amplitude = 2.0 * np.sqrt(nu) / theta.l2_norm
        self.mode_index = np.array([global_mode_index(k) for k in zip(self.k1, self.k2)], dtype=np.int64)
        knorm = np.hypot(self.k1, self.k2)
        # sigma_k = (k2, -k1)/|k| e_k
        self._s1 = np.where(knorm > 0, self.k2 / np.where(knorm > 0, knorm, 1), 0.0)
        self._s2 = np.where(knorm > 0, -self.k1 / np.where(knorm > 0, knorm, 1), 0.0)
        self.nb = int(np.ceil(knorm.max() - 1e-12)) if knorm.size else 0
        # also alias-free for the advection product, so both can share one grid
        self.m = grid_size(max(self.nb + 2 * n + 1, 2 * self.nb + 1, 3 * n + 2))
        self.net_correction = _net_correction(n, self.k1, self.k2, self.theta, self.amplitude, self.nu)
        self.net_correction.setflags(write=False)

    @property
    def active(self) -> bool:
        return self.amplitude != 0.0 and self.k1.size > 0

    @property
    def modes(self):
        return list(zip(self.k1.tolist(), self.k2.tolist()))

    def field_grid(self, increments: np.ndarray):
        """Grid values of ``W`` (two arrays) from increments of shape ``(..., K)``."""
        increments = np.asarray(increments, dtype=float)
        nb = self.nb
        w = self.amplitude * self.theta * increments
        shape = increments.shape[:-1] + (2 * nb + 1, 2 * nb + 1)
        c1, c2 = np.zeros(shape), np.zeros(shape)
        c1[..., self.k1 + nb, self.k2 + nb] = w * self._s1
        c2[..., self.k1 + nb, self.k2 + nb] = w * self._s2
        return to_grid(c1, self.m), to_grid(c2, self.m)

    def apply(self, f: np.ndarray, wg) -> np.ndarray:
        """``Pi_N(W . grad f)``; batch axes of ``f`` broadcast against those of ``W``."""
        g1, g2 = grad_coeffs(f)
        prod = wg[0] * to_grid(g1, self.m) + wg[1] * to_grid(g2, self.m)
        return from_grid(prod, self.n)


@lru_cache(maxsize=16)
def transport_noise(n: int, theta: NoiseCoefficients | None, nu: float) -> TransportNoise:
    return TransportNoise(n, theta, nu)


def _noise_for(cfg: SdeConfig) -> TransportNoise:
    return transport_noise(cfg.N, cfg.theta, cfg.nu)


def expm_skew_apply(op: Callable[[np.ndarray], np.ndarray], v: np.ndarray, tol: float = 1e-13,
                    max_dim: int = 60) -> np.ndarray:
    """``exp(A) v`` for a skew-symmetric ``A`` given by its action, batched over leading axes.

    Krylov (Lanczos) projection with full reorthogonalisation; the projected
    matrix is kept exactly skew tridiagonal, so the result has the norm of
    ``v`` to rounding whatever the Krylov dimension.
    """
    ax = (-2, -1)
    beta0 = np.sqrt(np.sum(v * v, axis=ax))
    safe = np.where(beta0 > 0, beta0, 1.0)
    basis = [v / safe[..., None, None]]
    betas = []
    y = None
    for j in range(max_dim):
        w = op(basis[j])
        for _ in range(2):
            for q in basis:
                w = w - np.sum(w * q, axis=ax)[..., None, None] * q
        b = np.sqrt(np.sum(w * w, axis=ax))
        betas.append(b)
        tiny = b <= 1e-14
        basis.append(np.where(tiny[..., None, None], 0.0, w / np.where(tiny, 1.0, b)[..., None, None]))
        m = j + 1
        if m >= 3 and (m % 3 == 0 or m == max_dim):
            h = np.zeros(b.shape + (m, m))
            for i in range(m - 1):
                h[..., i + 1, i] = betas[i]
                h[..., i, i + 1] = -betas[i]
            y = sla.expm(h)[..., :, 0]
            err = np.abs(b * y[..., -1])
            if np.all(err <= tol):
                break
    else:
        raise RuntimeError("Krylov exponential did not converge; reduce dt")
    out = np.zeros_like(v)
    for i in range(y.shape[-1]):
        out = out + y[..., i, None, None] * basis[i]
    return beta0[..., None, None] * out


# --------------------------------------------------------------------------
# drift terms and schemes


def transport_terms(ws, state: tuple, linear: bool = False) -> tuple:
    """``-u . grad f`` for every field, plus ``d1 xi`` on omega for the pair ``(xi, omega)``.

    Shared by the stochastic and the deterministic solvers.
    """
    omega = state[-1]
    if linear:
        out = [np.zeros_like(f) for f in state]
    else:
        vel = ws.velocity_grid(omega)
        out = [-ws.advect(omega, f, vel=vel) for f in state]
    if len(state) == 2:
        out[1] = out[1] + grad_coeffs(state[0])[0]
    return tuple(out)


class GalerkinSystem:
    """Right-hand side pieces of one configuration, on batched coefficient arrays."""

    def __init__(self, cfg: SdeConfig):
        self.cfg = cfg
        n = cfg.N
        self.n = n
        self.ws = advection_workspace(n)
        self.noise = _noise_for(cfg)
        self._prop: dict = {}
        lap = laplacian_multiplier(n)
        net = self.noise.net_correction
        kap = cfg.kappa_eff
        if cfg.equation == "SQG":
            self.ito_linear = (cfg.nu * lap,)
            self.strat_linear = (net,)
        else:
            self.ito_linear = ((kap + cfg.nu) * lap, cfg.nu * lap)
            self.strat_linear = (kap * lap + net, net)

    def nonlinear(self, state: tuple) -> tuple:
        return transport_terms(self.ws, state, self.cfg.linear)

    def increment(self, state: tuple, wg, dt: float) -> tuple:
        """``dt * (-u . grad f) + Pi_N(W . grad f)`` (plus ``dt d1 xi`` on omega) as one product.

        Equal to ``dt * nonlinear(state) + noise_term(state, wg)`` up to rounding.
        """
        m = self.noise.m
        if self.cfg.linear:
            if wg is None:
                out = [np.zeros_like(f) for f in state]
            else:
                out = list(self.noise_term(state, wg))
        else:
            u1, u2 = velocity_coeffs(state[-1])
            v1, v2 = -dt * to_grid(u1, m), -dt * to_grid(u2, m)
            if wg is not None:
                v1, v2 = v1 + wg[0], v2 + wg[1]
            g1, g2 = grad_coeffs(np.stack(state))
            prod = from_grid(v1 * to_grid(g1, m) + v2 * to_grid(g2, m), self.n)
            out = [prod[i] for i in range(len(state))]
        if len(state) == 2:
            out[1] = out[1] + dt * grad_coeffs(state[0])[0]
        return tuple(out)

    def ito_propagator(self, dt: float) -> tuple:
        return self._propagator("ito", dt)

    def strat_propagator(self, dt: float) -> tuple:
        return self._propagator("strat", dt)

    def _propagator(self, kind: str, dt: float) -> tuple:
        key = (kind, dt)
        if key not in self._prop:
            lin = self.ito_linear if kind == "ito" else self.strat_linear
            self._prop[key] = tuple(np.exp(l * dt) for l in lin)
        return self._prop[key]

    def max_speed(self, omega: np.ndarray) -> float:
        if self.cfg.linear:
            return 0.0
        u1, u2 = self.ws.velocity_grid(omega)
        return float(np.sqrt(np.max(u1 * u1 + u2 * u2))) if u1.size else 0.0

    def noise_term(self, state: tuple, wg) -> tuple:
        if wg is None:
            return tuple(np.zeros_like(f) for f in state)
        return tuple(self.noise.apply(f, wg) for f in state)

    def noise_flow(self, state: tuple, wg) -> tuple:
        if wg is None:
            return state
        stacked = np.stack(state)
        out = expm_skew_apply(lambda f: self.noise.apply(f, wg), stacked)
        return tuple(out[i] for i in range(len(state)))


def advance(system: GalerkinSystem, state: tuple, wg, dt: float) -> tuple:
    """One step of ``system.cfg.scheme`` given the grid values ``wg`` of the noise field."""
    scheme = system.cfg.scheme
    if scheme == "ItoEulerMaruyama":
        inc = system.increment(state, wg, dt)
        return tuple(f + dt * lin * f + d for f, lin, d in zip(state, system.ito_linear, inc))
    if scheme == "StratonovichHeun":
        lin = system.strat_linear
        inc0 = system.increment(state, wg, dt)
        pred = tuple(f + dt * l * f + d for f, l, d in zip(state, lin, inc0))
        inc1 = system.increment(pred, wg, dt)
        return tuple(f + 0.5 * dt * l * (f + p) + 0.5 * (a + b)
                     for f, p, l, a, b in zip(state, pred, lin, inc0, inc1))
    if scheme == "ExponentialEM":
        inc = system.increment(state, wg, dt)
        return tuple(e * (f + d) for f, e, d in zip(state, system.ito_propagator(dt), inc))
    if scheme == "SplitExponential":
        rotated = system.noise_flow(state, wg)
        inc = system.increment(rotated, None, dt)
        return tuple(e * (f + d) for f, e, d in zip(rotated, system.strat_propagator(dt), inc))
    raise ValueError(f"unknown scheme {scheme!r}")


# --------------------------------------------------------------------------
# single-field operations


def _check_field(f: SpectralScalarField, cfg: SdeConfig, name: str = "omega"):
    if f.N != cfg.N:
        raise ValueError(f"{name} has truncation {f.N}, configuration expects {cfg.N}")


def ito_drift_sqg(omega: SpectralScalarField, cfg: SdeConfig) -> SpectralScalarField:
    """``-b_N(omega) + nu Lap omega``."""
    _check_field(omega, cfg)
    system = GalerkinSystem(cfg.with_(equation="SQG", kappa=None))
    (nl,) = system.nonlinear((omega.coeffs,))
    return SpectralScalarField(cfg.N, nl + system.ito_linear[0] * omega.coeffs)


def diffusion_sqg(omega: SpectralScalarField, cfg: SdeConfig, increments: Mapping) -> SpectralScalarField:
    """``c sum_k theta_k G^k(omega) dB^k`` for increments ``{k: dB^k}`` over the effective noise set."""
    _check_field(omega, cfg)
    noise = _noise_for(cfg)
    if not noise.active:
        return SpectralScalarField.zeros(cfg.N)
    given = {as_wavevector(k): float(v) for k, v in increments.items()}
    missing = [k for k in noise.modes if k not in given]
    if missing:
        raise KeyError(f"no increment for noise mode {missing[0]} (and {len(missing) - 1} more)")
    db = np.array([given[k] for k in noise.modes])
    return SpectralScalarField(cfg.N, noise.apply(omega.coeffs, noise.field_grid(db)))


def net_correction(cfg: SdeConfig) -> np.ndarray:
    """Diagonal multiplier ``nu Lap - 1/2 c^2 sum theta_k^2 (G^k)^2`` (coefficient box)."""
    return _noise_for(cfg).net_correction.copy()


def _as_state(initial, cfg: SdeConfig) -> tuple:
    if isinstance(initial, SpectralScalarField):
        initial = (initial,)
    initial = tuple(initial)
    if len(initial) != len(cfg.fields):
        raise ValueError(f"{cfg.equation} needs fields {cfg.fields}, got {len(initial)}")
    for f, name in zip(initial, cfg.fields):
        _check_field(f, cfg, name)
    return tuple(np.array(f.coeffs) for f in initial)


def step(state, cfg: SdeConfig, driver: BrownianDriver, n: int):
    """Advance a single state (field or tuple of fields) by step ``n`` of ``cfg.scheme``."""
    single = isinstance(state, SpectralScalarField)
    arrays = _as_state(state, cfg)
    system = GalerkinSystem(cfg)
    wg = None
    if system.noise.active:
        wg = system.noise.field_grid(driver.increments(n, system.noise.mode_index, cfg.dt))
    new = advance(system, arrays, wg, cfg.dt)
    if not all(np.all(np.isfinite(f)) for f in new):
        raise SimulationAbort(f"non-finite state at step {n} (t={(n + 1) * cfg.dt:g})", n, (n + 1) * cfg.dt)
    out = tuple(SpectralScalarField(cfg.N, f) for f in new)
    return out[0] if single else out


# --------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class RecordingPlan:
    """What to record: ``intervals`` uniform record times after ``t = 0``, the test
    functions paired with the last field, and which record times keep full snapshots
    (``True`` for all of them, or a list of times)."""

    intervals: int = 50
    observables: Mapping[str, SpectralScalarField] = field(default_factory=dict)
    snapshots: bool | Sequence[float] = False

    def record_steps(self, n_steps: int) -> np.ndarray:
        if self.intervals < 1:
            raise ValueError("intervals must be >= 1")
        k = min(self.intervals, n_steps)
        return np.unique(np.round(np.linspace(0, n_steps, k + 1)).astype(int))

    def snapshot_mask(self, times: np.ndarray) -> np.ndarray:
        if self.snapshots is True:
            return np.ones(times.shape, bool)
        if not self.snapshots:
            return np.zeros(times.shape, bool)
        mask = np.zeros(times.shape, bool)
        for t in self.snapshots:
            mask[int(np.argmin(np.abs(times - t)))] = True
        return mask


@dataclass
class TrajectoryRecord:
    """Recorded summary of one trajectory.

    ``dissipation[f]`` is the running integral of ``||grad f||^2``; ``snapshots[f]``
    stacks the coefficient boxes at ``snapshot_times``.
    """

    times: np.ndarray
    fields: tuple
    N: int
    l2_norms: dict
    grad_norms: dict
    dissipation: dict
    observables: dict
    snapshot_times: np.ndarray
    snapshots: dict
    abort: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def aborted(self) -> bool:
        return self.abort is not None

    def snapshot(self, name: str, i: int) -> SpectralScalarField:
        return SpectralScalarField(self.N, self.snapshots[name][i])

    def final(self, name: str = "omega") -> SpectralScalarField:
        if not len(self.snapshot_times) or self.snapshot_times[-1] != self.times[-1]:
            raise ValueError("the final state was not snapshotted")
        return self.snapshot(name, -1)

    def equals(self, other: "TrajectoryRecord") -> bool:
        """Bitwise equality of every recorded array."""
        if self.fields != other.fields or self.abort != other.abort:
            return False
        if not np.array_equal(self.times, other.times):
            return False
        for a, b in ((self.l2_norms, other.l2_norms), (self.grad_norms, other.grad_norms),
                     (self.dissipation, other.dissipation), (self.observables, other.observables),
                     (self.snapshots, other.snapshots)):
            if a.keys() != b.keys() or not all(np.array_equal(a[k], b[k]) for k in a):
                return False
        return np.array_equal(self.snapshot_times, other.snapshot_times)


class _Recorder:
    """Accumulates the records of a batch of ``b`` trajectories."""

    def __init__(self, names, n, plan: RecordingPlan, n_steps: int, dt: float, t_final: float, b: int):
        self.names, self.n, self.plan = tuple(names), n, plan
        self.rec_steps = plan.record_steps(n_steps)
        self.times = self.rec_steps * (t_final / n_steps)
        self.snap = plan.snapshot_mask(self.times)
        self.obs = {k: pad(np.asarray(v.coeffs, float), n) for k, v in plan.observables.items()}
        r = len(self.rec_steps)
        self.l2 = {f: np.zeros((b, r)) for f in self.names}
        self.grad = {f: np.zeros((b, r)) for f in self.names}
        self.diss = {f: np.zeros((b, r)) for f in self.names}
        self.obsv = {k: np.zeros((b, r)) for k in self.obs}
        self.snaps = {f: np.zeros((b, int(self.snap.sum())) + box(n).shape) for f in self.names}
        self.running = {f: np.zeros(b) for f in self.names}
        self.slot = 0
        self.snap_slot = 0

    def record(self, state):
        i = self.slot
        for f, a in zip(self.names, state):
            self.l2[f][:, i] = np.sqrt(sq_norm(a))
            self.grad[f][:, i] = np.sqrt(grad_sq_norm(a))
            self.diss[f][:, i] = self.running[f]
        omega = state[-1]
        for k, phi in self.obs.items():
            self.obsv[k][:, i] = np.sum(omega * phi, axis=(-2, -1))
        if self.snap[i]:
            for f, a in zip(self.names, state):
                self.snaps[f][:, self.snap_slot] = a
            self.snap_slot += 1
        self.slot += 1

    def records(self, aborts, meta) -> list[TrajectoryRecord]:
        out = []
        for s, msg in enumerate(aborts):
            out.append(TrajectoryRecord(
                times=self.times.copy(), fields=self.names, N=self.n,
                l2_norms={f: v[s].copy() for f, v in self.l2.items()},
                grad_norms={f: v[s].copy() for f, v in self.grad.items()},
                dissipation={f: v[s].copy() for f, v in self.diss.items()},
                observables={k: v[s].copy() for k, v in self.obsv.items()},
                snapshot_times=self.times[self.snap].copy(),
                snapshots={f: v[s].copy() for f, v in self.snaps.items()},
                abort=msg, meta=dict(meta)))
        return out


def _check_dt(system: GalerkinSystem, state: tuple, n: int):
    cfg = system.cfg
    if cfg.scheme in EXPLICIT_SCHEMES:
        bound = explicit_dt_bound(cfg)
        if cfg.dt > bound * (1 + 1e-12):
            raise StabilityError(f"dt={cfg.dt:g} exceeds the explicit bound "
                                 f"0.5/(4 pi^2 N^2 (nu+kappa)) = {bound:.3g} for {cfg.scheme}")
        return
    bound = advective_dt_bound(cfg.N, system.max_speed(state[-1]))
    if cfg.dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={cfg.dt:g} exceeds the advective bound 0.1/(2 pi N max|u|) = "
                             f"{bound:.3g} at step {n}")


def simulate_batch(cfg: SdeConfig, initial, drivers: Sequence[BrownianDriver],
                   plan: RecordingPlan | None = None, abort_on_nan: bool = False) -> list[TrajectoryRecord]:
    """Integrate one trajectory per driver from the same initial fields, as one batch.

    A sample whose state turns non-finite is frozen at zero and reported through
    ``TrajectoryRecord.abort``; with ``abort_on_nan`` a :class:`SimulationAbort`
    is raised instead.
    """
    plan = plan or RecordingPlan()
    init = _as_state(initial, cfg)
    b = len(drivers)
    if b == 0:
        return []
    system = GalerkinSystem(cfg)
    state = tuple(np.repeat(f[None], b, axis=0) for f in init)
    n_steps, dt = cfg.n_steps, cfg.dt
    rec = _Recorder(cfg.fields, cfg.N, plan, n_steps, dt, cfg.t_final, b)
    rec.record(state)
    alive = np.ones(b, bool)
    aborts: list = [None] * b
    noise = system.noise
    grad_prev = {f: grad_sq_norm(a) for f, a in zip(cfg.fields, state)}
    next_rec = 1
    for n in range(n_steps):
        if n % CFL_REFRESH == 0:
            _check_dt(system, state, n)
        wg = None
        if noise.active:
            inc = np.stack([d.increments(n, noise.mode_index, dt) for d in drivers])
            wg = noise.field_grid(inc)
        state = advance(system, state, wg, dt)
        finite = np.ones(b, bool)
        for a in state:
            finite &= np.all(np.isfinite(a), axis=(-2, -1))
        bad = alive & ~finite
        if bad.any():
            t = (n + 1) * dt
            for s in np.flatnonzero(bad):
                aborts[s] = f"non-finite state at step {n + 1} (t={t:g})"
                if abort_on_nan:
                    raise SimulationAbort(aborts[s], n + 1, t)
            alive &= finite
            state = tuple(np.where(alive[:, None, None], a, 0.0) for a in state)
        for f, a in zip(cfg.fields, state):
            g = grad_sq_norm(a)
            rec.running[f] += 0.5 * dt * (grad_prev[f] + g)
            grad_prev[f] = g
        if next_rec < len(rec.rec_steps) and n + 1 == rec.rec_steps[next_rec]:
            rec.record(state)
            next_rec += 1
    meta = {"scheme": cfg.scheme, "dt": cfg.dt, "equation": cfg.equation, "N": cfg.N,
            "nu": cfg.nu, "kappa": cfg.kappa_eff}
    records = rec.records(aborts, meta)
    for r, d in zip(records, drivers):
        r.meta.update(seed=int(d.seed), sample_index=int(d.sample_index))
    return records


def simulate(cfg: SdeConfig, initial, driver: BrownianDriver,
             plan: RecordingPlan | None = None) -> TrajectoryRecord:
    """One trajectory; raises :class:`SimulationAbort` if it turns non-finite."""
    return simulate_batch(cfg, initial, [driver], plan, abort_on_nan=True)[0]


__all__ = [
    "BrownianDriver", "EQUATIONS", "GalerkinSystem", "RecordingPlan", "SCHEMES", "SdeConfig",
    "SimulationAbort", "StabilityError", "TrajectoryRecord", "TransportNoise", "advance",
    "advective_dt_bound", "diffusion_sqg", "explicit_dt_bound", "expm_skew_apply",
    "ito_drift_sqg", "net_correction", "simulate", "simulate_batch", "step", "transport_terms",
]
