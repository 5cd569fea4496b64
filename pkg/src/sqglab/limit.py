"""Deterministic limit equations: dissipative SQG and viscous Boussinesq, plus Gronwall stability gaps.

The limit systems are::

    d omega/dt = -u . grad omega + nu Lap omega                        (SQG)
    d xi/dt    = -u . grad xi + (kappa + nu) Lap xi
    d omega/dt = -u . grad omega + d1 xi + nu Lap omega                 (Boussinesq)

on the same Galerkin space and with the same nonlinearity as the stochastic
runs. Running integrals of ``||grad f||^2`` are accumulated with a per-mode
exponential quadrature: inside a step each mode is modelled as
``f' = -lambda f + F`` with ``F`` fitted to both endpoints, which is exact on
the linear part however stiff ``lambda`` is and second order overall.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .dynamics import (
    EQUATIONS,
    RecordingPlan,
    SimulationAbort,
    StabilityError,
    TrajectoryRecord,
    _Recorder,
    transport_terms,
)
from .fields import SpectralScalarField, advection_workspace, box, laplacian_multiplier
from .lattice import TWO_PI

LIMIT_SCHEMES = ("ExponentialRK2", "ExplicitEuler")


@dataclass(frozen=True)
class DeterministicConfig:
    equation: str = "SQG"
    N: int = 16
    nu: float = 0.1
    kappa: float | None = None
    dt: float = 1e-4
    t_final: float = 0.5
    scheme: str = "ExponentialRK2"

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ValueError(f"equation must be one of {EQUATIONS}, got {self.equation!r}")
        if self.scheme not in LIMIT_SCHEMES:
            raise ValueError(f"scheme must be one of {LIMIT_SCHEMES}, got {self.scheme!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"truncation N must be a positive integer, got {self.N}")
        if not self.nu >= 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        if not self.dt > 0 or not self.t_final > 0:
            raise ValueError("dt and t_final must be positive")
        if self.equation == "Boussinesq":
            k = 0.0 if self.kappa is None else self.kappa
            if not k >= 0:
                raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
            object.__setattr__(self, "kappa", float(k))
        steps = round(self.t_final / self.dt)
        if steps < 1 or abs(steps * self.dt - self.t_final) > 1e-9 * self.t_final:
            raise ValueError(f"t_final={self.t_final} is not a whole number of steps dt={self.dt}")
        if self.scheme == "ExplicitEuler":
            d = self.nu + self.kappa_eff
            bound = np.inf if d == 0 else 0.5 / (TWO_PI**2 * self.N**2 * d)
            if self.dt > bound * (1 + 1e-12):
                raise StabilityError(f"dt={self.dt:g} exceeds the explicit bound {bound:.3g}")

    @property
    def kappa_eff(self) -> float:
        return float(self.kappa or 0.0) if self.equation == "Boussinesq" else 0.0

    @property
    def fields(self) -> tuple[str, ...]:
        return ("omega",) if self.equation == "SQG" else ("xi", "omega")

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)

    def linear_multipliers(self) -> tuple:
        lap = laplacian_multiplier(self.N)
        if self.equation == "SQG":
            return (self.nu * lap,)
        return ((self.kappa_eff + self.nu) * lap, self.nu * lap)

    def with_(self, **kw) -> "DeterministicConfig":
        return replace(self, **kw)


# --------------------------------------------------------------------------
# per-mode exponential quadrature of  int_0^h f(s)^2 ds


def _series(z, coeffs):
    out = np.zeros_like(z)
    for c in reversed(coeffs):
        out = out * z + c
    return out


_G0 = (1.0, -1.0, 2 / 3, -1 / 3, 2 / 15, -2 / 45, 4 / 315)
_G1 = (1.0, -1.0, 7 / 12, -1 / 4, 31 / 360, -1 / 40, 127 / 20160)
_G2 = (1 / 3, -1 / 4, 7 / 60, -1 / 24, 31 / 2520, -1 / 320, 127 / 181440)
_SMALL = 0.05


def _weights(z: np.ndarray):
    """``(phi, g0, g1, g2)`` of ``z = lambda h >= 0``; see :func:`square_integral`."""
    small = z < _SMALL
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(-zs)
    em2 = np.expm1(-2 * zs)
    phi = np.where(small, _series(z, (1.0, -0.5, 1 / 6, -1 / 24, 1 / 120, -1 / 720)), -em1 / zs)
    g0 = np.where(small, _series(z, _G0), -em2 / (2 * zs))
    g1 = np.where(small, _series(z, _G1), 2 * (-em1 + 0.5 * em2) / zs**2)
    g2 = np.where(small, _series(z, _G2), (zs + 2 * em1 - 0.5 * em2) / zs**3)
    return phi, g0, g1, g2


def square_integral(a: np.ndarray, b: np.ndarray, lam: np.ndarray, h: float) -> np.ndarray:
    """``int_0^h f(s)^2 ds`` for ``f' = -lam f + F`` with ``f(0) = a``, ``f(h) = b`` (elementwise).

    With ``z = lam h``: ``F = (b - e^{-z} a) / (h phi(z))`` and the integral is
    ``a^2 h g0(z) + a F h^2 g1(z) + F^2 h^3 g2(z)``.
    """
    z = np.maximum(lam, 0.0) * h
    phi, g0, g1, g2 = _weights(z)
    f = (b - np.exp(-z) * a) / (h * phi)
    return a * a * h * g0 + a * f * h * h * g1 + f * f * h**3 * g2


# --------------------------------------------------------------------------
# integration


def _rhs(ws, state, lin):
    nl = transport_terms(ws, state)
    return tuple(l * f + a for f, l, a in zip(state, lin, nl))


def _advance(cfg: DeterministicConfig, ws, state, lin, e_half, e_full):
    h = cfg.dt
    if cfg.scheme == "ExplicitEuler":
        return tuple(f + h * r for f, r in zip(state, _rhs(ws, state, lin)))
    nl0 = transport_terms(ws, state)
    mid = tuple(eh * (f + 0.5 * h * a) for f, a, eh in zip(state, nl0, e_half))
    nl1 = transport_terms(ws, mid)
    return tuple(ef * f + h * eh * a for f, a, eh, ef in zip(state, nl1, e_half, e_full))


def _solve(cfg: DeterministicConfig, initial: tuple, plan: RecordingPlan | None) -> TrajectoryRecord:
    plan = plan or RecordingPlan()
    for f, name in zip(initial, cfg.fields):
        if f.N != cfg.N:
            raise ValueError(f"{name} has truncation {f.N}, configuration expects {cfg.N}")
    n, h = cfg.N, cfg.dt
    ws = advection_workspace(n)
    lin = cfg.linear_multipliers()
    e_half = tuple(np.exp(0.5 * h * l) for l in lin)
    e_full = tuple(np.exp(h * l) for l in lin)
    grad_w = (TWO_PI**2) * box(n).knorm2
    state = tuple(np.array(f.coeffs)[None] for f in initial)
    rec = _Recorder(cfg.fields, n, plan, cfg.n_steps, h, cfg.t_final, 1)
    rec.record(state)
    nxt = 1
    for step in range(cfg.n_steps):
        new = _advance(cfg, ws, state, lin, e_half, e_full)
        if not all(np.all(np.isfinite(f)) for f in new):
            t = (step + 1) * h
            raise SimulationAbort(f"non-finite state at step {step + 1} (t={t:g})", step + 1, t)
        for name, a, b, l in zip(cfg.fields, state, new, lin):
            rec.running[name] += np.sum(grad_w * square_integral(a, b, -l, h), axis=(-2, -1))
        state = new
        if nxt < len(rec.rec_steps) and step + 1 == rec.rec_steps[nxt]:
            rec.record(state)
            nxt += 1
    meta = {"scheme": cfg.scheme, "dt": cfg.dt, "equation": cfg.equation, "N": cfg.N,
            "nu": cfg.nu, "kappa": cfg.kappa_eff, "deterministic": True}
    return rec.records([None], meta)[0]


def solve_sqg(omega0: SpectralScalarField, cfg: DeterministicConfig,
              plan: RecordingPlan | None = None) -> TrajectoryRecord:
    """Dissipative SQG ``omega' + u . grad omega = nu Lap omega`` on the Galerkin space."""
    if cfg.equation != "SQG":
        cfg = cfg.with_(equation="SQG", kappa=None)
    return _solve(cfg, (omega0,), plan)


def solve_boussinesq(xi0: SpectralScalarField, omega0: SpectralScalarField, cfg: DeterministicConfig,
                     plan: RecordingPlan | None = None) -> TrajectoryRecord:
    """Viscous Boussinesq with thermal diffusivity ``kappa + nu`` and viscosity ``nu``."""
    if cfg.equation != "Boussinesq":
        cfg = cfg.with_(equation="Boussinesq")
    return _solve(cfg, (xi0, omega0), plan)


def energy_residual(rec: TrajectoryRecord, cfg: DeterministicConfig, field: str = "omega") -> np.ndarray:
    """``||f(t)||^2 + 2 D int_0^t ||grad f||^2 - ||f(0)||^2`` along the record.

    ``D`` is the diffusivity of ``field`` (``nu`` for omega, ``kappa + nu`` for xi);
    the identity is exact for SQG omega and for xi.
    """
    d = cfg.nu if field == "omega" else cfg.kappa_eff + cfg.nu
    e = rec.l2_norms[field] ** 2
    return e + 2 * d * rec.dissipation[field] - e[0]


# --------------------------------------------------------------------------
# stability of the limit equation


class GapReport(NamedTuple):
    times: np.ndarray
    gap: np.ndarray  # squared L2 distance of the two solutions
    driver_integral: np.ndarray
    envelope: np.ndarray
    constant: float
    fitted: bool
    violations: np.ndarray  # record times where gap > envelope

    @property
    def inside(self) -> bool:
        return self.violations.size == 0


def _gap_series(a: TrajectoryRecord, b: TrajectoryRecord) -> np.ndarray:
    if a.fields != b.fields or a.N != b.N:
        raise ValueError("trajectories describe different systems")
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories are recorded on different time grids")
    if not np.array_equal(a.snapshot_times, a.times) or not np.array_equal(b.snapshot_times, b.times):
        raise ValueError("stability_gap needs snapshots at every record time")
    gap = np.zeros(a.times.shape)
    for f in a.fields:
        d = a.snapshots[f] - b.snapshots[f]
        gap += np.sum(d * d, axis=(-2, -1))
    return gap


def _driver(a: TrajectoryRecord) -> np.ndarray:
    """Gronwall driver: ``||grad omega||^2`` (SQG) or ``||grad xi||^2 + ||grad omega||^2 + 1``."""
    s = sum(a.grad_norms[f] ** 2 for f in a.fields)
    if len(a.fields) == 2:
        s = s + 1.0
    t = a.times
    return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (s[1:] + s[:-1]))])


def fit_gronwall_constant(gap: np.ndarray, integral: np.ndarray, margin: float = 0.05) -> float:
    """Smallest ``C >= 0`` with ``gap(t) <= gap(0) exp(C I(t))`` on the record, times ``1 + margin``."""
    ok = (integral > 0) & (gap > 0)
    if gap[0] <= 0 or not ok.any():
        return 0.0
    c = np.max(np.log(gap[ok] / gap[0]) / integral[ok])
    return max(c, 0.0) * (1.0 + margin)


def stability_gap(traj_a: TrajectoryRecord, traj_b: TrajectoryRecord, cfg: DeterministicConfig | None = None,
                  constant: float | None = None, margin: float = 0.05) -> GapReport:
    """Squared gap ``||a(t) - b(t)||^2`` against the envelope ``gap(0) exp(C int driver(a))``.

    ``C`` is fitted on this pair unless ``constant`` is given (out-of-sample use);
    the fit is empirical and carries no claim about any analytic constant.
    """
    gap = _gap_series(traj_a, traj_b)
    integral = _driver(traj_a)
    fitted = constant is None
    c = fit_gronwall_constant(gap, integral, margin) if fitted else float(constant)
    env = gap[0] * np.exp(c * integral)
    tol = 1e-12 * max(float(gap.max()), 1e-300)
    viol = traj_a.times[gap > env + tol]
    return GapReport(traj_a.times.copy(), gap, integral, env, c, fitted, viol)


__all__ = [
    "DeterministicConfig", "GapReport", "LIMIT_SCHEMES", "energy_residual", "fit_gronwall_constant",
    "solve_boussinesq", "solve_sqg", "square_integral", "stability_gap",
]
