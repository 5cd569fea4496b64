"""Noise-coefficient families ``theta`` and the flatness ratio ``||theta||_inf / ||theta||_2``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .lattice import Wavevector, as_wavevector, lattice_points


@dataclass(frozen=True)
class NoiseCoefficients:
    """Finitely supported coefficients stored per shell ``|k|^2``.

    Shell storage makes radial symmetry hold by construction. ``overrides``
    replaces individual modes and exists only to build asymmetric negative
    cases for :func:`validate_symmetry`.
    """

    shells: dict
    support_radius: float
    family: str = "custom"
    alpha: float = 0.0
    overrides: dict = field(default_factory=dict)

    def value(self, k) -> float:
        k = as_wavevector(k)
        if k in self.overrides:
            return float(self.overrides[k])
        if k.norm2 > self.support_radius**2 + 1e-9:
            return 0.0
        return float(self.shells.get(k.norm2, 0.0))

    def items(self):
        """``(k, theta_k)`` over the support, canonical order, zeros skipped."""
        seen = set()
        for k in lattice_points(self.support_radius):
            seen.add(k)
            v = self.value(k)
            if v != 0.0:
                yield k, v
        for k, v in self.overrides.items():
            if k not in seen and v != 0.0:
                yield k, float(v)

    def modes(self, max_norm: float | None = None):
        """Arrays ``(k1, k2, theta)`` of the nonzero modes, optionally capped at ``|k| <= max_norm``."""
        rows = [(k.k1, k.k2, v) for k, v in self.items()
                if max_norm is None or k.norm2 <= max_norm**2 + 1e-9]
        if not rows:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        a = np.array(rows)
        return a[:, 0].astype(int), a[:, 1].astype(int), a[:, 2]

    @property
    def l2_norm(self) -> float:
        return float(np.sqrt(sum(v * v for _, v in self.items())))

    @property
    def linf_norm(self) -> float:
        return max((abs(v) for _, v in self.items()), default=0.0)

    def scaled(self, c: float) -> "NoiseCoefficients":
        return NoiseCoefficients(
            {s: c * v for s, v in self.shells.items()}, self.support_radius, self.family,
            self.alpha, {k: c * v for k, v in self.overrides.items()})

    def with_override(self, k, value: float) -> "NoiseCoefficients":
        ov = dict(self.overrides)
        ov[as_wavevector(k)] = float(value)
        return NoiseCoefficients(self.shells, self.support_radius, self.family, self.alpha, ov)

    def __hash__(self):
        return hash((tuple(sorted(self.shells.items())), self.support_radius, self.family,
                     self.alpha, tuple(sorted(self.overrides.items()))))

    def manifest(self) -> dict:
        return {"family": self.family, "radius": self.support_radius,
                "alpha": self.alpha, "ratio": scaling_ratio(self)}


def _shells(radius: float) -> list[int]:
    return sorted({k.norm2 for k in lattice_points(radius)})


def make_cutoff(radius: float) -> NoiseCoefficients:
    """Indicator of the ball ``0 < |k| <= radius``."""
    if radius < 1:
        raise ValueError(f"radius must be >= 1 (got {radius}); the support would be empty")
    return NoiseCoefficients({s: 1.0 for s in _shells(radius)}, float(radius), "cutoff", 0.0)


def make_power(radius: float, alpha: float) -> NoiseCoefficients:
    """``theta_k = |k|^-alpha`` on ``0 < |k| <= radius``."""
    if radius < 1:
        raise ValueError(f"radius must be >= 1 (got {radius}); the support would be empty")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0:
        return NoiseCoefficients({s: 1.0 for s in _shells(radius)}, float(radius), "power", 0.0)
    return NoiseCoefficients({s: float(s) ** (-alpha / 2.0) for s in _shells(radius)},
                             float(radius), "power", float(alpha))


def make_shell(radius2: int, value: float = 1.0) -> NoiseCoefficients:
    """Constant ``value`` on the single shell ``|k|^2 = radius2``."""
    return NoiseCoefficients({int(radius2): float(value)}, float(np.sqrt(radius2)), "shell", 0.0)


def scaling_ratio(theta: NoiseCoefficients) -> float:
    l2 = theta.l2_norm
    if l2 == 0.0:
        raise ValueError("theta is identically zero; the flatness ratio is undefined")
    return theta.linf_norm / l2


class SymmetryReport(NamedTuple):
    ok: bool
    shell: int | None = None  # |k|^2 of the first offending shell

    def __bool__(self) -> bool:
        return self.ok


def validate_symmetry(theta) -> SymmetryReport:
    """Check ``theta_k == theta_l`` whenever ``|k| == |l|`` (exact equality).

    Accepts a :class:`NoiseCoefficients` or any mapping ``k -> value``.
    """
    if isinstance(theta, NoiseCoefficients):
        values = {k: theta.value(k) for k in lattice_points(theta.support_radius)}
        for k, v in theta.overrides.items():
            values[k] = float(v)
    else:
        values = {as_wavevector(k): float(v) for k, v in dict(theta).items()}
    if not values:
        return SymmetryReport(True)
    rmax = max(np.sqrt(k.norm2) for k in values)
    by_shell: dict[int, set] = {}
    for k in lattice_points(rmax):
        by_shell.setdefault(k.norm2, set()).add(values.get(k, 0.0))
    for s in sorted(by_shell):
        if len(by_shell[s]) > 1:
            return SymmetryReport(False, s)
    return SymmetryReport(True)


__all__ = [
    "NoiseCoefficients", "SymmetryReport", "Wavevector", "make_cutoff", "make_power",
    "make_shell", "scaling_ratio", "validate_symmetry",
]
