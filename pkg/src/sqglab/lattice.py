"""Integer lattice, the real trigonometric basis ``e_k`` and the fields ``sigma_k``.

Points live on the unit torus ``[0, 1)^2``. The half-lattice split is
lexicographic::

    Z2+ = {k : k1 > 0} U {k : k1 = 0, k2 > 0},   Z2- = -Z2+

and ``e_k = sqrt(2) cos(2 pi k.x)`` on ``Z2+``, ``sqrt(2) sin(2 pi k.x)`` on ``Z2-``.
"""
from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np

SQRT2 = np.sqrt(2.0)
TWO_PI = 2.0 * np.pi


class Wavevector(NamedTuple):
    k1: int
    k2: int

    @property
    def norm(self) -> float:
        return float(np.hypot(self.k1, self.k2))

    @property
    def norm2(self) -> int:
        return self.k1 * self.k1 + self.k2 * self.k2

    @property
    def perp(self) -> "Wavevector":
        return Wavevector(self.k2, -self.k1)

    def __neg__(self) -> "Wavevector":
        return Wavevector(-self.k1, -self.k2)


def as_wavevector(k) -> Wavevector:
    """Coerce a pair to a :class:`Wavevector`, rejecting the origin."""
    k1, k2 = (int(v) for v in k)
    if k1 == 0 and k2 == 0:
        raise ValueError("the zero wavevector is not a basis mode")
    return Wavevector(k1, k2)


def in_upper_half(k) -> bool:
    k1, k2 = k
    return k1 > 0 or (k1 == 0 and k2 > 0)


def upper_half_mask(k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """Vectorised membership test for ``Z2+``."""
    return (k1 > 0) | ((k1 == 0) & (k2 > 0))


def lattice_points(radius: float) -> list[Wavevector]:
    """All ``k`` with ``0 < |k| <= radius``, ordered by ``(|k|^2, k1, k2)``."""
    r = int(np.floor(radius))
    r2 = radius * radius
    pts = [
        Wavevector(a, b)
        for a in range(-r, r + 1)
        for b in range(-r, r + 1)
        if (a or b) and a * a + b * b <= r2 + 1e-9
    ]
    pts.sort(key=lambda k: (k.norm2, k.k1, k.k2))
    return pts


@lru_cache(maxsize=None)
def _global_order(r: int) -> dict:
    return {k: i for i, k in enumerate(lattice_points(r))}


def global_mode_index(k) -> int:
    """Position of ``k`` in the canonical enumeration of ``Z2_0`` by ``(|k|^2, k1, k2)``.

    The index depends only on ``k``; a mode keeps its index whatever the
    support of the noise coefficients, which is what the Brownian driver keys on.
    """
    k = as_wavevector(k)
    # the enumeration up to radius R is a prefix of the one up to any R' > R
    r = 8
    while k.norm2 > r * r:
        r *= 2
    return _global_order(r)[k]


def _phase(k: Wavevector, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return TWO_PI * (k.k1 * x[..., 0] + k.k2 * x[..., 1])


def basis_eval(k, x) -> np.ndarray:
    """Evaluate ``e_k`` at points ``x`` (shape ``(..., 2)``)."""
    k = as_wavevector(k)
    ph = _phase(k, x)
    if in_upper_half(k):
        return SQRT2 * np.cos(ph)
    return SQRT2 * np.sin(ph)


def sigma_eval(k, x) -> np.ndarray:
    """Evaluate the divergence-free field ``sigma_k = (k_perp/|k|) e_k``; shape ``(..., 2)``."""
    k = as_wavevector(k)
    e = basis_eval(k, x)
    kp = np.array(k.perp, dtype=float) / k.norm
    return e[..., None] * kp


class DerivativeCoefficient(NamedTuple):
    paired_mode: Wavevector
    gradient_factor: np.ndarray  # grad e_k = gradient_factor * e_{paired_mode}
    laplacian_eigenvalue: float


def derivative_coefficient(k) -> DerivativeCoefficient:
    """``grad e_k = 2 pi k e_{-k}`` and ``Lap e_k = -4 pi^2 |k|^2 e_k``."""
    k = as_wavevector(k)
    return DerivativeCoefficient(-k, TWO_PI * np.array(k, dtype=float), -(TWO_PI**2) * k.norm2)


def tensor_identity_sum(theta, x) -> np.ndarray:
    """``sum_k theta_k^2 sigma_k(x) (x) sigma_k(x)`` as a 2x2 matrix (or stack of them).

    Raises ``ValueError`` if ``theta`` is not radially symmetric, since the
    isotropy of the sum depends on it.
    """
    from .noise import validate_symmetry

    report = validate_symmetry(theta)
    if not report.ok:
        raise ValueError(f"theta is not radially symmetric (shell |k|^2={report.shell})")
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (2, 2))
    for k, t in theta.items():
        if t == 0.0:
            continue
        s = sigma_eval(k, x)
        out += t * t * s[..., :, None] * s[..., None, :]
    return out
