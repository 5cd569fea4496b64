"""Scalar and vector fields as finite sums over the real basis ``e_k``, and the spatial operators.

Coefficients of a field truncated at ``N`` are held in a dense ``(2N+1, 2N+1)``
array indexed by ``[k1 + N, k2 + N]``; entries outside ``0 < |k| <= N`` are zero.
Quadratic terms are formed on a uniform grid large enough that the retained
modes of the product are exact (no aliasing into the kept band).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .lattice import SQRT2, TWO_PI, Wavevector, as_wavevector, upper_half_mask

# --------------------------------------------------------------------------
# per-truncation geometry


@dataclass(frozen=True, eq=False)
class Box:
    """Index geometry of the coefficient box for truncation ``n``."""

    n: int
    k1: np.ndarray
    k2: np.ndarray
    knorm2: np.ndarray
    mask: np.ndarray  # 0 < |k| <= n
    plus: np.ndarray  # k in Z2+

    @property
    def shape(self):
        return (2 * self.n + 1, 2 * self.n + 1)


@lru_cache(maxsize=64)
def box(n: int) -> Box:
    r = np.arange(-n, n + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    kn2 = k1 * k1 + k2 * k2
    mask = (kn2 > 0) & (kn2 <= n * n)
    for a in (k1, k2, kn2, mask):
        a.setflags(write=False)
    plus = upper_half_mask(k1, k2)
    plus.setflags(write=False)
    return Box(n, k1, k2, kn2, mask, plus)


@lru_cache(maxsize=64)
def _knorm(n: int) -> np.ndarray:
    b = box(n)
    out = np.sqrt(b.knorm2.astype(float))
    out.setflags(write=False)
    return out


def grid_size(min_size: int) -> int:
    """Smallest FFT-friendly even grid side ``>= min_size``."""
    m = sfft.next_fast_len(int(min_size), real=True)
    while m % 2:
        m = sfft.next_fast_len(m + 1, real=True)
    return m


def product_grid(n_in: int, n_out: int) -> int:
    """Grid side for which the modes ``|k| <= n_out`` of a product of two
    bandwidth-``n_in`` fields are exact. ``n_out = 2 n_in`` keeps the whole product."""
    return grid_size(max(2 * n_in + n_out + 1, 3 * n_in + 2))


def pad(a: np.ndarray, n: int) -> np.ndarray:
    """Embed or crop a coefficient box to truncation ``n`` (cropping also masks to the disk)."""
    m = (a.shape[-1] - 1) // 2
    if m == n:
        return a
    if m < n:
        out = np.zeros(a.shape[:-2] + (2 * n + 1, 2 * n + 1), dtype=a.dtype)
        out[..., n - m:n + m + 1, n - m:n + m + 1] = a
        return out
    out = a[..., m - n:m + n + 1, m - n:m + n + 1].copy()
    out[..., ~box(n).mask] = 0.0
    return out


def flip(a: np.ndarray) -> np.ndarray:
    """``out[k] = a[-k]``."""
    return a[..., ::-1, ::-1]


# --------------------------------------------------------------------------
# real basis <-> complex exponentials <-> grid values


def to_complex(a: np.ndarray) -> np.ndarray:
    """Coefficients of ``exp(2 pi i q.x)`` from real-basis coefficients."""
    b = box((a.shape[-1] - 1) // 2)
    af = flip(a)
    return np.where(b.plus, (a + 1j * af), (af - 1j * a)) / SQRT2


def from_complex(f: np.ndarray) -> np.ndarray:
    b = box((f.shape[-1] - 1) // 2)
    out = np.where(b.plus, SQRT2 * f.real, -SQRT2 * f.imag)
    out[..., ~b.mask] = 0.0
    return out


@lru_cache(maxsize=64)
def _half_plus(n: int) -> np.ndarray:
    return box(n).plus[:, n:]


@lru_cache(maxsize=64)
def _rows(n: int, m: int) -> np.ndarray:
    return np.arange(-n, n + 1) % m


def to_grid(a: np.ndarray, m: int) -> np.ndarray:
    """Values on the ``m x m`` grid ``x = (i/m, j/m)``; ``m`` must exceed ``2n``.

    Leading axes of ``a`` are treated as a batch.
    """
    n = (a.shape[-1] - 1) // 2
    if m <= 2 * n:
        raise ValueError(f"grid side {m} too small for bandwidth {n}")
    # only the k2 >= 0 half of the complex coefficients enters the real transform
    plus = _half_plus(n)
    half = a[..., :, n:]
    half_flip = a[..., ::-1, n::-1]
    spec = np.zeros(a.shape[:-2] + (m, m // 2 + 1), dtype=complex)
    rows = _rows(n, m)
    spec.real[..., rows, :n + 1] = np.where(plus, half, half_flip)
    spec.imag[..., rows, :n + 1] = np.where(plus, half_flip, -half)
    return sfft.irfft2(spec, s=(m, m), axes=(-2, -1)) * (m * m / SQRT2)


def from_grid(g: np.ndarray, n: int) -> np.ndarray:
    """Real-basis coefficients of the modes ``|k| <= n`` of grid values ``g``."""
    m = g.shape[-1]
    if m <= 2 * n:
        raise ValueError(f"grid side {m} too small for bandwidth {n}")
    spec = sfft.rfft2(g, axes=(-2, -1)) / (m * m)
    rows = _rows(n, m)
    f = np.zeros(g.shape[:-2] + (2 * n + 1, 2 * n + 1), dtype=complex)
    f[..., :, n:] = spec[..., rows, :n + 1]
    f[..., :, :n] = np.conj(flip(f)[..., :, :n])
    return from_complex(f)


# --------------------------------------------------------------------------
# coefficient-array operators (the dynamics work at this level)


def grad_coeffs(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(d1 f, d2 f)`` using ``grad e_k = 2 pi k e_{-k}``."""
    b = box((a.shape[-1] - 1) // 2)
    af = flip(a)
    return -TWO_PI * b.k1 * af, -TWO_PI * b.k2 * af


def laplacian_multiplier(n: int) -> np.ndarray:
    return -(TWO_PI**2) * box(n).knorm2.astype(float)


def lambda_multiplier(n: int, s: float) -> np.ndarray:
    b = box(n)
    out = np.zeros(b.shape)
    out[b.mask] = (TWO_PI * _knorm(n)[b.mask]) ** s
    return out


def velocity_coeffs(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``u = grad_perp(-Lambda^{-1} omega)`` with ``grad_perp = (d2, -d1)``."""
    n = (a.shape[-1] - 1) // 2
    psi = -lambda_multiplier(n, -1.0) * a
    g1, g2 = grad_coeffs(psi)
    return g2, -g1


def grad_sq_norm(a: np.ndarray):
    """``||grad f||_{L^2}^2 = sum 4 pi^2 |k|^2 f_k^2`` (per batch member)."""
    n = (a.shape[-1] - 1) // 2
    return np.sum((TWO_PI**2) * box(n).knorm2 * a * a, axis=(-2, -1))


def sq_norm(a: np.ndarray):
    return np.sum(a * a, axis=(-2, -1))


class AdvectionWorkspace:
    """Reusable pseudo-spectral evaluator of ``Pi_N((K0 * omega) . grad s)`` at fixed ``N``."""

    def __init__(self, n: int):
        self.n = n
        self.m = product_grid(n, n)

    def velocity_grid(self, omega: np.ndarray):
        u1, u2 = velocity_coeffs(omega)
        return to_grid(u1, self.m), to_grid(u2, self.m)

    def advect(self, omega: np.ndarray, scalar: np.ndarray, vel=None) -> np.ndarray:
        u1g, u2g = self.velocity_grid(omega) if vel is None else vel
        g1, g2 = grad_coeffs(scalar)
        prod = u1g * to_grid(g1, self.m) + u2g * to_grid(g2, self.m)
        return from_grid(prod, self.n)


@lru_cache(maxsize=16)
def advection_workspace(n: int) -> AdvectionWorkspace:
    return AdvectionWorkspace(n)


# --------------------------------------------------------------------------
# field types


@dataclass(frozen=True, eq=False)
class SpectralScalarField:
    """Zero-mean trigonometric polynomial ``sum_{0<|k|<=N} c_k e_k``."""

    N: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != box(self.N).shape:
            raise ValueError(f"coefficient box {c.shape} does not match truncation {self.N}")
        c[~box(self.N).mask] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # construction -------------------------------------------------------
    @classmethod
    def zeros(cls, n: int) -> "SpectralScalarField":
        return cls(n, np.zeros(box(n).shape))

    @classmethod
    def from_modes(cls, modes: dict, n: int | None = None) -> "SpectralScalarField":
        ks = {as_wavevector(k): float(v) for k, v in modes.items()}
        if n is None:
            n = int(np.ceil(max((k.norm for k in ks), default=1.0)))
        c = np.zeros(box(n).shape)
        for k, v in ks.items():
            if k.norm2 > n * n:
                raise ValueError(f"mode {tuple(k)} lies outside truncation {n}")
            c[k.k1 + n, k.k2 + n] += v
        return cls(n, c)

    @classmethod
    def basis(cls, k, n: int | None = None) -> "SpectralScalarField":
        return cls.from_modes({tuple(k): 1.0}, n)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, band: float | None = None,
               slope: float = 0.0) -> "SpectralScalarField":
        """Gaussian coefficients ``~ |k|^-slope`` on ``|k| <= band`` (default ``n``)."""
        b = box(n)
        band = n if band is None else band
        c = rng.standard_normal(b.shape)
        keep = b.mask & (b.knorm2 <= band * band + 1e-9)
        c[~keep] = 0.0
        if slope:
            c[keep] *= _knorm(n)[keep] ** (-slope)
        return cls(n, c)

    @classmethod
    def from_grid(cls, g: np.ndarray, n: int) -> "SpectralScalarField":
        return cls(n, from_grid(np.asarray(g, dtype=float), n))

    # access ---------------------------------------------------------------
    def coefficient(self, k) -> float:
        k = as_wavevector(k)
        if k.norm2 > self.N * self.N:
            return 0.0
        return float(self.coeffs[k.k1 + self.N, k.k2 + self.N])

    def modes(self) -> dict:
        b = box(self.N)
        idx = np.argwhere(b.mask & (self.coeffs != 0.0))
        return {Wavevector(int(i) - self.N, int(j) - self.N): float(self.coeffs[i, j]) for i, j in idx}

    def to_grid(self, m: int | None = None) -> np.ndarray:
        return to_grid(self.coeffs, m or grid_size(2 * self.N + 2))

    def __call__(self, x) -> np.ndarray:
        from .lattice import basis_eval

        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for k, v in self.modes().items():
            out = out + v * basis_eval(k, x)
        return out

    # algebra --------------------------------------------------------------
    def _lift(self, other) -> tuple[np.ndarray, np.ndarray, int]:
        n = max(self.N, other.N)
        return pad(self.coeffs, n), pad(other.coeffs, n), n

    def __add__(self, other):
        a, b, n = self._lift(other)
        return SpectralScalarField(n, a + b)

    def __sub__(self, other):
        a, b, n = self._lift(other)
        return SpectralScalarField(n, a - b)

    def __neg__(self):
        return SpectralScalarField(self.N, -self.coeffs)

    def __mul__(self, c: float):
        return SpectralScalarField(self.N, float(c) * self.coeffs)

    __rmul__ = __mul__

    def inner(self, other) -> float:
        a, b, _ = self._lift(other)
        return float(np.sum(a * b))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs**2)))

    def grad_norm(self) -> float:
        return float(np.sqrt(grad_sq_norm(self.coeffs)))

    def gradient(self) -> "SpectralVectorField":
        g1, g2 = grad_coeffs(self.coeffs)
        return SpectralVectorField(SpectralScalarField(self.N, g1), SpectralScalarField(self.N, g2))

    def laplacian(self) -> "SpectralScalarField":
        return SpectralScalarField(self.N, laplacian_multiplier(self.N) * self.coeffs)

    def d1(self) -> "SpectralScalarField":
        return SpectralScalarField(self.N, grad_coeffs(self.coeffs)[0])

    def with_truncation(self, n: int) -> "SpectralScalarField":
        return SpectralScalarField(n, pad(self.coeffs, n))

    def allclose(self, other, atol: float = 1e-12) -> bool:
        a, b, _ = self._lift(other)
        return bool(np.allclose(a, b, rtol=0.0, atol=atol))


@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    c1: SpectralScalarField
    c2: SpectralScalarField
    divergence_free: bool = False

    def __post_init__(self):
        if self.c1.N != self.c2.N:
            raise ValueError("vector components must share one truncation")

    @property
    def N(self) -> int:
        return self.c1.N

    def divergence(self) -> SpectralScalarField:
        return self.c1.gradient().c1 + self.c2.gradient().c2

    def inner(self, other: "SpectralVectorField") -> float:
        return self.c1.inner(other.c1) + self.c2.inner(other.c2)

    def norm(self) -> float:
        return float(np.sqrt(self.c1.norm() ** 2 + self.c2.norm() ** 2))

    def coefficient(self, k) -> np.ndarray:
        return np.array([self.c1.coefficient(k), self.c2.coefficient(k)])

    def __sub__(self, other):
        return SpectralVectorField(self.c1 - other.c1, self.c2 - other.c2)

    def __add__(self, other):
        return SpectralVectorField(self.c1 + other.c1, self.c2 + other.c2)


# --------------------------------------------------------------------------
# public operations


def lambda_power(f: SpectralScalarField, s: float) -> SpectralScalarField:
    """``Lambda^s f``: multiplies the ``e_k`` coefficient by ``(2 pi |k|)^s``."""
    return SpectralScalarField(f.N, lambda_multiplier(f.N, s) * f.coeffs)


def velocity_from_scalar(omega: SpectralScalarField) -> SpectralVectorField:
    u1, u2 = velocity_coeffs(omega.coeffs)
    return SpectralVectorField(SpectralScalarField(omega.N, u1), SpectralScalarField(omega.N, u2),
                               divergence_free=True)


def galerkin_project(f: SpectralScalarField, m: int) -> SpectralScalarField:
    """Orthogonal projection onto ``span{e_k : |k| <= m}`` (kept at the input truncation)."""
    if m < 1:
        raise ValueError("projection radius must be >= 1")
    c = f.coeffs.copy()
    c[box(f.N).knorm2 > m * m] = 0.0
    return SpectralScalarField(f.N, c)


def advect(omega: SpectralScalarField, scalar: SpectralScalarField) -> SpectralScalarField:
    """``Pi_N((K0 * omega) . grad scalar)``; with ``scalar = omega`` this is the SQG nonlinearity."""
    if omega.N != scalar.N:
        raise ValueError(f"truncation mismatch: {omega.N} vs {scalar.N}")
    ws = advection_workspace(omega.N)
    return SpectralScalarField(omega.N, ws.advect(omega.coeffs, scalar.coeffs))


def transport_mode(k, f: SpectralScalarField) -> SpectralScalarField:
    """``Pi_N(sigma_k . grad f)``; identically zero when ``|k| > 2N``."""
    k = as_wavevector(k)
    n = f.N
    if k.norm2 > 4 * n * n:
        return SpectralScalarField.zeros(n)
    kb = max(abs(k.k1), abs(k.k2))
    m = grid_size(max(kb + 2 * n + 1, 2 * kb + 1, 2 * n + 2))
    nb = max(kb, n)
    sig = np.zeros(box(nb).shape)
    sig[k.k1 + nb, k.k2 + nb] = 1.0
    e = to_grid(sig, m)
    kp = np.array(k.perp, dtype=float) / k.norm
    g1, g2 = grad_coeffs(f.coeffs)
    prod = e * (kp[0] * to_grid(g1, m) + kp[1] * to_grid(g2, m))
    return SpectralScalarField(n, from_grid(prod, n))


def commutator_apply(phi: SpectralScalarField, psi: SpectralScalarField) -> SpectralVectorField:
    """``[Lambda, grad phi] psi = Lambda(psi grad phi) - (Lambda psi) grad phi``.

    The result keeps the full product band ``|k| <= 2N``.
    """
    n = max(phi.N, psi.N)
    n2 = 2 * n
    m = product_grid(n, n2)
    a_phi, a_psi = pad(phi.coeffs, n), pad(psi.coeffs, n)
    g1, g2 = grad_coeffs(a_phi)
    g1g, g2g = to_grid(g1, m), to_grid(g2, m)
    psig = to_grid(a_psi, m)
    lpsig = to_grid(lambda_multiplier(n, 1.0) * a_psi, m)
    lam2 = lambda_multiplier(n2, 1.0)
    comps = []
    for gg in (g1g, g2g):
        first = lam2 * from_grid(psig * gg, n2)
        second = from_grid(lpsig * gg, n2)
        comps.append(SpectralScalarField(n2, first - second))
    return SpectralVectorField(*comps)


def weak_nonlinear_pairing(omega: SpectralScalarField, phi: SpectralScalarField) -> tuple[float, float]:
    """``(<omega, u . grad phi>, 1/2 <u, [Lambda, grad phi] psi>)`` with ``psi = -Lambda^{-1} omega``.

    The two numbers are equal for every pair of trigonometric polynomials.
    """
    n = max(omega.N, phi.N)
    om, ph = omega.with_truncation(n), phi.with_truncation(n)
    m = product_grid(n, n)
    u1, u2 = velocity_coeffs(om.coeffs)
    g1, g2 = grad_coeffs(ph.coeffs)
    transport = to_grid(u1, m) * to_grid(g1, m) + to_grid(u2, m) * to_grid(g2, m)
    direct = float(np.sum(om.coeffs * from_grid(transport, n)))
    psi = lambda_power(om, -1.0) * -1.0
    comm = commutator_apply(ph, psi)
    u = velocity_from_scalar(om)
    via_comm = 0.5 * (u.c1.inner(comm.c1) + u.c2.inner(comm.c2))
    return direct, float(via_comm)


def sobolev_norm(f: SpectralScalarField, s: float) -> float:
    """``(sum_k |k|^{2s} <f, e_k>^2)^{1/2}`` with the integer-lattice weight ``|k|``."""
    b = box(f.N)
    w = np.zeros(b.shape)
    w[b.mask] = _knorm(f.N)[b.mask] ** (2.0 * s)
    return float(np.sqrt(np.sum(w * f.coeffs**2)))


def sobolev_weights(n: int, s: float) -> np.ndarray:
    b = box(n)
    w = np.zeros(b.shape)
    w[b.mask] = _knorm(n)[b.mask] ** (2.0 * s)
    w.setflags(write=False)
    return w
