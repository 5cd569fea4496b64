"""Reference evaluation of quadratic terms by explicit mode-pair convolution.

Products of basis functions are expanded with the product-to-sum identities
directly in the real basis; no transform is involved. Cost is O(N^4), so this
path is only for cross-checking the grid-based products at small truncation.
"""
from __future__ import annotations

from collections import defaultdict

import numpy as np

from .fields import SpectralScalarField, SpectralVectorField
from .lattice import SQRT2, TWO_PI, in_upper_half

# a term ("c" | "s", (q1, q2), amplitude) stands for amplitude * cos/sin(2 pi q.x)


def _basis_term(k):
    return ("c" if in_upper_half(k) else "s", (k[0], k[1]), SQRT2)


def _product(t1, t2):
    (c1, a, x), (c2, b, y) = t1, t2
    h = 0.5 * x * y
    plus = (a[0] + b[0], a[1] + b[1])
    minus = (a[0] - b[0], a[1] - b[1])
    if c1 == "c" and c2 == "c":
        return [("c", minus, h), ("c", plus, h)]
    if c1 == "s" and c2 == "s":
        return [("c", minus, h), ("c", plus, -h)]
    if c1 == "s":
        return [("s", plus, h), ("s", minus, h)]
    return [("s", plus, h), ("s", minus, -h)]


def _accumulate(out, term, cutoff2):
    kind, q, amp = term
    if q == (0, 0):
        return  # constants and sin(0) carry no zero-mean content
    if q[0] * q[0] + q[1] * q[1] > cutoff2:
        return
    neg = (-q[0], -q[1])
    if kind == "c":
        k = q if in_upper_half(q) else neg
        out[k] += amp / SQRT2
    elif in_upper_half(q):
        out[neg] -= amp / SQRT2
    else:
        out[q] += amp / SQRT2


def product_modes(f: dict, g: dict, cutoff: float) -> dict:
    """Real-basis coefficients (``|k| <= cutoff``) of ``f * g`` for mode dicts ``f``, ``g``."""
    out = defaultdict(float)
    c2 = cutoff * cutoff + 1e-9
    for j, a in f.items():
        tj = _basis_term(j)
        for l, b in g.items():
            for t in _product(tj, _basis_term(l)):
                _accumulate(out, (t[0], t[1], a * b * t[2]), c2)
    return dict(out)


def _field(modes: dict, n: int) -> SpectralScalarField:
    return SpectralScalarField.from_modes({k: v for k, v in modes.items()}, n)


def _velocity_modes(omega: SpectralScalarField):
    """Per-mode ``u = -(k_perp/|k|) e_{-k}`` as two mode dicts."""
    u1, u2 = defaultdict(float), defaultdict(float)
    for k, v in omega.modes().items():
        nk = np.hypot(*k)
        u1[(-k[0], -k[1])] += -v * k[1] / nk
        u2[(-k[0], -k[1])] += v * k[0] / nk
    return dict(u1), dict(u2)


def _grad_modes(f: SpectralScalarField):
    g1, g2 = defaultdict(float), defaultdict(float)
    for k, v in f.modes().items():
        g1[(-k[0], -k[1])] += TWO_PI * k[0] * v
        g2[(-k[0], -k[1])] += TWO_PI * k[1] * v
    return dict(g1), dict(g2)


def _add(*dicts):
    out = defaultdict(float)
    for d in dicts:
        for k, v in d.items():
            out[k] += v
    return dict(out)


def advect_bruteforce(omega: SpectralScalarField, scalar: SpectralScalarField) -> SpectralScalarField:
    n = omega.N
    u1, u2 = _velocity_modes(omega)
    g1, g2 = _grad_modes(scalar)
    return _field(_add(product_modes(u1, g1, n), product_modes(u2, g2, n)), n)


def transport_mode_bruteforce(k, f: SpectralScalarField) -> SpectralScalarField:
    k = (int(k[0]), int(k[1]))
    nk = np.hypot(*k)
    g1, g2 = _grad_modes(f)
    kp = (k[1] / nk, -k[0] / nk)
    grad_along = _add({q: kp[0] * v for q, v in g1.items()}, {q: kp[1] * v for q, v in g2.items()})
    return _field(product_modes({k: 1.0}, grad_along, f.N), f.N)


def commutator_bruteforce(phi: SpectralScalarField, psi: SpectralScalarField) -> SpectralVectorField:
    n = max(phi.N, psi.N)
    n2 = 2 * n
    g = _grad_modes(phi)
    lpsi = {k: TWO_PI * np.hypot(*k) * v for k, v in psi.modes().items()}
    comps = []
    for gi in g:
        first = product_modes(psi.modes(), gi, n2)
        first = {k: TWO_PI * np.hypot(*k) * v for k, v in first.items()}
        second = product_modes(lpsi, gi, n2)
        comps.append(_field(_add(first, {k: -v for k, v in second.items()}), n2))
    return SpectralVectorField(*comps)


def weak_pairing_bruteforce(omega: SpectralScalarField, phi: SpectralScalarField) -> tuple[float, float]:
    n = max(omega.N, phi.N)
    om = omega.with_truncation(n)
    u1, u2 = _velocity_modes(om)
    g1, g2 = _grad_modes(phi.with_truncation(n))
    transport = _field(_add(product_modes(u1, g1, n), product_modes(u2, g2, n)), n)
    direct = om.inner(transport)
    psi = _field({k: -v / (TWO_PI * np.hypot(*k)) for k, v in om.modes().items()}, n)
    comm = commutator_bruteforce(phi.with_truncation(n), psi)
    u = SpectralVectorField(_field(u1, n), _field(u2, n))
    return direct, 0.5 * (u.c1.inner(comm.c1) + u.c2.inner(comm.c2))

