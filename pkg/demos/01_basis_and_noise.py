"""Real Fourier basis, divergence-free noise fields and the flatness ratio.

Run:  python demos/01_basis_and_noise.py

1. e_k is sqrt(2) cos(2 pi k.x) on the upper half lattice and sqrt(2) sin on the
   lower half; the basis is orthonormal and grad e_k = 2 pi k e_{-k}.
2. sigma_k = (k_perp/|k|) e_k is divergence free, and for any radially symmetric
   theta the weighted sum of sigma_k (x) sigma_k is a multiple of the identity at
   every point x. That isotropy turns the noise's Ito correction into a Laplacian.
3. Spreading theta over more modes drives ||theta||_inf / ||theta||_2 to zero,
   which is the scaling that produces the deterministic limit.
"""
import numpy as np

from sqglab.lattice import basis_eval, lattice_points, tensor_identity_sum
from sqglab.noise import make_cutoff, make_power, scaling_ratio

# 1. orthonormality by midpoint quadrature (exact for trigonometric polynomials)
m = 16
g = (np.arange(m) + 0.5) / m
x = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
ks = lattice_points(3)
values = np.stack([basis_eval(k, x) for k in ks])
gram = values @ values.T / len(x)
print(f"{len(ks)} modes with |k| <= 3; max |Gram - I| = {np.max(np.abs(gram - np.eye(len(ks)))):.1e}")

# 2. the tensor identity at 256 points, for two radially symmetric families
for theta in (make_cutoff(10), make_power(10, 1.0)):
    t = tensor_identity_sum(theta, x)
    target = 0.5 * theta.l2_norm**2 * np.eye(2)
    dev = np.max(np.linalg.norm(t - target, ord=2, axis=(-2, -1)))
    print(f"{theta.family:>6} radius 10: sum theta^2 sigma(x)sigma = {0.5 * theta.l2_norm**2:.1f} I, "
          f"worst deviation {dev:.1e}")

# 3. flatness ratio along the cutoff family: roughly 1/sqrt(#modes)
print("\nradius  modes  ||theta||_inf/||theta||_2")
for r in (2, 4, 8, 16, 32):
    theta = make_cutoff(r)
    print(f"{r:>6}  {len(lattice_points(r)):>5}  {scaling_ratio(theta):.4f}")
