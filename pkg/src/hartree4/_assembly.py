"""Dense discretizations shared by the ground-state solver and the sector
operators.

Two Laplacian discretizations coexist on purpose:

* a 4th-order finite-difference form (parity ghosts across r=0, one-sided top
  closure) used for residual evaluation and direct solves, where accuracy is
  what matters;
* a finite-volume flux form, 2nd order but *exactly* symmetric with respect to
  the r³ dr pairing (the r=0 face carries zero flux since r³ vanishes there),
  used for eigenvalue computations and the symmetry invariant.

The nonlocal sector kernel uses the exact expansion of the d=4 Newton kernel
in zonal harmonics,

    1/|x−y|² = r_>⁻² Σ_ℓ t^ℓ U_ℓ(cosθ),   t = r_</r_>,

with U_ℓ the Chebyshev polynomials of the second kind, whose Funk–Hecke
eigenvalue on degree-ℓ harmonics is ω₃ t^ℓ/(ℓ+1).  (The ℓ=0 case reduces to
the mean-value kernel max(r,s)⁻², which pins the normalization.)
"""

from __future__ import annotations

import numpy as np

from .radial_core import (OMEGA3, RadialGrid, _D1_C, _D2_C, _D1_ONESIDED,
                          _D2_ONESIDED)


def zonal_kernel_coeff(ell: int, t: np.ndarray) -> np.ndarray:
    """t^ℓ / (ℓ+1): coefficient of the degree-ℓ zonal harmonic in the d=4
    Newton kernel expansion (Gegenbauer/Chebyshev-U generating function)."""
    return np.asarray(t) ** ell / (ell + 1)


def _fd_matrix(grid: RadialGrid, order: int, parity: int,
               top: str = "oneside") -> np.ndarray:
    """Dense 4th-order derivative matrix with parity ghosts at r=0.

    top='oneside' closes the last rows with one-sided stencils (most accurate
    for evaluating residuals); top='zero' keeps centered stencils with zero
    ghosts past r_max, which imposes decay and removes the spurious near-null
    e^{+r} mode — required for well-posed direct solves.
    """
    n = grid.n
    h = grid.h
    A = np.zeros((n, n))
    coeffs = (_D1_C if order == 1 else _D2_C) / h**order
    for i in range(n):
        for k, c in enumerate(coeffs):
            j = i + k - 2
            if j < 0:
                A[i, -j - 1] += parity * c       # ghost -r_{-j-1} mirrors r_{-j-1}
            elif j < n:
                A[i, j] += c
    if top == "oneside":
        oneside = _D1_ONESIDED if order == 1 else _D2_ONESIDED
        npts = len(oneside[0])
        A[-1, :] = 0.0
        A[-1, -npts:] = oneside[0] / h**order
        A[-2, :] = 0.0
        A[-2, -npts:] = oneside[1] / h**order
    return A


def minus_laplacian_fd(grid: RadialGrid, ell: int, top: str = "oneside") -> np.ndarray:
    """−Δ_(ℓ) = −d²/dr² − (3/r) d/dr + ℓ(ℓ+2)/r², 4th order."""
    parity = 1 if ell % 2 == 0 else -1
    r = grid.nodes
    A = (-_fd_matrix(grid, 2, parity, top)
         - np.diag(3.0 / r) @ _fd_matrix(grid, 1, parity, top))
    if ell:
        A += np.diag(ell * (ell + 2) / r**2)
    return A


def minus_laplacian_fv(grid: RadialGrid, ell: int) -> np.ndarray:
    """Flux-form −Δ_(ℓ); symmetric under the r³ pairing to round-off."""
    n = grid.n
    h = grid.h
    r = grid.nodes
    faces = (np.arange(n + 1) * h) ** 3          # r³ at cell faces, face 0 flux-free
    main = (faces[:-1] + faces[1:]) / (h**2 * r**3)
    off = -faces[1:-1] / (h**2 * np.sqrt(r[:-1] ** 3 * r[1:] ** 3))
    # assembled directly in the symmetrized variable g = r^{3/2} f
    A = np.diag(main) + np.diag(off, 1) + np.diag(off, -1)
    if ell:
        A += np.diag(ell * (ell + 2) / r**2)
    return A


def fv_weight(grid: RadialGrid) -> np.ndarray:
    """Pairing weight for the FV form: plain ℓ² in g = r^{3/2}√h f coordinates
    corresponds to Σ r³ h f², the discrete r³ dr measure."""
    return grid.nodes**3 * grid.h


def _moment_scatter(grid: RadialGrid, power: float):
    """Dense scatter matrices (full, left-half, right-half) mapping samples to
    per-cell integrals against s^power; cached on the grid."""
    from .radial_core import _lagrange_moment_weights

    cache = grid.__dict__.setdefault("_moment_cache", {})
    if power in cache:
        return cache[power]
    n = grid.n
    nodes = grid.nodes
    a = nodes - 0.5 * grid.h
    b = nodes + 0.5 * grid.h
    out = []
    for lo, hi in ((a, b), (a, nodes), (nodes, b)):
        w = _lagrange_moment_weights(nodes, grid._stencil, lo, hi, power)
        M = np.zeros((n, n))
        rows = np.repeat(np.arange(n), 4)
        np.add.at(M, (rows, grid._stencil.ravel()), w.ravel())
        out.append(M)
    cache[power] = tuple(out)
    return cache[power]


def kernel_matrix(grid: RadialGrid, ell: int) -> np.ndarray:
    """Dense quadrature of the ℓ-sector kernel transform

        (K_ℓ f)(r) = ∫ r_>⁻² g_ℓ(r_</r_>) f(s) s³ ds
                   = (ℓ+1)⁻¹ [ r^{−ℓ−2} ∫₀^r f s^{ℓ+3} ds + r^ℓ ∫_r^∞ f s^{1−ℓ} ds ],

    so the sector potential of a profile is φ_ℓ = −ω₃ K_ℓ @ f.  The split at
    s = r removes the kernel corner from the quadrature: both halves are
    smooth power-weighted integrands handled by the cubic cell moments.
    """
    r = grid.nodes
    full_hi, left_hi, _ = _moment_scatter(grid, ell + 3)
    full_lo, _, right_lo = _moment_scatter(grid, 1 - ell)
    lower = np.tril(np.ones((grid.n, grid.n)), -1)
    prefix = lower @ full_hi + left_hi
    suffix = lower.T @ full_lo + right_lo
    K = (prefix / r[:, None] ** (ell + 2) + suffix * r[:, None] ** ell) / (ell + 1)
    return K


def sector_matrix_fd(grid: RadialGrid, Q: np.ndarray, V: np.ndarray,
                     ell: int, sign: str, top: str = "oneside") -> np.ndarray:
    """4th-order dense L_{±,(ℓ)}: −Δ_(ℓ) + 1 + V (+ nonlocal part for '+')."""
    A = minus_laplacian_fd(grid, ell, top) + np.diag(1.0 + V)
    if sign == "plus":
        A += nonlocal_block(grid, Q, ell)
    return A


def sector_matrix_fv(grid: RadialGrid, Q: np.ndarray, V: np.ndarray,
                     ell: int, sign: str):
    """Symmetric pencil for eigen computations, in g = r^{3/2} f variables.

    Returns the plain-symmetric matrix B with eigenpairs (μ, g); profiles are
    recovered as f = g / r^{3/2}.
    """
    r = grid.nodes
    B = minus_laplacian_fv(grid, ell) + np.diag(1.0 + V)
    if sign == "plus":
        W = nonlocal_block(grid, Q, ell)
        # conjugate into g coordinates: B_W = R W R^{-1}, R = diag(r^{3/2})
        R = r**1.5
        B += (R[:, None] / R[None, :]) * W
    return 0.5 * (B + B.T)     # symmetrize away quadrature round-off


def nonlocal_block(grid: RadialGrid, Q: np.ndarray, ell: int) -> np.ndarray:
    """W_(ℓ) f = −2 ω₃ Q(r) ∫ r_>⁻² g_ℓ(r_</r_>) Q(s) f(s) s³ ds, i.e. the
    restriction of 2 Q φ_(· Q) to the ℓ-sector."""
    K = kernel_matrix(grid, ell)
    return -2.0 * OMEGA3 * Q[:, None] * K * Q[None, :]


def helmholtz_fd(grid: RadialGrid, top: str = "zero") -> np.ndarray:
    """(−Δ + 1) on the radial sector, 4th order; decay imposed at the top by
    default since this matrix is built to be inverted."""
    return minus_laplacian_fd(grid, 0, top) + np.eye(grid.n)
