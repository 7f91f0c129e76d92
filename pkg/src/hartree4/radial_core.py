"""Radial grids, radial functions, the radial Newton potential and the scaling
operator Λ = 2 + r d/dr.

Everything radial lives on L²(ℝ₊, r³ dr); inner products carry the measure of
the unit 3-sphere ω₃ = 2π² so that they equal the corresponding L²(ℝ⁴)
pairings of radial functions.

Grid layout: uniform cell-centered nodes r_i = (i + 1/2) h, h = r_max/n.  The
midpoint layout avoids the coordinate singularity of the 3/r first-derivative
term at r = 0.  Quadrature weights are built per cell from the exact r³-moments
of the local cubic interpolant, so monomials up to degree 3 integrate exactly.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

# Lebesgue measure of S³; converts ∫ f r³ dr into the R⁴ integral of a radial f.
OMEGA3 = 2.0 * np.pi**2

# Quadrature is exact for r^p, p <= SCHEME_ORDER (checked in the test suite).
SCHEME_ORDER = 3


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _lagrange_moment_weights(nodes: np.ndarray, stencil: np.ndarray,
                             a: np.ndarray, b: np.ndarray, power: float) -> np.ndarray:
    """Weights w[i, :] with Σ_k w[i,k] f(nodes[stencil[i,k]]) = ∫_{a_i}^{b_i} f(r) r^power dr
    exact for cubic f (any real power; cells never touch r=0).

    Per-cell 8-point Gauss–Legendre applied to the cubic Lagrange basis times
    r^power: exact for polynomial weights, and effectively exact for negative
    powers since h ≪ r on every cell.
    """
    x = nodes[stencil]                                  # (n, 4) stencil abscissae
    c = 0.5 * (a + b)
    half = 0.5 * (b - a)
    xg = c[:, None] + half[:, None] * _GL_X[None, :]    # (n, 8)
    wg = half[:, None] * _GL_W[None, :] * xg**power
    w = np.empty((len(a), 4))
    for k in range(4):
        L = np.ones_like(xg)
        for m_ in range(4):
            if m_ == k:
                continue
            L *= (xg - x[:, m_:m_ + 1]) / (x[:, k:k + 1] - x[:, m_:m_ + 1])
        w[:, k] = np.sum(wg * L, axis=1)
    return w


@dataclass
class RadialGrid:
    """Uniform cell-centered radial grid with r³ dr quadrature."""

    r_max: float
    n: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)      # ∫ f r³ dr ≈ Σ weights * f(nodes)
    h: float = 0.0
    # half-cell moment tables used by the O(n) Newton-potential transform
    _w3_left: np.ndarray = field(default=None, repr=False)
    _w3_right: np.ndarray = field(default=None, repr=False)
    _w1_left: np.ndarray = field(default=None, repr=False)
    _w1_right: np.ndarray = field(default=None, repr=False)
    _stencil: np.ndarray = field(default=None, repr=False)

    def scatter_cellwise(self, per_node: np.ndarray, table: np.ndarray) -> np.ndarray:
        """Σ_k table[i,k] * per_node[stencil[i,k]] for each cell i."""
        return np.einsum("ik,ik->i", table, per_node[self._stencil])

    def same(self, other: "RadialGrid") -> bool:
        return self.n == other.n and abs(self.r_max - other.r_max) < 1e-14 * self.r_max


@dataclass
class RadialFn:
    """Sampled radial profile on a grid; real or complex values."""

    grid: RadialGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.n,):
            raise InvalidArgumentError(
                f"values length {self.values.shape} does not match grid n={self.grid.n}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("RadialFn values must be finite")

    def copy(self) -> "RadialFn":
        return RadialFn(self.grid, self.values.copy(), dict(self.meta))


def make_grid(r_max: float, n: int) -> RadialGrid:
    """Build the cell-centered grid with cubic-exact r³ dr quadrature."""
    if not (r_max > 0):
        raise InvalidArgumentError(f"r_max must be positive, got {r_max}")
    if n < 16:
        raise InvalidArgumentError(f"n must be >= 16, got {n}")
    h = r_max / n
    nodes = (np.arange(n) + 0.5) * h
    a = nodes - 0.5 * h
    b = nodes + 0.5 * h
    # 4-node stencil per cell, clipped at the ends
    s0 = np.clip(np.arange(n) - 1, 0, n - 4)
    stencil = s0[:, None] + np.arange(4)[None, :]

    w_cell = _lagrange_moment_weights(nodes, stencil, a, b, 3)
    weights = np.zeros(n)
    np.add.at(weights, stencil, w_cell)

    grid = RadialGrid(r_max=float(r_max), n=int(n), nodes=nodes, weights=weights, h=h)
    grid._stencil = stencil
    grid._w3_left = _lagrange_moment_weights(nodes, stencil, a, nodes, 3)
    grid._w3_right = _lagrange_moment_weights(nodes, stencil, nodes, b, 3)
    grid._w1_left = _lagrange_moment_weights(nodes, stencil, a, nodes, 1)
    grid._w1_right = _lagrange_moment_weights(nodes, stencil, nodes, b, 1)
    return grid


def _check_same_grid(u: RadialFn, v: RadialFn):
    if not u.grid.same(v.grid):
        raise InvalidArgumentError("RadialFn grid mismatch")


def weighted_inner(u: RadialFn, v: RadialFn) -> complex:
    """⟨u, v⟩ = ω₃ ∫ u v̄ r³ dr, the L²(ℝ⁴) pairing of radial functions."""
    _check_same_grid(u, v)
    val = OMEGA3 * np.sum(u.grid.weights * u.values * np.conj(v.values))
    if np.isrealobj(u.values) and np.isrealobj(v.values):
        return float(val)
    return complex(val)


def weighted_norm(u: RadialFn) -> float:
    return float(np.sqrt(abs(weighted_inner(u, u))))


def integral(grid: RadialGrid, samples: np.ndarray) -> float:
    """ω₃ ∫ f r³ dr for sampled radial f — the ℝ⁴ integral."""
    return float(OMEGA3 * np.dot(grid.weights, samples))


# ---------------------------------------------------------------------------
# finite differences (4th order): parity ghosts across r=0, one-sided at r_max
# ---------------------------------------------------------------------------

def _fd_stencil(offsets, der_order):
    """Finite-difference weights on integer offsets for the given derivative."""
    offsets = np.asarray(offsets, dtype=float)
    k = len(offsets)
    rhs = np.zeros(k)
    rhs[der_order] = math.factorial(der_order)
    V = offsets[None, :] ** np.arange(k)[:, None]
    return np.linalg.solve(V, rhs)


_D1_C = _fd_stencil([-2, -1, 0, 1, 2], 1)
_D2_C = _fd_stencil([-2, -1, 0, 1, 2], 2)
_D1_ONESIDED = [_fd_stencil(np.arange(6) - s, 1) for s in (5, 4)]   # rows n-1, n-2
_D2_ONESIDED = [_fd_stencil(np.arange(7) - s, 2) for s in (6, 5)]
_D1_FWD = [_fd_stencil(np.arange(6) - s, 1) for s in (0, 1)]        # rows 0, 1
_D2_FWD = [_fd_stencil(np.arange(7) - s, 2) for s in (0, 1)]


def _pad_parity(values: np.ndarray, parity: int) -> np.ndarray:
    """Two ghost nodes across r=0 (node -r_i mirrors r_i on the midpoint grid)
    and two zero ghosts past r_max; the top rows are replaced by one-sided
    stencils afterwards, so the zero ghosts never enter the result."""
    left = parity * values[1::-1]
    right = np.zeros(2, dtype=values.dtype)
    return np.concatenate([left, values, right])


def radial_derivative(grid: RadialGrid, values: np.ndarray, order: int = 1,
                      parity: int | None = None) -> np.ndarray:
    """4th-order d^order/dr^order on the midpoint grid.

    parity = (-1)^ℓ reflects the profile across r=0 (smooth sector profiles);
    parity = None uses one-sided stencils at the bottom instead, which is
    correct for generic inputs such as e^{-r} that are not even in r.  The top
    boundary is always closed one-sided so polynomial profiles stay exact.
    """
    if order not in (1, 2):
        raise InvalidArgumentError("order must be 1 or 2")
    if parity not in (1, -1, None):
        raise InvalidArgumentError("parity must be +1, -1 or None")
    n = grid.n
    h = grid.h
    padded = _pad_parity(values, parity if parity is not None else 1)
    coeffs = _D1_C if order == 1 else _D2_C
    out = np.zeros(n, dtype=values.dtype)
    for k, c in enumerate(coeffs):
        out += c * padded[k:k + n]
    out /= h ** order
    oneside = _D1_ONESIDED if order == 1 else _D2_ONESIDED
    npts = len(oneside[0])
    tail = values[-npts:]
    out[-1] = np.dot(oneside[0], tail) / h ** order
    out[-2] = np.dot(oneside[1], tail) / h ** order
    if parity is None:
        fwd = _D1_FWD if order == 1 else _D2_FWD
        head = values[:npts]
        out[0] = np.dot(fwd[0], head) / h ** order
        out[1] = np.dot(fwd[1], head) / h ** order
    return out


def apply_lambda(u: RadialFn, k: int = 1, parity: int | None = None) -> RadialFn:
    """Λᵏ u with Λu = 2u + r u′ (radial form of 2 + x·∇ in ℝ⁴)."""
    if k not in (1, 2, 3):
        raise InvalidArgumentError(f"k must be in {{1,2,3}}, got {k}")
    vals = u.values
    for _ in range(k):
        du = radial_derivative(u.grid, vals, 1, parity)
        vals = 2.0 * vals + u.grid.nodes * du
    return RadialFn(u.grid, vals)


def radial_laplacian(u: RadialFn, ell: int = 0) -> RadialFn:
    """Δ restricted to the ℓ-sector: f″ + (3/r) f′ − ℓ(ℓ+2) f / r²."""
    parity = 1 if ell % 2 == 0 else -1
    r = u.grid.nodes
    d1 = radial_derivative(u.grid, u.values, 1, parity)
    d2 = radial_derivative(u.grid, u.values, 2, parity)
    vals = d2 + 3.0 * d1 / r
    if ell:
        vals = vals - ell * (ell + 2) * u.values / r**2
    return RadialFn(u.grid, vals)


# ---------------------------------------------------------------------------
# radial Newton potential
# ---------------------------------------------------------------------------

def radial_newton_potential(dens: RadialFn) -> RadialFn:
    """φ(r) = −ω₃ ∫ max(r,s)⁻² dens(s) s³ ds, i.e. φ = −|x|⁻² ∗ dens for radial
    densities (mean-value reduction of the ℝ⁴ convolution).

    O(n): prefix integrals of dens·s³ and suffix integrals of dens·s, split at
    the node so each half-integral has a smooth integrand (the kernel kink sits
    exactly on the cell center).  Beyond the support φ(r) → −M/r² with
    M = ω₃ ∫ dens s³ ds the total ℝ⁴ mass.
    """
    g = dens.grid
    rho = np.real(dens.values)
    meta = {}
    scale = np.max(np.abs(rho))
    if scale > 0 and abs(rho[-1]) >= 1e-8 * scale:
        meta["tail_truncated"] = True

    cell3 = g.scatter_cellwise(rho, g._w3_left + g._w3_right)   # ∫_cell ρ s³ ds
    cell1 = g.scatter_cellwise(rho, g._w1_left + g._w1_right)   # ∫_cell ρ s ds
    left3 = g.scatter_cellwise(rho, g._w3_left)
    right1 = g.scatter_cellwise(rho, g._w1_right)

    prefix3 = np.concatenate([[0.0], np.cumsum(cell3)[:-1]]) + left3
    suffix1 = np.concatenate([np.cumsum(cell1[::-1])[::-1][1:], [0.0]]) + right1

    phi = -OMEGA3 * (prefix3 / g.nodes**2 + suffix1)
    return RadialFn(g, phi, meta)


def total_mass(dens: RadialFn) -> float:
    """ω₃ ∫ dens s³ ds — the ℝ⁴ integral of a radial density."""
    return integral(dens.grid, np.real(dens.values))


# ---------------------------------------------------------------------------
# serialization: CSV with r,value(,value_im); grid parameters in the header
# ---------------------------------------------------------------------------

def save_radial_csv(u: RadialFn, path) -> None:
    is_c = np.iscomplexobj(u.values)
    with open(path, "w") as fh:
        fh.write(f"# r_max={float(u.grid.r_max)!r} n={u.grid.n}\n")
        fh.write("r,value,value_im\n" if is_c else "r,value\n")
        for i, r in enumerate(u.grid.nodes):
            if is_c:
                fh.write(f"{float(r)!r},{float(u.values[i].real)!r},{float(u.values[i].imag)!r}\n")
            else:
                fh.write(f"{float(r)!r},{float(u.values[i])!r}\n")


def load_radial_csv(path) -> RadialFn:
    with open(path) as fh:
        header = fh.readline().strip()
        body = fh.read()
    if not header.startswith("# r_max="):
        raise InvalidArgumentError(f"not a RadialFn CSV: {path}")
    fields = dict(tok.split("=") for tok in header[2:].split())
    grid = make_grid(float(fields["r_max"]), int(fields["n"]))
    data = np.genfromtxt(io.StringIO(body), delimiter=",", names=True)
    if "value_im" in (data.dtype.names or ()):
        vals = data["value"] + 1j * data["value_im"]
    else:
        vals = data["value"]
    if not np.allclose(data["r"], grid.nodes, rtol=0, atol=1e-12 * grid.r_max):
        raise InvalidArgumentError("node mismatch while loading RadialFn")
    return RadialFn(grid, vals)


def interp_radial(u: RadialFn, r: np.ndarray, extrapolate="zero") -> np.ndarray:
    """Cubic interpolation of a radial profile at arbitrary radii.

    extrapolate: 'zero' (exponentially decaying profiles), 'inverse_square'
    (monopole potentials, continued as value(r_last)·(r_last/r)²), or a float
    power p for the general far-field value(r_last)·(r_last/r)^p continuation
    (sector potentials decay like r^{−ℓ−2}).
    """
    from scipy.interpolate import CubicSpline

    key = "_spline"
    if key not in u.meta:
        # extend across r=0 by even reflection so small radii interpolate well
        g = u.grid
        xs = np.concatenate([-g.nodes[2::-1], g.nodes])
        ys = np.concatenate([u.values[2::-1], u.values])
        u.meta[key] = CubicSpline(xs, ys, extrapolate=False)
    spl = u.meta[key]
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape, dtype=u.values.dtype)
    inside = r <= u.grid.nodes[-1]
    out[inside] = np.nan_to_num(spl(r[inside]))
    if extrapolate == "inverse_square":
        extrapolate = 2.0
    if isinstance(extrapolate, (int, float)):
        r_last = u.grid.nodes[-1]
        out[~inside] = u.values[-1] * (r_last / r[~inside]) ** float(extrapolate)
    return out
