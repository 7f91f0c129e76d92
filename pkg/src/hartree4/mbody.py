"""Inverse-square m-body dynamics in ℝ⁴:

    α̇_j = 2 β_j,      β̇_j = −κ Σ_{k≠j} (α_j − α_k)/|α_j − α_k|⁴,

with first integral H = 2Σ|β_j|² − κ Σ_{j<k} |α_jk|⁻² and freely moving center
of mass.  κ defaults to ‖Q‖²; pipelines that must match the PDE interaction
force use 2‖Q‖² (see modulation.pair_coupling).

Includes the scattering solver toward prescribed hyperbolic asymptotics
(Picard iteration on [T₀, ∞) in the compactified variable ξ = √(T₀/t)),
constrained minimization for parabolic central configurations, the explicit
homothetic parabolic orbits, and an exponent-based orbit classifier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize, root

from .errors import (CollisionError, ConvergenceError, FitFailureError,
                     InvalidArgumentError)


@dataclass
class BodyState:
    """Positions α and conjugate velocities β of m ≥ 2 bodies in ℝ⁴."""

    alpha: np.ndarray          # (m, 4)
    beta: np.ndarray           # (m, 4)
    kappa: float = 1.0
    masses: np.ndarray | None = None   # appendix variant (α̇ = β) when set

    def __post_init__(self):
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        if self.alpha.shape != self.beta.shape or self.alpha.shape[1] != 4:
            raise InvalidArgumentError("alpha/beta must both be (m, 4)")
        if self.alpha.shape[0] < 1:
            raise InvalidArgumentError("need at least one body")

    @property
    def m(self) -> int:
        return self.alpha.shape[0]


def min_separation(alpha: np.ndarray) -> float:
    m = alpha.shape[0]
    if m < 2:
        return np.inf
    d = alpha[:, None, :] - alpha[None, :, :]
    dist = np.sqrt(np.sum(d * d, axis=-1))
    return float(np.min(dist[np.triu_indices(m, 1)]))


def pair_forces(alpha: np.ndarray, kappa: float) -> np.ndarray:
    """−κ Σ_{k≠j} α_jk/|α_jk|⁴ per body (zero total by antisymmetry)."""
    m = alpha.shape[0]
    if m == 1:
        return np.zeros_like(alpha)
    d = alpha[:, None, :] - alpha[None, :, :]
    dist2 = np.sum(d * d, axis=-1)
    np.fill_diagonal(dist2, np.inf)
    return -kappa * np.sum(d / dist2[:, :, None] ** 2, axis=1)


def mbody_rhs(s: BodyState, eps_coll: float = 0.0):
    """(α̇, β̇); raises on approach below eps_coll."""
    a = min_separation(s.alpha)
    if a <= eps_coll:
        raise CollisionError(f"bodies within {a:.3e} of collision")
    if s.masses is not None:
        # appendix convention: α̇ = β, β̇_j = −Σ_k m_k α_jk/|α_jk|⁴
        d = s.alpha[:, None, :] - s.alpha[None, :, :]
        dist2 = np.sum(d * d, axis=-1)
        np.fill_diagonal(dist2, np.inf)
        acc = -np.sum(np.asarray(s.masses)[None, :, None] * d / dist2[:, :, None] ** 2, axis=1)
        return s.beta.copy(), acc
    return 2.0 * s.beta, pair_forces(s.alpha, s.kappa)


def mbody_energy(s: BodyState) -> float:
    """H = 2 Σ|β_j|² − κ Σ_{j<k} |α_jk|⁻²  (main-text convention)."""
    a = min_separation(s.alpha)
    if a == 0:
        raise CollisionError("collision configuration has no finite energy")
    m = s.m
    kin = 2.0 * np.sum(s.beta**2)
    if m < 2:
        return float(kin)
    d = s.alpha[:, None, :] - s.alpha[None, :, :]
    dist2 = np.sum(d * d, axis=-1)
    iu = np.triu_indices(m, 1)
    return float(kin - s.kappa * np.sum(1.0 / dist2[iu]))


@dataclass
class BodyPath:
    """Trajectory samples with conservation diagnostics."""

    t: np.ndarray
    alpha: np.ndarray          # (nt, m, 4)
    beta: np.ndarray
    kappa: float
    H: np.ndarray = field(default=None)
    a: np.ndarray = field(default=None)
    com: np.ndarray = field(default=None)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.H is None:
            self.H = np.array([mbody_energy(self.state(i)) for i in range(len(self.t))])
        if self.a is None:
            self.a = np.array([min_separation(self.alpha[i]) for i in range(len(self.t))])
        if self.com is None:
            self.com = np.sum(self.alpha, axis=1)

    def state(self, i: int) -> BodyState:
        return BodyState(self.alpha[i], self.beta[i], self.kappa)

    def eval(self, t):
        """Cubic interpolation of (α, β) at arbitrary times inside the span."""
        key = "_spl"
        if key not in self.meta:
            self.meta[key] = (CubicSpline(self.t, self.alpha, axis=0),
                              CubicSpline(self.t, self.beta, axis=0))
        sa, sb = self.meta[key]
        return sa(t), sb(t)

    def energy_drift(self) -> float:
        scale = max(abs(self.H[0]), 1e-30)
        return float(np.max(np.abs(self.H - self.H[0])) / scale)


def integrate(s: BodyState, t_span, tol: float = 1e-11, nodes: int = 400,
              eps_coll_rel: float = 1e-6) -> BodyPath:
    """Adaptive DOP853 integration with a collision guard event."""
    if tol <= 0:
        raise InvalidArgumentError("tol must be positive")
    a0 = min_separation(s.alpha)
    if not np.isfinite(a0):
        a0 = 1.0
    eps_coll = eps_coll_rel * a0
    m = s.m

    def rhs(t, y):
        st = BodyState(y[: 4 * m].reshape(m, 4), y[4 * m:].reshape(m, 4),
                       s.kappa, s.masses)
        da, db = mbody_rhs(st)
        return np.concatenate([da.ravel(), db.ravel()])

    def coll(t, y):
        return min_separation(y[: 4 * m].reshape(m, 4)) - eps_coll
    coll.terminal = True

    y0 = np.concatenate([s.alpha.ravel(), s.beta.ravel()])
    sol = solve_ivp(rhs, t_span, y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
                    dense_output=True, events=[coll])
    if sol.t_events[0].size:
        raise CollisionError("collision approach during integration",
                             t_estimate=float(sol.t_events[0][0]))
    if not sol.success:
        raise ConvergenceError(f"integrator failed: {sol.message}")
    ts = np.linspace(t_span[0], t_span[1], nodes)
    Y = sol.sol(ts)
    alpha = Y[: 4 * m].T.reshape(-1, m, 4)
    beta = Y[4 * m:].T.reshape(-1, m, 4)
    return BodyPath(ts, alpha, beta, s.kappa, meta={"tol": tol})


# ---------------------------------------------------------------------------
# hyperbolic scattering: Picard fixed point toward α = x + vt + o(1)
# ---------------------------------------------------------------------------

def _xi_grid(npts: int, eps: float = 1e-6) -> np.ndarray:
    """ξ ∈ (0, 1], t = T₀/ξ²: uniform-ξ grid compactifies [T₀, ∞) and grades
    the quadrature so power-law tails integrate smoothly."""
    return np.linspace(eps, 1.0, npts)


def _cumint_from_zero(xi: np.ndarray, h: np.ndarray) -> np.ndarray:
    """∫₀^{ξ_i} h dξ′ by cumulative Simpson + the [0, ξ₀] sliver."""
    from scipy.integrate import cumulative_simpson

    out = cumulative_simpson(h, x=xi, initial=0.0, axis=0)
    return out + xi[0] * np.take(h, 0, axis=0)


@dataclass
class AsymptoticOrbit:
    """Scattering solution on [T₀, ∞) sampled on the compactified grid."""

    T0: float
    xi: np.ndarray
    alpha: np.ndarray          # (nxi, m, 4), xi[0] ~ t=∞
    beta: np.ndarray
    kappa: float
    x: np.ndarray
    v: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.T0 / self.xi**2

    def eval(self, t):
        """(α, β) at arbitrary t ≥ T₀, interpolated in the uniform ξ variable.

        α grows linearly in t = T₀/ξ², so the spline runs on the compensated
        bounded quantity ξ²α (exact for the free-streaming part even across
        the sparse asymptotic decades); β is bounded and splined directly."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.T0 * (1 - 1e-9)):
            raise InvalidArgumentError(
                f"orbit defined on [T0, ∞) with T0 = {self.T0}; got t = {t}")
        key = "_spl"
        if key not in self.meta:
            comp = self.xi[:, None, None] ** 2 * self.alpha
            self.meta[key] = (CubicSpline(self.xi, comp, axis=0),
                              CubicSpline(self.xi, self.beta, axis=0))
        sa, sb = self.meta[key]
        xi_t = np.sqrt(self.T0 / t)
        scale = np.asarray(xi_t) ** 2
        return sa(xi_t) / scale[..., None, None], sb(xi_t)

    def to_path(self, nodes: int = 300) -> BodyPath:
        ts = np.geomspace(self.T0, self.t.max(), nodes)
        a, b = self.eval(ts)
        return BodyPath(ts, a, b, self.kappa)


def hyperbolic_scatter(x, v, T0: float = 10.0, kappa: float = 1.0,
                       npts: int = 2001, tol: float = 1e-12,
                       max_iter: int = 400, max_escalations: int = 6) -> AsymptoticOrbit:
    """Solve α(t) = x + vt + o(1), β = v/2 + o(1) by Picard iteration of

        α_j(t) = x_j + v_j t − ∫_t^∞ (2β_j − v_j) dτ,
        β_j(t) = v_j/2 + κ ∫_t^∞ Σ_{k≠j} α_jk/|α_jk|⁴ dτ,

    on the ξ = √(T₀/t) grid.  T₀ is doubled automatically if the iteration
    fails to contract.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    m = x.shape[0]
    if m < 2:
        raise InvalidArgumentError("scattering needs m >= 2")
    dv = v[:, None, :] - v[None, :, :]
    if np.min(np.sum(dv * dv, axis=-1)[np.triu_indices(m, 1)]) == 0:
        raise InvalidArgumentError("v must have pairwise distinct components")
    if np.max(np.abs(x.sum(axis=0))) > 1e-10 or np.max(np.abs(v.sum(axis=0))) > 1e-10:
        raise InvalidArgumentError("x and v must have zero center of mass")

    trace = []
    for esc in range(max_escalations):
        xi = _xi_grid(npts)
        t = T0 / xi**2
        dt_dxi = 2.0 * T0 / xi**3                 # |dτ| per dξ for tail integrals
        alpha = x[None] + t[:, None, None] * v[None]
        beta = 0.5 * np.broadcast_to(v[None], alpha.shape).copy()
        ok = False
        for it in range(max_iter):
            F = np.stack([pair_forces(alpha[i], kappa) for i in range(len(xi))])
            new_beta = 0.5 * v[None] - _cumint_from_zero(xi, F * dt_dxi[:, None, None])
            integ_a = (2.0 * new_beta - v[None]) * dt_dxi[:, None, None]
            new_alpha = x[None] + t[:, None, None] * v[None] - _cumint_from_zero(xi, integ_a)
            change = max(np.max(np.abs(new_alpha - alpha)) / max(1.0, np.max(np.abs(alpha))),
                         np.max(np.abs(new_beta - beta)))
            alpha, beta = new_alpha, new_beta
            if change < tol:
                ok = True
                break
        trace.append({"T0": T0, "iterations": it + 1, "change": float(change)})
        if ok:
            # guard against spurious fixed points of the discrete map when the
            # true orbit collides above T0 (e.g. head-on data): the first
            # integral must be constant along a genuine solution
            H = np.array([mbody_energy(BodyState(alpha[i], beta[i], kappa))
                          for i in range(0, len(xi), max(1, len(xi) // 64))])
            scale = max(abs(H[0]), float(np.sum(v**2)), 1e-12)
            drift = float(np.max(np.abs(H - H[0])) / scale)
            trace[-1]["energy_drift"] = drift
            if drift < 1e-6:
                orbit = AsymptoticOrbit(T0, xi, alpha, beta, kappa, x, v,
                                        meta={"trace": trace})
                orbit.meta["fixed_point_residual"] = _scatter_residual(orbit)
                return orbit
        T0 *= 2.0
    raise ConvergenceError("hyperbolic scattering failed to contract", trace)


def _scatter_residual(orbit: AsymptoticOrbit) -> float:
    """Sup-norm change of one more Picard sweep (fixed-point certificate)."""
    xi, t = orbit.xi, orbit.t
    dt_dxi = 2.0 * orbit.T0 / xi**3
    F = np.stack([pair_forces(orbit.alpha[i], orbit.kappa) for i in range(len(xi))])
    nb = 0.5 * orbit.v[None] - _cumint_from_zero(xi, F * dt_dxi[:, None, None])
    ia = (2.0 * nb - orbit.v[None]) * dt_dxi[:, None, None]
    na = orbit.x[None] + t[:, None, None] * orbit.v[None] - _cumint_from_zero(xi, ia)
    return float(max(np.max(np.abs(na - orbit.alpha)), np.max(np.abs(nb - orbit.beta))))


# ---------------------------------------------------------------------------
# parabolic: central configurations and homothetic orbits
# ---------------------------------------------------------------------------

def potential_U(x: np.ndarray, kappa: float) -> float:
    """U = (κ/2) Σ_{j<k} |x_j − x_k|⁻²."""
    m = x.shape[0]
    d = x[:, None, :] - x[None, :, :]
    dist2 = np.sum(d * d, axis=-1)
    iu = np.triu_indices(m, 1)
    return float(0.5 * kappa * np.sum(1.0 / dist2[iu]))


def lagrange_residual(b: np.ndarray, kappa: float) -> float:
    """‖2U(b)·b_j − κ Σ_{k≠j}(b_j−b_k)/|b_jk|⁴‖_∞ over bodies."""
    c = 2.0 * potential_U(b, kappa)
    force = -pair_forces(b, kappa)     # +κ Σ α_jk/|α_jk|⁴
    return float(np.max(np.abs(c * b - force)))


def central_config(m: int, seed: int = 0, kappa: float = 1.0,
                   restarts: int = 12) -> tuple[np.ndarray, float]:
    """Minimize U on {Σ|x_j|² = 1, Σ x_j = 0}; Newton-polished KKT solution.

    Returns (b, U(b)).  Global minimality is best-found over seeded restarts;
    the Lagrange residual is certified to ~1e−10 regardless.
    """
    if m < 2:
        raise InvalidArgumentError("central configuration needs m >= 2")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        x0 = rng.standard_normal((m, 4))
        x0 -= x0.mean(axis=0)
        x0 /= np.sqrt(np.sum(x0**2))

        def fun(z):
            return potential_U(z.reshape(m, 4), kappa)

        cons = [{"type": "eq", "fun": lambda z: np.sum(z.reshape(m, 4) ** 2) - 1.0},
                {"type": "eq", "fun": lambda z: z.reshape(m, 4).sum(axis=0)}]
        res = minimize(fun, x0.ravel(), method="SLSQP", constraints=cons,
                       options={"maxiter": 400, "ftol": 1e-14})
        if not res.success:
            continue
        b = res.x.reshape(m, 4)

        # Newton on the KKT system pins the Lagrange residual to round-off
        def kkt(z):
            xb = z[:-1].reshape(m, 4)
            c = z[-1]
            grad = kappa and (-pair_forces(xb, kappa))
            eqs = (c * xb - grad).ravel()
            return np.concatenate([eqs, [np.sum(xb**2) - 1.0]])

        z0 = np.concatenate([b.ravel(), [2.0 * potential_U(b, kappa)]])
        sol = root(kkt, z0, method="hybr", tol=1e-13)
        if not sol.success:
            continue
        b = sol.x[:-1].reshape(m, 4)
        b -= b.mean(axis=0)                   # exact center of mass
        b /= np.sqrt(np.sum(b**2))
        Ub = potential_U(b, kappa)
        resid = lagrange_residual(b, kappa)
        if resid < 1e-8 and (best is None or Ub < best[1] - 1e-13):
            best = (b, Ub)
    if best is None:
        raise ConvergenceError("central configuration search failed on all restarts")
    return best


@dataclass
class ParabolicOrbit:
    """Closed-form homothetic orbit α(t) = (4√U(b)·t + η)^{1/2} b, β = α̇/2."""

    b: np.ndarray
    eta: float
    kappa: float
    U_b: float

    def scale(self, t):
        return np.sqrt(4.0 * np.sqrt(self.U_b) * np.asarray(t, dtype=float) + self.eta)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        f = self.scale(t)
        df = 2.0 * np.sqrt(self.U_b) / f
        alpha = f[..., None, None] * self.b
        beta = 0.5 * df[..., None, None] * self.b
        return alpha, beta

    def to_path(self, t_span, nodes: int = 300) -> BodyPath:
        ts = np.geomspace(max(t_span[0], 1e-6), t_span[1], nodes)
        a, b = self.eval(ts)
        return BodyPath(ts, a, b, self.kappa)


def parabolic_orbit(b: np.ndarray, eta: float = 0.0, kappa: float = 1.0) -> ParabolicOrbit:
    if eta < 0:
        raise InvalidArgumentError("eta must be >= 0")
    b = np.asarray(b, dtype=float)
    if lagrange_residual(b, kappa) > 1e-6:
        raise InvalidArgumentError("b does not satisfy the central-configuration "
                                   "Lagrange condition")
    return ParabolicOrbit(b, float(eta), kappa, potential_U(b, kappa))


def orbit_ode_residual(orbit: ParabolicOrbit, ts) -> float:
    """Pointwise |α̈ − 2β̇| + |β̇ − force| residual of the closed form."""
    worst = 0.0
    for t in np.atleast_1d(ts):
        a, bet = orbit.eval(t)
        h = 1e-5 * max(t, 1.0)
        am, bm = orbit.eval(t - h)
        ap, bp = orbit.eval(t + h)
        da = (ap - am) / (2 * h)
        db = (bp - bm) / (2 * h)
        st = BodyState(a, bet, orbit.kappa)
        ra, rb = mbody_rhs(st)
        worst = max(worst, np.max(np.abs(da - ra)), np.max(np.abs(db - rb)))
    return float(worst)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def classify_orbit(path: BodyPath, band: float = 0.15) -> dict:
    """Per-pair growth exponents of |α_jk(t)| on the trailing decade.

    hyperbolic ≈ 1, parabolic ≈ 0.5 (±band); anything else is labeled
    'undetermined' rather than guessed.  The limit velocity is α(t_max)/t_max.
    """
    t = path.t
    if t[-1] / max(t[0], 1e-30) < 10.0:
        raise InvalidArgumentError("path must span at least a decade in t")
    sel = t >= t[-1] / 10.0
    m = path.alpha.shape[1]
    labels = {}
    exps = {}
    for j in range(m):
        for k in range(j + 1, m):
            d = np.linalg.norm(path.alpha[sel, j] - path.alpha[sel, k], axis=-1)
            if np.any(d <= 0):
                raise FitFailureError("vanishing pair distance in fit window")
            p = float(np.polyfit(np.log(t[sel]), np.log(d), 1)[0])
            exps[f"{j}-{k}"] = p
            if abs(p - 1.0) <= band:
                labels[f"{j}-{k}"] = "hyperbolic"
            elif abs(p - 0.5) <= band:
                labels[f"{j}-{k}"] = "parabolic"
            else:
                labels[f"{j}-{k}"] = "undetermined"
    vals = set(labels.values())
    overall = vals.pop() if len(vals) == 1 else ("mixed" if "undetermined" not in vals
                                                 else "undetermined")
    return {"pair_exponents": exps, "pair_labels": labels, "label": overall,
            "limit_velocity": (path.alpha[-1] / t[-1]).tolist()}


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def save_path_csv(path: BodyPath, fname) -> None:
    m = path.alpha.shape[1]
    cols = ["t"]
    for j in range(m):
        cols += [f"alpha{j}_{c}" for c in range(4)]
    for j in range(m):
        cols += [f"beta{j}_{c}" for c in range(4)]
    cols += ["H", "a"]
    with open(fname, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i, t in enumerate(path.t):
            row = [t, *path.alpha[i].ravel(), *path.beta[i].ravel(),
                   path.H[i], path.a[i]]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def save_classification_json(report: dict, fname) -> None:
    from .jsonio import dump_json
    dump_json(report, fname)
