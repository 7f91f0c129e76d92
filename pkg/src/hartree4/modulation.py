"""Modulation-parameter dynamics for the multisoliton ansatz: explicit
coefficient tables M, B, D at the implemented orders, the parameter ODE
system, Picard solvers toward prescribed m-body asymptotics, the phase
integral, and the Mod(t) diagnostic.

Parameter system (per soliton j):

    α̇_j = 2β_j + 4μ_j α_j,          β̇_j = B_j − 4μ_j β_j − λ_j⁴ δ_j α_j,
    λ̇_j = M_j − 4λ_j μ_j,           μ̇_j = λ_j⁴ δ_j − 4μ_j²,
    δ̇_j = D_j,
    γ̇_j = λ_j² − |β_j|² − (β̇_j + 4μ_j β_j)·α_j − (μ̇_j + 4μ_j²)|α_j|².

Coefficient tables (κ = ‖Q‖²; implemented orders only, beyond them the module
raises rather than extrapolate):

    hyperbolic (N ≤ 3):  M = m⁽²⁾, B = b⁽²⁾, D ≡ 0,
    parabolic  (N ≤ 5):  M = m⁽³⁾ (enters at N ≥ 3), B = b⁽²⁾, D ≡ 0,

    m⁽²⁾ = m⁽³⁾ = −(2κ/λ_j) Σ_{k≠j} α_jk·β_jk/|α_jk|⁴,
    b⁽²⁾ = −2κ Σ_{k≠j} α_jk/|α_jk|⁴.

The factor 2 in b⁽²⁾ is the literal-kernel pair force: a soliton of mass κ in
the neighbor's far-field potential −κ/|x−α_k|² obeys β̇ = −∇φ(α_j) =
−2κ α_jk/|α_jk|⁴ (equivalently: solvability of the order-2 profile correction
against ∇Q).  The matching m-body coupling is therefore 2κ, exposed as
``pair_coupling``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .errors import (ConvergenceError, InvalidArgumentError,
                     UnsupportedOrderError)
from .mbody import AsymptoticOrbit, ParabolicOrbit, _cumint_from_zero, _xi_grid

# β̇ response of a unit-mass soliton to the far-field −1/r² potential of a
# unit-mass neighbor; see module docstring.
PAIR_FORCE_FACTOR = 2.0

MAX_ORDER = {"hyperbolic": 3, "parabolic": 5}
# orders at which D ≡ 0 is proved; anything implemented satisfies these
D_ZERO_THROUGH = {"hyperbolic": 3, "parabolic": 7}


def pair_coupling(kappa: float) -> float:
    """m-body coupling matched to the PDE interaction force: 2κ."""
    return PAIR_FORCE_FACTOR * kappa


@dataclass
class ModParams:
    """Per-soliton modulation parameters g_j = (α_j, β_j, λ_j, μ_j, δ_j, γ_j)."""

    alpha: np.ndarray           # (m, 4)
    beta: np.ndarray            # (m, 4)
    lam: np.ndarray             # (m,)
    mu: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    regime: str = "hyperbolic"
    kappa: float = 1.0

    def __post_init__(self):
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        m = self.alpha.shape[0]
        for name in ("lam", "mu", "delta", "gamma"):
            setattr(self, name, np.broadcast_to(
                np.asarray(getattr(self, name), dtype=float), (m,)).copy())
        if self.regime not in MAX_ORDER:
            raise InvalidArgumentError(f"unknown regime {self.regime!r}")
        if np.any(self.lam <= 0):
            raise InvalidArgumentError("scales λ must be positive")
        if self.regime == "parabolic" and m > 1 and np.ptp(self.lam) > 1e-10 * self.lam[0]:
            raise InvalidArgumentError("parabolic regime requires identical λ_j")
        if m > 1:
            d = self.alpha[:, None, :] - self.alpha[None, :, :]
            if np.min(np.sum(d * d, -1)[np.triu_indices(m, 1)]) == 0:
                raise InvalidArgumentError("soliton positions must be distinct")

    @property
    def m(self) -> int:
        return self.alpha.shape[0]

    @classmethod
    def single(cls, kappa: float = 1.0, **kw):
        defaults = dict(alpha=np.zeros((1, 4)), beta=np.zeros((1, 4)),
                        lam=[1.0], mu=[0.0], delta=[0.0], gamma=[0.0],
                        regime="hyperbolic", kappa=kappa)
        defaults.update(kw)
        return cls(**defaults)


def _pair_geometry(alpha: np.ndarray):
    """alpha: (..., m, 4) → (d, inv2) with d = α_j − α_k and 1/|α_jk|²."""
    d = alpha[..., :, None, :] - alpha[..., None, :, :]
    dist2 = np.sum(d * d, axis=-1)
    m = alpha.shape[-2]
    ii = np.arange(m)
    dist2[..., ii, ii] = np.inf
    return d, 1.0 / dist2


def coeff_b2(alpha: np.ndarray, kappa: float) -> np.ndarray:
    """b⁽²⁾ = −2κ Σ_{k≠j} α_jk/|α_jk|⁴  (vectorized over leading axes)."""
    d, inv2 = _pair_geometry(alpha)
    return -PAIR_FORCE_FACTOR * kappa * np.sum(d * inv2[..., None] ** 2, axis=-2)


def coeff_m2(alpha: np.ndarray, beta: np.ndarray, lam: np.ndarray,
             kappa: float) -> np.ndarray:
    """m⁽²⁾ (= m⁽³⁾ parabolic) = −(2κ/λ_j) Σ_{k≠j} α_jk·β_jk/|α_jk|⁴."""
    d, inv2 = _pair_geometry(alpha)
    db = beta[..., :, None, :] - beta[..., None, :, :]
    dots = np.sum(d * db, axis=-1) * inv2**2
    return -2.0 * kappa / lam * np.sum(dots, axis=-1)


def coeff_f(alpha: np.ndarray, lam: np.ndarray, kappa: float) -> np.ndarray:
    """f_j = −κ/(2λ_j²) Σ_{k≠j} |α_jk|⁻² — the order-1 amplitude of T⁽¹⁾."""
    _, inv2 = _pair_geometry(alpha)
    return -0.5 * kappa / lam**2 * np.sum(inv2, axis=-1)


def leading_coeffs(P: ModParams, N: int) -> dict:
    """M_j, B_j, D_j at truncation order N for the given regime.

    Orders the source derivation proves to vanish return exact zeros; orders
    past the implemented tables raise UnsupportedOrderError.
    """
    if N < 1:
        raise UnsupportedOrderError(f"order N must be >= 1, got {N}")
    if N > MAX_ORDER[P.regime]:
        raise UnsupportedOrderError(
            f"{P.regime} coefficients implemented through N = "
            f"{MAX_ORDER[P.regime]}, got {N}")
    m = P.m
    M = np.zeros(m)
    B = np.zeros((m, 4))
    D = np.zeros(m)
    if m > 1:
        if P.regime == "hyperbolic":
            if N >= 2:
                M = coeff_m2(P.alpha, P.beta, P.lam, P.kappa)
                B = coeff_b2(P.alpha, P.kappa)
        else:
            if N >= 2:
                B = coeff_b2(P.alpha, P.kappa)
            if N >= 3:
                M = coeff_m2(P.alpha, P.beta, P.lam, P.kappa)
    return {"M": M, "B": B, "D": D}


def mod_ode_rhs(P: ModParams, N: int) -> dict:
    """Full right-hand side of the parameter system at order N."""
    c = leading_coeffs(P, N)
    lam4delta = P.lam**4 * P.delta
    alpha_dot = 2.0 * P.beta + 4.0 * P.mu[:, None] * P.alpha
    beta_dot = c["B"] - 4.0 * P.mu[:, None] * P.beta - lam4delta[:, None] * P.alpha
    lam_dot = c["M"] - 4.0 * P.lam * P.mu
    mu_dot = lam4delta - 4.0 * P.mu**2
    delta_dot = c["D"]
    gamma_dot = (P.lam**2 - np.sum(P.beta**2, axis=1)
                 - np.sum((beta_dot + 4.0 * P.mu[:, None] * P.beta) * P.alpha, axis=1)
                 - (mu_dot + 4.0 * P.mu**2) * np.sum(P.alpha**2, axis=1))
    return {"alpha": alpha_dot, "beta": beta_dot, "lam": lam_dot,
            "mu": mu_dot, "delta": delta_dot, "gamma": gamma_dot}


# ---------------------------------------------------------------------------
# trajectory solvers (Picard on the compactified ξ = √(T₀/t) grid)
# ---------------------------------------------------------------------------

@dataclass
class ModPath:
    """Solved modulation trajectory on [T₀, ∞), compactified sampling."""

    T0: float
    xi: np.ndarray
    alpha: np.ndarray          # (nxi, m, 4); xi[0] ~ t = ∞
    beta: np.ndarray
    lam: np.ndarray            # (nxi, m)
    mu: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    regime: str
    kappa: float
    N: int
    asym: object = None
    meta: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.T0 / self.xi**2

    @property
    def m(self) -> int:
        return self.alpha.shape[1]

    def params_at(self, i: int) -> ModParams:
        return ModParams(self.alpha[i], self.beta[i], self.lam[i], self.mu[i],
                         self.delta[i], self.gamma[i], self.regime, self.kappa)

    def eval(self, t):
        """ModParams at scalar t; dict of arrays for vector t.

        Interpolation runs in the uniform compactified variable ξ = √(T₀/t);
        the linearly growing components (α, and γ ~ λ∞²t) are splined in the
        compensated bounded form ξ²·(·) so the sparse asymptotic decades stay
        exact; the remaining components are bounded and splined directly."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.T0 * (1 - 1e-9)):
            raise InvalidArgumentError(
                f"path defined on [T0, ∞) with T0 = {self.T0}; got t = {t}")
        key = "_spl"
        if key not in self.meta:
            spl = {}
            for name in ("beta", "lam", "mu", "delta"):
                spl[name] = CubicSpline(self.xi, getattr(self, name), axis=0)
            comp_a = self.xi[:, None, None] ** 2 * self.alpha
            spl["alpha"] = CubicSpline(self.xi, comp_a, axis=0)
            comp_g = self.xi[:, None] ** 2 * self.gamma
            spl["gamma"] = CubicSpline(self.xi, comp_g, axis=0)
            self.meta[key] = spl
        s = self.meta[key]
        xi_t = np.sqrt(self.T0 / t)
        sc = np.asarray(xi_t) ** 2
        alpha = s["alpha"](xi_t) / sc[..., None, None]
        gamma = s["gamma"](xi_t) / sc[..., None]
        if np.ndim(t) == 0:
            return ModParams(alpha, s["beta"](xi_t), s["lam"](xi_t),
                             s["mu"](xi_t), s["delta"](xi_t), gamma,
                             self.regime, self.kappa)
        out = {name: s[name](xi_t) for name in ("beta", "lam", "mu", "delta")}
        out["alpha"] = alpha
        out["gamma"] = gamma
        return out

    def min_separation(self) -> np.ndarray:
        d = self.alpha[:, :, None, :] - self.alpha[:, None, :, :]
        dist = np.sqrt(np.sum(d * d, axis=-1))
        iu = np.triu_indices(self.m, 1)
        return np.min(dist[:, iu[0], iu[1]], axis=1) if self.m > 1 else np.full(len(self.xi), np.inf)


def _asym_samples(asym, t):
    a, b = asym.eval(t)
    return a, b


def _beta_limit(asym) -> np.ndarray:
    if isinstance(asym, AsymptoticOrbit):
        return 0.5 * asym.v
    return np.zeros_like(asym.b)


def _solve_mod_traj(asym, lam_inf, N: int, T0: float, regime: str, kappa: float,
                    npts: int, tol: float, max_iter: int, damping: float,
                    max_escalations: int) -> ModPath:
    lam_inf = np.broadcast_to(np.asarray(lam_inf, dtype=float),
                              (asym.eval(max(T0, 1.0))[0].shape[0],)).copy()
    m = lam_inf.shape[0]
    if abs(asym.kappa - pair_coupling(kappa)) > 1e-8 * max(asym.kappa, 1.0):
        raise InvalidArgumentError(
            "asymptotic orbit coupling must equal pair_coupling(kappa) = 2κ "
            f"(orbit has {asym.kappa}, expected {pair_coupling(kappa)})")
    beta_inf_limit = _beta_limit(asym)

    aligned = isinstance(asym, AsymptoticOrbit)
    if aligned and abs(T0 - asym.T0) > 1e-12 * asym.T0:
        raise InvalidArgumentError(
            f"hyperbolic trajectories reuse the orbit grid: T0 must equal "
            f"the orbit's T0 = {asym.T0} (got {T0})")
    trace = []
    for esc in range(max_escalations):
        if aligned:
            # reuse the scattering orbit's compactified grid so the asymptote
            # enters without interpolation (the fixed point is then exact up
            # to the shared quadrature)
            xi = asym.xi
            t = asym.t
            npts = len(xi)
            a_inf, b_inf = asym.alpha.copy(), asym.beta.copy()
        else:
            xi = _xi_grid(npts)
            t = T0 / xi**2
            a_inf, b_inf = _asym_samples(asym, t)
        dt_dxi = (2.0 * T0 / xi**3)[:, None, None]
        alpha = a_inf.copy()
        beta = b_inf.copy()
        lam = np.broadcast_to(lam_inf, (npts, m)).copy()
        mu = np.zeros((npts, m))
        delta = np.zeros((npts, m))

        def gamma_map(a_, b_, l_, u_, d_):
            """One sweep of the full Γ map (eq Gamma structure)."""
            B = coeff_b2(a_, kappa)
            if regime == "hyperbolic":
                M = coeff_m2(a_, b_, l_, kappa) if N >= 2 else np.zeros((npts, m))
            else:
                M = coeff_m2(a_, b_, l_, kappa) if N >= 3 else np.zeros((npts, m))
            if (regime == "hyperbolic" and N < 2) or m == 1:
                B = np.zeros((npts, m, 4))
            lam4d = (l_**4 * d_)[:, :, None]
            g_a = (2.0 * b_inf - 2.0 * b_ - 4.0 * u_[:, :, None] * a_) * dt_dxi
            g_b = (4.0 * u_[:, :, None] * b_ + lam4d * a_ - B) * dt_dxi
            g_l = (4.0 * l_ * u_ - M) * dt_dxi[:, :, 0]
            g_m = (4.0 * u_**2 - l_**4 * d_) * dt_dxi[:, :, 0]
            na = a_inf + _cumint_from_zero(xi, g_a)
            nb = beta_inf_limit[None] + _cumint_from_zero(xi, g_b)
            nl = lam_inf[None] + _cumint_from_zero(xi, g_l)
            nm = _cumint_from_zero(xi, g_m)
            nd = np.zeros_like(d_)               # D ≡ 0 at implemented orders
            return na, nb, nl, nm, nd

        # The implemented coefficient tables make the system triangular:
        # D ≡ 0 forces δ ≡ 0, then μ = ∫4μ² contracts to 0; with μ = δ = 0
        # the (α,β)-block at N ≥ 2 is exactly the matched m-body law, whose
        # prescribed asymptote is its own fixed point (a plain Picard loop on
        # that block is *not* a contraction in the parabolic A/t² resonance,
        # so we rely on the structure instead and certify with a full Γ
        # sweep).  At N = 1 the force is absent and the block integrates in
        # closed form: β ≡ lim β^∞, α = α^∞ + ∫2(β^∞ − β).  Only λ needs
        # iteration: a strongly contracting scalar Picard.
        if (regime == "hyperbolic" and N < 2) or m == 1:
            beta = np.broadcast_to(beta_inf_limit[None], alpha.shape).copy()
            g_a0 = 2.0 * (b_inf - beta) * dt_dxi
            alpha = a_inf + _cumint_from_zero(xi, g_a0)
        for it in range(max_iter):
            M = (coeff_m2(alpha, beta, lam, kappa)
                 if ((regime == "hyperbolic" and N >= 2)
                     or (regime == "parabolic" and N >= 3)) and m > 1
                 else np.zeros((npts, m)))
            g_l = (4.0 * lam * mu - M) * dt_dxi[:, :, 0]
            nl = lam_inf[None] + _cumint_from_zero(xi, g_l)
            change = float(np.max(np.abs(nl - lam)))
            lam = (1 - damping) * lam + damping * nl
            if change < tol:
                break

        na, nb, nl, nm, nd = gamma_map(alpha, beta, lam, mu, delta)
        cert = max(np.max(np.abs(na - alpha)) / max(1.0, float(np.max(np.abs(alpha)))),
                   np.max(np.abs(nb - beta)), np.max(np.abs(nl - lam)),
                   np.max(np.abs(nm - mu)), np.max(np.abs(nd - delta)))
        trace.append({"T0": T0, "iterations": it + 1, "lambda_change": float(change),
                      "fixed_point_residual": float(cert)})
        if change < tol and cert < 1e-8:
            gamma = _integrate_phase(xi, t, alpha, beta, lam, mu, delta, kappa,
                                     regime, N)
            path = ModPath(T0, xi, alpha, beta, lam, mu, delta, gamma,
                           regime, kappa, N, asym,
                           meta={"trace": trace,
                                 "fixed_point_residual": float(cert)})
            path.meta["deviations"] = deviation_report(path)
            return path
        if aligned:
            break            # T0 is pinned to the orbit grid; nothing to escalate
        T0 *= 2.0
    raise ConvergenceError(f"{regime} modulation Picard failed to contract", trace)


def _integrate_phase(xi, t, alpha, beta, lam, mu, delta, kappa, regime, N):
    """γ_j(t) = ∫_{T₀}^t γ̇ dτ with γ(T₀) = 0 (phase convention)."""
    npts, m = lam.shape
    gdot = np.empty((npts, m))
    for i in range(npts):
        P = ModParams(alpha[i], beta[i], lam[i], mu[i], delta[i],
                      np.zeros(m), regime, kappa)
        gdot[i] = mod_ode_rhs(P, N)["gamma"]
    order = np.argsort(t)               # ascending t, T₀ first
    ts = t[order]
    g_sorted = cumulative_simpson(gdot[order], x=ts, initial=0.0, axis=0)
    gamma = np.empty_like(gdot)
    gamma[order] = g_sorted
    return gamma


def solve_mod_traj_hyperbolic(asym: AsymptoticOrbit, lam_inf, N: int,
                              T0: float | None = None, kappa: float = 1.0,
                              npts: int = 1601, tol: float = 1e-12,
                              max_iter: int = 80, max_escalations: int = 6) -> ModPath:
    """Modulation trajectory with hyperbolic m-body asymptotics."""
    if not isinstance(asym, AsymptoticOrbit):
        raise InvalidArgumentError("hyperbolic solver expects an AsymptoticOrbit")
    if N > MAX_ORDER["hyperbolic"]:
        raise UnsupportedOrderError(f"hyperbolic orders N <= {MAX_ORDER['hyperbolic']}")
    if T0 is None:
        T0 = asym.T0
    return _solve_mod_traj(asym, lam_inf, N, T0, "hyperbolic", kappa,
                           npts, tol, max_iter, 1.0, max_escalations)


def solve_mod_traj_parabolic(asym: ParabolicOrbit, lam_inf, N: int,
                             T0: float = 20.0, kappa: float = 1.0,
                             npts: int = 1601, tol: float = 1e-12,
                             max_iter: int = 120, max_escalations: int = 6) -> ModPath:
    """Modulation trajectory with parabolic (homothetic) asymptotics.

    Requires identical λ_j^∞ and N ≥ 2 (the order-2 force must be present for
    the deviation integrals to converge on t^{1/2}-orbits)."""
    if not isinstance(asym, ParabolicOrbit):
        raise InvalidArgumentError("parabolic solver expects a ParabolicOrbit")
    if N > MAX_ORDER["parabolic"]:
        raise UnsupportedOrderError(f"parabolic orders N <= {MAX_ORDER['parabolic']}")
    if N < 2:
        raise UnsupportedOrderError("parabolic trajectories need N >= 2")
    lam_inf = np.asarray(lam_inf, dtype=float)
    if lam_inf.ndim and np.ptp(lam_inf) > 1e-12 * np.max(lam_inf):
        raise InvalidArgumentError("parabolic asymptotics require identical λ_j^∞")
    return _solve_mod_traj(asym, lam_inf, N, T0, "parabolic", kappa,
                           npts, tol, max_iter, 0.7, max_escalations)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def _xi_derivative(xi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """4th-order d/dξ on the uniform ξ grid (one-sided at both ends)."""
    from .radial_core import _D1_C, _D1_FWD, _D1_ONESIDED

    h = xi[1] - xi[0]
    n = len(xi)
    out = np.zeros_like(y)
    flat = y.reshape(n, -1)
    res = np.zeros_like(flat)
    for k, c in enumerate(_D1_C):
        sl = slice(k, n - 4 + k)
        res[2:n - 2] += c * flat[sl]
    res[0] = _D1_FWD[0] @ flat[:6]
    res[1] = _D1_FWD[1] @ flat[:6]
    res[-1] = _D1_ONESIDED[0] @ flat[-6:]
    res[-2] = _D1_ONESIDED[1] @ flat[-6:]
    return (res / h).reshape(y.shape)


def mod_residual(path: ModPath, N: int | None = None,
                 xi_trust: float = 0.05) -> dict:
    """Mod(t) — the aggregate residual of the parameter system,

        |α̇−2β−4μα| + |β̇+4μβ+(μ̇+4μ²)α−B| + |λ̇+4λμ−M| + |μ̇+4μ²−λ⁴δ|
        + |δ̇−D| + |γ̇+(β̇+4μβ)·α+(μ̇+4μ²)|α|²+|β|²−λ²|,

    with all derivatives taken from the path itself by 4th-order
    differentiation in the compactified variable.  Nodes with ξ < xi_trust
    (t > T₀/ξ_trust²) are excluded: there the grid represents the asymptotic
    limit, with α, γ varying by orders of magnitude between nodes, and no
    finite-difference derivative is meaningful.  γ is differentiated in the
    compensated form γ − λ∞²·t (exact algebra, removes the dominant linear
    growth).  Returns {"t": ..., "mod": ...} over the trusted window.
    """
    if N is None:
        N = path.N
    keep = path.xi >= xi_trust
    xi, t = path.xi[keep], path.t[keep]
    dt_dxi = -2.0 * path.T0 / xi**3
    lam_inf2 = float(np.mean(path.lam[0] ** 2))
    fields = {name: getattr(path, name)[keep]
              for name in ("alpha", "beta", "lam", "mu", "delta")}
    fields["gamma"] = path.gamma[keep] - lam_inf2 * t[:, None]
    dd = {name: _xi_derivative(xi, arr) / dt_dxi.reshape(
        (-1,) + (1,) * (arr.ndim - 1))
        for name, arr in fields.items()}
    dd["gamma"] = dd["gamma"] + lam_inf2

    path_alpha, path_beta = fields["alpha"], fields["beta"]
    path_lam, path_mu, path_delta = fields["lam"], fields["mu"], fields["delta"]
    npts, m = path_lam.shape
    B = coeff_b2(path_alpha, path.kappa) if m > 1 else np.zeros((npts, m, 4))
    if path.regime == "hyperbolic":
        M = coeff_m2(path_alpha, path_beta, path_lam, path.kappa) if (N >= 2 and m > 1) else np.zeros((npts, m))
    else:
        M = coeff_m2(path_alpha, path_beta, path_lam, path.kappa) if (N >= 3 and m > 1) else np.zeros((npts, m))
    if N < 2:
        B = np.zeros((npts, m, 4))
    D = np.zeros((npts, m))

    mu = path_mu[:, :, None]
    r1 = np.linalg.norm(dd["alpha"] - 2 * path_beta - 4 * mu * path_alpha, axis=-1)
    mu_dot_term = (dd["mu"] + 4 * path_mu**2)[:, :, None]
    r2 = np.linalg.norm(dd["beta"] + 4 * mu * path_beta + mu_dot_term * path_alpha - B, axis=-1)
    r3 = np.abs(dd["lam"] + 4 * path_lam * path_mu - M)
    r4 = np.abs(dd["mu"] + 4 * path_mu**2 - path_lam**4 * path_delta)
    r5 = np.abs(dd["delta"] - D)
    r6 = np.abs(dd["gamma"]
                + np.sum((dd["beta"] + 4 * mu * path_beta) * path_alpha, axis=-1)
                + (dd["mu"] + 4 * path_mu**2) * np.sum(path_alpha**2, axis=-1)
                + np.sum(path_beta**2, axis=-1) - path_lam**2)
    return {"t": t, "mod": np.max(r1 + r2 + r3 + r4 + r5 + r6, axis=1)}


ZERO_FLOOR = 1e-12


def fit_decay_exponent(t: np.ndarray, dev: np.ndarray,
                       floor: float = ZERO_FLOOR) -> dict:
    """Log-log decay fit with an honest floor: identically-(near-)zero signals
    report exponent −inf and are flagged, never fitted."""
    scale = np.max(dev)
    if scale <= floor:
        return {"exponent": -np.inf, "identically_zero": True, "max": float(scale)}
    sel = (dev > max(floor, 1e-10 * scale)) & (t > 0)
    if np.sum(sel) < 8:
        return {"exponent": -np.inf, "identically_zero": True, "max": float(scale)}
    slope = float(np.polyfit(np.log(t[sel]), np.log(dev[sel]), 1)[0])
    return {"exponent": slope, "identically_zero": False, "max": float(scale)}


def deviation_report(path: ModPath, xi_trust: float = 0.02) -> dict:
    """Decay fits for |P(t) − P^∞(t)| per parameter group.

    Fits run on the trusted window (see mod_residual); each deviation carries
    a floor relative to the scale of its asymptotic reference, so spline and
    round-off noise on the huge-t samples of α ~ vt is not mistaken for a
    decaying signal (components that vanish identically at the implemented
    orders report exponent −inf with the identically_zero flag).
    """
    keep = path.xi >= xi_trust
    t = path.t[keep]
    a_inf, b_inf = path.asym.eval(t)
    lam_inf = path.lam[0]          # ξ[0] is the t → ∞ end: λ there is λ^∞
    # α, β are compared across two independent discretizations (the orbit's
    # grid vs the path's); their cross-quadrature consistency floor sits near
    # 3e−8 relative — below it the "deviation" is numerical zero, not signal
    cross = 3e-8
    devs = {
        "alpha": (np.max(np.linalg.norm(path.alpha[keep] - a_inf, axis=-1), axis=-1),
                  cross * np.max(np.abs(a_inf))),
        "beta": (np.max(np.linalg.norm(path.beta[keep] - b_inf, axis=-1), axis=-1),
                 cross * max(np.max(np.abs(b_inf)), 1.0)),
        "lam": (np.max(np.abs(path.lam[keep] - lam_inf[None]), axis=-1),
                ZERO_FLOOR * np.max(lam_inf)),
        "mu": (np.max(np.abs(path.mu[keep]), axis=-1), ZERO_FLOOR),
        "delta": (np.max(np.abs(path.delta[keep]), axis=-1), ZERO_FLOOR),
    }
    return {name: fit_decay_exponent(t, dev, floor=floor)
            for name, (dev, floor) in devs.items()}


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def save_mod_path(path: ModPath, csv_file, manifest_file=None) -> None:
    """CSV: t, per-soliton (α, β, λ, μ, δ, γ), a(t), Mod(t); JSON manifest with
    the deviation-fit exponents."""
    m = path.m
    a_of_t = path.min_separation()
    res = mod_residual(path)
    mod_of_t = dict(zip(res["t"].tolist(), res["mod"].tolist()))
    cols = ["t"]
    for j in range(m):
        cols += [f"alpha{j}_{c}" for c in range(4)]
        cols += [f"beta{j}_{c}" for c in range(4)]
        cols += [f"lam{j}", f"mu{j}", f"delta{j}", f"gamma{j}"]
    cols += ["a", "Mod"]
    order = np.argsort(path.t)
    with open(csv_file, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in order:
            row = [path.t[i]]
            for j in range(m):
                row += [*path.alpha[i, j], *path.beta[i, j], path.lam[i, j],
                        path.mu[i, j], path.delta[i, j], path.gamma[i, j]]
            row += [a_of_t[i], mod_of_t.get(float(path.t[i]), np.nan)]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    if manifest_file:
        manifest = {"regime": path.regime, "N": path.N, "T0": path.T0,
                    "kappa": path.kappa, "m": m,
                    "max_mod": float(np.max(res["mod"])),
                    "deviation_fits": path.meta.get("deviations", {}),
                    "trace": path.meta.get("trace", [])}
        from .jsonio import dump_json
        dump_json(manifest, manifest_file)
