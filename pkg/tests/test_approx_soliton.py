import numpy as np
import pytest

from hartree4 import approx_soliton as ap
from hartree4 import mbody as mb
from hartree4 import modulation as md
from hartree4.errors import (DomainError, InvalidArgumentError,
                             UnsupportedOrderError)


@pytest.fixture(scope="module")
def pipeline(bundle_mid):
    """Shared hyperbolic 2-soliton pipeline with impact-parameter geometry."""
    kap = bundle_mid.mass_Q
    kc = md.pair_coupling(kap)
    orb = mb.hyperbolic_scatter(np.array([[0, 3.0, 0, 0], [0, -3.0, 0, 0]]),
                                np.array([[1.0, 0, 0, 0], [-1.0, 0, 0, 0]]),
                                T0=2.5, kappa=kc)
    paths = {N: md.solve_mod_traj_hyperbolic(orb, [1.0, 1.0], N=N,
                                             T0=orb.T0, kappa=kap)
             for N in (1, 2)}
    return bundle_mid, orb, paths


def t_for_sep(path, a):
    keep = path.xi >= 0.05
    ts, aot = path.t[keep], path.min_separation()[keep]
    o = np.argsort(ts)
    return float(np.interp(a, aot[o], ts[o]))


def test_t3_identity(bundle_mid):
    assert ap.verify_t3_identity(bundle_mid) < 1e-4


def test_x5_identity(bundle_mid):
    assert ap.verify_x5_identity(bundle_mid) < 1e-4


def test_t1_value(bundle_mid):
    """T⁽¹⁾ = f·ΛQ with f = −κ/200 at |α_jk| = 10, λ = 1."""
    kap = bundle_mid.mass_Q
    P = md.ModParams(alpha=[[5, 0, 0, 0], [-5, 0, 0, 0]], beta=np.zeros((2, 4)),
                     lam=[1, 1], mu=[0, 0], delta=[0, 0], gamma=[0, 0], kappa=kap)
    ps = ap.build_corrections(bundle_mid, P, 1)
    t1 = next(t for t in ps.terms if t.name == "T1")
    assert t1.sigma(P, 0) == pytest.approx(-kap / 200.0)
    assert np.array_equal(t1.tau.values, bundle_mid.LQ.values)


def test_unsupported_order(bundle_mid):
    P = md.ModParams.single(kappa=bundle_mid.mass_Q)
    with pytest.raises(UnsupportedOrderError):
        ap.build_corrections(bundle_mid, P, 4)      # hyperbolic caps at 3


def test_parameter_degree_homogeneity(bundle_mid):
    """Scaling all pairwise distances by s multiplies the order-n amplitude
    by s^{−(n+1)}: T¹ ~ s⁻², the T³ pieces ~ s⁻⁴."""
    kap = bundle_mid.mass_Q
    for s in (2.0, 3.0):
        P1 = md.ModParams(alpha=[[4, 0, 0, 0], [-4, 0, 0, 0]],
                          beta=np.zeros((2, 4)), lam=[1, 1], mu=[0, 0],
                          delta=[0, 0], gamma=[0, 0], kappa=kap)
        P2 = md.ModParams(alpha=[[4 * s, 0, 0, 0], [-4 * s, 0, 0, 0]],
                          beta=np.zeros((2, 4)), lam=[1, 1], mu=[0, 0],
                          delta=[0, 0], gamma=[0, 0], kappa=kap)
        ps = ap.build_corrections(bundle_mid, P1, 3)
        for term, power in (("T1", 2), ("T3_radial", 4), ("T3_quad_1", 4)):
            tt = next(t for t in ps.terms if t.name == term)
            assert tt.sigma(P2, 0) == pytest.approx(tt.sigma(P1, 0) / s**power,
                                                    rel=1e-12)


def test_modulate_action(bundle_mid):
    from hartree4.radial_core import interp_radial

    sampler = lambda *ys: interp_radial(
        bundle_mid.Q, np.sqrt(sum(y * y for y in ys))).astype(complex)
    x = np.linspace(-5, 5, 11)
    X = np.meshgrid(x, x, x, x, indexing="ij", sparse=True)

    ident = ap.modulate(sampler)
    assert np.allclose(ident(*X), sampler(*X))

    shifted = ap.modulate(sampler, alpha=(1.0, 0, 0, 0))
    direct = sampler(X[0] - 1.0, X[1], X[2], X[3])
    assert np.allclose(shifted(*X), direct)

    with pytest.raises(InvalidArgumentError):
        ap.modulate(sampler, lam=-1.0)


def test_modulate_mass_invariance(bundle_mid):
    """‖g v‖² = ‖v‖² for the L²-critical action (λ = 2 probe)."""
    from hartree4.radial_core import interp_radial

    n, L = 48, 10.0
    h = 2 * L / n
    x = -L + h * np.arange(n)
    X = np.meshgrid(x, x, x, x, indexing="ij", sparse=True)
    sampler = lambda *ys: interp_radial(
        bundle_mid.Q, np.sqrt(sum(y * y for y in ys))).astype(complex)
    g = ap.modulate(sampler, lam=2.0, beta=(0.3, 0, 0, 0), mu=0.05, gamma=1.0)
    mass = np.sum(np.abs(g(*X)) ** 2) * h**4
    assert abs(mass - bundle_mid.mass_Q) < 1e-3 * bundle_mid.mass_Q


def test_assemble_R_masses(pipeline):
    b, orb, paths = pipeline
    kap = b.mass_Q
    P1 = md.ModParams.single(kappa=kap)
    ps = ap.build_corrections(b, P1, 0)
    f1 = ap.assemble_R(b, ps, P1, 32, 9.0)
    m1 = float(np.sum(np.abs(f1.values) ** 2) * f1.dV)
    assert abs(m1 - kap) < 1e-4 * kap

    path = paths[1]
    t12 = t_for_sep(path, 12.0)
    P2 = path.eval(t12)
    ps0 = ap.build_corrections(b, P2, 0)
    f2 = ap.assemble_R(b, ps0, P2, 32, 12.0)
    m2 = float(np.sum(np.abs(f2.values) ** 2) * f2.dV)
    assert abs(m2 - 2 * kap) < 1e-3 * 2 * kap

    # N=1 differs from N=0 by the order-a⁻² correction norm
    ps1 = ap.build_corrections(b, P2, 1)
    f3 = ap.assemble_R(b, ps1, P2, 32, 12.0)
    diff = np.sqrt(np.sum(np.abs(f3.values - f2.values) ** 2) * f2.dV)
    f_ampl = abs(md.coeff_f(P2.alpha, P2.lam, kap)[0])
    from hartree4.radial_core import weighted_norm
    expect = f_ampl * weighted_norm(b.LQ) * np.sqrt(2)
    assert 0.5 * expect < diff < 2.0 * expect


def test_assemble_R_domain_check(pipeline):
    b, orb, paths = pipeline
    P = paths[1].eval(t_for_sep(paths[1], 16.0))
    ps = ap.build_corrections(b, P, 1)
    with pytest.raises(DomainError):
        ap.assemble_R(b, ps, P, 32, 10.0)     # centers at ±8, margin < 5


def test_residual_psi_floor_single(bundle_mid):
    """m=1 exact soliton: Ψ below the discretization floor."""
    kap = bundle_mid.mass_Q

    class OneSolitonPath:
        regime, kappa, N, m, T0 = "hyperbolic", kap, 1, 1, 1.0
        xi = np.linspace(0.05, 1.0, 50)
        t = 1.0 / xi**2

        def eval(self, t):
            return md.ModParams.single(kappa=kap, gamma=[t])

        def min_separation(self):
            return np.full(50, np.inf)

    path = OneSolitonPath()
    # Mod(t) of the exact single-soliton path is identically zero; bypass the
    # path-differentiation check with a stub (patch the name residual_psi uses)
    orig = ap.mod_residual
    try:
        ap.mod_residual = lambda p, N=None, xi_trust=0.05: {
            "t": np.array([0.5, 2.0]), "mod": np.zeros(2)}
        ap_psi, norms = ap.residual_psi(bundle_mid,
                                        ap.build_corrections(bundle_mid,
                                                             path.eval(1.0), 1),
                                        path, 1.0, 32, 9.0)
    finally:
        ap.mod_residual = orig
    assert norms["sup"] < 1e-7
    assert norms["mod_at_t"] == 0.0


def test_residual_psi_mod_precondition(pipeline):
    b, orb, paths = pipeline
    path = paths[2]
    pert = md.ModPath(path.T0, path.xi, path.alpha, path.beta + 5e-3,
                      path.lam, path.mu, path.delta, path.gamma,
                      path.regime, path.kappa, path.N, path.asym)
    ps = ap.build_corrections(b, path.eval(path.T0), 2)
    with pytest.raises(InvalidArgumentError):
        ap.residual_psi(b, ps, pert, t_for_sep(path, 12.0), 32, 12.0)


def test_residual_decay_and_localization(pipeline):
    b, orb, paths = pipeline
    sups = {}
    for N in (1, 2):
        path = paths[N]
        ps = ap.build_corrections(b, path.eval(path.T0), N)
        per_a = {}
        for a in (8.0, 12.0, 16.0, 24.0):
            psi, norms = ap.residual_psi(b, ps, path, t_for_sep(path, a),
                                         32, a / 2 + 6.0)
            per_a[a] = norms
        sups[N] = per_a
        xs = np.log(np.array(sorted(per_a)))
        ys = np.log(np.array([per_a[a]["sup"] for a in sorted(per_a)]))
        slope = np.polyfit(xs, ys, 1)[0]
        assert abs(slope + (N + 2)) <= 0.45      # 48⁴ acceptance run tightens this
    # Ψ is exponentially localized around the solitons
    rate = sups[1][12.0]["localization_rate"]
    assert rate > 0.3
