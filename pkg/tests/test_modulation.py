import numpy as np
import pytest
from scipy.integrate import solve_ivp

from hartree4 import mbody as mb
from hartree4 import modulation as md
from hartree4.errors import InvalidArgumentError, UnsupportedOrderError

KAP = 7.69489
KC = md.pair_coupling(KAP)


@pytest.fixture(scope="module")
def hyp_orbit():
    x = np.array([[0, 1.0, 0, 0], [0, -1.0, 0, 0]])
    v = np.array([[0.25, 0, 0, 0], [-0.25, 0, 0, 0]])
    return mb.hyperbolic_scatter(x, v, T0=20.0, kappa=KC)


@pytest.fixture(scope="module")
def hyp_path(hyp_orbit):
    return md.solve_mod_traj_hyperbolic(hyp_orbit, [1.0, 1.0], N=2, kappa=KAP)


@pytest.fixture(scope="module")
def par_path():
    b, _ = mb.central_config(2, seed=1, kappa=KC)
    orb = mb.parabolic_orbit(b, eta=0.0, kappa=KC)
    return md.solve_mod_traj_parabolic(orb, [1.0, 1.0], N=3, T0=20.0, kappa=KAP)


def sym_params(sep=10.0, b1=(1, 0, 0, 0), lam=1.0):
    return md.ModParams(alpha=[[sep / 2, 0, 0, 0], [-sep / 2, 0, 0, 0]],
                        beta=[b1, [-x for x in b1]], lam=[lam, lam],
                        mu=[0, 0], delta=[0, 0], gamma=[0, 0],
                        regime="hyperbolic", kappa=KAP)


def test_coefficient_values():
    """m⁽²⁾ as printed; b⁽²⁾ carries the literal-kernel factor 2 (Ehrenfest +
    order-2 solvability; required by the Ψ⁽²⁾ decay order)."""
    P = sym_params(10.0, b1=(0.5, 0, 0, 0))
    c = md.leading_coeffs(P, 2)
    assert c["M"][0] == pytest.approx(-2 * KAP * 10.0 / 1e4)
    assert np.allclose(c["B"][0], -2 * KAP * np.array([10, 0, 0, 0]) / 1e4)
    assert np.all(c["D"] == 0.0)


def test_coefficient_zero_orders():
    P = sym_params()
    c1 = md.leading_coeffs(P, 1)
    assert np.all(c1["M"] == 0) and np.all(c1["B"] == 0) and np.all(c1["D"] == 0)
    Pp = md.ModParams(alpha=P.alpha, beta=P.beta, lam=P.lam, mu=P.mu,
                      delta=P.delta, gamma=P.gamma, regime="parabolic", kappa=KAP)
    c2 = md.leading_coeffs(Pp, 2)
    assert np.all(c2["M"] == 0)          # parabolic M enters at order 3
    assert np.any(c2["B"] != 0)
    for regime, P_ in (("hyperbolic", P), ("parabolic", Pp)):
        with pytest.raises(UnsupportedOrderError):
            md.leading_coeffs(P_, md.MAX_ORDER[regime] + 1)


def test_f_coefficient_printed_form():
    P = sym_params(10.0)
    f = md.coeff_f(P.alpha, P.lam, KAP)
    assert f[0] == pytest.approx(-KAP / 200.0)


def test_single_soliton_rhs():
    P = md.ModParams.single(kappa=KAP, lam=[1.0])
    r = md.mod_ode_rhs(P, 2)
    assert r["gamma"][0] == pytest.approx(1.0)
    assert np.all(r["alpha"] == 0) and np.all(r["beta"] == 0)
    P2 = md.ModParams.single(kappa=KAP, lam=[1.2], mu=[0.3], delta=[0.1],
                             alpha=[[1, 0, 0, 0]], beta=[[0.2, 0, 0, 0]])
    r2 = md.mod_ode_rhs(P2, 2)
    assert np.allclose(r2["alpha"][0], 2 * P2.beta[0] + 4 * 0.3 * P2.alpha[0])
    assert r2["lam"][0] == pytest.approx(-4 * 1.2 * 0.3)
    assert r2["mu"][0] == pytest.approx(1.2**4 * 0.1 - 4 * 0.3**2)
    assert r2["delta"][0] == 0.0


def test_params_validation():
    with pytest.raises(InvalidArgumentError):
        md.ModParams(alpha=[[1, 0, 0, 0], [1, 0, 0, 0]], beta=np.zeros((2, 4)),
                     lam=[1, 1], mu=[0, 0], delta=[0, 0], gamma=[0, 0])
    with pytest.raises(InvalidArgumentError):
        md.ModParams(alpha=[[1, 0, 0, 0], [-1, 0, 0, 0]], beta=np.zeros((2, 4)),
                     lam=[1.0, 1.3], mu=[0, 0], delta=[0, 0], gamma=[0, 0],
                     regime="parabolic")


def test_reduction_to_mbody(hyp_orbit):
    """μ = δ = 0 with order-2 coefficients: the (α,β) flow is the m-body law
    with the matched coupling 2κ."""
    t0 = 1.25 * hyp_orbit.T0
    a0, b0 = hyp_orbit.eval(t0)
    bp = mb.integrate(mb.BodyState(a0, b0, KC), (t0, 12 * t0), tol=1e-12, nodes=60)

    def rhs(t, y):
        P = md.ModParams(y[:8].reshape(2, 4), y[8:16].reshape(2, 4),
                         y[16:18], y[18:20], y[20:22], y[22:24],
                         "hyperbolic", KAP)
        r = md.mod_ode_rhs(P, 2)
        return np.concatenate([r["alpha"].ravel(), r["beta"].ravel(),
                               r["lam"], r["mu"], r["delta"], r["gamma"]])

    y0 = np.concatenate([a0.ravel(), b0.ravel(), [1, 1], [0, 0], [0, 0], [0, 0]])
    sol = solve_ivp(rhs, (t0, 12 * t0), y0, rtol=1e-12, atol=1e-13,
                    dense_output=True, method="DOP853")
    Y = sol.sol(bp.t)
    assert np.max(np.abs(Y[:8].T.reshape(-1, 2, 4) - bp.alpha)) < 1e-8
    assert np.max(np.abs(Y[8:16].T.reshape(-1, 2, 4) - bp.beta)) < 1e-10


def test_hyperbolic_path(hyp_path):
    res = md.mod_residual(hyp_path)
    assert np.max(res["mod"]) < 1e-6
    assert hyp_path.meta["fixed_point_residual"] < 1e-8
    dev = hyp_path.meta["deviations"]
    assert dev["lam"]["exponent"] <= -1.5
    assert dev["beta"]["exponent"] <= -1.5
    assert dev["mu"]["exponent"] <= -2.5
    assert dev["delta"]["exponent"] <= -3.5
    assert dev["mu"]["identically_zero"] and dev["delta"]["identically_zero"]


def test_parabolic_path(par_path):
    res = md.mod_residual(par_path)
    assert np.max(res["mod"]) < 1e-6
    dev = par_path.meta["deviations"]
    assert dev["alpha"]["exponent"] <= -0.9     # identically zero here
    assert dev["lam"]["exponent"] <= -0.9       # genuine t⁻¹ decay
    # β = ½ α̇ along the homothetic asymptote
    P = par_path.eval(50.0)
    h = 1e-4
    a_p = par_path.eval(50.0 + h).alpha
    a_m = par_path.eval(50.0 - h).alpha
    assert np.max(np.abs((a_p - a_m) / (2 * h) - 2 * P.beta)) < 1e-5


def test_parabolic_validation():
    b, _ = mb.central_config(2, seed=1, kappa=KC)
    orb = mb.parabolic_orbit(b, kappa=KC)
    with pytest.raises(InvalidArgumentError):
        md.solve_mod_traj_parabolic(orb, [1.0, 1.2], N=3, kappa=KAP)
    with pytest.raises(UnsupportedOrderError):
        md.solve_mod_traj_parabolic(orb, [1.0, 1.0], N=1, kappa=KAP)


def test_coupling_mismatch_rejected(hyp_orbit):
    with pytest.raises(InvalidArgumentError):
        md.solve_mod_traj_hyperbolic(hyp_orbit, [1.0, 1.0], N=2, kappa=2 * KAP)


def test_reintegration_self_consistency(hyp_path, par_path):
    for path in (hyp_path, par_path):
        P0 = path.eval(path.T0)

        def rhs(t, y):
            P = md.ModParams(y[:8].reshape(2, 4), y[8:16].reshape(2, 4),
                             y[16:18], y[18:20], y[20:22], y[22:24],
                             path.regime, path.kappa)
            r = md.mod_ode_rhs(P, path.N)
            return np.concatenate([r["alpha"].ravel(), r["beta"].ravel(),
                                   r["lam"], r["mu"], r["delta"], r["gamma"]])

        y0 = np.concatenate([P0.alpha.ravel(), P0.beta.ravel(), P0.lam,
                             P0.mu, P0.delta, P0.gamma])
        sol = solve_ivp(rhs, (path.T0, 40 * path.T0), y0, rtol=1e-12,
                        atol=1e-13, dense_output=True, method="DOP853")
        ts = np.geomspace(path.T0, 40 * path.T0, 40)
        Pi = path.eval(ts)
        Y = sol.sol(ts)
        assert np.max(np.abs(Y[:8].T - Pi["alpha"].reshape(len(ts), -1))) < 1e-6
        assert np.max(np.abs(Y[16:18].T - Pi["lam"])) < 1e-8
        assert np.max(np.abs(Y[22:24].T - Pi["gamma"])) < 1e-6


def test_perturbed_path_mod_jump(hyp_path):
    """Perturbing β by 1e−3 lifts Mod(t) to the ~2e−3 scale."""
    pert = md.ModPath(hyp_path.T0, hyp_path.xi, hyp_path.alpha,
                      hyp_path.beta + 1e-3, hyp_path.lam, hyp_path.mu,
                      hyp_path.delta, hyp_path.gamma, hyp_path.regime,
                      hyp_path.kappa, hyp_path.N, hyp_path.asym)
    res = md.mod_residual(pert)
    assert 5e-4 < np.max(res["mod"]) < 1e-2


def test_save_mod_path(tmp_path, hyp_path):
    csv = tmp_path / "mod.csv"
    man = tmp_path / "mod.json"
    md.save_mod_path(hyp_path, csv, man)
    header = csv.read_text().splitlines()[0].split(",")
    assert header[0] == "t" and "Mod" in header and "a" in header
    import json
    manifest = json.loads(man.read_text())
    assert manifest["max_mod"] < 1e-6
    assert "deviation_fits" in manifest
