import numpy as np
import pytest

from hartree4 import ground_state as gs
from hartree4.radial_core import (RadialFn, apply_lambda, integral, make_grid,
                                  radial_derivative, weighted_inner,
                                  weighted_norm)


def test_residual_and_positivity(bundle_mid):
    b = bundle_mid
    assert b.residual < 1e-7
    assert np.all(b.Q.values > 0)


def test_monotone_exponential_tail(bundle_mid):
    """log Q asymptotically linear with negative slope."""
    g = bundle_mid.grid
    sel = (g.nodes > 8) & (g.nodes < 14)
    logq = np.log(bundle_mid.Q.values[sel])
    slope = np.polyfit(g.nodes[sel], logq, 1)[0]
    assert slope < -0.8
    resid = logq - np.polyval(np.polyfit(g.nodes[sel], logq, 1), g.nodes[sel])
    assert np.max(np.abs(resid)) < 0.2
    tail = bundle_mid.Q.values[g.nodes > 5]
    assert np.all(np.diff(tail) < 0)


def test_exact_scalar_identities(bundle_mid):
    """Identities forced by Eq. (Q) and its Pohozaev pairing:
    ‖∇Q‖² = ‖Q‖², ∫φ_{Q²}Q² = −2‖Q‖², ‖∇φ‖² = 8π²‖Q‖², E(Q) = 0."""
    b = bundle_mid
    assert abs(b.grad_Q_norm2 - b.mass_Q) < 1e-6 * b.mass_Q
    assert abs(b.pot_QQ + 2 * b.mass_Q) < 1e-6 * b.mass_Q
    assert abs(b.grad_phi_norm2 - 8 * np.pi**2 * b.mass_Q) < 1e-4 * b.mass_Q
    assert abs(b.energy) < 1e-6 * b.mass_Q
    # the (1/8π²)-weighted form is recorded and is NOT zero (= −mass/2)
    assert abs(b.energy_8pi2_form + 0.5 * b.mass_Q) < 1e-4 * b.mass_Q


def test_energy_check_derived_from_equation(bundle_mid):
    """‖∇Q‖² + ∫φ_{Q²}Q² + ‖Q‖² = 0 (multiply Eq. (Q) by Q and integrate),
    with the potential-norm cross-check carrying the correct (4π²)⁻¹."""
    b = bundle_mid
    assert abs(b.grad_Q_norm2 + b.pot_QQ + b.mass_Q) < 1e-6 * b.mass_Q
    assert abs(b.pot_QQ + b.grad_phi_norm2 / (4 * np.pi**2)) < 1e-4 * abs(b.pot_QQ)


def test_root_identities(bundle_mid):
    rep = gs.verify_root_identities(bundle_mid)
    assert rep["pass"], rep
    assert rep["Q_rho_plus_half_xQ2"] < 1e-5
    assert rep["xQ_gradQ_plus_2mass"] < 1e-6


def test_rho_solve(bundle_mid):
    b = bundle_mid
    from hartree4 import _assembly as asm
    A = asm.sector_matrix_fd(b.grid, b.Q.values, b.V.values, 0, "plus")
    r = b.grid.nodes
    mask = np.ones(b.grid.n)
    mask[-8:] = 0.0     # top closure band, see verify_root_identities
    res = (A @ b.rho.values + r**2 * b.Q.values) * mask
    rel = weighted_norm(RadialFn(b.grid, res)) / weighted_norm(
        RadialFn(b.grid, r**2 * b.Q.values))
    assert rel < 1e-6
    # companion: L₋(r²Q) = −4ΛQ
    Am = asm.sector_matrix_fd(b.grid, b.Q.values, b.V.values, 0, "minus")
    res2 = (Am @ (r**2 * b.Q.values) + 4 * b.LQ.values) * mask
    assert weighted_norm(RadialFn(b.grid, res2)) < 1e-5 * weighted_norm(b.LQ) * 4


def test_scaling_family_closure(bundle_mid):
    """Q_ω = ω²Q(ωr) satisfies ΔQ_ω − φ_{Q_ω²}Q_ω = ω²Q_ω on the rescaled grid."""
    from hartree4.radial_core import radial_newton_potential

    b = bundle_mid
    omega = 2.0
    g2 = make_grid(b.grid.r_max / omega, b.grid.n)
    q2 = omega**2 * b.Q.values       # samples of Q_ω at nodes r_i/ω
    phi = radial_newton_potential(RadialFn(g2, q2 * q2)).values
    d1 = radial_derivative(g2, q2, 1, parity=1)
    d2 = radial_derivative(g2, q2, 2, parity=1)
    lap = d2 + 3 * d1 / g2.nodes
    res = lap - phi * q2 - omega**2 * q2
    rel = weighted_norm(RadialFn(g2, res)) / weighted_norm(RadialFn(g2, q2))
    assert rel < 1e-5


def test_shooting_oracle_agreement(bundle_mid):
    oracle = gs.shooting_oracle()
    assert abs(oracle["mass"] - bundle_mid.mass_Q) < 1e-5 * bundle_mid.mass_Q


def test_grid_refinement_consistency():
    b1 = gs.solve_ground_state(make_grid(16.0, 512), tol=1e-5)
    b2 = gs.solve_ground_state(make_grid(16.0, 1024), tol=1e-6)
    assert abs(b1.mass_Q - b2.mass_Q) < 1e-6 * b2.mass_Q


def test_convergence_error_reports_history():
    from hartree4.errors import ConvergenceError

    with pytest.raises(ConvergenceError) as exc:
        gs.solve_ground_state(make_grid(16.0, 768), tol=1e-12, newton_iters=1)
    assert len(exc.value.history) > 0


def test_bundle_roundtrip(tmp_path, bundle_small):
    gs.save_bundle(bundle_small, tmp_path / "bundle")
    back = gs.load_bundle(tmp_path / "bundle")
    assert np.array_equal(back.Q.values, bundle_small.Q.values)
    assert back.mass_Q == bundle_small.mass_Q
    assert np.array_equal(back.rho.values, bundle_small.rho.values)
