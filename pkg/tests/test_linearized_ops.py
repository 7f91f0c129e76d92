import json

import numpy as np
import pytest

from hartree4 import linearized_ops as lo
from hartree4.errors import InvalidArgumentError, NearSingularRHSError
from hartree4.radial_core import RadialFn, radial_derivative, weighted_inner, weighted_norm


def test_gamma_zero_closed_form():
    assert abs(lo.gamma_coeff(0, 0.5) - np.log(3.0)) < 1e-8
    # Γ₀(t) = (2t)⁻¹ ln((1+t)/(1−t))
    for t in (0.1, 0.3, 0.7, 0.9):
        closed = np.log((1 + t) / (1 - t)) / (2 * t)
        assert abs(lo.gamma_coeff(0, t) - closed) < 1e-9


def test_gamma_representations_agree():
    for ell in (1, 3, 6):
        for t in (0.2, 0.5, 0.8):
            a = lo.gamma_coeff(ell, t, "positive")
            b = lo.gamma_coeff(ell, t, "definition")
            assert abs(a - b) < 1e-8


def test_gamma_monotonicity():
    for t in np.linspace(0.1, 0.9, 9):
        vals = [lo.gamma_coeff(ell, float(t)) for ell in range(12)]
        assert all(vals[i] > vals[i + 1] > 0 for i in range(11))


def test_gamma_domain_errors():
    with pytest.raises(InvalidArgumentError):
        lo.gamma_coeff(0, 0.0)
    with pytest.raises(InvalidArgumentError):
        lo.gamma_coeff(0, 1.0)
    with pytest.raises(InvalidArgumentError):
        lo.gamma_coeff(-1, 0.5)


def test_zonal_vs_gamma_distinction():
    """The operator kernel coefficient is t^ℓ/(ℓ+1), not Γ_ℓ: at ℓ=0 the
    mean-value property forces the constant 1 while Γ₀ > 1 on (0,1)."""
    assert lo.zonal_kernel_coeff(0, 0.5) == 1.0
    assert lo.gamma_coeff(0, 0.5) > 1.0


def test_sector_kernels(bundle_mid):
    b = bundle_mid
    op_m0 = lo.assemble_sector(b, 0, "minus")
    rel = weighted_norm(op_m0.apply(b.Q)) / weighted_norm(b.Q)
    assert rel < 1e-7

    op_p1 = lo.assemble_sector(b, 1, "plus")
    dq = RadialFn(b.grid, radial_derivative(b.grid, b.Q.values, 1, parity=1))
    rel1 = weighted_norm(op_p1.apply(dq)) / weighted_norm(dq)
    assert rel1 < 1e-5


def test_sector_symmetry_invariant(bundle_small):
    for ell in (0, 1, 2):
        for sign in ("plus", "minus"):
            op = lo.assemble_sector(bundle_small, ell, sign)
            S = op.mat_sym
            assert np.max(np.abs(S - S.T)) < 1e-8


def test_assemble_validation(bundle_small):
    with pytest.raises(InvalidArgumentError):
        lo.assemble_sector(bundle_small, 0, "pm")
    with pytest.raises(InvalidArgumentError):
        lo.assemble_sector(bundle_small, -1, "plus")


def test_solve_sector_reproduces_rho(bundle_mid):
    b = bundle_mid
    op = lo.assemble_sector(b, 0, "plus")
    f = RadialFn(b.grid, -b.grid.nodes**2 * b.Q.values)
    u = lo.solve_sector(op, f)
    rel = weighted_norm(RadialFn(b.grid, u.values - b.rho.values)) / weighted_norm(b.rho)
    assert rel < 1e-6
    assert u.meta["tail_rate"] > 0.3


def test_solve_sector_lminus_kernel_projection(bundle_mid):
    """L₋u = −4ΛQ has solution r²Q + cQ; after projecting out the kernel Q
    the solution matches r²Q − ((r²Q,Q)/‖Q‖²)Q."""
    b = bundle_mid
    op = lo.assemble_sector(b, 0, "minus")
    f = RadialFn(b.grid, -4.0 * b.LQ.values)
    u = lo.solve_sector(op, f)
    r2Q = b.grid.nodes**2 * b.Q.values
    proj = r2Q - (weighted_inner(RadialFn(b.grid, r2Q), b.Q) / b.mass_Q) * b.Q.values
    rel = (weighted_norm(RadialFn(b.grid, u.values - proj))
           / weighted_norm(RadialFn(b.grid, proj)))
    assert rel < 1e-5


def test_solve_sector_near_singular(bundle_mid):
    op = lo.assemble_sector(bundle_mid, 0, "minus")
    with pytest.raises(NearSingularRHSError) as exc:
        lo.solve_sector(op, bundle_mid.Q)
    assert exc.value.offending_inner is not None


def test_lowest_eigenvalues(bundle_mid):
    b = bundle_mid
    op_m0 = lo.assemble_sector(b, 0, "minus")
    e = lo.lowest_eigenvalue(op_m0, [b.Q])
    assert e > 0
    assert abs(e - lo.lowest_eigenvalue_dense(op_m0, [b.Q])) < 1e-6

    op_p1 = lo.assemble_sector(b, 1, "plus")
    e1 = lo.lowest_eigenvalue(op_p1, op_p1.kernel_profiles())
    assert e1 > 0.5

    op_p0 = lo.assemble_sector(b, 0, "plus")
    e0 = lo.lowest_eigenvalue(op_p0)
    assert e0 < 0                       # one negative direction, recorded
    assert lo.negative_count_radial_lplus(b) >= 1

    op_p2 = lo.assemble_sector(b, 2, "plus")
    assert lo.lowest_eigenvalue(op_p2) > 0


def test_sector_report_json(tmp_path, bundle_mid):
    path = tmp_path / "report.json"
    rep = lo.sector_report(bundle_mid, ells=(0, 1), json_path=path)
    loaded = json.loads(path.read_text())
    assert loaded["identities"]["pass"] is True
    assert "n_negative_radial_Lplus" in loaded
    assert rep["eigenvalues"]["minus_l0"]["lowest_deflated"] > 0
