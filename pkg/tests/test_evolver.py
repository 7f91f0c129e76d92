import numpy as np
import pytest
from scipy import fft as sfft

from hartree4 import evolver as ev
from hartree4.errors import DomainError, InvalidArgumentError
from hartree4.radial_core import RadialFn, interp_radial, radial_newton_potential


def gaussian_field(n=32, L=9.0, width=1.0, amp=1.0):
    return ev.make_field(n, L, lambda x0, x1, x2, x3: amp * np.exp(
        -(x0**2 + x1**2 + x2**2 + x3**2) / (2 * width**2)))


def sample_Q(b, n, L):
    f = ev.make_field(n, L)
    ax = f.axis()
    X = np.meshgrid(ax, ax, ax, ax, indexing="ij", sparse=True)
    R = np.sqrt(sum(x * x for x in X))
    f.values[...] = interp_radial(b.Q, R)
    return f


def test_field_validation():
    with pytest.raises(InvalidArgumentError):
        ev.Field4(14, 5.0, np.zeros((14,) * 4, dtype=complex))   # 7 | 14
    with pytest.raises(DomainError):
        ev.make_field(96, 5.0, mem_cap_gb=0.5)


def test_potential_matches_radial_oracle():
    """Spectral φ vs the free-space radial oracle after gauge-constant
    removal.  Both solvers are linear in the density, and the residual box
    (image) effects scale with the total mass, so a small test density makes
    the free-space comparison meaningful at the 1e−4 absolute level."""
    n, L, amp = 32, 9.0, 0.05
    f = gaussian_field(n, L, amp=amp)
    phi = ev.hartree_potential(f).values
    g1 = __import__("hartree4.radial_core", fromlist=["make_grid"]).make_grid(40.0, 2048)
    phir = radial_newton_potential(RadialFn(g1, amp**2 * np.exp(-(g1.nodes**2))))
    ax = f.axis()
    X = np.meshgrid(ax, ax, ax, ax, indexing="ij", sparse=True)
    R = np.sqrt(sum(x * x for x in X))
    expect = interp_radial(phir, R, extrapolate="inverse_square")
    dev = phi - expect
    dev -= np.mean(dev)
    assert np.max(np.abs(dev)) < 1e-4


def test_potential_zero_and_superposition():
    n, L = 24, 8.0
    zero = ev.make_field(n, L)
    assert np.max(np.abs(ev.hartree_potential(zero).values)) == 0.0

    f1 = ev.make_field(n, L, lambda *X: np.exp(-sum((x - s)**2 for x, s in
                                                    zip(X, (2, 0, 0, 0)))))
    f2 = ev.make_field(n, L, lambda *X: np.exp(-sum((x - s)**2 for x, s in
                                                    zip(X, (-2, 0, 0, 0)))))
    both = ev.make_field(n, L)
    both.values = np.sqrt(np.abs(f1.values)**2 + np.abs(f2.values)**2)
    p1 = ev.hartree_potential(f1).values
    p2 = ev.hartree_potential(f2).values
    p12 = ev.hartree_potential(both).values
    assert np.max(np.abs(p12 - p1 - p2)) < 1e-6 * np.max(np.abs(p1))


def test_step_mass_conservation_long():
    f = gaussian_field(n=12, L=6.0)
    m0 = ev.conserved(f).mass
    for _ in range(10000):
        ev.step(f, 1e-3)
    m1 = ev.conserved(f).mass
    assert abs(m1 - m0) / m0 < 1e-10


def test_energy_drift_splitting_order():
    """Halving dt reduces the energy drift ~4x (2nd-order splitting)."""
    drifts = []
    for dt in (2e-3, 1e-3):
        f = gaussian_field(n=16, L=6.0, amp=1.2)
        e0 = ev.conserved(f).energy
        nst = int(round(0.05 / dt))
        for _ in range(nst):
            ev.step(f, dt)
        drifts.append(abs(ev.conserved(f).energy - e0))
    ratio = drifts[0] / drifts[1]
    assert 2.5 < ratio < 6.0


def test_conserved_momentum_and_boost(bundle_small):
    f = sample_Q(bundle_small, 24, 8.0)
    c = ev.conserved(f)
    assert np.max(np.abs(c.momentum)) < 1e-10          # real field
    assert abs(c.mass - bundle_small.mass_Q) < 1e-3 * bundle_small.mass_Q
    # E(Q) = 0 holds for the free-space energy; the gauged torus energy is
    # offset by ~¼·c·mass (the radial module verifies the identity at 1e-6)
    assert abs(ev.free_space_energy(f)) < 5e-2

    beta = np.array([0.4, 0, 0, 0])
    g = ev.apply_symmetry(f, beta=beta, t_eval=0.0)
    cb = ev.conserved(g)
    assert abs(cb.mass - c.mass) < 1e-6 * c.mass       # mass invariance
    assert np.allclose(cb.momentum, c.momentum + 0.5 * beta * c.mass, atol=1e-5)


def test_virial_gaussian():
    """d²/dt² ∫|x|²|u|² = 16ℰ with the conserved (quarter-form) energy."""
    f = gaussian_field(n=32, L=9.0, width=1.3, amp=1.1)
    hist = ev.evolve(f, 0.02, 1e-3, snapshot_stride=5)
    vir = ev.virial_check(hist["snapshots"][:5])
    assert vir["max_rel_deviation"] < 0.01
    assert not vir["untrusted"]


def test_virial_zero_energy():
    """Amplitude tuned to free-space ℰ = 0: the variance second difference
    vanishes at the 16ℰ-scale of the untuned field."""
    base = gaussian_field(n=32, L=9.0, width=1.3)
    u_hat = sfft.fftn(base.values)
    kin = 0.5 * float(np.sum(base.k2() * np.abs(u_hat) ** 2) / base.n**4 * base.dV)
    pot = ev.free_space_energy(base) - kin             # = ¼∫φρ < 0
    a2 = -kin / pot
    f = ev.make_field(base.n, base.L)
    f.values = np.sqrt(a2) * base.values
    assert abs(ev.free_space_energy(f)) < 1e-6 * kin
    hist = ev.evolve(f, 0.02, 1e-3, snapshot_stride=5)
    vir = ev.virial_check(hist["snapshots"][:5])
    scale = 16 * kin * a2
    assert np.max(np.abs(vir["second_difference"])) < 0.01 * scale


def test_apply_symmetry_identity_and_domain(bundle_small):
    f = sample_Q(bundle_small, 24, 8.0)
    g = ev.apply_symmetry(f)
    assert np.max(np.abs(g.values - f.values)) < 1e-12
    with pytest.raises(DomainError):
        ev.apply_symmetry(f, alpha=(7.5, 0, 0, 0))


def test_pseudo_conformal_exact_at_t1(bundle_small):
    """𝒫(e^{it}Q) at t=1 equals S(1,·) = Q e^{i(−1+|x|²/4)} pointwise."""
    f = sample_Q(bundle_small, 24, 8.0)
    f.values = f.values * np.exp(1j * 1.0)
    f.time = 1.0
    g = ev.pseudo_conformal(f, 1.0)
    ax = g.axis()
    X = np.meshgrid(ax, ax, ax, ax, indexing="ij", sparse=True)
    R2 = sum(x * x for x in X)
    S1 = interp_radial(bundle_small.Q, np.sqrt(R2)) * np.exp(1j * (-1.0 + R2 / 4))
    assert np.max(np.abs(g.values - S1)) < 1e-12


def test_pseudo_conformal_validation(bundle_small):
    f = sample_Q(bundle_small, 24, 8.0)
    f.time = 1.0
    with pytest.raises(InvalidArgumentError):
        ev.pseudo_conformal(f, 0.0)
    with pytest.raises(InvalidArgumentError):
        ev.pseudo_conformal(f, 0.5)       # needs f.time = 1/t = 2


def test_pseudo_conformal_involution(bundle_small):
    """Applying 𝒫 at t=1 twice returns the original field."""
    f = sample_Q(bundle_small, 24, 8.0)
    f.values = f.values * np.exp(1j * 1.0)
    f.time = 1.0
    g = ev.pseudo_conformal(f, 1.0)
    g.time = 1.0
    h = ev.pseudo_conformal(g, 1.0)
    assert np.max(np.abs(h.values - f.values)) < 1e-12


def test_gradient_norm_scaling_law(bundle_default):
    """‖∇S(t)‖ = sqrt(t⁻²‖∇Q‖² + ¼‖xQ‖²) exactly; measured within 2% at
    t ∈ {1, ½, ¼} on per-t adapted grids.  The raw ∝|t|⁻¹ law holds to 2%
    only once t ≲ 1/4 (the ¼‖xQ‖² offset), which the acceptance run checks
    over the octave {1/8, 1/16}."""
    b = bundle_default
    for t in (1.0, 0.5, 0.25):
        # sample u(1/t, y) = e^{i/t}Q(|y|) on its natural box, transform onto
        # the shrunken output box L_out = t·L_src
        L_src = 8.0
        L_out = t * L_src
        g = ev.make_field(48, L_src)
        ax = g.axis()
        X = np.meshgrid(ax, ax, ax, ax, indexing="ij", sparse=True)
        R = np.sqrt(sum(x * x for x in X))
        g.values[...] = interp_radial(b.Q, R) * np.exp(1j / t)
        g.time = 1.0 / t
        s = ev.pseudo_conformal(g, t, out_n=48, out_L=L_out)
        sh = sfft.fftn(s.values)
        grad = np.sqrt(np.sum(s.k2() * np.abs(sh) ** 2) / s.n**4 * s.dV)
        law = np.sqrt(b.grad_Q_norm2 / t**2 + 0.25 * b.xQ_norm2)
        assert abs(grad - law) / law < 0.02


def test_checkpoint_roundtrip(tmp_path):
    f = gaussian_field(n=16, L=6.0)
    f.values *= np.exp(1j * 0.3)
    f.time = 1.25
    ev.save_checkpoint(f, tmp_path / "chk")
    g = ev.load_checkpoint(tmp_path / "chk")
    assert np.array_equal(g.values, f.values)
    assert g.time == f.time and g.L == f.L


def test_evolve_series_and_tracking(bundle_small):
    f = sample_Q(bundle_small, 24, 8.0)
    hist = ev.evolve(f, 0.01, 1e-3, snapshot_stride=5,
                     track=np.zeros((1, 4)), track_radius=3.0)
    assert len(hist["times"]) == len(hist["series"])
    assert np.max(np.abs(hist["tracks"][-1])) < 0.05   # stationary soliton
    csv = ev.save_timeseries_csv(hist["times"], hist["series"],
                                 "/tmp/_ts.csv", tracks=hist["tracks"])
    import os
    assert os.path.exists("/tmp/_ts.csv")
