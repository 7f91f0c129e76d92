import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hartree4 import multipole as mp
from hartree4.errors import FitFailureError, InvalidArgumentError
from hartree4.radial_core import RadialFn


@pytest.fixture(scope="module")
def qdens(bundle_small):
    return RadialFn(bundle_small.grid, bundle_small.Q.values**2)


def test_printed_closed_forms(rng):
    for _ in range(10):
        a = rng.standard_normal(4)
        z = rng.standard_normal(4) * 0.8
        na2, za, nz2 = a @ a, z @ a, z @ z
        closed = [1 / na2,
                  2 * za / na2**2,
                  (4 * za**2 - nz2 * na2) / na2**3,
                  (8 * za**3 - 4 * za * nz2 * na2) / na2**4,
                  (16 * za**4 - 12 * za**2 * nz2 * na2 + nz2**2 * na2**2) / na2**5]
        for n, c in enumerate(closed, start=1):
            assert abs(mp.eval_F(n, a, z) - c) < 1e-12 * max(1, abs(c))


def test_eval_F_examples():
    assert mp.eval_F(1, [2, 0, 0, 0], [9, 9, 9, 9]) == 0.25
    assert abs(mp.eval_F(3, [1, 0, 0, 0], [1, 0, 0, 0]) - 3.0) < 1e-14
    with pytest.raises(InvalidArgumentError):
        mp.eval_F(0, [1, 0, 0, 0], [0, 0, 0, 0])
    with pytest.raises(InvalidArgumentError):
        mp.eval_F(1, [0, 0, 0, 0], [1, 0, 0, 0])


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=8),
       st.floats(min_value=0.3, max_value=3.0),
       st.floats(min_value=0.3, max_value=3.0))
def test_homogeneity(n, s_alpha, s_zeta):
    rng = np.random.default_rng(n)
    a = rng.standard_normal(4)
    z = rng.standard_normal(4)
    base = mp.eval_F(n, a, z)
    assert mp.eval_F(n, s_alpha * a, z) == pytest.approx(
        s_alpha ** (-n - 1) * base, rel=1e-9, abs=1e-12)
    assert mp.eval_F(n, a, s_zeta * z) == pytest.approx(
        s_zeta ** (n - 1) * base, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_harmonicity(n):
    rep = mp.laplacian_F_check(n, samples=60)
    assert rep["max_relative_laplacian"] < 1e-6


def test_partial_sums_converge():
    a = np.array([4.0, 0, 0, 0])
    z = np.array([0.6, 0.5, -0.4, 0.3])     # |z|/|a| ≈ 0.23
    exact = 1.0 / np.sum((a - z) ** 2)
    errs = [abs(np.sum(mp.eval_F_partial_sums(N, a, z)) - exact)
            for N in (2, 4, 6, 8)]
    # zonal oscillation makes the decay non-monotone order-by-order; the
    # geometric-mean ratio per added order sits near |z|/|a| ≈ 0.23
    mean_ratio = (errs[-1] / errs[0]) ** (1.0 / 6.0)
    assert 0.05 < mean_ratio < 0.5


def test_psi_moment_examples(qdens, bundle_small):
    kap = bundle_small.mass_Q
    v = mp.psi_moment(1, qdens, [10, 0, 0, 0], 1.0, 1.0)
    assert abs(v + kap / 100.0) < 1e-10
    assert mp.psi_moment(2, qdens, [10, 0, 0, 0], 1.0, 1.0, [0, 0, 0, 0]) == 0.0
    with pytest.raises(InvalidArgumentError):
        mp.psi_moment(1, qdens, [0, 0, 0, 0])


def test_psi_moment_vs_quadrature(qdens):
    """Mean-value collapse against the brute-force 4D lattice oracle; the
    oracle's own resolution bounds the agreement."""
    y = np.array([0.7, -0.3, 0.2, 0.1])
    for n in (1, 2, 3):
        v1 = mp.psi_moment(n, qdens, [10, 0, 0, 0], 1.0, 1.0, y)
        v4 = mp.psi_moment_quadrature(n, qdens, [10, 0, 0, 0], 1.0, 1.0, y,
                                      npts=32, r_cut=8.0)
        scale = max(abs(v1), abs(qdens.meta.get("_mass", 1.0)) / 1e4)
        assert abs(v1 - v4) < 1e-4 * scale


def test_truncated_potential(qdens):
    geo = mp.MultipoleGeometry([10, 0, 0, 0])
    val, terms = mp.truncated_potential(1, qdens, geo)
    assert val == pytest.approx(mp.psi_moment(1, qdens, [10, 0, 0, 0]), rel=1e-12)
    assert len(terms) == 1

    zero = RadialFn(qdens.grid, np.zeros(qdens.grid.n))
    assert mp.truncated_potential(3, zero, geo, [1, 0, 0, 0])[0] == 0.0


def test_pointwise_bound(qdens):
    """|φ⁽ᴺ⁾ − exact| ≤ C(1+|y|)^{2N}/a^{N+2} with a C uniform over a."""
    N = 5
    rng = np.random.default_rng(0)
    Cs = []
    for a in (8.0, 16.0, 32.0):
        geo = mp.MultipoleGeometry([a, 0, 0, 0])
        worst = 0.0
        for _ in range(30):
            y = rng.standard_normal(4)
            y *= rng.uniform(0.2, a / 3) / np.linalg.norm(y)
            approx, _ = mp.truncated_potential(N, qdens, geo, y)
            exact = mp.exact_interaction_potential(qdens, geo, y)
            worst = max(worst, abs(approx - exact) * a ** (N + 2)
                        / (1 + np.linalg.norm(y)) ** (2 * N))
        Cs.append(worst)
    assert max(Cs) < 10 * min(Cs)


def test_truncation_order_fit(qdens):
    for N, lo, hi in ((0, -2.3, -1.7), (1, -3.3, -2.7), (2, -4.3, -3.7)):
        fit = mp.truncation_order_fit(N, qdens, [8, 12, 16, 24, 32])
        assert lo <= fit["slope"] <= hi


def test_fit_validation(qdens):
    with pytest.raises(InvalidArgumentError):
        mp.truncation_order_fit(1, qdens, [8, 9, 10])
    with pytest.raises(InvalidArgumentError):
        mp.truncation_order_fit(1, qdens, [8, 9, 10, 11])
