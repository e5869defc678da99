import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from lvm_infomax.core import RngStream
from lvm_infomax.fisher import (
    fisher_angle_scan,
    fisher_identifiable,
    fisher_mc_matrix,
    fisher_mc_trace,
    fisher_nonidentifiable,
)
from lvm_infomax.params import MlrParams

MODEL = MlrParams(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([0.5, 0.5]), 0.1)


def _quad_trace(x, params):
    """Tr J(x) by adaptive quadrature over y; independent of the sampler."""
    x = np.asarray(x, float)
    m = params.weights @ x
    s2 = params.sigma_sq

    def integrand(y):
        c = params.pi * np.exp(-0.5 * (y - m) ** 2 / s2) / np.sqrt(2 * np.pi * s2)
        p = c.sum()
        if p <= 0:
            return 0.0
        r = c / p
        return p * np.sum(((y - m) * r / s2) ** 2)

    lo, hi = m.min() - 12 * np.sqrt(s2), m.max() + 12 * np.sqrt(s2)
    val, _ = integrate.quad(integrand, lo, hi, points=list(m), limit=400, epsabs=1e-12)
    return val * (x @ x)


simplex2 = st.floats(0.0, 1.0).map(lambda a: np.array([a, 1 - a]))


class TestClosedForms:
    def test_identifiable_trace(self):
        assert abs(fisher_identifiable([1, 0], [0.5, 0.5], 0.1).trace - 10.0) < 1e-9

    def test_nonidentifiable_half(self):
        a = fisher_identifiable([0, 1], [0.5, 0.5], 0.1).trace
        b = fisher_nonidentifiable([0, 1], [0.5, 0.5], 0.1).trace
        assert abs(b - 5.0) < 1e-9
        assert abs(b - a / 2) < 1e-9

    @pytest.mark.parametrize("K", [1, 2, 3, 5])
    def test_uniform_pi_over_K(self, K):
        x = np.array([0.3, -1.2, 0.7])
        pi = np.full(K, 1 / K)
        t = fisher_nonidentifiable(x, pi, 0.4).trace
        assert abs(t - (x @ x) / (K * 0.4)) < 1e-9
        assert abs(t - fisher_identifiable(x, pi, 0.4).trace / K) < 1e-9

    def test_zero_input(self):
        np.testing.assert_array_equal(fisher_identifiable([0, 0], [0.5, 0.5], 0.1).J, 0.0)

    def test_degenerate_pi_blocks(self):
        F = fisher_identifiable([1.0, 2.0], [1.0, 0.0], 0.5)
        np.testing.assert_allclose(F.block(0, 0), np.outer([1, 2], [1, 2]) / 0.5)
        np.testing.assert_array_equal(F.block(1, 1), 0.0)

    def test_single_state_coincide(self):
        x = [0.5, -0.5]
        np.testing.assert_allclose(fisher_identifiable(x, [1.0], 0.2).J, fisher_nonidentifiable(x, [1.0], 0.2).J)

    def test_nonidentifiable_rank_one(self):
        F = fisher_nonidentifiable([1.0, 2.0, -1.0], [0.2, 0.3, 0.5], 0.3)
        assert np.linalg.matrix_rank(F.J, tol=1e-10) == 1

    def test_bad_simplex(self):
        with pytest.raises(ValueError):
            fisher_identifiable([1, 0], [0.5, 0.6], 0.1)

    @settings(max_examples=50, deadline=None)
    @given(pi=simplex2, x=st.lists(st.floats(-3, 3), min_size=2, max_size=2), s2=st.floats(0.01, 5.0))
    def test_ordering_and_psd(self, pi, x, s2):
        a = fisher_identifiable(x, pi, s2)
        b = fisher_nonidentifiable(x, pi, s2)
        assert b.trace <= a.trace + 1e-12
        for F in (a, b):
            np.testing.assert_allclose(F.J, F.J.T, atol=1e-8)
            assert np.linalg.eigvalsh(F.J).min() >= -1e-8 * max(1.0, np.abs(F.J).max())
        if min(pi) > 1e-6 and np.dot(x, x) > 1e-6:
            assert b.trace < a.trace


class TestMonteCarlo:
    def test_identifiable_input(self):
        t, se = fisher_mc_trace([1, 0], MODEL, 100_000, RngStream(0))
        assert abs(t - 10.0) < 3 * se
        assert abs(t - 10.0) < 0.2

    def test_orthogonal_input(self):
        t, se = fisher_mc_trace([0, 1], MODEL, 100_000, RngStream(1))
        assert abs(t - 5.0) < 3 * se + 1e-12
        assert abs(t - 5.0) < 0.1

    def test_single_draw(self):
        t, se = fisher_mc_trace([1, 0], MODEL, 1, RngStream(2))
        assert np.isfinite(t)
        assert np.isnan(se)

    def test_rejects_zero_draws(self):
        with pytest.raises(ValueError):
            fisher_mc_trace([1, 0], MODEL, 0, RngStream(0))

    def test_well_separated_is_identifiable(self):
        # 20 sigma separation of the component means
        m = MlrParams(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([0.3, 0.7]), 0.01)
        t, se = fisher_mc_trace([1, 0], m, 50_000, RngStream(3))
        assert abs(t - fisher_identifiable([1, 0], m.pi, 0.01).trace) < 3 * se + 1e-9

    @pytest.mark.parametrize("angle", [20.0, 45.0, 70.0])
    def test_against_quadrature(self, angle):
        th = np.deg2rad(angle)
        x = np.array([np.cos(th), np.sin(th)])
        t, se = fisher_mc_trace(x, MODEL, 100_000, RngStream(4))
        assert abs(t - _quad_trace(x, MODEL)) < 4 * se

    def test_matrix_trace_and_symmetry(self):
        F = fisher_mc_matrix([0.6, 0.8], MODEL, 50_000, RngStream(5))
        np.testing.assert_allclose(F.J, F.J.T, atol=1e-12)
        assert abs(F.trace - _quad_trace([0.6, 0.8], MODEL)) < 0.3


class TestAngleScan:
    def test_rows_and_symmetry(self):
        angles = np.arange(0, 181, 30)
        rows = fisher_angle_scan(MODEL, angles, [0.1], 40_000, RngStream(6))
        assert [r["angle_deg"] for r in rows] == list(map(float, angles))
        tr = {r["angle_deg"]: r for r in rows}
        # exact value sits just under the identifiable limit of 10 at this noise level
        assert abs(tr[0.0]["trace"] - _quad_trace([1, 0], MODEL)) < 3 * tr[0.0]["stderr"]
        assert abs(tr[0.0]["trace"] - 10.0) < 0.3
        assert abs(tr[90.0]["trace"] - 5.0) < 3 * tr[90.0]["stderr"] + 1e-9
        for a in (30.0, 60.0):
            b = 180.0 - a
            assert abs(tr[a]["trace"] - tr[b]["trace"]) < 4 * np.hypot(tr[a]["stderr"], tr[b]["stderr"])

    def test_multiple_noise_levels(self):
        rows = fisher_angle_scan(MODEL, [0, 90], [0.1, 1.0], 1000, RngStream(7))
        assert [(r["sigma_sq"], r["angle_deg"]) for r in rows] == [(0.1, 0.0), (0.1, 90.0), (1.0, 0.0), (1.0, 90.0)]

    def test_requires_2d(self):
        m = MlrParams(np.ones((2, 3)), np.array([0.5, 0.5]), 0.1)
        with pytest.raises(ValueError):
            fisher_angle_scan(m, [0], [0.1], 10, RngStream(0))
