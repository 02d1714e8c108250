import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmam.errors import PositiveDefinitenessViolation
from gmam.models import double_well
from gmam.systems import (
    MetricContext,
    SdeSystem,
    check_system,
    finite_difference_jacobian,
    inverse_metric_inner,
    local_action_density,
    metric_norm,
)

from conftest import constant_metric_system

# immutable, shared across hypothesis examples
_DW = double_well()


class TestMetricContext:
    def test_solve_roundtrip(self):
        rng = np.random.default_rng(0)
        mat = rng.standard_normal((4, 4))
        cov = mat @ mat.T + 4.0 * np.eye(4)
        ctx = MetricContext(np.zeros(4), cov)
        u = rng.standard_normal(4)
        z = ctx.solve(u)
        assert np.allclose(cov @ z, u, rtol=1e-10, atol=1e-10 * np.linalg.norm(u))

    def test_indefinite_covariance_rejected(self):
        with pytest.raises(PositiveDefinitenessViolation):
            MetricContext(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_singular_covariance_rejected(self):
        with pytest.raises(PositiveDefinitenessViolation):
            MetricContext(np.zeros(2), np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_nan_covariance_rejected(self):
        with pytest.raises(PositiveDefinitenessViolation):
            MetricContext(np.zeros(2), np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestInnerProducts:
    def test_identity_metric_is_dot_product(self):
        ctx = MetricContext(np.zeros(2), np.eye(2))
        assert inverse_metric_inner([1.0, 2.0], [3.0, 4.0], ctx) == pytest.approx(11.0)

    def test_zero_vector(self):
        ctx = MetricContext(np.zeros(2), np.array([[2.0, 0.3], [0.3, 1.0]]))
        assert inverse_metric_inner([0.0, 0.0], [5.0, -2.0], ctx) == 0.0

    def test_diagonal_metric(self):
        # A = diag(2, 4): A^-1 (1,1) = (0.5, 0.25), dot with (1,1) gives 0.75
        ctx = MetricContext(np.zeros(2), np.diag([2.0, 4.0]))
        assert inverse_metric_inner([1.0, 1.0], [1.0, 1.0], ctx) == pytest.approx(0.75, rel=1e-14)

    def test_norm_euclidean_case(self):
        ctx = MetricContext(np.zeros(2), np.eye(2))
        assert metric_norm([3.0, 4.0], ctx) == pytest.approx(5.0, rel=1e-14)
        assert metric_norm([0.0, 0.0], ctx) == 0.0

    def test_norm_diagonal_case(self):
        # A = diag(4, 1): |(2,0)| = sqrt(2 * (1/4) * 2) = 1
        ctx = MetricContext(np.zeros(2), np.diag([4.0, 1.0]))
        assert metric_norm([2.0, 0.0], ctx) == pytest.approx(1.0, rel=1e-14)

    @given(
        u=st.lists(st.floats(-10, 10), min_size=2, max_size=2),
        v=st.lists(st.floats(-10, 10), min_size=2, max_size=2),
    )
    @settings(max_examples=50, deadline=None)
    def test_symmetry_and_consistency(self, u, v):
        ctx = MetricContext(np.zeros(2), np.array([[2.0, 0.5], [0.5, 1.5]]))
        left = inverse_metric_inner(u, v, ctx)
        right = inverse_metric_inner(v, u, ctx)
        assert left == pytest.approx(right, rel=1e-10, abs=1e-12)
        norm2 = metric_norm(u, ctx) ** 2
        assert inverse_metric_inner(u, u, ctx) == pytest.approx(norm2, rel=1e-12, abs=1e-13)


class TestLocalActionDensity:
    def test_aligned_tangent_vanishes(self, dw):
        state = np.array([-0.5, 0.2])
        b = dw.drift(state)
        assert local_action_density(state, 2.5 * b, dw) == pytest.approx(0.0, abs=1e-13)

    def test_antialigned_doubles(self, dw):
        state = np.array([-0.5, 0.2])
        b = dw.drift(state)
        expected = 2.0 * np.linalg.norm(b) * np.linalg.norm(3.0 * b)
        assert local_action_density(state, -3.0 * b, dw) == pytest.approx(expected, rel=1e-12)

    def test_orthogonal_case(self):
        sys = constant_metric_system(np.eye(2))
        # drift (1, 0), tangent (0, 1): density = |b| |t| - 0 = 1
        assert local_action_density([0.0, 0.0], [0.0, 1.0], sys) == pytest.approx(1.0, rel=1e-14)

    @given(
        state=st.lists(st.floats(-2, 2), min_size=2, max_size=2),
        tangent=st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    )
    @settings(max_examples=100, deadline=None)
    def test_cauchy_schwarz_nonnegativity(self, state, tangent):
        state = np.asarray(state)
        tangent = np.asarray(tangent)
        val = local_action_density(state, tangent, _DW)
        b = _DW.drift(state)
        scale = np.linalg.norm(b) * np.linalg.norm(tangent)
        assert val >= -1e-14 * max(scale, 1.0)

    @given(
        c=st.floats(1e-3, 1e3),
        tangent=st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    )
    @settings(max_examples=50, deadline=None)
    def test_positive_homogeneity(self, c, tangent):
        state = np.array([0.3, -0.7])
        base = local_action_density(state, tangent, _DW)
        scaled = local_action_density(state, c * np.asarray(tangent), _DW)
        assert scaled == pytest.approx(c * base, rel=1e-10, abs=1e-12)


class TestSystemContracts:
    def test_check_system_passes_on_fixtures(self, dw, ms10):
        states = np.array([[0.3, -0.2], [-1.1, 0.5], [0.9, 0.1]])
        check_system(dw, states)
        check_system(ms10, states)

    def test_covariance_defaults_to_sigma_sigma_t(self):
        rng = np.random.default_rng(1)
        mat = rng.standard_normal((3, 3))

        def diffusion(x):
            x = np.asarray(x, dtype=float)
            return np.broadcast_to(mat, x.shape[:-1] + (3, 3)).copy()

        sys = SdeSystem(dim=3, drift=lambda x: -np.asarray(x, dtype=float), diffusion=diffusion)
        state = rng.standard_normal(3)
        assert np.allclose(sys.covariance(state), mat @ mat.T, rtol=1e-12)

    def test_fd_jacobian_matches_analytic(self, dw):
        states = np.array([[0.4, -0.3], [1.2, 0.8]])
        fd = finite_difference_jacobian(dw.drift, states)
        exact = dw.drift_jacobian(states)
        assert np.allclose(fd, exact, rtol=1e-5, atol=1e-7)

    def test_check_system_detects_wrong_jacobian(self):
        def bad_jac(x):
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape[:-1] + (2, 2))

        base = double_well()
        sys = SdeSystem(
            dim=2,
            drift=base.drift,
            diffusion=base.diffusion,
            drift_jacobian=bad_jac,
        )
        with pytest.raises(AssertionError):
            check_system(sys, np.array([[0.5, 0.5]]))
