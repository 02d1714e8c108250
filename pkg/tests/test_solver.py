import numpy as np
import pytest
import scipy.linalg

from gmam.curves import Curve, gap_deviation, init_curve, redistribute
from gmam.errors import PositiveDefinitenessViolation, ZeroTangent
from gmam.models import (
    double_well,
    double_well_potential,
    maier_stein,
    saddle_node_barrier,
    saddle_node_normal_form,
)
from gmam.solver import (
    GmamSettings,
    action,
    covariance_gradient_matrix,
    evolution_rhs,
    gmam_step,
    momentum,
    solve,
    speed_ratio,
)
from gmam.systems import SdeSystem


def perturbed_curve(x1, x2, num_points, amplitude=0.3, mode=1):
    curve = init_curve(x1, x2, num_points)
    alphas = np.linspace(0.0, 1.0, num_points)
    points = curve.points.copy()
    points[:, 1] += amplitude * np.sin(mode * np.pi * alphas)
    return Curve(points)


class TestAction:
    def test_flowline_action_vanishes(self, dw):
        # relaxation path from near the saddle into a well follows the drift
        curve = init_curve([-0.05, 0.0], [-0.999, 0.0], 200)
        assert action(curve, dw) == pytest.approx(0.0, abs=1e-3)

    def test_double_well_ascent_matches_barrier(self, dw):
        # analytic oracle: 2 * (U(saddle) - U(attractor)) for the gradient case
        expected = 2.0 * (double_well_potential([0.0, 0.0]) - double_well_potential([-1.0, 0.0]))
        assert expected == 0.5
        errors = []
        for m in (25, 50, 100):
            curve = init_curve([-1.0, 0.0], [0.0, 0.0], m)
            errors.append(abs(action(curve, dw) - expected))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 1e-3

    def test_collapsed_curve_zero(self, dw):
        curve = Curve(np.tile([0.3, 0.4], (20, 1)))
        assert action(curve, dw) == 0.0

    def test_indefinite_covariance_raises(self):
        def diffusion(x):
            x = np.asarray(x, dtype=float)
            out = np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()
            return out

        def covariance(x):
            x = np.asarray(x, dtype=float)
            out = np.broadcast_to(np.diag([1.0, -1.0]), x.shape[:-1] + (2, 2)).copy()
            return out

        sys = SdeSystem(2, lambda x: -np.asarray(x, float), diffusion, covariance=covariance)
        with pytest.raises(PositiveDefinitenessViolation):
            action(init_curve([0.0, 0.0], [1.0, 1.0], 10), sys)


class TestSpeedRatio:
    def test_tangent_equal_drift(self, dw):
        state = np.array([0.5, 0.3])
        assert speed_ratio(state, dw.drift(state), dw) == pytest.approx(1.0, rel=1e-12)

    def test_homogeneity(self, dw):
        state = np.array([0.5, 0.3])
        assert speed_ratio(state, 2.0 * dw.drift(state), dw) == pytest.approx(0.5, rel=1e-12)

    def test_floor_at_equilibrium(self, dw):
        assert speed_ratio([1.0, 0.0], [1.0, 0.0], dw, floor=1e-6) == 1e-6

    def test_zero_tangent_rejected(self, dw):
        with pytest.raises(ZeroTangent):
            speed_ratio([0.5, 0.3], [0.0, 0.0], dw)


class TestMomentum:
    def test_vanishes_on_flowline(self, dw):
        state = np.array([0.5, 0.3])
        p = momentum(state, dw.drift(state), dw)
        assert np.allclose(p, 0.0, atol=1e-12)

    def test_1d_alignment_gives_zero(self, fold_1d):
        # in one dimension any tangent with the drift's sign yields zero momentum
        state = np.array([0.0])
        p = momentum(state, np.array([2.0]), fold_1d)
        assert np.allclose(p, 0.0, atol=1e-14)

    def test_orthogonal_case(self):
        from conftest import constant_metric_system

        sys = constant_metric_system(np.eye(2))
        # drift (1,0), tangent (0,1): lam = 1, p = (0,1) - (1,0) = (-1, 1)
        p = momentum([0.0, 0.0], [0.0, 1.0], sys)
        assert np.allclose(p, [-1.0, 1.0], atol=1e-14)


class TestCovarianceGradientMatrix:
    def test_constant_covariance_gives_zero(self, dw):
        c = covariance_gradient_matrix([0.5, 0.3], [0.0, 1.0], dw)
        assert np.allclose(c, 0.0)

    def test_1d_linear_covariance(self):
        # A(x) = x for x > 0: dA/dx = 1, so the matrix equals the momentum
        def drift(x):
            x = np.asarray(x, dtype=float)
            return np.ones_like(x)

        def diffusion(x):
            x = np.asarray(x, dtype=float)
            return np.sqrt(x)[..., None]

        sys = SdeSystem(1, drift, diffusion)
        c = sys.covariance_derivative_contraction(np.array([4.0]), np.array([2.0]))
        assert c == pytest.approx(np.array([[2.0]]), rel=1e-5)

    def test_zero_momentum_gives_zero(self, dw):
        state = np.array([0.5, 0.3])
        c = covariance_gradient_matrix(state, dw.drift(state), dw)
        assert np.allclose(c, 0.0, atol=1e-12)


class TestGmamStep:
    def test_endpoints_bit_identical(self, dw):
        curve = perturbed_curve([-1.0, 0.0], [0.0, 0.0], 50)
        before0 = curve.points[0].tobytes()
        before1 = curve.points[-1].tobytes()
        out = gmam_step(curve, dw, GmamSettings(num_points=50), step=1e-3)
        assert out.points[0].tobytes() == before0
        assert out.points[-1].tobytes() == before1

    def test_equidistant_after_step(self, dw):
        curve = perturbed_curve([-1.0, 0.0], [0.0, 0.0], 50)
        out = gmam_step(curve, dw, GmamSettings(num_points=50), step=1e-3)
        assert gap_deviation(out.points) <= 1e-6

    def test_descent_for_small_step(self, dw):
        curve = perturbed_curve([-1.0, 0.0], [0.0, 0.0], 60, amplitude=0.2)
        before = action(curve, dw)
        out = gmam_step(curve, dw, GmamSettings(num_points=60), step=1e-5)
        assert action(out, dw) <= before + 1e-9

    def test_step_requires_size(self, dw):
        curve = init_curve([-1.0, 0.0], [0.0, 0.0], 10)
        with pytest.raises(ValueError):
            gmam_step(curve, dw, GmamSettings(num_points=10))


class TestSolve:
    def test_double_well_barrier(self, dw):
        result = solve(dw, [-1.0, 0.0], [0.0, 0.0], GmamSettings(num_points=100))
        assert result.converged
        assert result.action == pytest.approx(0.5, abs=1e-3)

    def test_double_well_from_perturbed_initial(self, dw):
        initial = perturbed_curve([-1.0, 0.0], [0.0, 0.0], 100)
        result = solve(dw, [-1.0, 0.0], [0.0, 0.0], GmamSettings(num_points=100), initial=initial)
        assert result.converged
        assert result.action == pytest.approx(0.5, abs=1e-3)

    def test_saddle_node_barrier(self):
        a = 0.04
        sys = saddle_node_normal_form(a)
        result = solve(sys, [np.sqrt(a)], [-np.sqrt(a)], GmamSettings(num_points=100))
        assert result.converged
        assert result.action == pytest.approx(saddle_node_barrier(a), abs=1e-4)

    def test_coincident_endpoints_trivial(self, dw):
        result = solve(dw, [0.5, 0.5], [0.5, 0.5], GmamSettings(num_points=20))
        assert result.converged
        assert result.iterations_used == 0
        assert result.action == 0.0

    def test_action_history_monotone_within_slack(self, dw):
        initial = perturbed_curve([-1.0, 0.0], [0.0, 0.0], 80)
        result = solve(dw, [-1.0, 0.0], [0.0, 0.0], GmamSettings(num_points=80), initial=initial)
        h = result.action_history
        slack = 1e-9 * np.max(h)
        assert np.all(np.diff(h) <= slack)

    def test_endpoints_pinned_through_solve(self, dw):
        x1 = np.array([-1.0, 0.0])
        x2 = np.array([0.0, 0.0])
        result = solve(dw, x1, x2, GmamSettings(num_points=40))
        assert result.curve.points[0].tobytes() == x1.tobytes()
        assert result.curve.points[-1].tobytes() == x2.tobytes()

    def test_maier_stein_nongradient_beats_axis_path(self, ms10):
        # the on-axis curve is a stationary non-minimizing curve; an off-axis
        # start must relax to a strictly cheaper transition curve
        initial = perturbed_curve([-1.0, 0.0], [0.0, 0.0], 100, amplitude=0.2)
        result = solve(ms10, [-1.0, 0.0], [0.0, 0.0], GmamSettings(num_points=100, max_iterations=50000), initial=initial)
        assert result.converged
        assert 0.0 < result.action < 0.5 - 1e-3
        assert np.max(np.abs(result.curve.points[:, 1])) > 0.05

    def test_maier_stein_gradient_case_matches_potential(self):
        # coupling 1 makes the flow gradient with an analytic barrier of 0.5
        sys = maier_stein(1.0)
        initial = perturbed_curve([-1.0, 0.0], [0.0, 0.0], 100, amplitude=0.1)
        result = solve(sys, [-1.0, 0.0], [0.0, 0.0], GmamSettings(num_points=100), initial=initial)
        assert result.action == pytest.approx(0.5, abs=1e-3)


def reference_additive_step(points, drift_fn, jacobian_fn, dt, lambda_floor=1e-8):
    """Independent implementation of the unit-noise curve evolution step.

    Written directly from the additive-noise form of the flow (covariance
    equal to the identity, no covariance-derivative terms): central
    differences, the same floor convention, semi-implicit curvature term,
    linear arc-length redistribution iterated to a 1e-6 gap deviation.
    """
    m, dim = points.shape
    h = 1.0 / (m - 1)
    b = drift_fn(points)
    jac = jacobian_fn(points)

    seg = np.diff(points, axis=0) / h
    t_left = np.vstack((seg[:1], seg))
    t_right = np.vstack((seg, seg[-1:]))
    tc = 0.5 * (t_left + t_right)

    nb = np.linalg.norm(b, axis=1)
    nt = np.maximum(np.linalg.norm(tc, axis=1), 1e-300)
    lam = nb / nt
    lam = np.maximum(lam, lambda_floor * lam.max())
    lam_prime = np.zeros(m)
    lam_prime[1:-1] = (lam[2:] - lam[:-2]) / (2.0 * h)

    theta = lam[:, None] * tc - b
    rhs = np.zeros_like(points)
    for k in range(1, m - 1):
        rhs[k] = (
            -lam[k] * jac[k] @ tc[k]
            + jac[k].T @ theta[k]
            + lam[k] * lam_prime[k] * tc[k]
        )

    mu = np.zeros(m)
    mu[1:-1] = dt * lam[1:-1] ** 2 / h**2
    band = np.zeros((3, m))
    band[1] = 1.0 + 2.0 * mu
    band[0, 2:] = -mu[1:-1]
    band[2, : m - 2] = -mu[1:-1]
    target = points.copy()
    target[1:-1] += dt * rhs[1:-1]
    out = scipy.linalg.solve_banded((1, 1), band, target)
    out[0] = points[0]
    out[-1] = points[-1]

    for _ in range(30):
        gaps = np.linalg.norm(np.diff(out, axis=0), axis=1)
        s = np.concatenate(([0.0], np.cumsum(gaps)))
        targets = np.linspace(0.0, s[-1], m)
        resampled = np.empty_like(out)
        for j in range(dim):
            resampled[:, j] = np.interp(targets, s, out[:, j])
        resampled[0] = out[0]
        resampled[-1] = out[-1]
        out = resampled
        new_gaps = np.linalg.norm(np.diff(out, axis=0), axis=1)
        mean = new_gaps.mean()
        if np.max(np.abs(new_gaps - mean)) <= 1e-6 * mean:
            break
    return out


class TestAdditiveReduction:
    """With identity covariance the solver must match the additive-form update."""

    def test_covariance_gradient_matrix_vanishes(self, dw):
        rng = np.random.default_rng(3)
        for _ in range(5):
            state = rng.uniform(-1.5, 1.5, size=2)
            tangent = rng.standard_normal(2)
            assert np.allclose(covariance_gradient_matrix(state, tangent, dw), 0.0)

    def test_step_matches_reference(self, dw):
        curve = perturbed_curve([-1.0, 0.0], [1.0, 0.0], 40, amplitude=0.25)
        dt = 2e-4
        ours = gmam_step(curve, dw, GmamSettings(num_points=40), step=dt)
        ref = reference_additive_step(curve.points.copy(), dw.drift, dw.drift_jacobian, dt)
        assert np.allclose(ours.points, ref, rtol=1e-12, atol=1e-13)


class TestVariationalConsistency:
    def test_step_direction_matches_action_gradient(self, dw):
        # the explicit flow velocity equals -lam * A * dS/dphi; check the
        # implied gradient against central differences of the discrete action
        m = 1200
        rng = np.random.default_rng(0)
        curve_pts = init_curve([-1.0, 0.0], [1.0, 0.0], m).points
        alphas = np.linspace(0.0, 1.0, m)
        for mode in (1, 2):
            curve_pts[:, 0] += 0.05 * rng.standard_normal() * np.sin(mode * np.pi * alphas)
            curve_pts[:, 1] += 0.05 * rng.standard_normal() * np.sin(mode * np.pi * alphas)
        curve = Curve(curve_pts)
        settings = GmamSettings(num_points=m, lambda_floor=1e-14)

        rhs = evolution_rhs(curve, dw, settings)
        from gmam.solver import _Workspace

        ws = _Workspace(curve.points, dw)
        lam = ws.speed_ratios(settings.lambda_floor)[1:-1]
        h = 1.0 / (m - 1)
        implied = -np.linalg.solve(ws.cov[1:-1], (rhs / lam[:, None])[..., None])[..., 0] * h

        fd = np.zeros_like(implied)
        delta = 1e-6
        for k in range(1, m - 1):
            for j in range(2):
                plus = curve.points.copy()
                plus[k, j] += delta
                minus = curve.points.copy()
                minus[k, j] -= delta
                fd[k - 1, j] = (action(Curve(plus), dw) - action(Curve(minus), dw)) / (2 * delta)

        rel = np.linalg.norm(fd - implied) / np.linalg.norm(fd)
        assert rel < 1e-4
