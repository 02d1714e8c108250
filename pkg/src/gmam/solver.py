"""Evolution of discretized curves toward the minimum of the geometric action.

The transition cost of a curve is the parameterization-invariant integral
of the local action density (see :mod:`gmam.systems`).  Minimizing it over
curves with pinned endpoints yields the quasipotential barrier between the
endpoints and the maximum-likelihood transition curve itself.

The minimizing flow used here is the descent PDE for the action,
preconditioned pointwise by ``lam * A``:

    d(phi)/d(tau) = lam^2 phi'' - lam (Jb + C) phi'
                    + A (Jb + C/2)^T p + lam lam' phi'

with ``lam = |b|_phi / |phi'|_phi``, momentum ``p = A^-1 (lam phi' - b)``,
``Jb`` the drift Jacobian, and ``C`` the matrix whose i-th column is
``(dA/dx_i) p``.  One can check directly that this right-hand side equals
``-lam * A * (dS/dphi)``, so stationary curves of the flow are exactly the
stationary curves of the action.  The stiff ``phi''`` term is treated
implicitly (a tridiagonal solve per state component), and the points are
redistributed equidistantly after every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .curves import Curve, init_curve, redistribute
from .errors import StepFailure, ZeroTangent
from .systems import SdeSystem, batched_cholesky

_TINY = 1e-300


@dataclass
class GmamSettings:
    """Numerical parameters of the curve evolution.

    ``step=None`` selects adaptive step-size control: the step starts at
    ``1e-4 h^2 / lam_max^2``, is halved whenever the action increases, and
    grows geometrically after a few accepted steps.  ``lambda_floor`` is
    relative to the largest speed ratio on the current curve; it keeps the
    flow nondegenerate at equilibrium endpoints where the drift vanishes.
    ``convergence_tol`` bounds the sup-norm point displacement per unit
    step, in state units.
    """

    num_points: int = 100
    step: Optional[float] = None
    max_iterations: int = 20000
    convergence_tol: float = 1e-8
    lambda_floor: float = 1e-8
    redistribution_interpolation: str = "linear"
    redistribution_tol: float = 1e-6
    step_growth: float = 2.0
    step_growth_patience: int = 2
    step_shrink: float = 0.5
    step_safety: float = 0.0  # 0 disables the explicit-term stability cap
    action_increase_rtol: float = 1e-10
    action_plateau_rtol: float = 0.0  # 0 disables the plateau stopping rule
    action_plateau_patience: int = 200

    def __post_init__(self):
        if self.num_points < 3:
            raise ValueError("num_points must be at least 3")
        if self.step is not None and self.step <= 0.0:
            raise ValueError("step must be positive")
        if self.convergence_tol <= 0.0 or self.lambda_floor <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.redistribution_interpolation not in ("linear", "cubic"):
            raise ValueError("redistribution_interpolation must be 'linear' or 'cubic'")


@dataclass
class GmamResult:
    """Converged (or best-effort) minimizer and its action."""

    curve: Curve
    action: float
    iterations_used: int
    converged: bool
    action_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    final_step: float = 0.0


class _Workspace:
    """Per-curve cache of drift, covariance and inverse-covariance products."""

    def __init__(self, points: np.ndarray, sys: SdeSystem):
        m = points.shape[0]
        self.points = points
        self.h = 1.0 / (m - 1)
        self.drift = np.asarray(sys.drift(points), dtype=float)
        self.cov = np.asarray(sys.covariance(points), dtype=float)
        batched_cholesky(self.cov)

        seg = np.diff(points, axis=0) / self.h
        self.t_left = np.concatenate((seg[:1], seg), axis=0)
        self.t_right = np.concatenate((seg, seg[-1:]), axis=0)

        rhs = np.stack((self.drift, self.t_left, self.t_right), axis=-1)
        z = np.linalg.solve(self.cov, rhs)
        self.z_drift = z[..., 0]
        self.z_left = z[..., 1]
        self.z_right = z[..., 2]
        self.drift_norm2 = np.maximum(np.einsum("km,km->k", self.drift, self.z_drift), 0.0)

    def action(self) -> float:
        """Trapezoidal quadrature of the action density with midpoint tangents."""
        nt2_right = np.maximum(np.einsum("km,km->k", self.t_right, self.z_right), 0.0)
        nt2_left = np.maximum(np.einsum("km,km->k", self.t_left, self.z_left), 0.0)
        bt_right = np.einsum("km,km->k", self.t_right, self.z_drift)
        bt_left = np.einsum("km,km->k", self.t_left, self.z_drift)
        dens_right = np.maximum(np.sqrt(self.drift_norm2 * nt2_right) - bt_right, 0.0)
        dens_left = np.maximum(np.sqrt(self.drift_norm2 * nt2_left) - bt_left, 0.0)
        return float(self.h * 0.5 * np.sum(dens_right[:-1] + dens_left[1:]))

    def speed_ratios(self, floor_rel: float) -> np.ndarray:
        """Floored ratio |b|_phi / |phi'|_phi at every node (central tangents)."""
        tc = 0.5 * (self.t_left + self.t_right)
        zc = 0.5 * (self.z_left + self.z_right)
        nt2 = np.maximum(np.einsum("km,km->k", tc, zc), _TINY)
        lam = np.sqrt(self.drift_norm2 / nt2)
        lam_max = float(np.max(lam))
        return np.maximum(lam, floor_rel * lam_max)

    def momentum(self, lam: np.ndarray) -> np.ndarray:
        """p = A^-1 (lam phi' - b), reusing the factorized solves."""
        zc = 0.5 * (self.z_left + self.z_right)
        return lam[:, None] * zc - self.z_drift


def _explicit_terms(ws: _Workspace, sys: SdeSystem, lam: np.ndarray):
    """Interior explicit right-hand side, curvature term, and stiffness scale."""
    points, h = ws.points, ws.h
    tc = 0.5 * (ws.t_left + ws.t_right)
    p = ws.momentum(lam)
    jac = np.asarray(sys.drift_jacobian(points), dtype=float)
    cmat = np.asarray(sys.covariance_derivative_contraction(points, p), dtype=float)

    lam_prime = (lam[2:] - lam[:-2]) / (2.0 * h)

    jac_i = jac[1:-1]
    cmat_i = cmat[1:-1]
    tc_i = tc[1:-1]
    p_i = p[1:-1]
    lam_i = lam[1:-1]

    combined = jac_i + cmat_i
    advect = np.einsum("kmn,kn->km", combined, tc_i)
    pullback = np.einsum("knm,kn->km", jac_i + 0.5 * cmat_i, p_i)
    restoring = np.einsum("kmn,kn->km", ws.cov[1:-1], pullback)
    explicit = (
        -lam_i[:, None] * advect
        + restoring
        + (lam_i * lam_prime)[:, None] * tc_i
    )
    curvature = (points[2:] - 2.0 * points[1:-1] + points[:-2]) / h**2
    # explicit-term stiffness: the reaction/advection rate lam * |Jb + C|
    op_norms = np.sqrt(np.einsum("kmn,kmn->k", combined, combined))
    stiffness = float(np.max(lam_i * op_norms))
    return explicit, curvature, lam_i, stiffness


def _implicit_update(points: np.ndarray, explicit: np.ndarray, lam_interior: np.ndarray, dt: float, h: float) -> np.ndarray:
    """Semi-implicit step: the lam^2 phi'' term is solved tridiagonally.

    Rows 0 and M-1 are identity rows, so the endpoints are reproduced
    bit for bit.
    """
    m = points.shape[0]
    mu = np.zeros(m)
    mu[1:-1] = dt * lam_interior**2 / h**2
    band = np.zeros((3, m))
    band[1] = 1.0 + 2.0 * mu
    band[0, 2:] = -mu[1:-1]
    band[2, : m - 2] = -mu[1:-1]
    rhs = points.copy()
    rhs[1:-1] += dt * explicit
    try:
        out = scipy.linalg.solve_banded((1, 1), band, rhs)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise StepFailure("tridiagonal solve failed") from exc
    if not np.all(np.isfinite(out)):
        raise StepFailure("curve update produced non-finite points")
    out[0] = points[0]
    out[-1] = points[-1]
    return out


def action(curve: Curve, sys: SdeSystem) -> float:
    """Geometric action of a discrete curve (nonnegative)."""
    return _Workspace(curve.points, sys).action()


def speed_ratio(state, tangent, sys: SdeSystem, floor: float = 0.0) -> float:
    """Ratio |b(x)|_x / |tangent|_x, floored from below by ``floor``."""
    ctx = sys.metric(state)
    tangent = np.asarray(tangent, dtype=float)
    nt2 = float(tangent @ ctx.solve(tangent))
    if nt2 <= 0.0:
        raise ZeroTangent("tangent has zero metric norm")
    b = np.asarray(sys.drift(np.asarray(state, dtype=float)), dtype=float)
    nb2 = max(float(b @ ctx.solve(b)), 0.0)
    return max(math.sqrt(nb2 / nt2), floor)


def momentum(state, tangent, sys: SdeSystem, floor: float = 0.0) -> np.ndarray:
    """Conjugate momentum ``A^-1 (lam * tangent - b)`` along a curve direction."""
    lam = speed_ratio(state, tangent, sys, floor)
    ctx = sys.metric(state)
    b = np.asarray(sys.drift(np.asarray(state, dtype=float)), dtype=float)
    return ctx.solve(lam * np.asarray(tangent, dtype=float) - b)


def covariance_gradient_matrix(state, tangent, sys: SdeSystem, floor: float = 0.0) -> np.ndarray:
    """Matrix whose i-th column is ``(dA/dx_i) p`` for the local momentum p."""
    p = momentum(state, tangent, sys, floor)
    state = np.asarray(state, dtype=float)
    return np.asarray(sys.covariance_derivative_contraction(state, p), dtype=float)


def evolution_rhs(curve: Curve, sys: SdeSystem, settings: GmamSettings) -> np.ndarray:
    """Full explicit flow velocity at the interior nodes (no implicit split).

    Equals ``-lam * A * grad S`` evaluated with the solver's own
    discretization; exposed for variational diagnostics.
    """
    ws = _Workspace(curve.points, sys)
    lam = ws.speed_ratios(settings.lambda_floor)
    explicit, curvature, lam_i, _ = _explicit_terms(ws, sys, lam)
    return lam_i[:, None] ** 2 * curvature + explicit


def gmam_step(curve: Curve, sys: SdeSystem, settings: GmamSettings, step: Optional[float] = None) -> Curve:
    """One semi-implicit evolution step followed by equidistant redistribution."""
    dt = settings.step if step is None else step
    if dt is None:
        raise ValueError("an explicit step size is required for a single step")
    ws = _Workspace(curve.points, sys)
    lam = ws.speed_ratios(settings.lambda_floor)
    explicit, _, lam_i, _ = _explicit_terms(ws, sys, lam)
    moved = _implicit_update(ws.points, explicit, lam_i, dt, ws.h)
    return redistribute(
        Curve(moved),
        interpolation=settings.redistribution_interpolation,
        tol=settings.redistribution_tol,
    )


def _degenerate_result(x1: np.ndarray, settings: GmamSettings) -> GmamResult:
    points = np.tile(np.atleast_1d(x1), (settings.num_points, 1))
    return GmamResult(Curve(points), 0.0, 0, True, np.zeros(1), 0.0)


def solve(
    sys: SdeSystem,
    x1,
    x2,
    settings: Optional[GmamSettings] = None,
    initial: Optional[Curve] = None,
) -> GmamResult:
    """Evolve a curve from x1 to x2 until the flow is stationary.

    ``initial`` warm-starts the evolution; its endpoints are re-pinned to
    x1 and x2.  Non-convergence within the iteration budget is reported
    through the ``converged`` flag, not as an error.
    """
    settings = settings or GmamSettings()
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if np.array_equal(x1, x2):
        return _degenerate_result(x1, settings)

    if initial is not None:
        points = initial.points.copy()
        points[0] = x1
        points[-1] = x2
        curve = redistribute(
            Curve(points),
            interpolation=settings.redistribution_interpolation,
            tol=settings.redistribution_tol,
        )
    else:
        curve = init_curve(x1, x2, settings.num_points)

    ws = _Workspace(curve.points, sys)
    current_action = ws.action()
    history = [current_action]

    lam = ws.speed_ratios(settings.lambda_floor)
    lam_max = float(np.max(lam))
    if lam_max <= 0.0:
        # drift vanishes along the whole curve: already stationary
        return GmamResult(Curve(ws.points), current_action, 0, True, np.asarray(history), 0.0)

    if settings.step is not None:
        dt = settings.step
        adaptive = False
    else:
        dt = 1e-4 * ws.h**2 / lam_max**2
        adaptive = True
    dt_floor = dt * 1e-15

    action_scale = max(abs(current_action), _TINY)
    streak = 0
    converged = False
    iterations = 0

    while iterations < settings.max_iterations:
        iterations += 1
        lam = ws.speed_ratios(settings.lambda_floor)
        explicit, _, lam_i, stiffness = _explicit_terms(ws, sys, lam)
        if adaptive and settings.step_safety > 0.0 and stiffness > 0.0:
            dt = min(dt, settings.step_safety / stiffness)
        moved = _implicit_update(ws.points, explicit, lam_i, dt, ws.h)
        new_curve = redistribute(
            Curve(moved),
            interpolation=settings.redistribution_interpolation,
            tol=settings.redistribution_tol,
        )
        new_ws = _Workspace(new_curve.points, sys)
        new_action = new_ws.action()

        if adaptive and new_action - current_action > settings.action_increase_rtol * action_scale:
            dt *= settings.step_shrink
            streak = 0
            if dt < dt_floor:
                break
            continue

        displacement = float(np.max(np.abs(new_curve.points - ws.points)))
        ws = new_ws
        current_action = new_action
        action_scale = max(action_scale, abs(current_action))
        history.append(current_action)

        if displacement / dt < settings.convergence_tol:
            converged = True
            break
        if settings.action_plateau_rtol > 0.0:
            window = settings.action_plateau_patience
            if len(history) > window and (
                abs(history[-1] - history[-1 - window]) <= settings.action_plateau_rtol * action_scale
            ):
                converged = True
                break

        if adaptive:
            streak += 1
            if streak >= settings.step_growth_patience:
                dt *= settings.step_growth
                streak = 0

    return GmamResult(
        curve=Curve(ws.points),
        action=current_action,
        iterations_used=iterations,
        converged=converged,
        action_history=np.asarray(history),
        final_step=dt,
    )
