"""Built-in benchmark systems with known equilibria and barriers.

These fixtures make the solvers testable end to end without any physical
constants: a gradient double well with an analytic barrier, the classic
non-gradient two-dimensional flow with unequal relaxation rates, and the
one-dimensional fold normal form whose barrier is (8/3) a^(3/2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .systems import SdeSystem


def _identity_diffusion(dim: int) -> Callable:
    eye = np.eye(dim)

    def diffusion(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(eye, x.shape[:-1] + (dim, dim)).copy()

    return diffusion


def _zero_matrix_derivatives(dim: int) -> Callable:
    def derivatives(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (dim, dim, dim))

    return derivatives


def _zero_contraction(dim: int) -> Callable:
    def contraction(x, p):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (dim, dim))

    return contraction


def _unit_noise_system(dim: int, drift, drift_jacobian, name: str) -> SdeSystem:
    return SdeSystem(
        dim=dim,
        drift=drift,
        diffusion=_identity_diffusion(dim),
        drift_jacobian=drift_jacobian,
        covariance_derivatives=_zero_matrix_derivatives(dim),
        covariance_derivative_contraction=_zero_contraction(dim),
        name=name,
    )


def double_well() -> SdeSystem:
    """Gradient flow of U = (x^2 - 1)^2 / 4 + y^2 / 2 with unit noise.

    Attractors at (-1, 0) and (1, 0), saddle at the origin; the barrier
    measured by the geometric action between an attractor and the saddle
    is 2 (U(0,0) - U(+-1,0)) = 0.5.
    """

    def drift(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        out[..., 0] = x[..., 0] - x[..., 0] ** 3
        out[..., 1] = -x[..., 1]
        return out

    def drift_jacobian(x):
        x = np.asarray(x, dtype=float)
        jac = np.zeros(x.shape[:-1] + (2, 2))
        jac[..., 0, 0] = 1.0 - 3.0 * x[..., 0] ** 2
        jac[..., 1, 1] = -1.0
        return jac

    return _unit_noise_system(2, drift, drift_jacobian, "double_well")


def double_well_potential(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (x[..., 0] ** 2 - 1.0) ** 2 / 4.0 + x[..., 1] ** 2 / 2.0


def maier_stein(coupling: float = 10.0) -> SdeSystem:
    """Two-dimensional flow b = (x - x^3 - c x y^2, -(1 + x^2) y), unit noise.

    Non-gradient for c != 1; attractors at (+-1, 0), saddle at the origin.
    At c = 1 it is the gradient flow of -x^2/2 + x^4/4 + (1 + x^2) y^2 / 2.
    """
    c = float(coupling)

    def drift(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        u, v = x[..., 0], x[..., 1]
        out[..., 0] = u - u**3 - c * u * v**2
        out[..., 1] = -(1.0 + u**2) * v
        return out

    def drift_jacobian(x):
        x = np.asarray(x, dtype=float)
        u, v = x[..., 0], x[..., 1]
        jac = np.zeros(x.shape[:-1] + (2, 2))
        jac[..., 0, 0] = 1.0 - 3.0 * u**2 - c * v**2
        jac[..., 0, 1] = -2.0 * c * u * v
        jac[..., 1, 0] = -2.0 * u * v
        jac[..., 1, 1] = -(1.0 + u**2)
        return jac

    return _unit_noise_system(2, drift, drift_jacobian, "maier_stein")


def saddle_node_normal_form(threshold_distance: float, embedded: bool = False) -> SdeSystem:
    """Fold normal form b(x) = a - x^2 with unit noise.

    The attractor sits at +sqrt(a), the unstable point at -sqrt(a); they
    collide as a -> 0.  The barrier between them is (8/3) a^(3/2).  With
    ``embedded=True`` the flow is lifted to (a - x^2, -y) in the plane.
    """
    a = float(threshold_distance)

    if not embedded:

        def drift(x):
            x = np.asarray(x, dtype=float)
            return a - x**2

        def drift_jacobian(x):
            x = np.asarray(x, dtype=float)
            return (-2.0 * x)[..., None]

        return _unit_noise_system(1, drift, drift_jacobian, "saddle_node_normal_form")

    def drift(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        out[..., 0] = a - x[..., 0] ** 2
        out[..., 1] = -x[..., 1]
        return out

    def drift_jacobian(x):
        x = np.asarray(x, dtype=float)
        jac = np.zeros(x.shape[:-1] + (2, 2))
        jac[..., 0, 0] = -2.0 * x[..., 0]
        jac[..., 1, 1] = -1.0
        return jac

    return _unit_noise_system(2, drift, drift_jacobian, "saddle_node_normal_form_2d")


def saddle_node_barrier(threshold_distance: float) -> float:
    """Analytic barrier (8/3) a^(3/2) of the fold normal form."""
    return 8.0 / 3.0 * float(threshold_distance) ** 1.5


@dataclass
class TransitionFamily:
    """A system family over one scalar parameter, with equilibrium seeds.

    ``attractor_guess`` seeds the metastable state whose escape is being
    studied.  The saddle between basins is seeded either directly
    (``saddle_guess``) or through a drift-relaxed curve toward
    ``partner_guess`` (the neighboring attractor or a point beyond the
    unstable equilibrium).
    """

    system: Callable[[float], SdeSystem]
    attractor_guess: Callable[[float], np.ndarray]
    saddle_guess: Optional[Callable[[float], np.ndarray]] = None
    partner_guess: Optional[Callable[[float], np.ndarray]] = None
    parameter_name: str = "V"


def saddle_node_family() -> TransitionFamily:
    """Fold normal form parameterized by its distance-to-threshold a."""
    return TransitionFamily(
        system=lambda a: saddle_node_normal_form(a),
        attractor_guess=lambda a: np.array([np.sqrt(max(a, 0.0))]),
        saddle_guess=lambda a: np.array([-np.sqrt(max(a, 0.0))]),
        partner_guess=lambda a: np.array([-2.0 * np.sqrt(max(a, 0.0)) - 0.1]),
        parameter_name="a",
    )


def shifted_fold_family(threshold: float = 1.0) -> TransitionFamily:
    """Fold normal form reparameterized as b = (threshold - V) - x^2.

    The equilibria +-sqrt(threshold - V) exist for V < threshold and
    collide at V = threshold, so the family has a fold at a known
    parameter value; used to exercise continuation and fold location.
    """
    th = float(threshold)

    def offset(v):
        return np.sqrt(max(th - v, 0.0))

    return TransitionFamily(
        system=lambda v: saddle_node_normal_form(th - v),
        attractor_guess=lambda v: np.array([offset(v)]),
        saddle_guess=lambda v: np.array([-offset(v)]),
        partner_guess=lambda v: np.array([-2.0 * offset(v) - 0.1]),
        parameter_name="V",
    )
