"""Drift/diffusion systems and the inverse-covariance metric they induce.

A system ``dX = b(X) dt + sqrt(eta) sigma(X) dW`` defines, through
``A(x) = sigma(x) sigma(x)^T``, a state-dependent inner product
``<u, v>_x = <u, A(x)^-1 v>``.  The transition-cost line density

    l(x, u) = |b(x)|_x |u|_x - <b(x), u>_x

is nonnegative by Cauchy-Schwarz and vanishes exactly when ``u`` points
along the drift, so integrating it over a curve measures how hard the
noise must work to push the state along that curve.

All callables follow numpy batching conventions: states of shape
``(..., dim)`` map to drifts ``(..., dim)``, diffusions ``(..., dim, K)``,
covariances ``(..., dim, dim)`` and covariance derivative stacks
``(..., dim, dim, dim)`` (derivative index first).
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import PositiveDefinitenessViolation


def _fd_steps(x: np.ndarray, rel_step: float) -> np.ndarray:
    # h_i = max(rel_step, rel_step * |x_i|), elementwise
    return np.maximum(rel_step, rel_step * np.abs(x))


def finite_difference_jacobian(func: Callable, x: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian ``J[..., m, i] = d f_m / d x_i``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = _fd_steps(x, rel_step)
    cols = []
    for i in range(n):
        delta = np.zeros_like(x)
        delta[..., i] = h[..., i]
        cols.append((func(x + delta) - func(x - delta)) / (2.0 * h[..., i])[..., None])
    return np.stack(cols, axis=-1)


def finite_difference_matrix_derivatives(func: Callable, x: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference derivative stack of a matrix field.

    Returns ``D[..., i, m, n] = d M_mn / d x_i`` for ``M = func(x)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = _fd_steps(x, rel_step)
    layers = []
    for i in range(n):
        delta = np.zeros_like(x)
        delta[..., i] = h[..., i]
        step = (2.0 * h[..., i])[..., None, None]
        layers.append((func(x + delta) - func(x - delta)) / step)
    return np.stack(layers, axis=-3)


class SdeSystem:
    """Bundle of drift, diffusion and derivative fields for one SDE model.

    Parameters
    ----------
    dim : state dimension.
    drift : callable ``(..., dim) -> (..., dim)``.
    diffusion : callable ``(..., dim) -> (..., dim, K)``.
    covariance : optional callable returning ``sigma sigma^T``; assembled
        from ``diffusion`` when omitted.
    drift_jacobian, covariance_derivatives : optional analytic derivatives;
        central finite differences with relative step ``fd_rel_step`` are
        used when omitted.
    covariance_derivative_contraction : optional fast path computing the
        matrix whose i-th column is ``(dA/dx_i) p`` for a given vector
        ``p``, without materializing the full derivative stack.
    """

    def __init__(
        self,
        dim: int,
        drift: Callable,
        diffusion: Callable,
        covariance: Optional[Callable] = None,
        drift_jacobian: Optional[Callable] = None,
        covariance_derivatives: Optional[Callable] = None,
        covariance_derivative_contraction: Optional[Callable] = None,
        fd_rel_step: float = 1e-6,
        name: str = "",
    ):
        if dim < 1:
            raise ValueError("dim must be a positive integer")
        self.dim = int(dim)
        self.drift = drift
        self.diffusion = diffusion
        self.name = name
        self.fd_rel_step = float(fd_rel_step)

        if covariance is None:
            def covariance(x, _sigma=diffusion):
                s = _sigma(x)
                return s @ np.swapaxes(s, -1, -2)

        self.covariance = covariance

        if drift_jacobian is None:
            def drift_jacobian(x, _f=drift, _h=self.fd_rel_step):
                return finite_difference_jacobian(_f, x, _h)

        self.drift_jacobian = drift_jacobian

        if covariance_derivatives is None:
            def covariance_derivatives(x, _f=self.covariance, _h=self.fd_rel_step):
                return finite_difference_matrix_derivatives(_f, x, _h)

        self.covariance_derivatives = covariance_derivatives

        if covariance_derivative_contraction is None:
            def covariance_derivative_contraction(x, p, _d=self.covariance_derivatives):
                dA = _d(x)
                # column i of the result is (dA/dx_i) p
                return np.einsum("...imn,...n->...mi", dA, p)

        self.covariance_derivative_contraction = covariance_derivative_contraction

    def metric(self, state: np.ndarray) -> "MetricContext":
        """Factorize ``A(state)`` for repeated inverse-covariance products."""
        return MetricContext(state, self.covariance(np.asarray(state, dtype=float)))

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<SdeSystem{label} dim={self.dim}>"


class MetricContext:
    """Cholesky factorization of a covariance matrix at one state.

    Factorizing once and reusing the factor is what makes repeated
    inner products at the same state cheap.
    """

    def __init__(self, state: np.ndarray, covariance: np.ndarray):
        self.state = np.asarray(state, dtype=float)
        self.covariance = np.asarray(covariance, dtype=float)
        if self.covariance.ndim != 2 or self.covariance.shape[0] != self.covariance.shape[1]:
            raise ValueError("covariance must be a square matrix")
        if not np.all(np.isfinite(self.covariance)):
            raise PositiveDefinitenessViolation("covariance contains non-finite entries")
        try:
            self._factor = scipy.linalg.cho_factor(self.covariance, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise PositiveDefinitenessViolation(
                f"covariance is not positive definite at state {self.state!r}"
            ) from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``A z = rhs``."""
        return scipy.linalg.cho_solve(self._factor, np.asarray(rhs, dtype=float))


def inverse_metric_inner(u: np.ndarray, v: np.ndarray, ctx: MetricContext) -> float:
    """Inner product ``<u, A(x)^-1 v>`` in the factorized metric."""
    u = np.asarray(u, dtype=float)
    return float(u @ ctx.solve(v))


def metric_norm(u: np.ndarray, ctx: MetricContext) -> float:
    """Norm ``<u, A(x)^-1 u>^(1/2)``; clips roundoff-negative squares to zero."""
    return math.sqrt(max(inverse_metric_inner(u, u, ctx), 0.0))


def local_action_density(state: np.ndarray, tangent: np.ndarray, sys: SdeSystem) -> float:
    """Transition-cost density ``|b|_x |u|_x - <b, u>_x`` at one state.

    Nonnegative up to roundoff; zero when ``tangent`` is a nonnegative
    multiple of the drift.
    """
    ctx = sys.metric(state)
    b = np.asarray(sys.drift(np.asarray(state, dtype=float)), dtype=float)
    tangent = np.asarray(tangent, dtype=float)
    zb = ctx.solve(b)
    zt = ctx.solve(tangent)
    nb = math.sqrt(max(float(b @ zb), 0.0))
    nt = math.sqrt(max(float(tangent @ zt), 0.0))
    return nb * nt - float(b @ zt)


def batched_cholesky(covariances: np.ndarray) -> np.ndarray:
    """Stacked Cholesky factors; raises on the first non-SPD matrix."""
    if not np.all(np.isfinite(covariances)):
        raise PositiveDefinitenessViolation("covariance contains non-finite entries")
    try:
        return np.linalg.cholesky(covariances)
    except np.linalg.LinAlgError as exc:
        raise PositiveDefinitenessViolation(
            "covariance is not positive definite along the curve"
        ) from exc


def check_system(sys: SdeSystem, states: np.ndarray, rtol_cov: float = 1e-12, rtol_deriv: float = 1e-5) -> None:
    """Validate the structural contracts of a system at sample states.

    Checks that the covariance matches ``sigma sigma^T``, that it is SPD,
    and that supplied derivatives agree with central finite differences.
    Raises ``AssertionError`` or ``PositiveDefinitenessViolation``.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    sigma = sys.diffusion(states)
    cov = sys.covariance(states)
    ref = sigma @ np.swapaxes(sigma, -1, -2)
    scale = np.max(np.abs(ref)) or 1.0
    if not np.allclose(cov, ref, rtol=rtol_cov, atol=rtol_cov * scale):
        raise AssertionError("covariance(x) does not match diffusion(x) diffusion(x)^T")
    batched_cholesky(cov)

    jac = sys.drift_jacobian(states)
    jac_fd = finite_difference_jacobian(sys.drift, states, sys.fd_rel_step)
    jscale = np.max(np.abs(jac_fd)) or 1.0
    if not np.allclose(jac, jac_fd, rtol=rtol_deriv, atol=rtol_deriv * jscale):
        raise AssertionError("drift_jacobian disagrees with finite differences")

    dA = sys.covariance_derivatives(states)
    dA_fd = finite_difference_matrix_derivatives(sys.covariance, states, sys.fd_rel_step)
    dscale = max(np.max(np.abs(dA_fd)), np.max(np.abs(dA)), 1e-300)
    if not np.allclose(dA, dA_fd, rtol=rtol_deriv, atol=rtol_deriv * dscale):
        raise AssertionError("covariance_derivatives disagree with finite differences")
