"""Equilibrium location, saddle search along relaxed curves, and fold continuation.

The saddle between two attractors is found in three stages: relax a curve
between the attractors under the drift until it is everywhere parallel or
antiparallel to it, scan the relaxed curve for the point of smallest drift
magnitude, then polish that point with Newton iteration.  Continuation in
a scalar parameter tracks an equilibrium branch until Newton stops
converging, and the fold is bracketed by bisection and certified by the
leading Jacobian eigenvalue approaching zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .curves import Curve, init_curve, redistribute
from .errors import (
    ContinuationStalled,
    NoConvergence,
    NotAFold,
    SaddleNotFound,
    SameBasinWarning,
    SingularJacobian,
)
from .systems import SdeSystem


@dataclass
class Equilibrium:
    """A converged zero of the drift with its linear stability."""

    state: np.ndarray
    stability: str  # "stable", "saddle" or "unstable"
    jacobian_eigen_realparts: np.ndarray
    residual_norm: float


def classify_stability(eigen_realparts: np.ndarray, dead_band: float = 1e-10) -> str:
    """Label by signs of Jacobian eigenvalue real parts.

    ``saddle`` means exactly one real part above the dead band and all
    others below it (the codimension-one transition case); anything
    marginal or with more unstable directions is labelled ``unstable``.
    The dead band is relative to the eigenvalue magnitude scale.
    """
    re = np.asarray(eigen_realparts, dtype=float)
    band = dead_band * max(1.0, float(np.max(np.abs(re))) if re.size else 1.0)
    n_pos = int(np.sum(re > band))
    n_neg = int(np.sum(re < -band))
    if n_neg == re.size:
        return "stable"
    if n_pos == 1 and n_neg == re.size - 1:
        return "saddle"
    return "unstable"


def newton_equilibrium(
    sys: SdeSystem,
    x0,
    tol: float = 1e-10,
    max_iter: int = 60,
    dead_band: float = 1e-10,
) -> Equilibrium:
    """Newton iteration on b(x) = 0 with backtracking on |b|.

    Converges when the Euclidean drift norm drops below ``tol``; the
    returned stability label comes from the eigenvalues of the drift
    Jacobian at the root.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    b = np.asarray(sys.drift(x), dtype=float)
    res = float(np.linalg.norm(b))
    for _ in range(max_iter):
        if res < tol:
            break
        jac = np.asarray(sys.drift_jacobian(x), dtype=float)
        try:
            step = np.linalg.solve(jac, -b)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(f"drift Jacobian singular near {x!r}") from exc
        scale = 1.0
        while scale >= 1e-6:
            x_try = x + scale * step
            b_try = np.asarray(sys.drift(x_try), dtype=float)
            res_try = float(np.linalg.norm(b_try))
            if np.isfinite(res_try) and res_try < (1.0 - 1e-4 * scale) * res:
                break
            scale *= 0.5
        else:
            raise NoConvergence(f"line search stalled at |b|={res:.3e}")
        x, b, res = x_try, b_try, res_try
    if res >= tol:
        raise NoConvergence(f"Newton did not reach |b| < {tol:.3e} (got {res:.3e})")
    eigvals = np.linalg.eigvals(np.asarray(sys.drift_jacobian(x), dtype=float))
    realparts = np.sort(eigvals.real)[::-1]
    return Equilibrium(
        state=x,
        stability=classify_stability(realparts, dead_band),
        jacobian_eigen_realparts=realparts,
        residual_norm=res,
    )


def relax_equilibrium(
    sys: SdeSystem,
    x0,
    tol: float = 1e-10,
    dt0: Optional[float] = None,
    max_iter: int = 2000,
    dead_band: float = 1e-10,
) -> Equilibrium:
    """Pseudo-transient relaxation to an attractor, then Newton polish.

    Backward-Euler steps ``(I - dt Jb) d = dt b`` follow the stable
    dynamics from a rough seed; the step grows while the residual falls
    and shrinks otherwise, but every finite step is taken, which lets the
    iteration ride through non-normal transient growth that defeats a
    monotone line search.  Useful when a seed is too far from the
    attractor for plain Newton.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    dim = x.size
    eye = np.eye(dim)
    b = np.asarray(sys.drift(x), dtype=float)
    res = float(np.linalg.norm(b))
    res0 = max(res, 1e-300)
    best_x, best_res = x.copy(), res

    if dt0 is None:
        jac = np.asarray(sys.drift_jacobian(x), dtype=float)
        stiffness = float(np.max(np.abs(jac)))
        dt0 = 1e-4 / stiffness if stiffness > 0 else 1.0
    dt = dt0

    for _ in range(max_iter):
        if res < tol:
            break
        jac = np.asarray(sys.drift_jacobian(x), dtype=float)
        try:
            delta = np.linalg.solve(eye - dt * jac, dt * b)
        except np.linalg.LinAlgError:
            dt *= 0.25
            continue
        x_try = x + delta
        b_try = np.asarray(sys.drift(x_try), dtype=float)
        res_try = float(np.linalg.norm(b_try))
        if not np.all(np.isfinite(b_try)) or res_try > 1e4 * max(res0, best_res):
            # diverged: restart from the best point at the initial step
            x, b, res = best_x.copy(), np.asarray(sys.drift(best_x), dtype=float), best_res
            dt = dt0
            continue
        improved = res_try <= res
        x, b, res = x_try, b_try, res_try
        if res < best_res:
            best_x, best_res = x.copy(), res
        dt = min(max(dt * (1.5 if improved else 0.5), 1e-6 * dt0), 1e12 * dt0)
    else:
        if best_res >= tol:
            raise NoConvergence(
                f"pseudo-transient relaxation stalled at |b|={best_res:.3e}"
            )
        x = best_x

    return newton_equilibrium(sys, x, tol=tol, dead_band=dead_band)


@dataclass
class StringResult:
    """Drift-relaxed curve with parallelism diagnostics."""

    curve: Curve
    parallelism_residual: float  # max interior 1 - |cos(angle(b, tangent))|
    transverse_fraction: float  # max interior |sin(angle(b, tangent))|
    steps_used: int
    same_basin: bool


def _parallelism(points: np.ndarray, drift: np.ndarray):
    tangents = points[2:] - points[:-2]
    b = drift[1:-1]
    nt = np.linalg.norm(tangents, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = np.maximum(nt * nb, 1e-300)
    cosang = np.abs(np.einsum("km,km->k", tangents, b)) / denom
    cosang = np.clip(cosang, 0.0, 1.0)
    mask = nb > 1e-13 * max(float(np.max(nb)), 1e-300)
    if not np.any(mask):
        return 0.0, 0.0
    res = 1.0 - cosang[mask]
    sin = np.sqrt(np.maximum(1.0 - cosang[mask] ** 2, 0.0))
    return float(np.max(res)), float(np.max(sin))


def _relax_to_limit(sys: SdeSystem, x, max_steps: int = 4000, tol: float = 1e-12):
    """Follow the drift from a single point until it stops moving."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    for _ in range(max_steps):
        b = np.asarray(sys.drift(x), dtype=float)
        nb = float(np.linalg.norm(b))
        scale = max(float(np.linalg.norm(x)), 1.0)
        if nb < tol * scale:
            break
        x = x + min(0.1, 0.1 * scale / nb) * b
    return x


def string_relax(
    sys: SdeSystem,
    x1,
    x2,
    num_points: int = 64,
    steps: int = 4000,
    displacement_tol: float = 1e-12,
) -> StringResult:
    """Relax the interior of a curve under the drift, re-spacing every step.

    The endpoints stay fixed.  The converged curve is everywhere parallel
    or antiparallel to the drift, so it threads through the equilibrium
    between the endpoint basins; drift-magnitude scanning plus Newton can
    then extract that equilibrium.  Endpoints relaxing to the same
    attractor are reported through ``same_basin`` and a warning.
    """
    curve = init_curve(x1, x2, num_points)
    points = curve.points
    same_basin = False
    limit1 = _relax_to_limit(sys, points[0])
    limit2 = _relax_to_limit(sys, points[-1])
    span = max(float(np.linalg.norm(points[-1] - points[0])), 1e-300)
    if float(np.linalg.norm(limit1 - limit2)) < 1e-3 * span:
        same_basin = True
        warnings.warn(
            "string endpoints relax to the same attractor; no saddle lies between them",
            SameBasinWarning,
        )

    used = steps
    for it in range(steps):
        b = np.asarray(sys.drift(points), dtype=float)
        gaps = np.linalg.norm(np.diff(points, axis=0), axis=1)
        spacing = float(np.mean(gaps))
        # Euler step bounded by local spacing and by a drift Lipschitz estimate
        bmax = float(np.max(np.linalg.norm(b[1:-1], axis=1))) if num_points > 2 else 0.0
        db = np.linalg.norm(np.diff(b, axis=0), axis=1)
        lip = float(np.max(db / np.maximum(gaps, 1e-300)))
        dt_candidates = [0.5 / lip if lip > 0 else np.inf]
        if bmax > 0:
            dt_candidates.append(0.5 * spacing / bmax)
        dt = min(dt_candidates)
        if not np.isfinite(dt):
            used = it
            break
        moved = points.copy()
        moved[1:-1] += dt * b[1:-1]
        new_points = redistribute(Curve(moved)).points
        displacement = float(np.max(np.abs(new_points - points)))
        points = new_points
        if displacement < displacement_tol * max(spacing, 1e-300):
            used = it + 1
            break

    drift_final = np.asarray(sys.drift(points), dtype=float)
    residual, transverse = _parallelism(points, drift_final)
    return StringResult(
        curve=Curve(points),
        parallelism_residual=residual,
        transverse_fraction=transverse,
        steps_used=used,
        same_basin=same_basin,
    )


def find_saddle(
    sys: SdeSystem,
    curve: Curve,
    tol: float = 1e-10,
    scan_threshold: Optional[float] = None,
    dead_band: float = 1e-10,
) -> Equilibrium:
    """Scan a curve's interior for the smallest |b| and polish with Newton.

    Fails with ``SaddleNotFound`` when the scan minimum exceeds
    ``scan_threshold``, when Newton lands on one of the curve's endpoints,
    or when the converged point is not saddle-classified.
    """
    points = curve.points
    drift = np.asarray(sys.drift(points), dtype=float)
    norms = np.linalg.norm(drift[1:-1], axis=1)
    k_min = int(np.argmin(norms))
    if scan_threshold is not None and norms[k_min] > scan_threshold:
        raise SaddleNotFound(
            f"no interior drift minimum below {scan_threshold:.3e} (min {norms[k_min]:.3e})"
        )
    try:
        eq = newton_equilibrium(sys, points[1 + k_min], tol=tol, dead_band=dead_band)
    except (NoConvergence, SingularJacobian) as exc:
        raise SaddleNotFound("Newton refinement from the scan point failed") from exc

    span = max(float(np.linalg.norm(points[-1] - points[0])), 1e-300)
    for endpoint in (points[0], points[-1]):
        if float(np.linalg.norm(eq.state - endpoint)) < 1e-6 * span:
            raise SaddleNotFound("saddle search converged onto a curve endpoint")
    if eq.stability != "saddle":
        raise SaddleNotFound(f"scan point converged to a {eq.stability} equilibrium")
    return eq


@dataclass
class EquilibriumBranch:
    """Continuation record of one equilibrium branch in a scalar parameter."""

    parameter_values: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    stabilities: List[str] = field(default_factory=list)
    min_eig_magnitudes: List[float] = field(default_factory=list)
    fold_parameter: Optional[float] = None
    fold_bracket: Optional[tuple] = None  # (last good V, first failing V)

    def append(self, value: float, eq: Equilibrium):
        self.parameter_values.append(float(value))
        self.states.append(np.asarray(eq.state, dtype=float))
        self.stabilities.append(eq.stability)
        self.min_eig_magnitudes.append(float(np.min(np.abs(eq.jacobian_eigen_realparts))))

    def last_state(self) -> np.ndarray:
        return self.states[-1]


def continue_branch(
    family: Callable[[float], SdeSystem],
    start: Equilibrium,
    v_start: float,
    v_end: float,
    initial_step: float,
    tol: float = 1e-10,
    min_step_fraction: float = 1e-4,
    max_points: int = 100000,
    dead_band: float = 1e-10,
) -> EquilibriumBranch:
    """Natural-parameter continuation with step halving on Newton failure.

    The previous state is the predictor.  The branch stops either at
    ``v_end`` or where Newton keeps failing at the smallest allowed step;
    the latter is recorded as a fold bracket for :func:`locate_fold`.
    A stall without any Newton failure raises ``ContinuationStalled``.
    """
    if initial_step <= 0:
        raise ValueError("initial_step must be positive")
    direction = 1.0 if v_end >= v_start else -1.0
    branch = EquilibriumBranch()
    branch.append(v_start, start)

    v = float(v_start)
    state = np.asarray(start.state, dtype=float)
    step = float(initial_step)
    min_step = initial_step * min_step_fraction

    while len(branch.parameter_values) < max_points:
        if direction * (v - v_end) >= 0.0:
            break
        v_next = v + direction * step
        if direction * (v_next - v_end) > 0.0:
            v_next = v_end
        try:
            eq = newton_equilibrium(family(v_next), state, tol=tol, dead_band=dead_band)
            v = v_next
            state = eq.state
            branch.append(v, eq)
            continue
        except (NoConvergence, SingularJacobian):
            pass
        if step <= min_step:
            branch.fold_bracket = (v, v_next)
            return branch
        step = max(step * 0.5, min_step)

    if direction * (v - v_end) < 0.0 and branch.fold_bracket is None:
        raise ContinuationStalled(
            f"continuation stopped at {v!r} before {v_end!r} without a fold bracket"
        )
    return branch


def locate_fold(
    family: Callable[[float], SdeSystem],
    branch: EquilibriumBranch,
    tol_v: float = 1e-7,
    tol: float = 1e-10,
    decay_slack: float = 3.0,
    dead_band: float = 1e-10,
) -> float:
    """Refine a fold bracket by bisection and certify it spectrally.

    Bisection narrows the parameter window between the last Newton success
    and the first failure below ``tol_v``.  The fold is certified by the
    square-root decay of the smallest-magnitude Jacobian eigenvalue along
    the approach: for a quadratic fold the log-log slope of eigenvalue
    magnitude against parameter distance sits near 1/2, accepted within a
    factor ``decay_slack``.  Otherwise ``NotAFold`` is raised.
    """
    if branch.fold_bracket is None:
        raise NotAFold("branch carries no fold bracket")
    v_ok, v_bad = branch.fold_bracket
    state = branch.last_state().copy()
    trace = list(zip(branch.parameter_values, branch.min_eig_magnitudes))

    while abs(v_bad - v_ok) > tol_v:
        v_mid = 0.5 * (v_ok + v_bad)
        try:
            eq = newton_equilibrium(family(v_mid), state, tol=tol, dead_band=dead_band)
            v_ok = v_mid
            state = eq.state
            trace.append((v_mid, float(np.min(np.abs(eq.jacobian_eigen_realparts)))))
        except (NoConvergence, SingularJacobian):
            v_bad = v_mid

    fold = 0.5 * (v_ok + v_bad)
    window = abs(v_bad - v_ok)

    distances = np.array([abs(fold - v) for v, _ in trace])
    mus = np.array([mu for _, mu in trace])
    d_far = float(np.max(distances))
    # trim points too close to the fold: the parameter bracket and Newton's
    # own resolution floor contaminate the eigenvalue there
    d_cut = max(4.0 * window, 1e-5 * d_far)
    keep = (distances >= d_cut) & (mus > 0.0)
    if np.count_nonzero(keep) < 3 or d_far <= 16.0 * d_cut:
        raise NotAFold("continuation trace spans too little of the approach to the fold")
    slope = np.polyfit(np.log(distances[keep]), np.log(mus[keep]), 1)[0]
    order = np.argsort(distances[keep])
    mu_sorted = mus[keep][order]
    decay = mu_sorted[-1] / max(mu_sorted[0], 1e-300)
    # quadratic fold: mu ~ sqrt(distance), so the log-log slope sits near 1/2
    if not (0.5 / decay_slack <= slope <= 0.5 * decay_slack) or decay < 3.0:
        raise NotAFold(
            f"leading eigenvalue does not show square-root decay toward the fold "
            f"(log-log slope {slope:.3f}, overall decay factor {decay:.2f})"
        )
    branch.fold_parameter = fold
    return fold


def transition_triple(
    sys: SdeSystem,
    guess_a,
    guess_b,
    newton_tol: float = 1e-10,
    string_points: int = 64,
    string_steps: int = 4000,
    saddle_tol: Optional[float] = None,
    dead_band: float = 1e-10,
):
    """Attractor, saddle, attractor via Newton + string relaxation.

    Returns ``(eq_a, saddle, eq_b, string_result)``.
    """
    eq_a = newton_equilibrium(sys, guess_a, tol=newton_tol, dead_band=dead_band)
    eq_b = newton_equilibrium(sys, guess_b, tol=newton_tol, dead_band=dead_band)
    string = string_relax(sys, eq_a.state, eq_b.state, num_points=string_points, steps=string_steps)
    saddle = find_saddle(sys, string.curve, tol=saddle_tol or newton_tol, dead_band=dead_band)
    return eq_a, saddle, eq_b, string


def write_branch_csv(path, branch: EquilibriumBranch, currents: Optional[Sequence[float]] = None) -> None:
    """Write ``V, stability, x_1..x_N, J, min_eig`` rows (J blank when absent)."""
    if not branch.states:
        raise ValueError("empty branch")
    dim = branch.states[0].size
    header = ["V", "stability"] + [f"x_{i + 1}" for i in range(dim)] + ["J", "min_eig_magnitude"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i, v in enumerate(branch.parameter_values):
            row = [f"{v:.17g}", branch.stabilities[i]]
            row += [f"{x:.17g}" for x in branch.states[i]]
            row.append("" if currents is None else f"{currents[i]:.17g}")
            row.append(f"{branch.min_eig_magnitudes[i]:.17g}")
            fh.write(",".join(row) + "\n")
