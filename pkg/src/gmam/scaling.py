"""Barrier-versus-parameter sweeps and power-law fits near a fold.

Near a saddle-node threshold the transition barrier vanishes like
``S = s0 v^(3/2)`` in the normalized distance ``v = |V_th - V| / V_th``,
which makes the log of the mean escape time scale with the 3/2 power of
the distance to threshold.  The sweep machinery computes S on a parameter
grid by re-converging the equilibria and the minimizing curve point by
point (optionally warm-starting each curve from the previous one), and the
fit machinery extracts the leading exponent and amplitude plus two
higher-order correction coefficients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .curves import Curve
from .equilibria import find_saddle, newton_equilibrium, string_relax
from .errors import FitDomainError, GmamError, SaddleNotFound
from .models import TransitionFamily
from .solver import GmamSettings, GmamResult, solve


@dataclass
class SweepRecord:
    """Barrier computation at one parameter value."""

    parameter: float
    action: float
    attractor: Optional[np.ndarray]
    saddle: Optional[np.ndarray]
    gmam_converged: bool
    iterations: int = 0
    failure: str = ""

    @property
    def ok(self) -> bool:
        return not self.failure


def sweep(
    family: TransitionFamily,
    grid: Sequence[float],
    settings: Optional[GmamSettings] = None,
    warm_start: bool = True,
    newton_tol: float = 1e-10,
    dead_band: float = 1e-10,
) -> List[SweepRecord]:
    """Compute the barrier S at every grid value of the family parameter.

    At the first grid point the attractor and the saddle come from the
    family's seeds (through drift relaxation when only a partner attractor
    is known); afterwards both are re-converged by Newton warm-started
    from the previous point, and with ``warm_start`` the minimizing curve
    is reused as the initial curve of the next solve.  Failures are
    recorded per point and the sweep continues.
    """
    settings = settings or GmamSettings()
    records: List[SweepRecord] = []
    prev_attractor = None
    prev_saddle = None
    prev_curve: Optional[Curve] = None

    for value in grid:
        sys = family.system(float(value))
        try:
            att_guess = prev_attractor if prev_attractor is not None else family.attractor_guess(value)
            attractor = newton_equilibrium(sys, att_guess, tol=newton_tol, dead_band=dead_band)
            if attractor.stability != "stable":
                raise SaddleNotFound(f"attractor guess converged to a {attractor.stability} point")

            if prev_saddle is not None:
                saddle = newton_equilibrium(sys, prev_saddle, tol=newton_tol, dead_band=dead_band)
                if saddle.stability != "saddle":
                    raise SaddleNotFound(f"saddle guess converged to a {saddle.stability} point")
            elif family.saddle_guess is not None:
                saddle = newton_equilibrium(
                    sys, family.saddle_guess(value), tol=newton_tol, dead_band=dead_band
                )
                if saddle.stability != "saddle":
                    raise SaddleNotFound(f"saddle seed converged to a {saddle.stability} point")
            elif family.partner_guess is not None:
                partner = newton_equilibrium(
                    sys, family.partner_guess(value), tol=newton_tol, dead_band=dead_band
                )
                string = string_relax(sys, attractor.state, partner.state)
                saddle = find_saddle(sys, string.curve, tol=newton_tol, dead_band=dead_band)
            else:
                raise SaddleNotFound("family provides no saddle or partner seed")
        except GmamError as exc:
            records.append(
                SweepRecord(float(value), math.nan, None, None, False, failure=str(exc))
            )
            prev_attractor = prev_saddle = None
            prev_curve = None
            continue

        initial = prev_curve if warm_start else None
        result: GmamResult = solve(sys, attractor.state, saddle.state, settings, initial=initial)
        records.append(
            SweepRecord(
                parameter=float(value),
                action=result.action,
                attractor=attractor.state,
                saddle=saddle.state,
                gmam_converged=result.converged,
                iterations=result.iterations_used,
            )
        )
        prev_attractor = attractor.state
        prev_saddle = saddle.state
        if warm_start:
            prev_curve = result.curve
    return records


def normalized_distances(
    values: np.ndarray, threshold: float, scale: Optional[float] = None
) -> np.ndarray:
    """v = |V_th - V| / scale, with scale defaulting to |V_th| (or 1 at 0)."""
    if scale is None:
        scale = abs(threshold) if abs(threshold) > 0.0 else 1.0
    return np.abs(threshold - np.asarray(values, dtype=float)) / scale


@dataclass
class PowerLawFit:
    """Leading-order fit S = s0 v^beta on a log-log window."""

    s0: float
    beta: float
    stderr_beta: float
    stderr_log_s0: float
    window: tuple
    n_points: int
    residual_rms: float  # rms of log-residuals inside the window


def fit_power_law(
    records: Sequence[SweepRecord],
    threshold: float,
    window: tuple = (0.0, np.inf),
    v_scale: Optional[float] = None,
) -> PowerLawFit:
    """Least squares of log S against log v inside a window of v."""
    usable = [r for r in records if r.ok and np.isfinite(r.action)]
    values = np.array([r.parameter for r in usable])
    actions = np.array([r.action for r in usable])
    v = normalized_distances(values, threshold, v_scale)
    inside = (v > window[0]) & (v <= window[1])
    if np.count_nonzero(inside) < 5:
        raise FitDomainError(f"need at least 5 sweep points inside the window, got {np.count_nonzero(inside)}")
    v, actions = v[inside], actions[inside]
    if np.any(v <= 0.0) or np.any(actions <= 0.0):
        raise FitDomainError("power-law fit needs positive distances and actions")

    x = np.log(v)
    y = np.log(actions)
    design = np.column_stack((np.ones_like(x), x))
    coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coeffs
    dof = max(x.size - 2, 1)
    var = float(resid @ resid) / dof
    cov = var * np.linalg.inv(design.T @ design)
    return PowerLawFit(
        s0=float(np.exp(coeffs[0])),
        beta=float(coeffs[1]),
        stderr_beta=float(np.sqrt(cov[1, 1])),
        stderr_log_s0=float(np.sqrt(cov[0, 0])),
        window=(float(window[0]), float(window[1])),
        n_points=int(x.size),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )


def local_loglog_slopes(records: Sequence[SweepRecord], threshold: float, v_scale: Optional[float] = None):
    """Consecutive-point slopes of log S vs log v, sorted by increasing v."""
    usable = [r for r in records if r.ok and np.isfinite(r.action) and r.action > 0.0]
    values = np.array([r.parameter for r in usable])
    actions = np.array([r.action for r in usable])
    v = normalized_distances(values, threshold, v_scale)
    order = np.argsort(v)
    v, actions = v[order], actions[order]
    slopes = np.diff(np.log(actions)) / np.diff(np.log(v))
    midpoints = np.sqrt(v[:-1] * v[1:])
    return midpoints, slopes


def slope_validity_window(
    records: Sequence[SweepRecord],
    threshold: float,
    band: tuple = (1.4, 1.6),
    v_scale: Optional[float] = None,
) -> tuple:
    """Largest contiguous v-interval from the fold where local slopes stay in band."""
    midpoints, slopes = local_loglog_slopes(records, threshold, v_scale)
    best = (0.0, 0.0)
    start = None
    for i, s in enumerate(slopes):
        if band[0] <= s <= band[1]:
            if start is None:
                start = i
            if midpoints[i] - midpoints[start] > best[1] - best[0]:
                best = (midpoints[start], midpoints[i])
        else:
            start = None
    return best


@dataclass
class HigherOrderFit:
    """Correction coefficients of S = s0 v^(3/2) + s1 v^(5/2) + s2 v^(7/2)."""

    s1: float
    s2: float
    residual_rms: float  # rms relative residual of the three-term model
    n_points: int


def _nonuniform_derivative(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Three-point interior derivative on a nonuniform grid."""
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    return (
        y[2:] * hm**2 - y[:-2] * hp**2 + y[1:-1] * (hp**2 - hm**2)
    ) / (hm * hp * (hm + hp))


def fit_higher_order(
    records: Sequence[SweepRecord],
    threshold: float,
    s0: float,
    v_scale: Optional[float] = None,
) -> HigherOrderFit:
    """Fit the two correction coefficients beyond the leading 3/2 power.

    The compensated barrier ``S / (s0 v^(3/2))`` equals
    ``1 + (s1/s0) v + (s2/s0) v^2`` for the three-term model, so its
    derivative in v is linear; the derivative is formed with three-point
    stencils on the sweep grid and fitted linearly, which pins the
    correction coefficients while the constraint that the compensated
    barrier tends to one at the fold fixes the constant term.
    """
    usable = [r for r in records if r.ok and np.isfinite(r.action) and r.action > 0.0]
    values = np.array([r.parameter for r in usable])
    actions = np.array([r.action for r in usable])
    v = normalized_distances(values, threshold, v_scale)
    order = np.argsort(v)
    v, actions = v[order], actions[order]
    if v.size < 5:
        raise FitDomainError("higher-order fit needs at least 5 sweep points")
    if np.any(v <= 0.0):
        raise FitDomainError("higher-order fit needs positive distances")

    compensated = actions / (s0 * v**1.5)
    deriv = _nonuniform_derivative(v, compensated)
    v_mid = v[1:-1]
    design = np.column_stack((np.ones_like(v_mid), v_mid))
    coeffs, *_ = np.linalg.lstsq(design, deriv, rcond=None)
    s1 = float(coeffs[0] * s0)
    s2 = float(coeffs[1] * s0 / 2.0)

    model = s0 * v**1.5 + s1 * v**2.5 + s2 * v**3.5
    residual = (model - actions) / actions
    return HigherOrderFit(
        s1=s1,
        s2=s2,
        residual_rms=float(np.sqrt(np.mean(residual**2))),
        n_points=int(v.size),
    )


def log_mean_escape_time(action: float, noise_intensity: float) -> float:
    """log <T> = S / eta for barrier S and noise intensity eta."""
    if action < 0.0:
        raise ValueError("action must be nonnegative")
    if noise_intensity <= 0.0:
        raise ValueError("noise intensity must be positive")
    return action / noise_intensity


@dataclass
class ScalingFit:
    """Complete fit report for one sweep."""

    threshold: float
    v_scale: float
    leading: PowerLawFit
    pinned: HigherOrderFit
    validity_window: tuple
    grid_sensitivity_beta: float = math.nan  # beta shift when every other point is dropped
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "v_scale": self.v_scale,
            "leading_fit": {
                "s0": self.leading.s0,
                "beta": self.leading.beta,
                "stderr_beta": self.leading.stderr_beta,
                "stderr_log_s0": self.leading.stderr_log_s0,
                "window_v": list(self.leading.window),
                "n_points": self.leading.n_points,
                "residual_rms_log": self.leading.residual_rms,
                "grid_sensitivity_beta": self.grid_sensitivity_beta,
            },
            "higher_order_fit": {
                "s1": self.pinned.s1,
                "s2": self.pinned.s2,
                "residual_rms_relative": self.pinned.residual_rms,
                "n_points": self.pinned.n_points,
            },
            "slope_validity_window_v": list(self.validity_window),
            **self.extras,
        }


def analyze_sweep(
    records: Sequence[SweepRecord],
    threshold: float,
    leading_window: tuple = (0.0, 0.014),
    v_scale: Optional[float] = None,
    slope_band: tuple = (1.4, 1.6),
) -> ScalingFit:
    """Run the leading and higher-order fits plus diagnostics on a sweep."""
    scale = v_scale if v_scale is not None else (abs(threshold) if abs(threshold) > 0.0 else 1.0)
    try:
        leading = fit_power_law(records, threshold, leading_window, scale)
    except FitDomainError:
        # narrow window unpopulated: fall back to the full sweep
        leading = fit_power_law(records, threshold, (0.0, np.inf), scale)
    usable = [r for r in records if r.ok and np.isfinite(r.action)]
    halved = usable[::2]
    sensitivity = math.nan
    if len(halved) >= 5:
        try:
            leading_half = fit_power_law(halved, threshold, leading.window, scale)
            sensitivity = abs(leading_half.beta - leading.beta)
        except FitDomainError:
            pass
    pinned = fit_higher_order(records, threshold, leading.s0, scale)
    window = slope_validity_window(records, threshold, slope_band, scale)
    return ScalingFit(
        threshold=float(threshold),
        v_scale=float(scale),
        leading=leading,
        pinned=pinned,
        validity_window=window,
        grid_sensitivity_beta=sensitivity,
    )


def write_sweep_csv(path, records: Sequence[SweepRecord], threshold: float, v_scale: Optional[float] = None) -> None:
    """Write ``V, v, S, converged, iterations`` rows."""
    scale = v_scale if v_scale is not None else (abs(threshold) if abs(threshold) > 0.0 else 1.0)
    with open(path, "w") as fh:
        fh.write("V,v,S,converged,iterations\n")
        for r in records:
            v = abs(threshold - r.parameter) / scale
            fh.write(
                f"{r.parameter:.17g},{v:.17g},{r.action:.17g},"
                f"{int(r.gmam_converged and r.ok)},{r.iterations}\n"
            )


def read_sweep_csv(path) -> List[SweepRecord]:
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "V,v,S,converged,iterations":
            raise ValueError(f"{path}: not a sweep file")
        for line in fh:
            if not line.strip():
                continue
            vv, _, ss, conv, iters = line.strip().split(",")
            records.append(
                SweepRecord(
                    parameter=float(vv),
                    action=float(ss),
                    attractor=None,
                    saddle=None,
                    gmam_converged=bool(int(conv)),
                    iterations=int(iters),
                )
            )
    return records


def write_fit_json(path, fit: ScalingFit) -> None:
    with open(path, "w") as fh:
        json.dump(fit.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
