"""End-to-end workflows behind the CLI subcommands."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import models
from .config import RunConfig
from .curves import write_curve_csv
from .equilibria import (
    Equilibrium,
    EquilibriumBranch,
    continue_branch,
    find_saddle,
    locate_fold,
    newton_equilibrium,
    relax_equilibrium,
    string_relax,
    write_branch_csv,
)
from .errors import ConfigError, GmamError
from .models import TransitionFamily
from .scaling import (
    SweepRecord,
    analyze_sweep,
    log_mean_escape_time,
    normalized_distances,
    sweep,
    write_fit_json,
    write_sweep_csv,
)
from .solver import solve
from .superlattice import SlParameters, Superlattice

_FIXTURE_KEYS = {
    "double_well": set(),
    "maier_stein": {"coupling"},
    "saddle_node_normal_form": {"threshold_distance", "embedded"},
}


@dataclass
class ModelSetup:
    """Everything a workflow needs to know about the configured model."""

    name: str
    system: object
    attractor_seeds: list
    newton_tol: float
    family: Optional[TransitionFamily] = None
    lattice: Optional[Superlattice] = None
    branches: tuple = ()


def build_setup(config: RunConfig) -> ModelSetup:
    params = config.model_params
    name = config.model

    if name == "superlattice":
        sl_params = SlParameters.from_dict(params)
        lattice = Superlattice(sl_params)
        branches = config.equilibria.branches
        seeds = [lattice.branch_seed(k) for k in branches]
        return ModelSetup(
            name=name,
            system=lattice.as_system(),
            attractor_seeds=seeds,
            newton_tol=1e-12 * sl_params.drift_scale,
            lattice=lattice,
            branches=branches,
        )

    unknown = set(params) - _FIXTURE_KEYS[name]
    if unknown:
        raise ConfigError(f"unknown model_params key {sorted(unknown)[0]!r} for model {name!r}")

    if name == "double_well":
        return ModelSetup(
            name=name,
            system=models.double_well(),
            attractor_seeds=[np.array([-1.0, 0.0]), np.array([1.0, 0.0])],
            newton_tol=1e-12,
        )
    if name == "maier_stein":
        coupling = float(params.get("coupling", 10.0))
        return ModelSetup(
            name=name,
            system=models.maier_stein(coupling),
            attractor_seeds=[np.array([-1.0, 0.0]), np.array([1.0, 0.0])],
            newton_tol=1e-12,
        )
    if name == "saddle_node_normal_form":
        a = float(params.get("threshold_distance", 0.04))
        embedded = bool(params.get("embedded", False))
        if a <= 0.0:
            raise ConfigError("threshold_distance must be positive")
        if embedded:
            seeds = [np.array([math.sqrt(a), 0.0]), np.array([-2.0 * math.sqrt(a) - 0.1, 0.0])]
        else:
            seeds = [np.array([math.sqrt(a)]), np.array([-2.0 * math.sqrt(a) - 0.1])]
        return ModelSetup(
            name=name,
            system=models.saddle_node_normal_form(a, embedded=embedded),
            attractor_seeds=seeds,
            newton_tol=1e-13,
            family=models.saddle_node_family(),
        )
    raise ConfigError(f"unknown model {name!r}")


def _equilibrium_row(label: str, eq: Equilibrium, current: Optional[float]) -> list:
    row = [label, eq.stability, f"{eq.residual_norm:.17g}",
           f"{eq.jacobian_eigen_realparts[0]:.17g}"]
    row.append("" if current is None else f"{current:.17g}")
    row += [f"{x:.17g}" for x in eq.state]
    return row


def _locate_transition(setup: ModelSetup, config: RunConfig):
    """Attractors from the configured seeds plus the saddle between the first two."""
    spec = config.equilibria
    attractors = [
        relax_equilibrium(setup.system, seed, tol=setup.newton_tol)
        for seed in setup.attractor_seeds
    ]
    if len(attractors) < 2:
        raise GmamError("need two basins to bracket a saddle")
    string = string_relax(
        setup.system,
        attractors[0].state,
        attractors[1].state,
        num_points=spec.string_points,
        steps=spec.string_steps,
    )
    saddle = find_saddle(setup.system, string.curve, tol=setup.newton_tol)
    return attractors, saddle


def run_equilibria(config: RunConfig) -> dict:
    """Locate the transition triple, write the equilibrium table and branch data."""
    setup = build_setup(config)
    os.makedirs(config.output_dir, exist_ok=True)
    attractors, saddle = _locate_transition(setup, config)

    def current_of(state) -> Optional[float]:
        if setup.lattice is None:
            return None
        return float(setup.lattice.currents(state)[..., 0])

    dim = attractors[0].state.size
    header = ["label", "stability", "residual_norm", "max_eig_realpart", "J"]
    header += [f"x_{i + 1}" for i in range(dim)]
    table_path = os.path.join(config.output_dir, "equilibria.csv")
    with open(table_path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i, eq in enumerate(attractors):
            label = f"attractor_{i + 1}"
            if setup.branches:
                label = f"branch_{setup.branches[i]}_attractor"
            fh.write(",".join(_equilibrium_row(label, eq, current_of(eq.state))) + "\n")
        fh.write(",".join(_equilibrium_row("saddle", saddle, current_of(saddle.state))) + "\n")

    written = [table_path]
    window = config.equilibria.branch_window
    if setup.lattice is not None and window is not None:
        bias0 = setup.lattice.params.bias
        family = _bias_family(setup.lattice.params)
        step = (window[1] - window[0]) / max(config.equilibria.branch_points - 1, 1)
        for eq, branch_id in zip(attractors, setup.branches):
            path = os.path.join(config.output_dir, f"branch_{branch_id}.csv")
            _write_sl_branch(family, setup.lattice, eq, bias0, window, step, setup.newton_tol, path)
            written.append(path)
        path = os.path.join(config.output_dir, "branch_saddle.csv")
        _write_sl_branch(family, setup.lattice, saddle, bias0, window, step, setup.newton_tol, path)
        written.append(path)
    return {"files": written, "attractors": attractors, "saddle": saddle}


def _bias_family(params: SlParameters):
    def system_at(bias: float):
        return Superlattice(params.with_bias(bias)).as_system()

    return system_at


def _write_sl_branch(family, lattice, start_eq, bias0, window, step, tol, path):
    """Continue one equilibrium across the window and dump states plus currents."""
    pieces: List[EquilibriumBranch] = []
    if window[1] > bias0:
        pieces.append(continue_branch(family, start_eq, bias0, window[1], step, tol=tol))
    if window[0] < bias0:
        pieces.append(continue_branch(family, start_eq, bias0, window[0], step, tol=tol))
    merged = EquilibriumBranch()
    rows = []
    for piece in pieces:
        for i, v in enumerate(piece.parameter_values):
            rows.append((v, piece.states[i], piece.stabilities[i], piece.min_eig_magnitudes[i]))
    rows.sort(key=lambda r: r[0])
    currents = []
    for v, state, stability, mu in rows:
        merged.parameter_values.append(v)
        merged.states.append(state)
        merged.stabilities.append(stability)
        merged.min_eig_magnitudes.append(mu)
        currents.append(float(Superlattice(lattice.params.with_bias(v)).currents(state)[..., 0]))
    write_branch_csv(path, merged, currents)


def run_mincurve(config: RunConfig, bias: Optional[float] = None) -> dict:
    """Converge the minimizing curve attractor -> saddle and write it out."""
    if bias is not None and config.model == "superlattice":
        config.model_params = dict(config.model_params, bias_volt=float(bias))
    setup = build_setup(config)
    os.makedirs(config.output_dir, exist_ok=True)
    attractors, saddle = _locate_transition(setup, config)
    result = solve(setup.system, attractors[0].state, saddle.state, config.gmam)

    curve_path = os.path.join(config.output_dir, "mincurve.csv")
    write_curve_csv(curve_path, result.curve)
    log_path = os.path.join(config.output_dir, "mincurve_convergence.csv")
    with open(log_path, "w") as fh:
        fh.write("iteration,action\n")
        for i, s in enumerate(result.action_history):
            fh.write(f"{i},{s:.17g}\n")
    summary = {
        "model": config.model,
        "action": result.action,
        "iterations_used": result.iterations_used,
        "converged": bool(result.converged),
        "num_points": result.curve.num_points,
        "attractor": [float(x) for x in attractors[0].state],
        "saddle": [float(x) for x in saddle.state],
    }
    if setup.lattice is not None:
        eta = setup.lattice.params.noise_intensity
        summary["noise_intensity"] = eta
        summary["log_mean_escape_time"] = log_mean_escape_time(result.action, eta)
    summary_path = os.path.join(config.output_dir, "mincurve_summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"files": [curve_path, log_path, summary_path], "result": result, "summary": summary}


def _superlattice_family(setup: ModelSetup, config: RunConfig, spec) -> tuple:
    """Fold location plus guess closures bound to the continuation branch."""
    lattice = setup.lattice
    params = lattice.params
    family_fn = _bias_family(params)
    v_start = spec.parameter_start if spec.parameter_start is not None else params.bias

    start_sl = Superlattice(params.with_bias(v_start))
    start_eq = relax_equilibrium(
        start_sl.as_system(), start_sl.branch_seed(setup.branches[0]), tol=setup.newton_tol
    )
    threshold = spec.threshold
    branch = continue_branch(
        family_fn,
        start_eq,
        v_start,
        spec.parameter_end if spec.parameter_end is not None else v_start + 0.3,
        spec.continuation_step,
        tol=setup.newton_tol,
    )
    if threshold is None:
        threshold = locate_fold(family_fn, branch, tol_v=spec.fold_tol, tol=setup.newton_tol)

    branch_values = np.asarray(branch.parameter_values)
    branch_states = branch.states

    def attractor_guess(v: float):
        idx = int(np.argmin(np.abs(branch_values - v)))
        return branch_states[idx]

    # saddle seeded once from the transition triple at the sweep's far end
    def saddle_guess_factory(v_far: float):
        sl_far = Superlattice(params.with_bias(v_far))
        sys_far = sl_far.as_system()
        att = newton_equilibrium(sys_far, attractor_guess(v_far), tol=setup.newton_tol)
        partner = relax_equilibrium(
            sys_far, sl_far.branch_seed(setup.branches[1]), tol=setup.newton_tol
        )
        string = string_relax(
            sys_far, att.state, partner.state,
            num_points=config.equilibria.string_points,
            steps=config.equilibria.string_steps,
        )
        saddle = find_saddle(sys_far, string.curve, tol=setup.newton_tol)
        return lambda v: saddle.state

    family = TransitionFamily(
        system=family_fn,
        attractor_guess=attractor_guess,
        saddle_guess=None,  # filled in once the grid is known
        parameter_name="bias_volt",
    )
    return family, threshold, saddle_guess_factory


def _build_grid(spec, threshold: float, v_scale: float, side: float) -> np.ndarray:
    if spec.spacing == "geometric":
        vs = np.geomspace(spec.v_max, spec.v_min, spec.num_points)
    else:
        vs = np.linspace(spec.v_max, spec.v_min, spec.num_points)
    return threshold + side * vs * v_scale


def run_sweep_fit(config: RunConfig, threads: int = 1, warm_start: Optional[bool] = None) -> dict:
    """Sweep the bias toward the fold, fit the barrier scaling, write reports."""
    if config.sweep is None:
        raise ConfigError("sweep-fit needs a 'sweep' section in the configuration")
    spec = config.sweep
    setup = build_setup(config)
    if setup.name not in ("superlattice", "saddle_node_normal_form"):
        raise ConfigError(f"model {setup.name!r} has no fold to sweep toward")
    os.makedirs(config.output_dir, exist_ok=True)
    warm = spec.warm_start if warm_start is None else warm_start

    if setup.name == "superlattice":
        family, threshold, saddle_factory = _superlattice_family(setup, config, spec)
        v_scale = abs(threshold)
        start = spec.parameter_start if spec.parameter_start is not None else threshold - 1e-3
        side = math.copysign(1.0, start - threshold)
        grid = _build_grid(spec, threshold, v_scale, side)
        family.saddle_guess = saddle_factory(float(grid[0]))
    else:
        family = setup.family
        threshold = spec.threshold if spec.threshold is not None else 0.0
        v_scale = abs(threshold) if abs(threshold) > 0.0 else 1.0
        side = 1.0 if spec.parameter_start is None else math.copysign(
            1.0, spec.parameter_start - threshold
        )
        grid = _build_grid(spec, threshold, v_scale, side)

    if threads > 1 and not warm:
        def one_point(value: float):
            return sweep(family, [value], config.gmam, warm_start=False,
                         newton_tol=setup.newton_tol)[0]

        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one_point, grid))
    else:
        records = sweep(family, grid, config.gmam, warm_start=warm, newton_tol=setup.newton_tol)

    fit = analyze_sweep(
        records,
        threshold,
        leading_window=(0.0, spec.leading_window_vmax),
        v_scale=v_scale,
    )

    fit.extras["model"] = setup.name
    fit.extras["n_failed_points"] = sum(0 if r.ok else 1 for r in records)
    if setup.lattice is not None:
        eta = setup.lattice.params.noise_intensity
        per_cm2 = 1e-4  # barrier unit conversion from 1/(C m^2) to 1/(C cm^2)
        fit.extras["noise_intensity"] = eta
        fit.extras["units"] = {
            "threshold": "V",
            "s0_s1_s2": "C^-1 m^-2",
            "s0_s1_s2_per_cm2": "C^-1 cm^-2",
        }
        fit.extras["computed_per_cm2"] = {
            "s0": fit.leading.s0 * per_cm2,
            "s1": fit.pinned.s1 * per_cm2,
            "s2": fit.pinned.s2 * per_cm2,
        }
        ok_records = [r for r in records if r.ok]
        fit.extras["log_escape_time_examples"] = [
            {
                "bias_volt": r.parameter,
                "action": r.action,
                "log_mean_escape_time": log_mean_escape_time(r.action, eta),
            }
            for r in (ok_records[0], ok_records[len(ok_records) // 2], ok_records[-1])
        ]
    if config.reference_values:
        fit.extras["reference_values"] = config.reference_values

    sweep_path = os.path.join(config.output_dir, "sweep.csv")
    write_sweep_csv(sweep_path, records, threshold, v_scale)
    fit_path = os.path.join(config.output_dir, "fit.json")
    write_fit_json(fit_path, fit)
    return {"files": [sweep_path, fit_path], "records": records, "fit": fit, "threshold": threshold}


def format_sweep_report(outcome: dict, reference: dict) -> str:
    """Human-readable summary, computed values next to any reference values."""
    fit = outcome["fit"]
    lines = []
    lines.append(f"threshold located at {outcome['threshold']:.7f}")
    lines.append(
        f"leading fit:      beta = {fit.leading.beta:.4f} +- {fit.leading.stderr_beta:.4f}"
        f"  (grid sensitivity {fit.grid_sensitivity_beta:.2e})"
    )
    lines.append(f"                  s0 = {fit.leading.s0:.6e}")
    lines.append(
        f"higher-order fit: s1 = {fit.pinned.s1:.6e}  s2 = {fit.pinned.s2:.6e}"
        f"  (rel residual {fit.pinned.residual_rms:.2e})"
    )
    per_cm2 = fit.extras.get("computed_per_cm2")
    if per_cm2:
        lines.append(
            "per cm^2:         s0 = {s0:.4e}  s1 = {s1:.4e}  s2 = {s2:.4e}".format(**per_cm2)
        )
    if reference:
        lines.append("reference values for comparison:")
        for key in sorted(reference):
            lines.append(f"    {key} = {reference[key]}")
    return "\n".join(lines)


def run_normal_form_check(output_dir: str, num_points: int = 25) -> dict:
    """Self-test: sweep the fold normal form and compare with quadrature.

    The independent expected value for each grid point is the numerical
    quadrature of twice the drift magnitude between the equilibria, not
    the curve-evolution result being checked.
    """
    from scipy.integrate import quad

    from .scaling import fit_power_law
    from .solver import GmamSettings

    os.makedirs(output_dir, exist_ok=True)
    family = models.saddle_node_family()
    grid = np.geomspace(0.1, 0.01, num_points)
    records = sweep(family, grid, GmamSettings(num_points=100), warm_start=True, newton_tol=1e-13)

    rows = []
    worst = 0.0
    for r in records:
        a = r.parameter
        expected, _ = quad(lambda x: 2.0 * abs(a - x * x), -math.sqrt(a), math.sqrt(a))
        rel = abs(r.action - expected) / expected
        worst = max(worst, rel)
        rows.append({"a": a, "action": r.action, "expected": expected, "rel_error": rel})
    fit = fit_power_law(records, 0.0, (0.0, np.inf), v_scale=1.0)
    report = {
        "max_rel_error": worst,
        "beta": fit.beta,
        "s0": fit.s0,
        "points": rows,
        "passed": bool(worst < 1e-3 and abs(fit.beta - 1.5) < 0.01),
    }
    path = os.path.join(output_dir, "normal_form_check.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"files": [path], "report": report}
