"""Run configuration: JSON documents with strict key validation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError
from .solver import GmamSettings

KNOWN_MODELS = ("superlattice", "double_well", "maier_stein", "saddle_node_normal_form")

_TOP_KEYS = {"model", "model_params", "gmam", "equilibria", "sweep", "output_dir", "reference_values"}

_EQUILIBRIA_KEYS = {"branches", "branch_window", "branch_points", "string_points", "string_steps"}

_SWEEP_KEYS = {
    "num_points",
    "spacing",
    "v_min",
    "v_max",
    "threshold",
    "locate_fold",
    "parameter_start",
    "parameter_end",
    "continuation_step",
    "fold_tol",
    "leading_window_vmax",
    "warm_start",
}


def _reject_unknown(data: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where}")


def _settings_from_dict(data: dict) -> GmamSettings:
    names = {f.name for f in dataclasses.fields(GmamSettings)}
    _reject_unknown(data, names, "gmam settings")
    try:
        return GmamSettings(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad gmam settings: {exc}") from exc


@dataclass
class EquilibriaSpec:
    """What the equilibria command should compute beyond the fixed-bias triple."""

    branches: tuple = (4, 5)
    branch_window: Optional[tuple] = None  # parameter interval for branch output
    branch_points: int = 40
    string_points: int = 48
    string_steps: int = 8000

    @classmethod
    def from_dict(cls, data: dict) -> "EquilibriaSpec":
        _reject_unknown(data, _EQUILIBRIA_KEYS, "equilibria section")
        kwargs = dict(data)
        if "branches" in kwargs:
            kwargs["branches"] = tuple(int(b) for b in kwargs["branches"])
        if kwargs.get("branch_window") is not None:
            window = kwargs["branch_window"]
            if len(window) != 2:
                raise ConfigError("branch_window must be [low, high]")
            kwargs["branch_window"] = (float(window[0]), float(window[1]))
        return cls(**kwargs)


@dataclass
class SweepSpec:
    """Grid and fold-location settings for the sweep-fit command.

    The grid lives in the normalized distance v from the threshold and is
    geometric (log-uniform, densest at the fold) by default.  The
    threshold either is given directly or is located by continuation from
    ``parameter_start`` toward ``parameter_end``.
    """

    num_points: int = 25
    spacing: str = "geometric"
    v_min: float = 2e-3
    v_max: float = 5e-2
    threshold: Optional[float] = None
    locate_fold: bool = True
    parameter_start: Optional[float] = None
    parameter_end: Optional[float] = None
    continuation_step: float = 2e-3
    fold_tol: float = 1e-7
    leading_window_vmax: float = 0.014
    warm_start: bool = True

    def __post_init__(self):
        if self.num_points < 5:
            raise ConfigError("sweep num_points must be at least 5")
        if self.spacing not in ("geometric", "linear"):
            raise ConfigError("sweep spacing must be 'geometric' or 'linear'")
        if not (0.0 < self.v_min < self.v_max):
            raise ConfigError("sweep needs 0 < v_min < v_max")
        if not self.locate_fold and self.threshold is None:
            raise ConfigError("sweep needs either locate_fold or an explicit threshold")
        if self.locate_fold and self.threshold is None and (
            self.parameter_start is None or self.parameter_end is None
        ):
            raise ConfigError("fold location needs parameter_start and parameter_end")

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        _reject_unknown(data, _SWEEP_KEYS, "sweep section")
        return cls(**data)


@dataclass
class RunConfig:
    """Validated top-level configuration of one CLI run."""

    model: str
    model_params: dict = field(default_factory=dict)
    gmam: GmamSettings = field(default_factory=GmamSettings)
    equilibria: EquilibriaSpec = field(default_factory=EquilibriaSpec)
    sweep: Optional[SweepSpec] = None
    output_dir: str = "out"
    reference_values: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        _reject_unknown(data, _TOP_KEYS, "configuration")
        if "model" not in data:
            raise ConfigError("configuration is missing the 'model' key")
        model = data["model"]
        if model not in KNOWN_MODELS:
            raise ConfigError(f"unknown model {model!r}; choose one of {KNOWN_MODELS}")
        model_params = data.get("model_params", {})
        if not isinstance(model_params, dict):
            raise ConfigError("model_params must be an object")
        gmam = _settings_from_dict(data.get("gmam", {}))
        equilibria = EquilibriaSpec.from_dict(data.get("equilibria", {}))
        sweep = SweepSpec.from_dict(data["sweep"]) if "sweep" in data else None
        reference = data.get("reference_values", {})
        if not isinstance(reference, dict):
            raise ConfigError("reference_values must be an object")
        return cls(
            model=model,
            model_params=model_params,
            gmam=gmam,
            equilibria=equilibria,
            sweep=sweep,
            output_dir=str(data.get("output_dir", "out")),
            reference_values=reference,
        )

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)
