"""Sequential-tunneling model of a weakly coupled quantum-well stack.

State variables are the 2D electron densities of the N wells.  The N+1
inter-well fields follow from the densities through the discrete Poisson
equation plus the fixed-bias constraint, in closed form; the N+1 tunneling
currents are local functions of a field and the two neighboring densities,
with Ohmic contact currents at both ends.  Charge conservation gives the
drift, and the shot noise of each tunneling current gives a bidiagonal
diffusion matrix with entries +-sqrt(J_i), whose covariance is tridiagonal
and positive definite whenever all currents are positive.

Internal units are SI throughout (m, s, C, V; densities in m^-2, fields
in V/m, current densities in A/m^2).  Constructors convert from the
customary mixed units (cm^-2, kV/cm, cm/kV, nm) exactly once.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, NonPositiveCurrent
from .systems import SdeSystem

ELEMENTARY_CHARGE = 1.602176634e-19  # C
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m

_CM2_TO_M2 = 1e4  # per-cm^2 to per-m^2
_KV_PER_CM_TO_V_PER_M = 1e5
_CM_PER_KV_TO_M_PER_V = 1e-5
_NM_TO_M = 1e-9

_PARAMETER_KEYS = {
    "num_wells",
    "doping_per_cm2",
    "density_scale_per_cm2",
    "field_decay_cm_per_kV",
    "peak_velocity_m_per_s",
    "resonance_field_kV_per_cm",
    "contact_conductivity_per_ohm_m",
    "period_nm",
    "relative_permittivity",
    "area_m2",
    "bias_volt",
}


@dataclass(frozen=True)
class SlParameters:
    """Physical constants of the well stack, in SI units.

    The tunneling constants (doping, density_scale, field_decay,
    peak_velocity, resonance_field, contact_conductivity) are the standard
    set for this transport model.  The geometry (num_wells, period,
    permittivity, area) is device-specific configuration; the defaults
    place the four/five-period bistable window near 0.52-0.56 V of bias.
    """

    num_wells: int = 40
    doping: float = 1.5e11 * _CM2_TO_M2  # m^-2
    density_scale: float = 1.68e10 * _CM2_TO_M2  # m^-2
    field_decay: float = 3.0145 * _CM_PER_KV_TO_M_PER_V  # m/V
    peak_velocity: float = 1.691  # m/s
    resonance_field: float = 3.945 * _KV_PER_CM_TO_V_PER_M  # V/m
    contact_conductivity: float = 0.08  # (ohm m)^-1
    period: float = 13.0 * _NM_TO_M  # m
    permittivity: float = 12.85 * VACUUM_PERMITTIVITY  # F/m
    charge: float = ELEMENTARY_CHARGE  # C
    area: float = 1e-8  # m^2
    bias: float = 0.52  # V

    def __post_init__(self):
        if self.num_wells < 2:
            raise ConfigError("num_wells must be at least 2")
        for name in (
            "doping",
            "density_scale",
            "field_decay",
            "peak_velocity",
            "resonance_field",
            "contact_conductivity",
            "period",
            "permittivity",
            "charge",
            "area",
        ):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"parameter {name} must be strictly positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SlParameters":
        """Build from a flat key-value document with unit-suffixed keys."""
        unknown = set(data) - _PARAMETER_KEYS
        if unknown:
            raise ConfigError(f"unknown superlattice parameter key {sorted(unknown)[0]!r}")
        kwargs = {}
        if "num_wells" in data:
            kwargs["num_wells"] = int(data["num_wells"])
        if "doping_per_cm2" in data:
            kwargs["doping"] = float(data["doping_per_cm2"]) * _CM2_TO_M2
        if "density_scale_per_cm2" in data:
            kwargs["density_scale"] = float(data["density_scale_per_cm2"]) * _CM2_TO_M2
        if "field_decay_cm_per_kV" in data:
            kwargs["field_decay"] = float(data["field_decay_cm_per_kV"]) * _CM_PER_KV_TO_M_PER_V
        if "peak_velocity_m_per_s" in data:
            kwargs["peak_velocity"] = float(data["peak_velocity_m_per_s"])
        if "resonance_field_kV_per_cm" in data:
            kwargs["resonance_field"] = float(data["resonance_field_kV_per_cm"]) * _KV_PER_CM_TO_V_PER_M
        if "contact_conductivity_per_ohm_m" in data:
            kwargs["contact_conductivity"] = float(data["contact_conductivity_per_ohm_m"])
        if "period_nm" in data:
            kwargs["period"] = float(data["period_nm"]) * _NM_TO_M
        if "relative_permittivity" in data:
            kwargs["permittivity"] = float(data["relative_permittivity"]) * VACUUM_PERMITTIVITY
        if "area_m2" in data:
            kwargs["area"] = float(data["area_m2"])
        if "bias_volt" in data:
            kwargs["bias"] = float(data["bias_volt"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "num_wells": self.num_wells,
            "doping_per_cm2": self.doping / _CM2_TO_M2,
            "density_scale_per_cm2": self.density_scale / _CM2_TO_M2,
            "field_decay_cm_per_kV": self.field_decay / _CM_PER_KV_TO_M_PER_V,
            "peak_velocity_m_per_s": self.peak_velocity,
            "resonance_field_kV_per_cm": self.resonance_field / _KV_PER_CM_TO_V_PER_M,
            "contact_conductivity_per_ohm_m": self.contact_conductivity,
            "period_nm": self.period / _NM_TO_M,
            "relative_permittivity": self.permittivity / VACUUM_PERMITTIVITY,
            "area_m2": self.area,
            "bias_volt": self.bias,
        }

    def with_bias(self, bias: float) -> "SlParameters":
        return dataclasses.replace(self, bias=float(bias))

    @property
    def noise_intensity(self) -> float:
        """Small parameter 1/(e a) multiplying the squared noise amplitude."""
        return 1.0 / (self.charge * self.area)

    @property
    def drift_scale(self) -> float:
        """Characteristic drift magnitude v_peak * doping / period, in m^-2/s."""
        return self.peak_velocity * self.doping / self.period

    @property
    def current_scale(self) -> float:
        """Characteristic current density e * v_peak * doping / period, A/m^2."""
        return self.charge * self.drift_scale


def tunneling_field_factor(zeta):
    """Dimensionless resonance lineshape 2 z/(1+z^2) + exp(4e-6 z^4) - 1."""
    zeta = np.asarray(zeta, dtype=float)
    return 2.0 * zeta / (1.0 + zeta**2) + np.expm1(4e-6 * zeta**4)


def tunneling_field_factor_derivative(zeta):
    zeta = np.asarray(zeta, dtype=float)
    return 2.0 * (1.0 - zeta**2) / (1.0 + zeta**2) ** 2 + 16e-6 * zeta**3 * np.exp(
        4e-6 * zeta**4
    )


def _charge_depletion_log(u, w):
    """Stable evaluation of T = log(1 + exp(-w) (exp(u) - 1)).

    Uses log-space throughout: for u > 0 the identity
    T = logaddexp(0, -w + log(expm1 u)) never overflows, for any sign
    of w.  Non-positive u falls back to the direct expression (it cannot
    overflow there for w >= 0; unphysical inputs propagate as nan).
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        u_pos = np.where(u > 0.0, u, 1.0)
        log_expm1 = np.where(u_pos > 30.0, u_pos, np.log(np.expm1(np.minimum(u_pos, 30.0))))
        t_pos = np.logaddexp(0.0, log_expm1 - w)
        t_neg = np.log1p(np.exp(-w) * np.expm1(np.minimum(u, 0.0)))
    return np.where(u > 0.0, t_pos, t_neg)


def covariance_det_closed_form(currents) -> float:
    """Determinant of the tridiagonal covariance: sum_k prod_{i != k} J_i."""
    j = np.atleast_1d(np.asarray(currents, dtype=float))
    if j.size < 2:
        raise ValueError("need at least two currents")
    prefix = np.concatenate(([1.0], np.cumprod(j[:-1])))
    suffix = np.concatenate((np.cumprod(j[::-1])[-2::-1], [1.0]))
    return float(np.sum(prefix * suffix))


class Superlattice:
    """Evaluator for one parameter set: fields, currents, drift, noise."""

    def __init__(self, params: SlParameters):
        self.params = params
        n = params.num_wells
        charge_over_eps = params.charge / params.permittivity
        i_idx = np.arange(n + 1)[:, None]
        j_idx = np.arange(1, n + 1)[None, :]
        # F_i = bias/((N+1) l) + (e/eps) [ (N/2 - i) doping + sum_j (j/(N+1) - [j > i]) n_j ]
        self._field_weights = charge_over_eps * (j_idx / (n + 1) - (j_idx > i_idx))
        self._field_base = params.bias / ((n + 1) * params.period) + charge_over_eps * (
            n / 2.0 - i_idx[:, 0]
        ) * params.doping
        self._current_prefactor = params.charge * params.peak_velocity / params.period

    @property
    def dim(self) -> int:
        return self.params.num_wells

    def fields(self, densities) -> np.ndarray:
        """All N+1 inter-well fields, reconstructed from the densities."""
        n = np.asarray(densities, dtype=float)
        return self._field_base + n @ self._field_weights.T

    def currents(self, densities, fields=None) -> np.ndarray:
        """All N+1 tunneling current densities (contacts included)."""
        p = self.params
        n = np.asarray(densities, dtype=float)
        f = self.fields(n) if fields is None else fields
        nw = p.num_wells

        j = np.empty_like(f)
        j[..., 0] = p.contact_conductivity * f[..., 0]
        j[..., nw] = p.contact_conductivity * f[..., nw] * n[..., nw - 1] / p.doping

        f_int = f[..., 1:nw]
        factor = tunneling_field_factor(f_int / p.resonance_field)
        u = n[..., 1:] / p.density_scale
        w = p.field_decay * f_int
        depletion = _charge_depletion_log(u, w)
        j[..., 1:nw] = (
            self._current_prefactor * factor * (n[..., : nw - 1] - p.density_scale * depletion)
        )
        return j

    def current_jacobian(self, densities) -> np.ndarray:
        """Analytic derivatives dJ[..., i, k] = d J_i / d n_(k+1)."""
        p = self.params
        n = np.asarray(densities, dtype=float)
        nw = p.num_wells
        f = self.fields(n)
        w_mat = self._field_weights  # (N+1, N), dF_i/dn_k

        dj = np.zeros(n.shape[:-1] + (nw + 1, nw))
        dj[..., 0, :] = p.contact_conductivity * w_mat[0]
        dj[..., nw, :] = (
            p.contact_conductivity * n[..., nw - 1 : nw] / p.doping
        ) * w_mat[nw]
        dj[..., nw, nw - 1] += p.contact_conductivity * f[..., nw] / p.doping

        f_int = f[..., 1:nw]
        zeta = f_int / p.resonance_field
        factor = tunneling_field_factor(zeta)
        factor_prime = tunneling_field_factor_derivative(zeta) / p.resonance_field
        u = n[..., 1:] / p.density_scale
        w = p.field_decay * f_int
        depletion = _charge_depletion_log(u, w)
        occupancy = n[..., : nw - 1] - p.density_scale * depletion
        # dT/du = exp(u - w - T); dT/dw = expm1(-T) <= 0
        with np.errstate(over="ignore", invalid="ignore"):
            dt_du = np.exp(u - w - depletion)
        dt_dw = np.expm1(-depletion)

        kpref = self._current_prefactor
        field_term = (
            factor_prime * occupancy - factor * p.density_scale * dt_dw * p.field_decay
        )
        dj[..., 1:nw, :] += kpref * field_term[..., None] * w_mat[1:nw]
        rows = np.arange(1, nw)
        dj[..., rows, rows - 1] += kpref * factor
        dj[..., rows, rows] += -kpref * factor * dt_du
        return dj

    def drift(self, densities) -> np.ndarray:
        """Charge-conservation drift (J_(i-1) - J_i)/e per well."""
        j = self.currents(densities)
        return (j[..., :-1] - j[..., 1:]) / self.params.charge

    def drift_jacobian(self, densities) -> np.ndarray:
        dj = self.current_jacobian(densities)
        return (dj[..., :-1, :] - dj[..., 1:, :]) / self.params.charge

    def diffusion(self, densities) -> np.ndarray:
        """Bidiagonal shot-noise matrix, rows +sqrt(J_(i-1)), -sqrt(J_i)."""
        j = self.currents(densities)
        if np.any(j <= 0.0):
            raise NonPositiveCurrent("all tunneling currents must be positive for the noise model")
        nw = self.params.num_wells
        sigma = np.zeros(j.shape[:-1] + (nw, nw + 1))
        rows = np.arange(nw)
        roots = np.sqrt(j)
        sigma[..., rows, rows] = roots[..., :-1]
        sigma[..., rows, rows + 1] = -roots[..., 1:]
        return sigma

    def covariance(self, densities) -> np.ndarray:
        """Tridiagonal noise covariance assembled directly from the currents."""
        j = self.currents(densities)
        nw = self.params.num_wells
        cov = np.zeros(j.shape[:-1] + (nw, nw))
        rows = np.arange(nw)
        cov[..., rows, rows] = j[..., :-1] + j[..., 1:]
        inner = np.arange(nw - 1)
        cov[..., inner, inner + 1] = -j[..., 1:nw]
        cov[..., inner + 1, inner] = -j[..., 1:nw]
        return cov

    def covariance_derivatives(self, densities) -> np.ndarray:
        """Full derivative stack dA[..., k, m, n] = dA_mn / d n_(k+1)."""
        dj = self.current_jacobian(densities)
        nw = self.params.num_wells
        da = np.zeros(dj.shape[:-2] + (nw, nw, nw))
        for r in range(nw):
            da[..., :, r, r] = dj[..., r, :] + dj[..., r + 1, :]
            if r + 1 < nw:
                da[..., :, r, r + 1] = -dj[..., r + 1, :]
                da[..., :, r + 1, r] = -dj[..., r + 1, :]
        return da

    def covariance_derivative_contraction(self, densities, p) -> np.ndarray:
        """Matrix whose k-th column is (dA/dn_k) p, via current derivatives.

        Row r equals dJ_r (p_r - p_(r-1)) + dJ_(r+1) (p_r - p_(r+1)) with
        p_(-1) = p_N = 0, so the full (N,N,N) stack is never materialized.
        """
        dj = self.current_jacobian(densities)
        p = np.asarray(p, dtype=float)
        down = p.copy()
        down[..., 1:] -= p[..., :-1]
        up = p.copy()
        up[..., :-1] -= p[..., 1:]
        return dj[..., :-1, :] * down[..., None] + dj[..., 1:, :] * up[..., None]

    def as_system(self) -> SdeSystem:
        """Package the model in the generic drift/diffusion interface."""
        return SdeSystem(
            dim=self.params.num_wells,
            drift=self.drift,
            diffusion=self.diffusion,
            covariance=self.covariance,
            drift_jacobian=self.drift_jacobian,
            covariance_derivatives=self.covariance_derivatives,
            covariance_derivative_contraction=self.covariance_derivative_contraction,
            name="superlattice",
        )

    # -- two-domain equilibrium seeds -------------------------------------

    def homogeneous_current(self, field) -> np.ndarray:
        """Current of a uniform stack (all densities at the doping value)."""
        p = self.params
        field = np.asarray(field, dtype=float)
        factor = tunneling_field_factor(field / p.resonance_field)
        depletion = _charge_depletion_log(
            np.full_like(field, p.doping / p.density_scale), p.field_decay * field
        )
        return self._current_prefactor * factor * (p.doping - p.density_scale * depletion)

    def characteristic_extrema(self):
        """(F_peak, F_valley) of the uniform current-field characteristic."""
        p = self.params
        grid = np.linspace(1e-3 * p.resonance_field, 40.0 * p.resonance_field, 8001)
        vals = self.homogeneous_current(grid)
        rising = np.diff(vals) > 0.0
        peak_idx = None
        for i in range(1, rising.size):
            if rising[i - 1] and not rising[i]:
                peak_idx = i
                break
        if peak_idx is None:
            raise ValueError("uniform characteristic has no interior peak")
        valley_idx = None
        for i in range(peak_idx + 1, rising.size):
            if not rising[i - 1] and rising[i]:
                valley_idx = i
                break
        if valley_idx is None:
            raise ValueError("uniform characteristic has no valley after the peak")
        return float(grid[peak_idx]), float(grid[valley_idx])

    def branch_seed(self, high_periods: int, bias: Optional[float] = None) -> np.ndarray:
        """Density profile seeding the branch with ``high_periods`` high fields.

        Solves the two-field step profile (low field on the first
        N+1-high_periods periods, high on the rest) that carries the full
        bias with equal uniform-stack current in both domains; the charge
        monopole sits in the single wall well, per the Poisson equation.
        """
        p = self.params
        nw = p.num_wells
        if not 1 <= high_periods <= nw:
            raise ValueError("high_periods must lie in [1, num_wells]")
        v = p.bias if bias is None else float(bias)
        f_peak, f_valley = self.characteristic_extrema()
        j_peak = float(self.homogeneous_current(f_peak))
        j_valley = float(self.homogeneous_current(f_valley))

        f_cap = f_valley
        while float(self.homogeneous_current(f_cap)) <= 1.01 * j_peak:
            f_cap *= 2.0
            if f_cap > 1e4 * p.resonance_field:
                raise ValueError("uniform characteristic never recovers past the valley")

        field_total = v / p.period
        n_low = nw + 1 - high_periods

        def field_split(j_target):
            f_lo = brentq(
                lambda f: float(self.homogeneous_current(f)) - j_target,
                1e-6 * p.resonance_field,
                f_peak,
                xtol=1e-9 * p.resonance_field,
            )
            f_hi = brentq(
                lambda f: float(self.homogeneous_current(f)) - j_target,
                f_valley,
                f_cap,
                xtol=1e-9 * p.resonance_field,
            )
            return f_lo, f_hi

        def bias_mismatch(j_target):
            f_lo, f_hi = field_split(j_target)
            return n_low * f_lo + high_periods * f_hi - field_total

        j_lo_bnd = j_valley * (1.0 + 1e-9) if j_valley > 0 else 1e-9 * j_peak
        j_hi_bnd = j_peak * (1.0 - 1e-9)
        lo, hi = bias_mismatch(j_lo_bnd), bias_mismatch(j_hi_bnd)
        if lo * hi > 0.0:
            raise ValueError(
                f"no two-domain profile with {high_periods} high periods at bias {v} V"
            )
        j_star = brentq(bias_mismatch, j_lo_bnd, j_hi_bnd, xtol=1e-12 * j_peak)
        f_lo, f_hi = field_split(j_star)

        seed = np.full(nw, p.doping)
        wall = nw - high_periods  # 0-based well index carrying the field jump
        seed[wall] += (p.permittivity / p.charge) * (f_hi - f_lo)
        return seed


def make_system(params: SlParameters) -> SdeSystem:
    return Superlattice(params).as_system()
