"""LOS curvature, proportional navigation laws and FCS/actuator lags."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import G, RHO0, density
from .geometry import cross3, euler321_to_dcm, norm3
from .seeker import SeekerOutput, los_rate

LAWS = ("pn", "apn", "pn-losc")


@dataclass(frozen=True)
class GuidanceConfig:
    law: str = "pn"
    n: float = 3.0
    k: float = math.radians(2.0)
    a_m_ref: float = 74.0 * G
    a_m_max: float = 40.0 * G
    fcs_tau: float = 0.08
    act_tau: float = 0.02
    # "relative": remove the component along v_TM; "missile": along v_M
    perp_frame: str = "relative"

    def __post_init__(self):
        if self.law not in LAWS:
            raise ValueError(f"unknown guidance law {self.law!r}; expected one of {LAWS}")
        if self.perp_frame not in ("relative", "missile"):
            raise ValueError(f"unknown perp_frame {self.perp_frame!r}")
        if not self.n > 0 or self.k < 0 or not (self.fcs_tau > 0 and self.act_tau > 0):
            raise ValueError("invalid guidance constants")

    @property
    def curvature_scale(self) -> float:
        """LOS curvature scale actually applied (zero for the PN/APN benchmarks)."""
        return self.k if self.law == "pn-losc" else 0.0


@dataclass
class CurvedLos:
    lambda_losc: np.ndarray
    omega_losc: np.ndarray
    theta_losc: np.ndarray


def curve_los(u, seeker: SeekerOutput, k: float) -> CurvedLos:
    """Rotate the measured LOS by the Euler 321 attitude ``k * u``."""
    theta = k * np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
    lam = euler321_to_dcm(theta) @ seeker.lambda_tilde
    return CurvedLos(lam, los_rate(lam, seeker.r, seeker.v_tm), theta)


def _remove_axis_component(a: np.ndarray, axis: np.ndarray) -> np.ndarray:
    n = norm3(axis)
    if n == 0.0:
        return a
    axis = axis / n
    return a - np.dot(a, axis) * axis


def _projection_axis(cfg: GuidanceConfig, v_tm, v_m):
    if cfg.perp_frame == "missile":
        if v_m is None:
            raise ValueError("perp_frame='missile' needs the missile velocity")
        return np.asarray(v_m, dtype=float)
    return np.asarray(v_tm, dtype=float)


def tpn_accel(c: CurvedLos, v_c: float, v_tm, cfg: GuidanceConfig, v_m=None) -> np.ndarray:
    """True proportional navigation command, made perpendicular to the frame axis."""
    a = -cfg.n * v_c * cross3(c.lambda_losc, c.omega_losc)
    return _remove_axis_component(a, _projection_axis(cfg, v_tm, v_m))


def apn_accel(c: CurvedLos, v_c: float, v_tm, a_t_true, cfg: GuidanceConfig, v_m=None) -> np.ndarray:
    """Augmented PN with perfect knowledge of the target acceleration."""
    a = -cfg.n * v_c * cross3(c.lambda_losc, c.omega_losc) + 0.5 * cfg.n * np.asarray(a_t_true, dtype=float)
    return _remove_axis_component(a, _projection_axis(cfg, v_tm, v_m))


def accel_limit(h_m: float, speed_m: float, cfg: GuidanceConfig) -> float:
    """Dynamic-pressure limit followed by the structural load limit."""
    q_limit = density(h_m) * speed_m**2 / (RHO0 * 1000.0**2) * cfg.a_m_ref
    return min(q_limit, cfg.a_m_max)


class FcsFilters:
    """Per-episode state of the flight-control and actuator lags."""

    def __init__(self, initial_direction=(0.0, 0.0, 1.0)):
        self.magnitude = 0.0
        self.accel = np.zeros(3)
        d = np.asarray(initial_direction, dtype=float)
        self.direction = d / np.linalg.norm(d)


def fcs_actuator(a_com, h_m: float, speed_m: float, filters: FcsFilters, dt: float, cfg: GuidanceConfig) -> np.ndarray:
    """Clip the commanded magnitude, lag it, then lag the acceleration vector.

    A zero command keeps the last non-zero direction and drives the
    magnitude toward zero.
    """
    a_com = np.asarray(a_com, dtype=float)
    mag = norm3(a_com)
    if mag > 0.0:
        filters.direction = a_com / mag
    clipped = min(max(mag, 0.0), accel_limit(h_m, speed_m, cfg))
    filters.magnitude += (1.0 - math.exp(-dt / cfg.fcs_tau)) * (clipped - filters.magnitude)
    target = filters.magnitude * filters.direction
    filters.accel = filters.accel + (1.0 - math.exp(-dt / cfg.act_tau)) * (target - filters.accel)
    return filters.accel.copy()
