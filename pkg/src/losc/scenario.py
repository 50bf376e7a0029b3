"""Randomized engagement initial conditions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import G, TargetDragParams
from .geometry import InfeasibleLeadError, collision_velocity_3d, perturb_heading, sample_cap
from .maneuvers import ManeuverConfig, ManeuverSpec, sample_maneuver
from .seeker import RadomeBounds, RadomeParams, sample_radome

DRAG_MODES = ("none", "randomized")


@dataclass(frozen=True)
class ScenarioConfig:
    range: tuple = (5000.0, 10000.0)
    elevation_deg: tuple = (-30.0, 30.0)
    azimuth_deg: tuple = (0.0, 360.0)
    missile_altitude: tuple = (2000.0, 10000.0)
    min_target_altitude: float = 0.0
    missile_speed: tuple = (800.0, 1000.0)
    target_speed: tuple = (400.0, 600.0)
    target_cone_half_angle_deg: float = 30.0
    heading_error_deg: tuple = (0.0, 5.0)
    target_max_accel: tuple = (0.0, 30.0 * G)
    drag_mode: str = "none"
    target_k: tuple = (1.0 / 8.0, 1.0 / 3.0)
    target_cd0: tuple = (0.125, 0.4)
    target_mass: float = 450.0
    sigma_los: float = 1e-3
    seeker_tau: float = 0.02
    radome: RadomeBounds = field(default_factory=RadomeBounds)
    maneuver: ManeuverConfig = field(default_factory=ManeuverConfig)
    max_retries: int = 100

    def __post_init__(self):
        for name in (
            "range", "elevation_deg", "azimuth_deg", "missile_altitude", "missile_speed",
            "target_speed", "heading_error_deg", "target_max_accel", "target_k", "target_cd0",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if self.drag_mode not in DRAG_MODES:
            raise ValueError(f"drag_mode must be one of {DRAG_MODES}")


@dataclass(frozen=True)
class InitialConditions:
    r_m: np.ndarray
    v_m: np.ndarray
    r_t: np.ndarray
    v_t: np.ndarray
    target_max_accel_ref: float
    heading_error: float
    radome: RadomeParams
    maneuver: ManeuverSpec
    target_drag: TargetDragParams

    @property
    def closing_velocity(self) -> float:
        r_tm = self.r_t - self.r_m
        return -float(np.dot(r_tm, self.v_t - self.v_m)) / float(np.linalg.norm(r_tm))


class ScenarioError(RuntimeError):
    pass


def sample_initial_conditions(cfg: ScenarioConfig, rng: np.random.Generator) -> InitialConditions:
    """Draw one engagement.

    Geometry is resampled when the target lands below ``min_target_altitude``
    or no collision course exists; after ``max_retries`` failures a
    :class:`ScenarioError` is raised.
    """
    for _ in range(cfg.max_retries):
        rng_ = rng.uniform(*cfg.range)
        elev = math.radians(rng.uniform(*cfg.elevation_deg))
        az = math.radians(rng.uniform(*cfg.azimuth_deg))
        h_m = rng.uniform(*cfg.missile_altitude)
        speed_m = rng.uniform(*cfg.missile_speed)
        speed_t = rng.uniform(*cfg.target_speed)
        he = math.radians(rng.uniform(*cfg.heading_error_deg))
        a_t_max = rng.uniform(*cfg.target_max_accel)
        lam = np.array([math.cos(elev) * math.cos(az), math.cos(elev) * math.sin(az), math.sin(elev)])
        r_m = np.array([0.0, 0.0, h_m])
        r_t = r_m + rng_ * lam
        # cone axis points from the target back toward the missile
        v_t = speed_t * sample_cap(-lam, math.radians(cfg.target_cone_half_angle_deg), rng)
        if r_t[2] < cfg.min_target_altitude:
            continue
        try:
            v_collision = collision_velocity_3d(r_t - r_m, v_t, speed_m)
        except InfeasibleLeadError:
            continue
        v_m = perturb_heading(v_collision, he, rng)
        closing = -float(np.dot(lam, v_t - v_m))
        expected_tof = rng_ / closing if closing > 0 else 2.0 * rng_ / speed_m
        maneuver = sample_maneuver(cfg.maneuver, a_t_max, rng, expected_tof)
        radome = sample_radome(cfg.radome, rng)
        k_t = rng.uniform(*cfg.target_k)
        cd0_t = rng.uniform(*cfg.target_cd0)
        if cfg.drag_mode == "none":
            k_t = cd0_t = 0.0
        return InitialConditions(
            r_m=r_m,
            v_m=v_m,
            r_t=r_t,
            v_t=v_t,
            target_max_accel_ref=a_t_max,
            heading_error=he,
            radome=radome,
            maneuver=maneuver,
            target_drag=TargetDragParams(k_t, cd0_t, cfg.target_mass),
        )
    raise ScenarioError(f"no feasible engagement after {cfg.max_retries} attempts")
