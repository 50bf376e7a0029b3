"""Open-loop target maneuvers: bang-bang, weave and jink.

All maneuvers apply a lateral acceleration orthogonal to the target velocity.
The lateral direction is seeded from ``plane_axis`` and carried along with the
velocity (re-orthogonalized every evaluation) by :class:`ManeuverTracker`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import norm3

KINDS = ("bang-bang", "weave", "jink")


@dataclass(frozen=True)
class ManeuverConfig:
    kinds: tuple = KINDS
    max_accel_prob: float = 0.5
    bang_duration: tuple = (1.0, 8.0)
    bang_start: tuple = (0.0, 6.0)
    weave_period: tuple = (1.0, 8.0)
    weave_start: tuple = (0.0, 6.0)
    # probability of a long weave period drawn from U(8, 2 * expected ToF)
    weave_long_prob: float = 0.2
    jink_interval: tuple = (0.25, 1.0)
    jink_start: tuple = (0.0, 6.0)
    horizon: float = 40.0


@dataclass(frozen=True)
class ManeuverSpec:
    kind: str
    accel_level: float
    start_time: float
    duration: float = math.inf
    period_or_switch: float = 0.0
    phase_sign: float = 1.0
    plane_axis: tuple = (0.0, 0.0, 1.0)
    # jink only: absolute times at which the sign flips
    switch_times: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "accel_level": self.accel_level,
            "start_time": self.start_time,
            "duration": self.duration,
            "period_or_switch": self.period_or_switch,
            "phase_sign": self.phase_sign,
            "plane_axis": list(self.plane_axis),
            "switch_times": list(self.switch_times),
        }


def sample_maneuver(
    cfg: ManeuverConfig,
    target_max_accel: float,
    rng: np.random.Generator,
    expected_tof: float = 5.0,
) -> ManeuverSpec:
    """Draw a random maneuver for one episode.

    The draw sequence is fixed regardless of kind so that the RNG stream
    stays aligned across configurations.
    """
    if target_max_accel < 0.0:
        raise ValueError("target_max_accel must be non-negative")
    kind = cfg.kinds[int(rng.integers(len(cfg.kinds)))]
    use_max = rng.uniform() < cfg.max_accel_prob
    level = rng.uniform(0.0, target_max_accel)
    if use_max:
        level = target_max_accel
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    phase_sign = 1.0 if rng.uniform() < 0.5 else -1.0

    if kind == "bang-bang":
        start = rng.uniform(*cfg.bang_start)
        duration = rng.uniform(*cfg.bang_duration)
        return ManeuverSpec(kind, level, start, duration, duration, phase_sign, tuple(axis))
    if kind == "weave":
        start = rng.uniform(*cfg.weave_start)
        if rng.uniform() < cfg.weave_long_prob:
            period = rng.uniform(8.0, max(8.0, 2.0 * expected_tof))
        else:
            period = rng.uniform(*cfg.weave_period)
        return ManeuverSpec(kind, level, start, math.inf, period, phase_sign, tuple(axis))
    if kind == "jink":
        start = rng.uniform(*cfg.jink_start)
        switches = []
        t = start
        while t < cfg.horizon:
            t += rng.uniform(*cfg.jink_interval)
            switches.append(t)
        return ManeuverSpec(
            kind, level, start, math.inf, float(np.mean(np.diff([start] + switches))),
            phase_sign, tuple(axis), tuple(switches),
        )
    raise ValueError(f"unknown maneuver kind {kind!r}")


def lateral_magnitude(spec: ManeuverSpec, t: float) -> float:
    """Signed lateral acceleration the schedule asks for at time ``t``."""
    if t < spec.start_time or spec.accel_level == 0.0:
        return 0.0
    a = spec.accel_level * spec.phase_sign
    tau = t - spec.start_time
    if spec.kind == "bang-bang":
        return a if tau < spec.duration else -a
    if spec.kind == "weave":
        return a * math.sin(2.0 * math.pi * tau / spec.period_or_switch)
    if spec.kind == "jink":
        flips = int(np.searchsorted(spec.switch_times, t, side="right"))
        return a if flips % 2 == 0 else -a
    raise ValueError(f"unknown maneuver kind {spec.kind!r}")


def _orthogonal_direction(direction: np.ndarray, v_t: np.ndarray) -> np.ndarray:
    v_hat = v_t / norm3(v_t)
    d = direction - np.dot(direction, v_hat) * v_hat
    n = norm3(d)
    if n < 1e-9:
        # direction collapsed onto the velocity: fall back to any normal
        axis = np.zeros(3)
        axis[int(np.argmin(np.abs(v_hat)))] = 1.0
        d = np.cross(v_hat, axis)
        n = np.linalg.norm(d)
    d = d / n
    # second pass removes the residual along v_hat left by rounding
    d = d - np.dot(d, v_hat) * v_hat
    return d / norm3(d)


def commanded_accel(spec: ManeuverSpec, t: float, v_t: np.ndarray, direction=None) -> np.ndarray:
    """Commanded target acceleration, orthogonal to ``v_t``.

    ``direction`` is the lateral direction carried from the previous
    evaluation; ``spec.plane_axis`` is used when it is None.
    """
    v_t = np.asarray(v_t, dtype=float)
    if np.linalg.norm(v_t) == 0.0:
        raise ValueError("target velocity must be non-zero")
    mag = lateral_magnitude(spec, t)
    if mag == 0.0:
        return np.zeros(3)
    seed = np.asarray(spec.plane_axis if direction is None else direction, dtype=float)
    return mag * _orthogonal_direction(seed, v_t)


class ManeuverTracker:
    """Per-episode maneuver state that transports the lateral direction."""

    def __init__(self, spec: ManeuverSpec):
        self.spec = spec
        self.direction = None

    def __call__(self, t: float, v_t: np.ndarray) -> np.ndarray:
        seed = self.spec.plane_axis if self.direction is None else self.direction
        self.direction = _orthogonal_direction(np.asarray(seed, dtype=float), np.asarray(v_t, dtype=float))
        return lateral_magnitude(self.spec, t) * self.direction
