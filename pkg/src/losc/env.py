"""Episodic engagement environment with reset/step semantics.

Observation layout (8 components)::

    [lambda_x, lambda_y, lambda_z, omega_x, omega_y, omega_z, v_c, r]

where ``lambda`` is the measured LOS unit vector, ``omega`` the LOS rate
(rad/s), ``v_c`` the closing velocity (m/s) and ``r`` the range (m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    EngagementState,
    EpisodeTrace,
    advance_interval,
    realized_target_accel,
)
from .geometry import norm3, unit
from .guidance import FcsFilters, apn_accel, curve_los, fcs_actuator, tpn_accel
from .maneuvers import ManeuverTracker
from .scenario import InitialConditions, sample_initial_conditions
from .seeker import LagFilter, SeekerOutput, apparent_los, nav_outputs

OBS_DIM = 8
ACT_DIM = 3


@dataclass(frozen=True)
class RewardParams:
    alpha: float = -0.01
    beta: float = 10.0
    r_lim: float = 1.0
    epsilon: float = 20.0
    sigma_losc: float = 1.0
    gamma_shaping: float = 0.95
    gamma_terminal: float = 0.995


def reward(miss: float, theta_losc, done: bool, p: RewardParams) -> tuple[float, float]:
    """Split reward into the per-step curvature penalty and the terminal bonus.

    The terminal Gaussian uses a negative exponent so that the bonus peaks at
    zero miss.
    """
    r_shaping = p.alpha * float(np.linalg.norm(theta_losc))
    if not done:
        return r_shaping, 0.0
    r_term1 = p.beta if miss < p.r_lim else 0.0
    r_term2 = p.epsilon * math.exp(-(miss**2) / p.sigma_losc**2)
    return r_shaping, r_term1 + r_term2


class StepAfterDoneError(RuntimeError):
    pass


@dataclass
class EpisodeResult:
    miss: float
    steps: int
    accel_samples: list = field(default_factory=list)
    target_accel_samples: list = field(default_factory=list)
    termination_kind: str = "closing"
    total_reward: float = 0.0
    maneuver_kind: str = ""


def observation(s: SeekerOutput) -> np.ndarray:
    return np.concatenate([s.lambda_tilde, s.omega_tilde, [s.v_c, s.r]])


class EngagementEnv:
    """One engagement at a time; create one instance per concurrent episode.

    ``cfg`` needs the attributes ``scenario``, ``guidance``, ``integrator``,
    ``missile`` and ``reward`` (see :class:`losc.config.Config`).
    """

    def __init__(self, cfg, record_trace: bool = False):
        self.cfg = cfg
        self.record_trace = record_trace
        self.done = True
        self.ic: InitialConditions | None = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        cfg = self.cfg
        self.rng = rng
        self.ic = ic = sample_initial_conditions(cfg.scenario, rng)
        self.state = EngagementState.from_velocities(ic.r_m, ic.v_m, ic.r_t, ic.v_t)
        lam = unit(ic.r_t - ic.r_m)
        normal = np.cross(lam, np.cross(np.array([0.0, 0.0, 1.0]), lam))
        if np.linalg.norm(normal) < 1e-9:
            normal = np.array([1.0, 0.0, 0.0])
        self.fcs = FcsFilters(normal)
        self.seeker_filter = LagFilter(cfg.scenario.seeker_tau)
        self.maneuver = ManeuverTracker(ic.maneuver)
        self.trace = EpisodeTrace()
        self.accel_samples: list[float] = []
        self.target_accel_samples: list[float] = []
        self.steps = 0
        self.total_reward = 0.0
        self.termination = ""
        self.done = False
        self.last_curve = None
        self.seeker_out = self._measure()
        return observation(self.seeker_out)

    def _measure(self) -> SeekerOutput:
        s = self.state
        r_tm = s.r_tm
        lam = r_tm / norm3(r_tm)
        v_m = s.v_m
        lam_tilde = apparent_los(
            lam,
            v_m / norm3(v_m),
            self.ic.radome,
            self.cfg.scenario.sigma_los,
            self.seeker_filter,
            self.rng,
            self.cfg.integrator.dt_coarse,
        )
        return nav_outputs(lam_tilde, r_tm, s.v_t - v_m)

    def step(self, u) -> tuple[np.ndarray, float, bool]:
        """Apply one 20 ms guidance update.

        The reward split is available afterwards as ``self.reward_parts``.
        """
        if self.done:
            raise StepAfterDoneError("step() called on a finished episode; call reset()")
        cfg = self.cfg
        gcfg = cfg.guidance
        dt = cfg.integrator.dt_coarse
        s = self.state
        seeker = self.seeker_out

        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        curve = curve_los(u, seeker, gcfg.curvature_scale)
        self.last_curve = curve

        v_t = s.v_t
        a_t_com = self.maneuver(s.t, v_t)
        a_t = realized_target_accel(a_t_com, s.r_t[2], s.speed_t)
        v_m = s.v_m
        if gcfg.law == "apn":
            a_com = apn_accel(curve, seeker.v_c, seeker.v_tm, a_t, gcfg, v_m)
        else:
            a_com = tpn_accel(curve, seeker.v_c, seeker.v_tm, gcfg, v_m)
        a_m = fcs_actuator(a_com, s.r_m[2], s.speed_m, self.fcs, dt, gcfg)

        a_m_norm = norm3(a_m)
        a_t_norm = norm3(a_t)
        self.accel_samples.append(a_m_norm)
        self.target_accel_samples.append(a_t_norm)
        if self.record_trace:
            self.trace.record(s, a_m_norm, a_t_norm, curve.theta_losc, float(np.linalg.norm(curve.omega_losc)))

        self.state, passed = advance_interval(
            s, a_m, a_t, cfg.integrator, cfg.missile, self.ic.target_drag
        )
        self.steps += 1
        if passed:
            self.termination = "closing"
        elif self.state.t >= cfg.integrator.t_max - 1e-9:
            self.termination = "time_cap"
        self.done = bool(self.termination)

        miss = self.state.range
        self.reward_parts = reward(miss, curve.theta_losc, self.done, cfg.reward)
        r = self.reward_parts[0] + self.reward_parts[1]
        self.total_reward += r
        self.seeker_out = self._measure()
        if self.done:
            self.trace.miss, self.trace.termination = miss, self.termination
        return observation(self.seeker_out), r, self.done

    @property
    def miss(self) -> float:
        return self.state.range

    def result(self) -> EpisodeResult:
        return EpisodeResult(
            miss=self.state.range,
            steps=self.steps,
            accel_samples=list(self.accel_samples),
            target_accel_samples=list(self.target_accel_samples),
            termination_kind=self.termination,
            total_reward=self.total_reward,
            maneuver_kind=self.ic.maneuver.kind,
        )


class ZeroPolicy:
    """No LOS curvature; the PN and APN benchmarks run with this controller."""

    def reset(self):
        pass

    def act(self, obs) -> np.ndarray:
        return np.zeros(ACT_DIM)


def run_episode(cfg, policy, rng: np.random.Generator, record_trace: bool = False):
    """Fly one full episode and return its :class:`EpisodeResult`.

    ``policy`` is any object with ``reset()`` and ``act(obs)``; None means
    :class:`ZeroPolicy`. With ``record_trace`` the env's trace is returned too.
    """
    policy = ZeroPolicy() if policy is None else policy
    env = EngagementEnv(cfg, record_trace=record_trace)
    obs = env.reset(rng)
    policy.reset()
    done = False
    while not done:
        obs, _, done = env.step(policy.act(obs))
    if record_trace:
        return env.result(), env.trace
    return env.result()
