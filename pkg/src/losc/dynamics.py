"""Point-mass missile/target dynamics with drag and RK4 integration.

State layout of the flat integrator vector (14 entries)::

    [r_M(3), vt_M(3), V_M, r_T(3), vt_T(3), V_T]

``vt`` is the velocity integrated without drag; the physical velocity is
``V * vt / |vt|``. After every accepted step ``vt`` is reset to the physical
velocity so its magnitude tracks the drag-adjusted speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import norm3

RHO0 = 1.225
SCALE_HEIGHT = 8500.0
G = 9.81


def density(h: float) -> float:
    """Exponential atmosphere, held at the sea-level value below h = 0."""
    return RHO0 * math.exp(-max(h, 0.0) / SCALE_HEIGHT)


@dataclass(frozen=True)
class MissileDragParams:
    k_m: float = 0.25
    mass: float = 450.0
    cd0: float = 0.35
    s_ref: float = 0.05


@dataclass(frozen=True)
class TargetDragParams:
    k_t: float = 0.0
    cd0: float = 0.0
    mass: float = 450.0


@dataclass
class EngagementState:
    t: float
    r_m: np.ndarray
    vt_m: np.ndarray
    speed_m: float
    r_t: np.ndarray
    vt_t: np.ndarray
    speed_t: float

    @classmethod
    def from_velocities(cls, r_m, v_m, r_t, v_t, t: float = 0.0) -> "EngagementState":
        v_m = np.asarray(v_m, dtype=float)
        v_t = np.asarray(v_t, dtype=float)
        return cls(
            t=t,
            r_m=np.array(r_m, dtype=float),
            vt_m=v_m.copy(),
            speed_m=float(np.linalg.norm(v_m)),
            r_t=np.array(r_t, dtype=float),
            vt_t=v_t.copy(),
            speed_t=float(np.linalg.norm(v_t)),
        )

    @property
    def v_m(self) -> np.ndarray:
        return self.vt_m * (self.speed_m / norm3(self.vt_m))

    @property
    def v_t(self) -> np.ndarray:
        n = norm3(self.vt_t)
        if n == 0.0:
            return np.zeros(3)
        return self.vt_t * (self.speed_t / n)

    @property
    def r_tm(self) -> np.ndarray:
        return self.r_t - self.r_m

    @property
    def v_tm(self) -> np.ndarray:
        return self.v_t - self.v_m

    @property
    def range(self) -> float:
        return norm3(self.r_t - self.r_m)

    @property
    def closing_velocity(self) -> float:
        return closing_velocity(self.r_tm, self.v_tm)

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.r_m, self.vt_m, [self.speed_m], self.r_t, self.vt_t, [self.speed_t]]
        )

    @classmethod
    def from_vector(cls, t: float, y: np.ndarray) -> "EngagementState":
        return cls(
            t=t,
            r_m=y[0:3].copy(),
            vt_m=y[3:6].copy(),
            speed_m=float(y[6]),
            r_t=y[7:10].copy(),
            vt_t=y[10:13].copy(),
            speed_t=float(y[13]),
        )

    def copy(self) -> "EngagementState":
        return replace(
            self,
            r_m=self.r_m.copy(),
            vt_m=self.vt_m.copy(),
            r_t=self.r_t.copy(),
            vt_t=self.vt_t.copy(),
        )


def closing_velocity(r_tm: np.ndarray, v_tm: np.ndarray) -> float:
    return -float(np.dot(r_tm, v_tm)) / norm3(r_tm)


def _vt_rate(vt: np.ndarray, a: np.ndarray, v_dot: float) -> np.ndarray:
    """Rate of the velocity-direction state.

    The acceleration component across ``vt`` turns it and the speed rate
    sets its length, so that ``|vt|`` tracks the integrated speed ``V``.
    Renormalizing ``vt`` to ``V`` after every step is the discrete version of
    this rate; writing it into the ODE keeps the scheme step-size consistent.
    """
    a = np.asarray(a, dtype=float)
    n = norm3(vt)
    if n == 0.0:
        return a
    u = vt / n
    return a - np.dot(a, u) * u + v_dot * u


def missile_derivatives(s: EngagementState, a_m: np.ndarray, p: MissileDragParams = MissileDragParams()):
    """Return (r_dot, vt_dot, V_dot) for the missile."""
    q = 0.5 * density(s.r_m[2]) * s.speed_m**2
    v_dot = -q * p.cd0 * p.s_ref / p.mass - p.k_m * float(np.linalg.norm(a_m))
    return s.v_m, _vt_rate(s.vt_m, a_m, v_dot), v_dot


def target_derivatives(s: EngagementState, a_t: np.ndarray, p: TargetDragParams):
    """Return (r_dot, vt_dot, V_dot) for the target."""
    v_dot = -density(s.r_t[2]) * s.speed_t**2 * p.cd0 / (2.0 * p.mass) - p.k_t * float(np.linalg.norm(a_t))
    return s.v_t, _vt_rate(s.vt_t, a_t, v_dot), v_dot


def realized_target_accel(a_t_com: np.ndarray, h_t: float, speed_t: float, v_max: float = 600.0) -> np.ndarray:
    """Scale a commanded target acceleration by the dynamic-pressure ratio."""
    a_t_com = np.asarray(a_t_com, dtype=float)
    if not np.any(a_t_com):
        return np.zeros(3)
    ratio = density(h_t) * speed_t**2 / (RHO0 * v_max**2)
    return a_t_com * ratio


def rk4(f, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    """One classic fourth-order Runge-Kutta step of ``y' = f(t, y)``."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _engagement_rhs(y, a_m, a_t, norm_am, norm_at, c_m, c_t, k_m, k_t):
    """Derivative of the 14-element state as a plain list of floats.

    ``c_m`` and ``c_t`` are the quadratic drag factors divided by the sea-level
    density, so that ``V_dot = -c * rho(h) * V**2 - k * |a|``.
    """
    vm, vt = y[6], y[13]
    rho_m = RHO0 * math.exp(-max(y[2], 0.0) / SCALE_HEIGHT)
    rho_t = RHO0 * math.exp(-max(y[9], 0.0) / SCALE_HEIGHT)
    vm_dot = -c_m * rho_m * vm * vm - k_m * norm_am
    vt_dot = -c_t * rho_t * vt * vt - k_t * norm_at
    out = []
    for lo, v, v_dot, a in ((3, vm, vm_dot, a_m), (10, vt, vt_dot, a_t)):
        n = math.sqrt(y[lo] * y[lo] + y[lo + 1] * y[lo + 1] + y[lo + 2] * y[lo + 2])
        if n > 0.0:
            ux, uy, uz = y[lo] / n, y[lo + 1] / n, y[lo + 2] / n
            # along-track acceleration is dropped; the speed rate sets |vt|
            along = a[0] * ux + a[1] * uy + a[2] * uz - v_dot
            out += [v * ux, v * uy, v * uz, a[0] - along * ux, a[1] - along * uy, a[2] - along * uz, v_dot]
        else:
            out += [0.0, 0.0, 0.0, a[0], a[1], a[2], v_dot]
    return out


def _rk4_list(f, y, dt):
    k1 = f(y)
    k2 = f([a + 0.5 * dt * b for a, b in zip(y, k1)])
    k3 = f([a + 0.5 * dt * b for a, b in zip(y, k2)])
    k4 = f([a + dt * b for a, b in zip(y, k3)])
    h = dt / 6.0
    return [a + h * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]


def rk4_step(
    s: EngagementState,
    a_m: np.ndarray,
    a_t: np.ndarray,
    dt: float,
    mp: MissileDragParams = MissileDragParams(),
    tp: TargetDragParams = TargetDragParams(),
) -> EngagementState:
    """Advance the combined state by ``dt`` with accelerations held constant.

    Speeds are folded back into the velocity vectors after the step.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    am = [float(v) for v in a_m]
    at = [float(v) for v in a_t]
    nam = math.sqrt(am[0] ** 2 + am[1] ** 2 + am[2] ** 2)
    nat = math.sqrt(at[0] ** 2 + at[1] ** 2 + at[2] ** 2)
    c_m = 0.5 * mp.cd0 * mp.s_ref / mp.mass
    c_t = tp.cd0 / (2.0 * tp.mass)

    def f(y):
        return _engagement_rhs(y, am, at, nam, nat, c_m, c_t, mp.k_m, tp.k_t)

    y = _rk4_list(f, s.to_vector().tolist(), dt)
    for lo, iv in ((3, 6), (10, 13)):
        n = math.sqrt(y[lo] ** 2 + y[lo + 1] ** 2 + y[lo + 2] ** 2)
        if n > 0.0:
            g = y[iv] / n
            y[lo], y[lo + 1], y[lo + 2] = y[lo] * g, y[lo + 1] * g, y[lo + 2] * g
    return EngagementState.from_vector(s.t + dt, np.array(y))


@dataclass(frozen=True)
class IntegratorConfig:
    dt_coarse: float = 0.02
    dt_fine: float = 2e-4
    fine_range: float = 80.0
    t_max: float = 40.0
    # integrate every interval at dt_fine (reference runs)
    uniform_fine: bool = False


def advance_interval(
    s: EngagementState,
    a_m: np.ndarray,
    a_t: np.ndarray,
    cfg: IntegratorConfig,
    mp: MissileDragParams,
    tp: TargetDragParams,
) -> tuple[EngagementState, bool]:
    """Integrate one guidance interval with accelerations held constant.

    A single coarse step is taken while the range exceeds ``fine_range``;
    otherwise, or when the coarse step would carry the state past closest
    approach, the interval is covered with fine steps and integration stops at
    the first fine step whose closing velocity is negative.

    Returns the new state and whether closest approach was passed.
    """
    if not cfg.uniform_fine and s.range > cfg.fine_range:
        s1 = rk4_step(s, a_m, a_t, cfg.dt_coarse, mp, tp)
        if s1.closing_velocity >= 0.0:
            return s1, False
    n = int(round(cfg.dt_coarse / cfg.dt_fine))
    t0 = s.t
    for i in range(n):
        s = rk4_step(s, a_m, a_t, cfg.dt_fine, mp, tp)
        s.t = t0 + (i + 1) * cfg.dt_fine
        if s.closing_velocity < 0.0:
            return s, True
    s.t = t0 + cfg.dt_coarse
    return s, False


@dataclass
class EpisodeTrace:
    """Per-guidance-step records of an engagement."""

    columns = (
        "t",
        "r_m_x", "r_m_y", "r_m_z",
        "v_m_x", "v_m_y", "v_m_z",
        "r_t_x", "r_t_y", "r_t_z",
        "v_t_x", "v_t_y", "v_t_z",
        "a_m", "a_t",
        "theta_yaw", "theta_pitch", "theta_roll",
        "omega_losc",
    )
    rows: list = field(default_factory=list)
    miss: float = float("nan")
    termination: str = ""

    def record(self, s: EngagementState, a_m_norm=0.0, a_t_norm=0.0, theta=(0.0, 0.0, 0.0), omega_norm=0.0):
        self.rows.append(
            (s.t, *s.r_m, *s.v_m, *s.r_t, *s.v_t, a_m_norm, a_t_norm, *theta, omega_norm)
        )

    def __len__(self):
        return len(self.rows)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float).reshape(-1, len(self.columns))

    def to_csv(self, path) -> None:
        np.savetxt(path, self.as_array(), delimiter=",", header=",".join(self.columns), comments="", fmt="%.10g")


def integrate_to_termination(
    s: EngagementState,
    controller,
    cfg: IntegratorConfig = IntegratorConfig(),
    mp: MissileDragParams = MissileDragParams(),
    tp: TargetDragParams = TargetDragParams(),
) -> EpisodeTrace:
    """Fly an engagement until closest approach or the time cap.

    ``controller(state)`` is called every guidance interval and returns the
    missile and target accelerations ``(a_m, a_t)`` held over that interval.
    """
    trace = EpisodeTrace()
    s = s.copy()
    if s.closing_velocity < 0.0:
        trace.record(s)
        trace.miss, trace.termination = s.range, "closing"
        return trace
    while True:
        a_m, a_t = controller(s)
        trace.record(s, float(np.linalg.norm(a_m)), float(np.linalg.norm(a_t)))
        s, done = advance_interval(s, a_m, a_t, cfg, mp, tp)
        if done:
            trace.miss, trace.termination = s.range, "closing"
            return trace
        if s.t >= cfg.t_max - 1e-9:
            trace.miss, trace.termination = s.range, "time_cap"
            return trace
