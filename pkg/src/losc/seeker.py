"""Radome refraction, LOS noise, seeker lag and navigation outputs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import cross3, euler321_to_dcm, look_angle, norm3


@dataclass(frozen=True)
class RadomeParams:
    a_u: float = 0.0
    a_v: float = 0.0
    k_u: float = 2.0
    k_v: float = 2.0


@dataclass(frozen=True)
class RadomeBounds:
    a: tuple = (-1e-2, 1e-2)
    k: tuple = (1.0, 3.0)
    enabled: bool = True


def sample_radome(bounds: RadomeBounds, rng: np.random.Generator) -> RadomeParams:
    a_u, a_v = rng.uniform(*bounds.a, size=2)
    k_u, k_v = rng.uniform(*bounds.k, size=2)
    if not bounds.enabled:
        a_u = a_v = 0.0
    return RadomeParams(float(a_u), float(a_v), float(k_u), float(k_v))


def _refraction(theta_l: float, a: float, k: float) -> float:
    return a * (0.75 * theta_l / (math.pi / 2) + 0.25 * math.cos(2.0 * math.pi * theta_l / k))


def refraction_angles(theta_l: float, p: RadomeParams) -> tuple[float, float]:
    """Azimuth and elevation refraction errors as functions of look angle."""
    return _refraction(theta_l, p.a_u, p.k_u), _refraction(theta_l, p.a_v, p.k_v)


def refraction_slopes(theta_l: float, p: RadomeParams) -> tuple[float, float]:
    """Analytic derivatives of :func:`refraction_angles` w.r.t. look angle."""

    def slope(a, k):
        return a * (0.75 / (math.pi / 2) - 0.25 * (2.0 * math.pi / k) * math.sin(2.0 * math.pi * theta_l / k))

    return slope(p.a_u, p.k_u), slope(p.a_v, p.k_v)


class LagFilter:
    """First-order low-pass filter, exact for piecewise-constant input.

    The first sample initializes the state, so there is no start-up transient
    unless ``initial`` is given.
    """

    def __init__(self, tau: float, initial=None):
        if not tau > 0.0:
            raise ValueError("tau must be positive")
        self.tau = tau
        self.state = None if initial is None else np.array(initial, dtype=float)

    @property
    def initialized(self) -> bool:
        return self.state is not None

    def update(self, x, dt: float):
        x = np.array(x, dtype=float)
        if self.state is None:
            self.state = x
        else:
            self.state = self.state + (1.0 - math.exp(-dt / self.tau)) * (x - self.state)
        return self.state.copy() if self.state.ndim else float(self.state)


def refract_and_corrupt(lam: np.ndarray, v_m_hat: np.ndarray, p: RadomeParams, q_noise) -> np.ndarray:
    """Apply radome refraction and a noise rotation to the true LOS."""
    theta_u, theta_v = refraction_angles(look_angle(lam, v_m_hat), p)
    c_r = euler321_to_dcm((theta_u, theta_v, 0.0))
    c_n = euler321_to_dcm(q_noise)
    return c_n @ (c_r @ lam)


def apparent_los(
    lam: np.ndarray,
    v_m_hat: np.ndarray,
    p: RadomeParams,
    sigma_los: float,
    filt: LagFilter,
    rng: np.random.Generator,
    dt: float = 0.02,
) -> np.ndarray:
    """Measured LOS unit vector: refraction, noise rotation, then seeker lag.

    Three noise angles are drawn on every call, including when
    ``sigma_los`` is zero, so the random stream is independent of the noise
    level.
    """
    q_noise = rng.normal(0.0, 1.0, 3) * sigma_los
    raw = refract_and_corrupt(lam, v_m_hat, p, q_noise)
    lagged = filt.update(raw, dt)
    return lagged / norm3(lagged)


@dataclass
class SeekerOutput:
    lambda_tilde: np.ndarray
    omega_tilde: np.ndarray
    v_c: float
    r: float
    v_tm: np.ndarray


def los_rate(lam: np.ndarray, r: float, v_tm: np.ndarray) -> np.ndarray:
    r_tm = lam * r
    return cross3(r_tm, v_tm) / np.dot(r_tm, r_tm)


def nav_outputs(lambda_tilde: np.ndarray, r_tm: np.ndarray, v_tm: np.ndarray) -> SeekerOutput:
    """Navigation solution built from the measured LOS and true range/velocity."""
    r = norm3(r_tm)
    if r <= 0.0:
        raise ValueError("range must be positive")
    return SeekerOutput(
        lambda_tilde=lambda_tilde,
        omega_tilde=los_rate(lambda_tilde, r, v_tm),
        v_c=-float(np.dot(lambda_tilde, v_tm)),
        r=r,
        v_tm=np.asarray(v_tm, dtype=float),
    )
