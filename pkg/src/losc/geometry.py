"""Vector and rotation primitives plus the collision-triangle construction.

Conventions: inertial frame with x-y horizontal and z up. Euler angles are
ordered (yaw, pitch, roll) and follow the 3-2-1 sequence. The DCM returned by
:func:`euler321_to_dcm` is the frame-rotation (passive) matrix, so a vector
expressed in the reference frame is mapped into the rotated frame.
"""

from __future__ import annotations

import math

import numpy as np

# Guard band for arcsin/arccos arguments that drift past +/-1 numerically.
ARG_GUARD = 1e-9


class InfeasibleLeadError(ValueError):
    """The target is too fast for the missile to reach a collision course."""


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors; much cheaper than ``np.cross`` on tiny inputs."""
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def norm3(v) -> float:
    return math.sqrt(np.dot(v, v))


def unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def safe_arcsin(x: float) -> float:
    if abs(x) > 1.0 + ARG_GUARD:
        raise InfeasibleLeadError(f"arcsin argument {x:.6g} outside [-1, 1]")
    return math.asin(min(1.0, max(-1.0, x)))


def clamped_arccos(x: float) -> float:
    return math.acos(min(1.0, max(-1.0, x)))


def euler321_to_dcm(e) -> np.ndarray:
    """Direction cosine matrix for a 3-2-1 (yaw, pitch, roll) rotation.

    Parameters
    ----------
    e : array_like, shape (3,)
        Yaw, pitch and roll in radians.

    Returns
    -------
    ndarray, shape (3, 3)
        ``C = R1(roll) @ R2(pitch) @ R3(yaw)`` with elementary frame rotations,
        e.g. yaw = pi/2 maps x-hat to -y-hat.
    """
    yaw, pitch, roll = float(e[0]), float(e[1]), float(e[2])
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    return np.array(
        [
            [cp * cy, cp * sy, -sp],
            [sr * sp * cy - cr * sy, sr * sp * sy + cr * cy, sr * cp],
            [cr * sp * cy + sr * sy, cr * sp * sy - sr * cy, cr * cp],
        ]
    )


def rotation_angle(c: np.ndarray) -> float:
    """Principal rotation angle of an orthonormal matrix."""
    return clamped_arccos(0.5 * (np.trace(c) - 1.0))


def look_angle(lam: np.ndarray, v_m_hat: np.ndarray) -> float:
    """Angle between the line of sight and the missile velocity direction."""
    return clamped_arccos(float(np.dot(lam, v_m_hat)))


def lead_angle_planar(v_t_mag: float, v_m_mag: float, beta_plus_gamma: float) -> float:
    """Lead angle that places the missile on a planar collision triangle.

    Raises
    ------
    InfeasibleLeadError
        If the target's cross-LOS speed exceeds the missile speed.
    """
    if v_m_mag <= 0.0:
        raise ValueError("missile speed must be positive")
    return safe_arcsin(v_t_mag * math.sin(beta_plus_gamma) / v_m_mag)


def _least_aligned_axis(v: np.ndarray) -> np.ndarray:
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(v)))] = 1.0
    return axis


def _rotation_to_z(n: np.ndarray) -> np.ndarray:
    """Rotation matrix taking unit vector ``n`` onto +z (Rodrigues)."""
    z = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(n, z))
    if c > 1.0 - 1e-15:
        return np.eye(3)
    if c < -1.0 + 1e-15:
        return np.diag([1.0, -1.0, -1.0])
    k = np.cross(n, z)
    s = np.linalg.norm(k)
    k = k / s
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + s * kx + (1.0 - c) * (kx @ kx)


def collision_velocity_3d(r_tm: np.ndarray, v_t: np.ndarray, v_m_mag: float) -> np.ndarray:
    """Missile velocity of magnitude ``v_m_mag`` on a collision course.

    The engagement plane is spanned by the LOS and the target velocity. Both
    are rotated into the x-y plane, the planar lead angle is solved there and
    the resulting velocity is rotated back.
    """
    if v_m_mag <= 0.0:
        raise ValueError("missile speed must be positive")
    lam = unit(np.asarray(r_tm, dtype=float))
    v_t = np.asarray(v_t, dtype=float)
    v_t_mag = float(np.linalg.norm(v_t))
    if v_t_mag == 0.0:
        return v_m_mag * lam

    n = np.cross(v_t / v_t_mag, lam)
    if np.linalg.norm(n) < 1e-12:
        # target velocity along the LOS: every plane containing the LOS works
        n = np.cross(_least_aligned_axis(lam), lam)
    n = unit(n)

    rot = _rotation_to_z(n)
    lam_p = rot @ lam
    vt_p = rot @ v_t
    gamma = math.atan2(lam_p[1], lam_p[0])
    # beta measured from the reversed x' axis: v_T = V_T (-cos b, sin b)
    beta = math.atan2(vt_p[1], -vt_p[0])
    lead = lead_angle_planar(v_t_mag, v_m_mag, beta + gamma)
    vm_p = np.array([v_m_mag * math.cos(lead + gamma), v_m_mag * math.sin(lead + gamma), 0.0])
    return rot.T @ vm_p


def sample_cap(axis: np.ndarray, half_angle: float, rng: np.random.Generator) -> np.ndarray:
    """Unit vector drawn uniformly over the spherical cap around ``axis``."""
    axis = unit(np.asarray(axis, dtype=float))
    cos_t = rng.uniform(math.cos(half_angle), 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    e1 = unit(np.cross(axis, _least_aligned_axis(axis)))
    e2 = np.cross(axis, e1)
    return cos_t * axis + sin_t * (math.cos(phi) * e1 + math.sin(phi) * e2)


def perturb_heading(v_m: np.ndarray, he_max: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate ``v_m`` to a random direction within ``he_max`` of the original.

    The speed is preserved and the new direction is uniform on the cap.
    """
    v_m = np.asarray(v_m, dtype=float)
    if he_max <= 0.0:
        return v_m.copy()
    speed = float(np.linalg.norm(v_m))
    return speed * sample_cap(v_m / speed, he_max, rng)


def closest_approach(r_tm: np.ndarray, v_tm: np.ndarray) -> float:
    """Minimum future separation for constant relative velocity."""
    vv = float(np.dot(v_tm, v_tm))
    if vv == 0.0:
        return float(np.linalg.norm(r_tm))
    t = max(0.0, -float(np.dot(r_tm, v_tm)) / vv)
    return float(np.linalg.norm(r_tm + t * v_tm))
