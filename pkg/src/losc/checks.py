"""Self-check suite behind ``losc check``.

Each check is small and fast; the suite stops at the first violation.
Reference scenarios used here (clean engagements, the zero-curvature
identity path) are also exposed for the test suite.
"""

from __future__ import annotations

import dataclasses
import math
import time

import numpy as np

from .config import Config, benchmark_config, default_config_text, dumps, loads
from .dynamics import G, RHO0, EngagementState, MissileDragParams, TargetDragParams, rk4, rk4_step
from .env import RewardParams, ZeroPolicy, reward, run_episode
from .geometry import euler321_to_dcm
from .seeding import episode_seed
from .seeker import RadomeBounds


class CheckFailure(AssertionError):
    pass


def _require(cond, msg):
    if not cond:
        raise CheckFailure(msg)


def clean_config(base: Config | None = None, law: str = "pn") -> Config:
    """Zero heading error, non-maneuvering target and an error-free seeker."""
    cfg = benchmark_config(law, target_max_g=0.0, radome=False, base=base)
    sc = dataclasses.replace(
        cfg.scenario, heading_error_deg=(0.0, 0.0), sigma_los=0.0, radome=RadomeBounds(enabled=False)
    )
    return dataclasses.replace(cfg, scenario=sc)


def identity_configs(base: Config | None = None) -> tuple[Config, Config, Config]:
    """(PN, PN-LOSC with k = 0, PN-LOSC with default k) for the identity path."""
    pn = benchmark_config("pn", base=base)
    g = pn.guidance
    return (
        pn,
        dataclasses.replace(pn, guidance=dataclasses.replace(g, law="pn-losc", k=0.0)),
        dataclasses.replace(pn, guidance=dataclasses.replace(g, law="pn-losc")),
    )


class RandomActions:
    """Uniform random actions in [-1, 1]; drives the k = 0 identity check."""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def reset(self):
        pass

    def act(self, obs) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, size=3)


def quadratic_drag_error(dt: float, total: float = 2.0) -> float:
    """Relative speed error of RK4 against the closed form for pure quadratic drag."""
    mp = MissileDragParams(k_m=0.25, cd0=0.35, s_ref=1.0)
    s = EngagementState.from_velocities([0, 0, 0.0], [1000.0, 0, 0], [1e6, 0, 0], [0.0, 0, 0])
    for _ in range(int(round(total / dt))):
        s = rk4_step(s, np.zeros(3), np.zeros(3), dt, mp, TargetDragParams())
    # sea level, no lift: dV/dt = -c V^2 with c = rho0 cd0 S / (2 m)
    c = RHO0 * mp.cd0 * mp.s_ref / (2.0 * mp.mass)
    exact = 1000.0 / (1.0 + c * 1000.0 * total)
    return abs(s.speed_m - exact) / exact


def constant_accel_error(total: float = 5.0, dt: float = 0.2) -> float:
    """Relative position error of RK4 for a body under constant acceleration."""
    acc = np.array([3.0, -9.81, 40.0])
    y = np.array([10.0, -5.0, 2.0, 100.0, 50.0, -20.0])
    steps = int(round(total / dt))
    for i in range(steps):
        y = rk4(lambda _t, z: np.concatenate([z[3:], acc]), i * dt, y, dt)
    exact = np.array([10.0, -5.0, 2.0]) + np.array([100.0, 50.0, -20.0]) * total + 0.5 * acc * total**2
    return float(np.abs(y[:3] - exact).max() / np.abs(exact).max())


def check_geometry():
    rng = np.random.default_rng(0)
    for _ in range(50):
        c = euler321_to_dcm(rng.uniform(-math.pi, math.pi, 3))
        _require(np.allclose(c @ c.T, np.eye(3), atol=1e-12), "DCM not orthonormal")
        _require(abs(np.linalg.det(c) - 1.0) < 1e-12, "DCM not a proper rotation")


def check_rk4():
    ratio = quadratic_drag_error(0.1) / quadratic_drag_error(0.05)
    _require(12.0 <= ratio <= 20.0, f"RK4 error ratio {ratio:.2f} outside [12, 20]")
    err = constant_accel_error()
    _require(err < 1e-9, f"constant-acceleration error {err:.2e}")


def check_reward():
    p = RewardParams()
    cases = {0.0: 30.0, 0.5: 10.0 + 20.0 * math.exp(-0.25), 10.0: 20.0 * math.exp(-100.0)}
    for miss, expected in cases.items():
        _, term = reward(miss, np.zeros(3), True, p)
        _require(abs(term - expected) < 1e-12, f"terminal reward at miss {miss}: {term} != {expected}")
    shaping, term = reward(5.0, np.array([0.03, 0.0, 0.04]), False, p)
    _require(abs(shaping + 0.0005) < 1e-15 and term == 0.0, "shaping reward")


def _central_difference(f, params, h=1e-6):
    grads = {}
    for k, v in params.items():
        g = np.zeros_like(v)
        flat, gf = v.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(params)
            flat[i] = orig - h
            fm = f(params)
            flat[i] = orig
            gf[i] = (fp - fm) / (2 * h)
        grads[k] = g
    return grads


def _rel_err(a: dict, n: dict, floor=1e-7) -> float:
    return max(float((np.abs(a[k] - n[k]) / np.maximum(np.abs(a[k]) + np.abs(n[k]), floor)).max()) for k in n)


def check_gradients():
    from .nets import init_layers
    from .ppo import Batch, surrogate_objective, value_loss

    rng = np.random.default_rng(3)
    T, B = 6, 2
    mask = np.ones((T, B))
    mask[4:, 1] = 0.0
    batch = Batch(
        obs=rng.normal(size=(T, B, 4)),
        actions=rng.normal(size=(T, B, 2)) * 0.5,
        old_log_probs=rng.normal(size=(T, B)) * 0.3 - 1.5,
        advantages=rng.normal(size=(T, B)),
        returns=rng.normal(size=(T, B)) * 3,
        mask=mask,
        h_policy0=rng.normal(size=(B, 3)) * 0.2,
        h_value0=rng.normal(size=(B, 3)) * 0.2,
    )
    pol = init_layers((4, 5, 3, 4, 2), rng)
    pol["log_std"] = np.array([-0.3, 0.2])
    _, g, _ = surrogate_objective(pol, batch, 0.2)
    err = _rel_err(g, _central_difference(lambda p: surrogate_objective(p, batch, 0.2)[0], pol))
    _require(err < 1e-4, f"surrogate gradient error {err:.2e}")
    val = init_layers((4, 5, 3, 2, 1), rng)
    _, g = value_loss(val, batch)
    err = _rel_err(g, _central_difference(lambda p: value_loss(p, batch)[0], val))
    _require(err < 1e-4, f"value gradient error {err:.2e}")


def check_config_roundtrip():
    cfg = Config()
    _require(loads(dumps(cfg)) == cfg, "config does not survive a YAML round trip")
    _require(loads(default_config_text()) == cfg, "bundled default config differs from Config()")


def check_clean_hits(n: int = 10):
    cfg = clean_config()
    for i in range(n):
        r = run_episode(cfg, None, np.random.default_rng(episode_seed(1, i)))
        _require(r.miss < 1.0, f"clean engagement {i} missed by {r.miss:.3f} m")


def check_identity(n: int = 3):
    pn, k0, losc = identity_configs()
    for i in range(n):
        seed = episode_seed(2, i)
        ra, ta = run_episode(pn, None, np.random.default_rng(seed), record_trace=True)
        rb, tb = run_episode(k0, RandomActions(seed + 1), np.random.default_rng(seed), record_trace=True)
        rc, tc = run_episode(losc, ZeroPolicy(), np.random.default_rng(seed), record_trace=True)
        # theta columns differ with random actions, every state column must not
        _require(np.array_equal(ta.as_array()[:, :15], tb.as_array()[:, :15]), f"k = 0 trajectory differs (seed {seed})")
        _require(np.array_equal(ta.as_array(), tc.as_array()), f"zero-action trajectory differs (seed {seed})")
        _require(ra.miss == rb.miss == rc.miss, "identity-path miss distances differ")


def check_accel_limit(n: int = 5):
    cfg = benchmark_config("pn")
    limit = cfg.guidance.a_m_max
    for i in range(n):
        r = run_episode(cfg, None, np.random.default_rng(episode_seed(3, i)))
        _require(max(r.accel_samples) <= limit * (1 + 1e-12), f"|a_M| above {limit / G:.0f} g")


def check_dual_timestep(n: int = 2):
    cfg = benchmark_config("pn")
    fine = dataclasses.replace(cfg, integrator=dataclasses.replace(cfg.integrator, uniform_fine=True))
    for i in range(n):
        seed = episode_seed(4, i)
        a = run_episode(cfg, None, np.random.default_rng(seed)).miss
        b = run_episode(fine, None, np.random.default_rng(seed)).miss
        _require(abs(a - b) < 0.4, f"dual-timestep miss {a:.3f} vs fine {b:.3f}")


CHECKS = (
    ("geometry", check_geometry),
    ("rk4", check_rk4),
    ("reward", check_reward),
    ("gradients", check_gradients),
    ("config", check_config_roundtrip),
    ("clean-hits", check_clean_hits),
    ("identity", check_identity),
    ("accel-limit", check_accel_limit),
    ("dual-timestep", check_dual_timestep),
)


def run_checks(report=print) -> bool:
    """Run every check in order; stop and return False at the first failure."""
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            fn()
        except CheckFailure as exc:
            report(f"FAIL {name}: {exc}")
            return False
        report(f"ok   {name} ({time.perf_counter() - t0:.1f}s)")
    return True


__all__ = [
    "CHECKS",
    "CheckFailure",
    "RandomActions",
    "clean_config",
    "identity_configs",
    "quadratic_drag_error",
    "run_checks",
]
