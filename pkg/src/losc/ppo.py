"""Recurrent PPO with dual-discount returns and a KL servo.

Whole episodes are replayed from their initial hidden state during updates,
so recurrence never crosses an episode boundary.
"""

from __future__ import annotations

import dataclasses
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import ACT_DIM, OBS_DIM, EngagementEnv
from .nets import (
    LOG_STD_BOUNDS,
    NetSpec,
    hidden_size,
    init_params,
    layers_backward,
    layers_forward,
    layers_step,
    load_checkpoint,
    save_checkpoint,
)
from .seeding import episode_seeds

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TrainerConfig:
    episodes_per_rollout: int = 60
    total_episodes: int = 90000
    clip_eps: float = 0.2
    kl_target: float = 0.001
    lr_value: float = 1e-3
    lr_policy: float = 5e-5
    epochs: int = 3
    gamma_shaping: float = 0.95
    gamma_terminal: float = 0.995
    entropy_coef: float = 0.0
    # initial log-std of the Gaussian action head
    log_std_init: float = -2.0
    adam_betas: tuple = (0.9, 0.999)
    # KL servo: shrink factors when KL > 2 * target, growth when KL < target / 2
    servo_lr_down: float = 1.5
    servo_eps_down: float = 1.2
    servo_lr_up: float = 1.5
    servo_eps_up: float = 1.1
    eps_bounds: tuple = (0.05, 0.3)
    lr_bounds: tuple = (1e-6, 1e-2)
    early_stop_kl_factor: float = 4.0
    obs_clip: float = 10.0
    scaler_warmup_episodes: int = 10
    checkpoint_every: int = 50

    @property
    def n_updates(self) -> int:
        return self.total_episodes // self.episodes_per_rollout


class ObsScaler:
    """Running per-component mean/variance (parallel Welford merge)."""

    VAR_FLOOR = 1e-8

    def __init__(self, dim: int = OBS_DIM, clip: float = 10.0):
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.clip = clip

    @property
    def var(self) -> np.ndarray:
        if self.count < 2:
            return np.ones_like(self.mean)
        return np.maximum(self.m2 / self.count, self.VAR_FLOOR)

    def update(self, x: np.ndarray) -> None:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n_b = x.shape[0]
        if n_b == 0:
            return
        mean_b = x.mean(axis=0)
        m2_b = ((x - mean_b) ** 2).sum(axis=0)
        n = self.count + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * n_b / n
        self.m2 = self.m2 + m2_b + delta**2 * self.count * n_b / n
        self.count = n

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / np.sqrt(self.var), -self.clip, self.clip)

    def state(self) -> dict:
        return {"count": np.array(self.count), "mean": self.mean.copy(), "m2": self.m2.copy(), "clip": np.array(self.clip)}

    @classmethod
    def from_state(cls, st: dict) -> "ObsScaler":
        s = cls(len(st["mean"]), float(st["clip"]))
        s.count = float(st["count"])
        s.mean = np.array(st["mean"], dtype=float)
        s.m2 = np.array(st["m2"], dtype=float)
        return s


@dataclass
class EpisodeRollout:
    """Transitions of one episode, one row per 20 ms guidance step."""

    obs_raw: np.ndarray
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    r_shaping: np.ndarray
    r_terminal: np.ndarray
    dones: np.ndarray
    h_policy0: np.ndarray
    h_value0: np.ndarray
    miss: float = float("nan")
    returns: np.ndarray | None = None
    advantages: np.ndarray | None = None

    def __len__(self):
        return len(self.actions)

    @property
    def total_reward(self) -> float:
        return float(self.r_shaping.sum() + self.r_terminal.sum())


@dataclass
class RolloutSet:
    episodes: list = field(default_factory=list)

    def __len__(self):
        return len(self.episodes)

    def __iter__(self):
        return iter(self.episodes)


def gaussian_log_prob(actions, mean, log_std):
    z = (actions - mean) / np.exp(log_std)
    return -0.5 * (z * z).sum(axis=-1) - log_std.sum() - 0.5 * LOG_2PI * actions.shape[-1]


def gaussian_kl(mu0, log_std0, mu1, log_std1):
    """KL(N0 || N1) for diagonal Gaussians, summed over the last axis."""
    var0 = np.exp(2.0 * log_std0)
    var1 = np.exp(2.0 * log_std1)
    return (log_std1 - log_std0 + (var0 + (mu0 - mu1) ** 2) / (2.0 * var1) - 0.5).sum(axis=-1)


def collect_rollouts(policy: dict, value: dict, scaler: ObsScaler, cfg, seeds, deterministic: bool = False) -> RolloutSet:
    """Run one episode per seed with a frozen policy snapshot.

    Episodes advance in lockstep so the networks are evaluated once per step
    for the whole batch. Each episode draws from two RNG streams derived from
    its seed: one for the environment and one for action noise.
    """
    n = len(seeds)
    envs = [EngagementEnv(cfg) for _ in range(n)]
    env_rngs, act_rngs = [], []
    for s in seeds:
        ss = np.random.SeedSequence(int(s))
        e, a = ss.spawn(2)
        env_rngs.append(np.random.default_rng(e))
        act_rngs.append(np.random.default_rng(a))
    obs = []
    for i, env in enumerate(envs):
        try:
            obs.append(env.reset(env_rngs[i]))
        except Exception as exc:
            raise RuntimeError(f"environment reset failed in episode {i}") from exc
    h_pol = np.zeros((n, hidden_size(policy)))
    h_val = np.zeros((n, hidden_size(value)))
    buf = [{k: [] for k in ("obs_raw", "obs", "actions", "log_probs", "values", "rs", "rt", "dones")} for _ in range(n)]
    h_pol0, h_val0 = h_pol.copy(), h_val.copy()
    log_std = np.clip(policy["log_std"], *LOG_STD_BOUNDS)
    std = np.exp(log_std)
    active = list(range(n))
    while active:
        raw = np.array([obs[i] for i in active])
        o = scaler.normalize(raw)
        mean, hp = layers_step(policy, o, h_pol[active])
        v, hv = layers_step(value, o, h_val[active])
        h_pol[active] = hp
        h_val[active] = hv
        still = []
        for j, i in enumerate(active):
            if deterministic:
                a = mean[j].copy()
            else:
                a = mean[j] + std * act_rngs[i].normal(size=ACT_DIM)
            lp = float(gaussian_log_prob(a, mean[j], log_std))
            try:
                obs[i], _, done = envs[i].step(a)
            except Exception as exc:
                raise RuntimeError(f"environment step failed in episode {i}") from exc
            b = buf[i]
            b["obs_raw"].append(raw[j])
            b["obs"].append(o[j])
            b["actions"].append(a)
            b["log_probs"].append(lp)
            b["values"].append(float(v[j, 0]))
            b["rs"].append(envs[i].reward_parts[0])
            b["rt"].append(envs[i].reward_parts[1])
            b["dones"].append(done)
            if not done:
                still.append(i)
        active = still
    out = RolloutSet()
    for i in range(n):
        b = buf[i]
        out.episodes.append(
            EpisodeRollout(
                obs_raw=np.array(b["obs_raw"]),
                obs=np.array(b["obs"]),
                actions=np.array(b["actions"]),
                log_probs=np.array(b["log_probs"]),
                values=np.array(b["values"]),
                r_shaping=np.array(b["rs"]),
                r_terminal=np.array(b["rt"]),
                dones=np.array(b["dones"]),
                h_policy0=h_pol0[i],
                h_value0=h_val0[i],
                miss=envs[i].miss,
            )
        )
    return out


def discounted_returns(r_shaping, r_terminal, gamma1: float, gamma2: float) -> np.ndarray:
    """Empirical return with separate discount rates for the two reward streams."""
    T = len(r_shaping)
    g = np.empty(T)
    acc1 = acc2 = 0.0
    for k in range(T - 1, -1, -1):
        acc1 = r_shaping[k] + gamma1 * acc1
        acc2 = r_terminal[k] + gamma2 * acc2
        g[k] = acc1 + acc2
    return g


def compute_returns_advantages(rollouts: RolloutSet, gamma1: float, gamma2: float, normalize: bool = True, v_fn=None) -> RolloutSet:
    """Attach returns and (z-scored) advantages to every episode.

    ``v_fn(episode) -> values`` overrides the values stored at collection.
    """
    for ep in rollouts:
        ep.returns = discounted_returns(ep.r_shaping, ep.r_terminal, gamma1, gamma2)
        values = ep.values if v_fn is None else np.asarray(v_fn(ep), dtype=float)
        ep.advantages = ep.returns - values
    if normalize:
        all_adv = np.concatenate([ep.advantages for ep in rollouts])
        mu, sd = all_adv.mean(), all_adv.std()
        for ep in rollouts:
            ep.advantages = (ep.advantages - mu) / (sd + 1e-8)
    return rollouts


@dataclass
class Batch:
    """Episodes padded to a common length, laid out (T, B, ...)."""

    obs: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    mask: np.ndarray
    h_policy0: np.ndarray
    h_value0: np.ndarray

    @property
    def n_valid(self) -> float:
        return float(self.mask.sum())


def make_batch(rollouts: RolloutSet) -> Batch:
    eps = list(rollouts)
    T = max(len(e) for e in eps)
    B = len(eps)

    def pad(name, shape_tail=()):
        out = np.zeros((T, B) + shape_tail)
        for j, e in enumerate(eps):
            out[: len(e), j] = getattr(e, name)
        return out

    mask = np.zeros((T, B))
    for j, e in enumerate(eps):
        mask[: len(e), j] = 1.0
    return Batch(
        obs=pad("obs", (OBS_DIM,)),
        actions=pad("actions", (ACT_DIM,)),
        old_log_probs=pad("log_probs"),
        advantages=pad("advantages") if eps[0].advantages is not None else np.zeros((T, B)),
        returns=pad("returns") if eps[0].returns is not None else np.zeros((T, B)),
        mask=mask,
        h_policy0=np.array([e.h_policy0 for e in eps]),
        h_value0=np.array([e.h_value0 for e in eps]),
    )


def clipped_surrogate(ratio, adv, clip_eps):
    """Elementwise min(p A, clip(p, 1-eps, 1+eps) A)."""
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)


def surrogate_objective(policy: dict, batch: Batch, clip_eps: float, entropy_coef: float = 0.0):
    """Mean clipped surrogate (plus entropy bonus) and its gradient.

    Returns ``(J, grads, info)``; ``grads`` is dJ/dparams (ascent direction).
    """
    mean, cache = layers_forward(policy, batch.obs, batch.h_policy0)
    log_std = policy["log_std"]
    std = np.exp(log_std)
    logp = gaussian_log_prob(batch.actions, mean, log_std)
    ratio = np.exp(logp - batch.old_log_probs) * batch.mask
    adv = batch.advantages
    obj1 = ratio * adv
    obj2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    m = batch.n_valid
    entropy = float(log_std.sum() + 0.5 * (1.0 + LOG_2PI) * len(log_std))
    J = float((np.minimum(obj1, obj2) * batch.mask).sum() / m) + entropy_coef * entropy

    active = (obj1 <= obj2) & (batch.mask > 0)
    dlogp = np.where(active, adv * ratio, 0.0) / m
    z = (batch.actions - mean) / std
    dmean = dlogp[..., None] * z / std
    grads = layers_backward(policy, cache, dmean)
    grads["log_std"] = (dlogp[..., None] * (z * z - 1.0)).sum(axis=(0, 1)) + entropy_coef
    clipped = (np.abs(ratio - 1.0) > clip_eps) & (batch.mask > 0)
    info = {"clip_frac": float(clipped.sum() / m), "mean": mean, "entropy": entropy}
    return J, grads, info


def value_loss(value: dict, batch: Batch):
    """Half mean-squared error between predicted values and returns."""
    v, cache = layers_forward(value, batch.obs, batch.h_value0)
    err = (v[..., 0] - batch.returns) * batch.mask
    m = batch.n_valid
    L = 0.5 * float((err**2).sum()) / m
    grads = layers_backward(value, cache, (err / m)[..., None])
    return L, grads


def policy_mean(policy: dict, batch: Batch) -> np.ndarray:
    mean, _ = layers_forward(policy, batch.obs, batch.h_policy0)
    return mean


def mean_kl(policy_old: dict, mean_old, policy_new: dict, batch: Batch) -> float:
    mean_new = policy_mean(policy_new, batch)
    kl = gaussian_kl(mean_old, policy_old["log_std"], mean_new, policy_new["log_std"])
    return float((kl * batch.mask).sum() / batch.n_valid)


class Adam:
    def __init__(self, params: dict, betas=(0.9, 0.999), eps: float = 1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float, ascent: bool = False) -> dict:
        self.t += 1
        sign = 1.0 if ascent else -1.0
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        out = {}
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            out[k] = p + sign * lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        return out

    def state(self, prefix: str) -> dict:
        st = {f"{prefix}_t": np.array(self.t)}
        st.update({f"{prefix}_m_{k}": v for k, v in self.m.items()})
        st.update({f"{prefix}_v_{k}": v for k, v in self.v.items()})
        return st

    def load(self, prefix: str, st: dict) -> None:
        self.t = int(st[f"{prefix}_t"])
        for k in self.m:
            self.m[k] = np.array(st[f"{prefix}_m_{k}"])
            self.v[k] = np.array(st[f"{prefix}_v_{k}"])


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class ServoState:
    clip_eps: float
    lr_policy: float


def kl_servo(measured_kl: float, state: ServoState, cfg: TrainerConfig) -> ServoState:
    """Nudge the clip parameter and policy learning rate toward the KL target."""
    if measured_kl < 0:
        raise ValueError("KL must be non-negative")
    eps, lr = state.clip_eps, state.lr_policy
    if measured_kl > 2.0 * cfg.kl_target:
        lr /= cfg.servo_lr_down
        eps = max(eps / cfg.servo_eps_down, cfg.eps_bounds[0])
    elif measured_kl < 0.5 * cfg.kl_target:
        lr *= cfg.servo_lr_up
        eps = min(eps * cfg.servo_eps_up, cfg.eps_bounds[1])
    lr = min(max(lr, cfg.lr_bounds[0]), cfg.lr_bounds[1])
    return ServoState(eps, lr)


def _check_finite(name: str, value: float, batch: Batch, per_step=None):
    if math.isfinite(value):
        return
    bad = "unknown"
    if per_step is not None:
        cols = np.where(~np.isfinite(per_step).all(axis=0))[0]
        if len(cols):
            bad = int(cols[0])
    raise NonFiniteLossError(f"non-finite {name}; first offending episode: {bad}")


def ppo_update(rollouts: RolloutSet, policy: dict, value: dict, opt_policy: Adam, opt_value: Adam, servo: ServoState, cfg: TrainerConfig):
    """Run the PPO epochs on one rollout set.

    Returns ``(policy, value, diagnostics)``; the input dicts are not modified.
    """
    batch = make_batch(rollouts)
    old = {k: v.copy() for k, v in policy.items()}
    mean_old = policy_mean(old, batch)
    kl = 0.0
    epochs_run = 0
    J = clip_frac = 0.0
    for _ in range(cfg.epochs):
        J, grads, info = surrogate_objective(policy, batch, servo.clip_eps, cfg.entropy_coef)
        _check_finite("policy objective", J, batch, info["mean"].sum(axis=-1))
        clip_frac = info["clip_frac"]
        policy = opt_policy.step(policy, grads, servo.lr_policy, ascent=True)
        policy["log_std"] = np.clip(policy["log_std"], *LOG_STD_BOUNDS)
        epochs_run += 1
        kl = mean_kl(old, mean_old, policy, batch)
        if kl > cfg.early_stop_kl_factor * cfg.kl_target:
            break
    L = 0.0
    for _ in range(cfg.epochs):
        L, vgrads = value_loss(value, batch)
        _check_finite("value loss", L, batch)
        value = opt_value.step(value, vgrads, cfg.lr_value)
    diag = {"kl": kl, "policy_objective": J, "value_loss": L, "clip_frac": clip_frac, "epochs": epochs_run}
    return policy, value, diag


class PolicyController:
    """Deterministic (mean-action) controller wrapping a trained policy."""

    def __init__(self, policy: dict, scaler: ObsScaler):
        self.policy = policy
        self.scaler = scaler
        self.reset()

    def reset(self):
        self.h = np.zeros((1, hidden_size(self.policy)))

    def act(self, obs) -> np.ndarray:
        o = self.scaler.normalize(np.asarray(obs, dtype=float))[None, :]
        mean, self.h = layers_step(self.policy, o, self.h)
        return np.clip(mean[0], -1.0, 1.0)

    @classmethod
    def from_checkpoint(cls, path) -> "PolicyController":
        ck = load_checkpoint(path)
        return cls(ck["policy"], ObsScaler.from_state(ck["scaler"]))


HISTORY_COLUMNS = (
    "update", "episodes", "reward_mean", "reward_std", "reward_min", "reward_mean_minus_std",
    "steps_mean", "steps_max", "miss_median", "kl", "clip_eps", "lr_policy", "policy_objective",
    "value_loss", "clip_frac",
)


@dataclass
class TrainResult:
    policy: dict
    value: dict
    scaler: ObsScaler
    history: list
    checkpoint: Path | None = None


def _warm_scaler(cfg, seed: int, n: int) -> ObsScaler:
    """Fit the observation scaler on zero-curvature episodes."""
    scaler = ObsScaler(OBS_DIM, cfg.trainer.obs_clip)
    for s in episode_seeds(seed ^ 0x5CA1E, n):
        env = EngagementEnv(cfg)
        obs = [env.reset(np.random.default_rng(int(s)))]
        done = False
        while not done:
            o, _, done = env.step(np.zeros(ACT_DIM))
            obs.append(o)
        scaler.update(np.array(obs))
    return scaler


def write_history(path, history: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        w.writeheader()
        for row in history:
            w.writerow({k: row[k] for k in HISTORY_COLUMNS})


def train(cfg, out_dir=None, n_updates: int | None = None, resume=None, progress=None) -> TrainResult:
    """Optimize the curvature policy.

    ``cfg`` is a :class:`losc.config.Config`; the law is always PN-LOSC. When ``out_dir`` is given the
    reward history (CSV) and checkpoints are written there. ``resume`` is a
    checkpoint path produced by an earlier call.
    """
    if cfg.guidance.law != "pn-losc":
        # the policy only acts through the curved LOS
        log.info("training switches guidance.law from %r to 'pn-losc'", cfg.guidance.law)
        cfg = dataclasses.replace(cfg, guidance=dataclasses.replace(cfg.guidance, law="pn-losc"))
    tc: TrainerConfig = cfg.trainer
    n_updates = tc.n_updates if n_updates is None else n_updates
    spec = NetSpec(OBS_DIM, ACT_DIM)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    start = 0
    history: list = []
    if resume is not None:
        ck = load_checkpoint(resume)
        policy, value = ck["policy"], ck["value"]
        scaler = ObsScaler.from_state(ck["scaler"])
        extra = ck["extra"]
        start = int(extra["update"])
        servo = ServoState(float(extra["clip_eps"]), float(extra["lr_policy"]))
        opt_p = Adam(policy, tc.adam_betas)
        opt_v = Adam(value, tc.adam_betas)
        opt_p.load("opt_policy", extra)
        opt_v.load("opt_value", extra)
        if out_dir is not None and (out_dir / "history.csv").exists():
            with open(out_dir / "history.csv") as fh:
                history = [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)][:start]
    else:
        policy, value = init_params(spec, np.random.default_rng(cfg.seed))
        policy["log_std"] = np.full(ACT_DIM, float(tc.log_std_init))
        scaler = _warm_scaler(cfg, cfg.seed, tc.scaler_warmup_episodes)
        servo = ServoState(tc.clip_eps, tc.lr_policy)
        opt_p = Adam(policy, tc.adam_betas)
        opt_v = Adam(value, tc.adam_betas)

    def checkpoint(update: int) -> Path | None:
        if out_dir is None:
            return None
        path = out_dir / "checkpoint.npz"
        extra = {"update": update, "clip_eps": servo.clip_eps, "lr_policy": servo.lr_policy}
        extra.update(opt_p.state("opt_policy"))
        extra.update(opt_v.state("opt_value"))
        save_checkpoint(path, spec, policy, value, scaler.state(), extra)
        write_history(out_dir / "history.csv", history)
        return path

    n_ep = tc.episodes_per_rollout
    for update in range(start, start + n_updates):
        seeds = episode_seeds(cfg.seed, n_ep, offset=update * n_ep)
        rollouts = collect_rollouts(policy, value, scaler, cfg, seeds)
        compute_returns_advantages(rollouts, tc.gamma_shaping, tc.gamma_terminal)
        try:
            policy, value, diag = ppo_update(rollouts, policy, value, opt_p, opt_v, servo, tc)
        except NonFiniteLossError:
            log.exception("update %d aborted", update)
            raise
        servo = kl_servo(diag["kl"], servo, tc)
        scaler.update(np.concatenate([ep.obs_raw for ep in rollouts]))

        rewards = np.array([ep.total_reward for ep in rollouts])
        steps = np.array([len(ep) for ep in rollouts])
        row = {
            "update": update,
            "episodes": (update + 1) * n_ep,
            "reward_mean": float(rewards.mean()),
            "reward_std": float(rewards.std()),
            "reward_min": float(rewards.min()),
            "reward_mean_minus_std": float(rewards.mean() - rewards.std()),
            "steps_mean": float(steps.mean()),
            "steps_max": int(steps.max()),
            "miss_median": float(np.median([ep.miss for ep in rollouts])),
            "kl": diag["kl"],
            "clip_eps": servo.clip_eps,
            "lr_policy": servo.lr_policy,
            "policy_objective": diag["policy_objective"],
            "value_loss": diag["value_loss"],
            "clip_frac": diag["clip_frac"],
        }
        history.append(row)
        log.info(
            "update %d reward %.3f (min %.3f) kl %.2e eps %.3f lr %.2e",
            update, row["reward_mean"], row["reward_min"], row["kl"], servo.clip_eps, servo.lr_policy,
        )
        if progress is not None:
            progress(row)
        if (update + 1) % tc.checkpoint_every == 0:
            checkpoint(update + 1)

    path = checkpoint(start + n_updates)
    return TrainResult(policy, value, scaler, history, path)
