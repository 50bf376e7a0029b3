"""Policy and value networks: tanh dense -> GRU -> tanh dense -> linear.

Parameters are plain dicts of float64 arrays. Weight matrices are stored as
``(fan_out, fan_in)`` and batches are row-major, so a layer computes
``x @ W.T + b``. Sequences are laid out ``(T, B, features)``.

GRU cell (reset gate applied to the hidden state before the candidate)::

    z  = sigmoid(x Wz + h Uz + bz)
    r  = sigmoid(x Wr + h Ur + br)
    n  = tanh(x Wn + (r * h) Un + bn)
    h' = (1 - z) * n + z * h
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

CHECKPOINT_VERSION = 1

LAYER_NAMES = ("W1", "b1", "Wz", "Uz", "bz", "Wr", "Ur", "br", "Wn", "Un", "bn", "W3", "b3", "W4", "b4")
LOG_STD_BOUNDS = (-5.0, 1.0)


def hidden2_width(n_h1: int, n_h3: int) -> int:
    return int(round(math.sqrt(n_h1 * n_h3)))


@dataclass(frozen=True)
class NetSpec:
    obs_dim: int = 8
    act_dim: int = 3
    value_h3: int = 5

    @property
    def policy_widths(self) -> tuple:
        h1, h3 = 10 * self.obs_dim, 10 * self.act_dim
        return (self.obs_dim, h1, hidden2_width(h1, h3), h3, self.act_dim)

    @property
    def value_widths(self) -> tuple:
        h1, h3 = 10 * self.obs_dim, self.value_h3
        return (self.obs_dim, h1, hidden2_width(h1, h3), h3, 1)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def init_layers(widths, rng: np.random.Generator) -> dict:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases."""
    n_in, h1, h2, h3, n_out = widths

    def w(fan_out, fan_in):
        a = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-a, a, size=(fan_out, fan_in))

    p = {"W1": w(h1, n_in), "b1": np.zeros(h1)}
    for g in "zrn":
        p["W" + g] = w(h2, h1)
        p["U" + g] = w(h2, h2)
        p["b" + g] = np.zeros(h2)
    p["W3"], p["b3"] = w(h3, h2), np.zeros(h3)
    p["W4"], p["b4"] = w(n_out, h3), np.zeros(n_out)
    return p


def init_params(spec: NetSpec, rng: np.random.Generator) -> tuple[dict, dict]:
    """Fresh (policy, value) parameter dicts; policy carries ``log_std``."""
    policy = init_layers(spec.policy_widths, rng)
    policy["log_std"] = np.zeros(spec.act_dim)
    value = init_layers(spec.value_widths, rng)
    return policy, value


def hidden_size(params: dict) -> int:
    return params["Uz"].shape[0]


def layers_step(p: dict, x: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single time step on a batch, without caching (used during rollouts)."""
    x1 = np.tanh(x @ p["W1"].T + p["b1"])
    z = _sigmoid(x1 @ p["Wz"].T + h @ p["Uz"].T + p["bz"])
    r = _sigmoid(x1 @ p["Wr"].T + h @ p["Ur"].T + p["br"])
    n = np.tanh(x1 @ p["Wn"].T + (r * h) @ p["Un"].T + p["bn"])
    h_new = (1.0 - z) * n + z * h
    x3 = np.tanh(h_new @ p["W3"].T + p["b3"])
    return x3 @ p["W4"].T + p["b4"], h_new


def _check_shapes(p: dict, xs: np.ndarray, h0: np.ndarray):
    n_in = p["W1"].shape[1]
    if xs.ndim != 3 or xs.shape[2] != n_in:
        raise ValueError(f"expected inputs of shape (T, B, {n_in}), got {xs.shape}")
    if h0.shape != (xs.shape[1], hidden_size(p)):
        raise ValueError(f"hidden state shape {h0.shape} does not match batch/hidden size")


def layers_forward(p: dict, xs: np.ndarray, h0: np.ndarray):
    """Run a batch of sequences; returns outputs ``(T, B, out)`` and a cache."""
    xs = np.asarray(xs, dtype=float)
    h0 = np.asarray(h0, dtype=float)
    _check_shapes(p, xs, h0)
    T, B, _ = xs.shape
    H = hidden_size(p)
    x1 = np.tanh(xs @ p["W1"].T + p["b1"])
    wx = np.concatenate([p["Wz"], p["Wr"], p["Wn"]]).T
    bx = np.concatenate([p["bz"], p["br"], p["bn"]])
    gx = x1 @ wx + bx  # (T, B, 3H) input contributions of all three gates
    uzr = np.concatenate([p["Uz"], p["Ur"]]).T
    hs = np.empty((T + 1, B, H))
    zs = np.empty((T, B, H))
    rs = np.empty((T, B, H))
    ns = np.empty((T, B, H))
    hs[0] = h0
    for t in range(T):
        h = hs[t]
        zr = _sigmoid(gx[t, :, : 2 * H] + h @ uzr)
        z, r = zr[:, :H], zr[:, H:]
        n = np.tanh(gx[t, :, 2 * H :] + (r * h) @ p["Un"].T)
        hs[t + 1] = (1.0 - z) * n + z * h
        zs[t], rs[t], ns[t] = z, r, n
    x3 = np.tanh(hs[1:] @ p["W3"].T + p["b3"])
    ys = x3 @ p["W4"].T + p["b4"]
    cache = {"xs": xs, "x1": x1, "hs": hs, "z": zs, "r": rs, "n": ns, "x3": x3}
    return ys, cache


def layers_backward(p: dict, cache: dict | None, dys: np.ndarray) -> dict:
    """Exact gradients of a scalar loss given ``dL/d outputs`` for every step."""
    if cache is None:
        raise ValueError("backward pass requires the cache from layers_forward")
    xs, x1, hs, zs, rs, ns, x3 = (cache[k] for k in ("xs", "x1", "hs", "z", "r", "n", "x3"))
    T, B, _ = xs.shape
    H = hidden_size(p)
    g = {}

    def outer(a, b):
        return np.einsum("tbi,tbj->ij", a, b)

    g["W4"] = outer(dys, x3)
    g["b4"] = dys.sum(axis=(0, 1))
    da3 = (dys @ p["W4"]) * (1.0 - x3**2)
    g["W3"] = outer(da3, hs[1:])
    g["b3"] = da3.sum(axis=(0, 1))
    dh_out = da3 @ p["W3"]

    daz = np.empty((T, B, H))
    dar = np.empty((T, B, H))
    dan = np.empty((T, B, H))
    uz, ur, un = p["Uz"], p["Ur"], p["Un"]
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        h_prev, z, r, n = hs[t], zs[t], rs[t], ns[t]
        dh = dh_out[t] + dh_next
        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        dan_t = dn * (1.0 - n * n)
        drh = dan_t @ un
        dar_t = drh * h_prev * r * (1.0 - r)
        daz_t = dz * z * (1.0 - z)
        dh_next = dh * z + drh * r + daz_t @ uz + dar_t @ ur
        daz[t], dar[t], dan[t] = daz_t, dar_t, dan_t

    h_prev_all = hs[:-1]
    for name, da in (("z", daz), ("r", dar), ("n", dan)):
        g["W" + name] = outer(da, x1)
        g["b" + name] = da.sum(axis=(0, 1))
    g["Uz"] = outer(daz, h_prev_all)
    g["Ur"] = outer(dar, h_prev_all)
    g["Un"] = outer(dan, rs * h_prev_all)

    dx1 = daz @ p["Wz"] + dar @ p["Wr"] + dan @ p["Wn"]
    da1 = dx1 * (1.0 - x1**2)
    g["W1"] = outer(da1, xs)
    g["b1"] = da1.sum(axis=(0, 1))
    return g


def policy_forward(params: dict, obs: np.ndarray, h: np.ndarray):
    """One policy step: returns (mean, log_std, h')."""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    h = np.atleast_2d(np.asarray(h, dtype=float))
    if obs.shape[1] != params["W1"].shape[1] or h.shape != (obs.shape[0], hidden_size(params)):
        raise ValueError("observation or hidden-state shape does not match the network")
    mean, h_new = layers_step(params, obs, h)
    return mean, params["log_std"].copy(), h_new


def value_forward(params: dict, obs: np.ndarray, h: np.ndarray):
    """One value step: returns (V, h')."""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    h = np.atleast_2d(np.asarray(h, dtype=float))
    if obs.shape[1] != params["W1"].shape[1] or h.shape != (obs.shape[0], hidden_size(params)):
        raise ValueError("observation or hidden-state shape does not match the network")
    v, h_new = layers_step(params, obs, h)
    return v[:, 0], h_new


def backward_through_time(params: dict, cache: dict | None, dys: np.ndarray) -> dict:
    """Alias of :func:`layers_backward` under the name used by the trainer."""
    return layers_backward(params, cache, dys)


def save_checkpoint(path, spec: NetSpec, policy: dict, value: dict, scaler_state: dict | None = None, extra: dict | None = None):
    arrays = {f"policy/{k}": v for k, v in policy.items()}
    arrays.update({f"value/{k}": v for k, v in value.items()})
    for k, v in (scaler_state or {}).items():
        arrays[f"scaler/{k}"] = np.asarray(v)
    for k, v in (extra or {}).items():
        arrays[f"extra/{k}"] = np.asarray(v)
    arrays["format_version"] = np.array(CHECKPOINT_VERSION)
    arrays["netspec"] = np.array(json.dumps(asdict(spec)))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> dict:
    """Load a checkpoint into ``{spec, policy, value, scaler, extra}``."""
    out = {"policy": {}, "value": {}, "scaler": {}, "extra": {}}
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        out["spec"] = NetSpec(**json.loads(str(data["netspec"])))
        for key in data.files:
            if "/" in key:
                group, name = key.split("/", 1)
                out[group][name] = data[key].copy()
    return out
