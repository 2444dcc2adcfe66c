"""Recurrent Q-network over per-pair observation windows, in plain numpy.

One LSTM layer reads an N-slot window of encoded (state, previous action)
features; its final hidden state feeds two ReLU layers and a linear head with
one output per (band flag, packet count) action.  Training minimizes the
squared sum, over the pairs inside one experience, of on-policy temporal
difference residuals against a periodically frozen target copy.  Gradients are
exact backpropagation through time; the optimizer is Adam.
"""

from __future__ import annotations

import json
import math
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .mdp import Observation, VuePairState

FEATURE_DIM = 9

_MAGIC = b"AQNCKPT1"


def action_index(band_flag: int, scheduled: int, r_max: int) -> int:
    """Flat head index for action (f, r): f * (1 + r_max) + r."""
    if band_flag not in (0, 1) or not 0 <= scheduled <= r_max:
        raise ValueError("action out of range")
    return band_flag * (1 + r_max) + scheduled


def num_actions(r_max: int) -> int:
    return 2 * (1 + r_max)


@dataclass(frozen=True)
class FeatureScale:
    """Normalization constants mapping raw state components into [0, 1]."""

    side_m: float
    log_gain_lo: float
    log_gain_hi: float
    x_max: int
    a_max_slots: int
    r_max: int

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "FeatureScale":
        eta = cfg.path_loss_exponent
        psi = cfg.shadowing_gain
        hi = psi * cfg.phi * max(cfg.pair_separation_m / 2.0, 0.5) ** -eta
        lo = psi * min(
            cfg.phi * (2.0 * cfg.side_m) ** -eta,
            cfg.rho * (cfg.side_m ** 2) ** -eta,
        )
        return cls(
            side_m=cfg.side_m,
            log_gain_lo=math.log10(lo),
            log_gain_hi=math.log10(hi),
            x_max=cfg.x_max,
            a_max_slots=cfg.a_max_slots,
            r_max=cfg.r_max_global,
        )


def encode_features(state: VuePairState, obs: Observation, scale: FeatureScale) -> np.ndarray:
    """Nine features, each clipped into [0, 1]; see FEATURE_DIM."""
    lg = math.log10(max(state.gain, 1e-300))
    span = scale.log_gain_hi - scale.log_gain_lo
    feats = np.array([
        state.vtx_pos[0] / scale.side_m,
        state.vtx_pos[1] / scale.side_m,
        state.vrx_pos[0] / scale.side_m,
        state.vrx_pos[1] / scale.side_m,
        (lg - scale.log_gain_lo) / span if span > 0 else 0.5,
        state.arrivals / scale.x_max,
        state.aoi_slots / scale.a_max_slots,
        float(obs.prev_band_flag),
        obs.prev_scheduled / scale.r_max,
    ])
    return np.clip(feats, 0.0, 1.0)


# --- parameters ----------------------------------------------------------------


def init_params(
    rng: np.random.Generator,
    feature_dim: int,
    hidden: int,
    dense: int,
    action_count: int,
) -> dict[str, np.ndarray]:
    """Uniform +/- sqrt(6 / (fan_in + fan_out)) weights, forget-gate bias one."""

    def glorot(rows, cols):
        limit = math.sqrt(6.0 / (rows + cols))
        return rng.uniform(-limit, limit, size=(rows, cols))

    params = {
        "lstm_wx": glorot(feature_dim, 4 * hidden),
        "lstm_wh": glorot(hidden, 4 * hidden),
        "lstm_b": np.zeros(4 * hidden),
        "dense1_w": glorot(hidden, dense),
        "dense1_b": np.zeros(dense),
        "dense2_w": glorot(dense, dense),
        "dense2_b": np.zeros(dense),
        "head_w": glorot(dense, action_count),
        "head_b": np.zeros(action_count),
    }
    params["lstm_b"][hidden:2 * hidden] = 1.0  # keep early memories open
    return params


def clone_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


def params_sizes(params: dict[str, np.ndarray]) -> dict[str, int]:
    return {k: v.size for k, v in params.items()}


def flatten_params(params: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in sorted(params)])


def unflatten_params(vec: np.ndarray, like: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = {}
    at = 0
    for k in sorted(like):
        n = like[k].size
        out[k] = vec[at:at + n].reshape(like[k].shape).copy()
        at += n
    if at != vec.size:
        raise ValueError("parameter vector length mismatch")
    return out


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _hidden_of(params) -> int:
    return params["lstm_wh"].shape[0]


def forward(
    params: dict[str, np.ndarray],
    windows: np.ndarray,
    return_cache: bool = False,
):
    """Q-values (batch, actions) for a batch of (N, feature) windows.

    The recurrent state starts at zero for every window; only the final
    hidden state reaches the dense head.
    """
    w = np.asarray(windows, dtype=float)
    if w.ndim == 2:
        w = w[None, :, :]
    batch, n_steps, feat = w.shape
    hidden = _hidden_of(params)
    if feat != params["lstm_wx"].shape[0]:
        raise ValueError("feature dimension does not match the network")
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    steps = []
    for t in range(n_steps):
        x_t = w[:, t, :]
        z = x_t @ params["lstm_wx"] + h @ params["lstm_wh"] + params["lstm_b"]
        i = _sigmoid(z[:, :hidden])
        f = _sigmoid(z[:, hidden:2 * hidden])
        g = np.tanh(z[:, 2 * hidden:3 * hidden])
        o = _sigmoid(z[:, 3 * hidden:])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h_prev = h
        h = o * tc
        if return_cache:
            steps.append((x_t, i, f, g, o, c_prev, tc, h_prev))
    d1_pre = h @ params["dense1_w"] + params["dense1_b"]
    d1 = np.maximum(d1_pre, 0.0)
    d2_pre = d1 @ params["dense2_w"] + params["dense2_b"]
    d2 = np.maximum(d2_pre, 0.0)
    q = d2 @ params["head_w"] + params["head_b"]
    if not return_cache:
        return q
    cache = {"steps": steps, "h_final": h, "d1_pre": d1_pre, "d1": d1,
             "d2_pre": d2_pre, "d2": d2}
    return q, cache


def _backward(params, cache, dq):
    hidden = _hidden_of(params)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    grads["head_w"] = cache["d2"].T @ dq
    grads["head_b"] = dq.sum(axis=0)
    dd2 = (dq @ params["head_w"].T) * (cache["d2_pre"] > 0)
    grads["dense2_w"] = cache["d1"].T @ dd2
    grads["dense2_b"] = dd2.sum(axis=0)
    dd1 = (dd2 @ params["dense2_w"].T) * (cache["d1_pre"] > 0)
    grads["dense1_w"] = cache["h_final"].T @ dd1
    grads["dense1_b"] = dd1.sum(axis=0)
    dh = dd1 @ params["dense1_w"].T
    dc = np.zeros_like(dh)
    for x_t, i, f, g, o, c_prev, tc, h_prev in reversed(cache["steps"]):
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc ** 2)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g ** 2),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        grads["lstm_wx"] += x_t.T @ dz
        grads["lstm_wh"] += h_prev.T @ dz
        grads["lstm_b"] += dz.sum(axis=0)
        dh = dz @ params["lstm_wh"].T
        dc = dc * f
    return grads


@dataclass
class Experience:
    """One slot's transition for every pair, windows included."""

    windows: np.ndarray        # (K, N, F) at decision time
    actions: np.ndarray        # (K,) flat action indices taken
    utilities: np.ndarray      # (K,) realized utilities
    next_windows: np.ndarray   # (K, N, F) one slot later
    next_actions: np.ndarray   # (K,) flat indices of the actions taken next


def loss_and_grad(
    params: dict[str, np.ndarray],
    target_params: dict[str, np.ndarray],
    batch: Sequence[Experience],
    gamma: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean over the batch of (sum_k residual_k)^2 and its exact gradient.

    residual_k = (1 - gamma) * u_k + gamma * Q_target(next window, next action)
                 - Q(window, action).
    The target branch is treated as a constant.
    """
    if len(batch) == 0:
        raise ValueError("empty minibatch")
    k = batch[0].windows.shape[0]
    cur = np.concatenate([np.asarray(e.windows, dtype=float) for e in batch])
    nxt = np.concatenate([np.asarray(e.next_windows, dtype=float) for e in batch])
    acts = np.concatenate([e.actions for e in batch])
    nacts = np.concatenate([e.next_actions for e in batch])
    utils = np.concatenate([e.utilities for e in batch])
    q, cache = forward(params, cur, return_cache=True)
    tq = forward(target_params, nxt)
    rows = np.arange(len(acts))
    td = (1.0 - gamma) * utils + gamma * tq[rows, nacts] - q[rows, acts]
    resid = td.reshape(len(batch), k).sum(axis=1)
    loss = float((resid ** 2).mean())
    dq = np.zeros_like(q)
    dq[rows, acts] = np.repeat(-2.0 * resid / len(batch), k)
    grads = _backward(params, cache, dq)
    return loss, grads


# --- optimizer ------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: ExperimentConfig,
) -> None:
    """In-place Adam update with bias correction."""
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for {key!r}")
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for key in params:
        g = grads[key]
        state.m[key] = b1 * state.m[key] + (1.0 - b1) * g
        state.v[key] = b2 * state.v[key] + (1.0 - b2) * g * g
        m_hat = state.m[key] / corr1
        v_hat = state.v[key] / corr2
        params[key] -= cfg.adam_lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def sync_target(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return clone_params(params)


def epsilon_at(slot: int, total_slots: int, cfg: ExperimentConfig) -> float:
    """Linear decay from eps_start to eps_end over the first eps_decay_frac."""
    decay = max(1.0, cfg.eps_decay_frac * total_slots)
    frac = min(1.0, slot / decay)
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


# --- replay and observation windows ----------------------------------------------


class ReplayMemory:
    """FIFO ring of experiences with uniform sampling without replacement."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.buf: deque[Experience] = deque(maxlen=capacity)

    def push(self, exp: Experience) -> None:
        self.buf.append(exp)

    def sample(self, rng: np.random.Generator, size: int) -> list[Experience]:
        if size > len(self.buf):
            raise ValueError("not enough stored experiences to sample")
        idx = rng.choice(len(self.buf), size=size, replace=False)
        return [self.buf[i] for i in idx]

    def __len__(self) -> int:
        return len(self.buf)


class ObservationPool:
    """Sliding per-pair windows of the N most recent feature vectors.

    Before a pair has N real entries the window is front-padded with its
    first one.
    """

    def __init__(self, initial_features: np.ndarray, window_n: int):
        feats = np.asarray(initial_features, dtype=float)
        if feats.ndim != 2:
            raise ValueError("initial features must be (K, F)")
        self.window_n = window_n
        self.buffers = [deque([f.copy()] * window_n, maxlen=window_n) for f in feats]

    def push(self, features: np.ndarray) -> None:
        feats = np.asarray(features, dtype=float)
        if feats.shape[0] != len(self.buffers):
            raise ValueError("pair count mismatch")
        for buf, f in zip(self.buffers, feats):
            buf.append(f.copy())

    def windows(self) -> np.ndarray:
        return np.stack([np.stack(list(buf)) for buf in self.buffers])


# --- checkpoints ------------------------------------------------------------------


def save_checkpoint(
    path: str | Path,
    params: dict[str, np.ndarray],
    feature_dim: int,
    hidden: int,
    dense: int,
    action_count: int,
    config_hash: str,
    rng_state: Optional[dict] = None,
) -> None:
    """Versioned header plus named little-endian float64 tensors."""
    names = sorted(params)
    header = {
        "format_version": 1,
        "feature_dim": feature_dim,
        "hidden": hidden,
        "dense": dense,
        "action_count": action_count,
        "config_hash": config_hash,
        "rng_state": rng_state,
        "tensors": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise ValueError("not a recognized checkpoint file")
    at = len(_MAGIC)
    (head_len,) = struct.unpack("<I", raw[at:at + 4])
    at += 4
    header = json.loads(raw[at:at + head_len].decode())
    at += head_len
    if header.get("format_version") != 1:
        raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
    params = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = at + 8 * count
        if end > len(raw):
            raise ValueError("checkpoint truncated")
        params[entry["name"]] = (
            np.frombuffer(raw[at:end], dtype="<f8").reshape(shape).copy()
        )
        at = end
    if at != len(raw):
        raise ValueError("trailing bytes after checkpoint tensors")
    return params, header
