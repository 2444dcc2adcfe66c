"""Per-slot decision rules: the learned policy and the four reference rules."""

from __future__ import annotations

import enum
import math
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .drqn import action_index, forward
from .mdp import Decision, allocate_bands


class PolicyKind(enum.Enum):
    PROPOSED = "proposed"
    CHANNEL_AWARE = "channel-aware"
    PACKET_AWARE = "packet-aware"
    AOI_AWARE = "aoi-aware"
    RANDOM = "random"


def parse_policy(name: str) -> PolicyKind:
    try:
        return PolicyKind(name.strip().lower())
    except ValueError:
        valid = ", ".join(p.value for p in PolicyKind)
        raise ValueError(f"unknown policy {name!r}; expected one of: {valid}") from None


def _ranked_grant(
    scores: np.ndarray,
    groups: np.ndarray,
    num_bands: int,
    scheduled_of,
) -> Decision:
    """Grant top-scoring pairs per group unconditionally; ties to lower index."""
    k_total = len(scores)
    flag = np.zeros(k_total, dtype=int)
    sched = np.zeros(k_total, dtype=int)
    band = np.full(k_total, -1, dtype=int)
    for g in np.unique(groups):
        members = list(np.flatnonzero(groups == g))
        members.sort(key=lambda k: (-scores[k], k))
        granted = sorted(members[: min(num_bands, len(members))])
        for b, k in enumerate(granted):
            flag[k] = 1
            sched[k] = scheduled_of(k)
            band[k] = b
    return Decision(flag, sched, band)


def decide_baseline(
    kind: PolicyKind,
    gains: np.ndarray,
    arrivals: np.ndarray,
    aoi: np.ndarray,
    caps: np.ndarray,
    groups: np.ndarray,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
) -> Decision:
    """Reference rules: rank by channel gain, backlog, age, or uniformly at
    random; the ranked rules transmit the feasible maximum, the random rule a
    uniform feasible count."""
    if kind is PolicyKind.CHANNEL_AWARE:
        scores = np.asarray(gains, dtype=float)
    elif kind is PolicyKind.PACKET_AWARE:
        scores = np.asarray(arrivals, dtype=float)
    elif kind is PolicyKind.AOI_AWARE:
        scores = np.asarray(aoi, dtype=float)
    elif kind is PolicyKind.RANDOM:
        scores = rng.random(len(gains))
    else:
        raise ValueError("decide_baseline does not drive the learned policy")
    if kind is PolicyKind.RANDOM:
        scheduled_of = lambda k: int(rng.integers(0, caps[k] + 1))
    else:
        scheduled_of = lambda k: int(caps[k])
    return _ranked_grant(scores, groups, cfg.num_bands, scheduled_of)


def network_grant_values(
    q_row: np.ndarray, cap: int, r_max: int
) -> tuple[float, float, int]:
    """(silent value, best granted value, best count) from one head row.

    Grants always move at least one packet; infeasible counts are never read,
    which is the action masking. Ties prefer the larger count.
    """
    q0 = float(q_row[action_index(0, 0, r_max)])
    best_q, best_r = -math.inf, 0
    for r in range(1, cap + 1):
        q = float(q_row[action_index(1, r, r_max)])
        if q > best_q or (q == best_q and r > best_r):
            best_q, best_r = q, r
    return q0, best_q, best_r


def decide_from_q(
    q_values: np.ndarray,
    caps: np.ndarray,
    groups: np.ndarray,
    cfg: ExperimentConfig,
) -> Decision:
    """Greedy joint decision from per-pair head rows under the band budget."""
    k_total = q_values.shape[0]
    gain = np.full(k_total, -math.inf)
    best_r = np.zeros(k_total, dtype=int)
    for k in range(k_total):
        cap = int(caps[k])
        if cap <= 0:
            continue
        q0, q1, r_star = network_grant_values(q_values[k], cap, cfg.r_max_global)
        gain[k] = q1 - q0
        best_r[k] = r_star
    return allocate_bands(gain, best_r, groups, cfg.num_bands)


def decide_proposed(
    params: dict[str, np.ndarray],
    windows: np.ndarray,
    caps: np.ndarray,
    groups: np.ndarray,
    cfg: ExperimentConfig,
) -> Decision:
    q_values = forward(params, windows)
    return decide_from_q(q_values, caps, groups, cfg)


def decision_action_indices(dec: Decision, r_max: int) -> np.ndarray:
    return np.array(
        [
            action_index(int(f), int(r), r_max)
            for f, r in zip(dec.band_flag, dec.scheduled)
        ],
        dtype=int,
    )
