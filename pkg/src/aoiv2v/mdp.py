"""Decision-process core: per-link utility, tabular SARSA, the greedy
band-allocation rule, and a small enumerable-MDP toolkit used as the
ground-truth oracle in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Optional, Sequence

import numpy as np

from .config import ExperimentConfig


@dataclass
class VuePairState:
    """One pair's slice of the global state at a slot boundary."""

    vtx_pos: tuple[float, float]
    vrx_pos: tuple[float, float]
    gain: float
    arrivals: int       # packets that landed in the transmit buffer this slot
    aoi_slots: int      # receiver-side age of information, in slots


@dataclass
class Observation:
    """What a pair remembers of its own previous decision."""

    prev_band_flag: int
    prev_scheduled: int

    def __post_init__(self):
        if self.prev_band_flag == 0 and self.prev_scheduled != 0:
            raise ValueError("cannot have scheduled packets without a band")


@dataclass
class Decision:
    """Joint allocation for one slot: per-pair band flag, packet count, band id."""

    band_flag: np.ndarray   # (K,) 0/1
    scheduled: np.ndarray   # (K,) ints, 0 when no band
    band_index: np.ndarray  # (K,) band id, -1 when no band

    @property
    def num_pairs(self) -> int:
        return len(self.band_flag)


def utility(power_w: float, drops: float, aoi_slots: float, cfg: ExperimentConfig) -> float:
    """Per-pair slot utility: exp(-power) + vartheta*exp(-drops) + xi*exp(-age)."""
    if power_w < 0 or drops < 0 or aoi_slots < 1:
        raise ValueError("utility arguments out of range")
    age = aoi_slots * cfg.slot_s if cfg.aoi_utility_units == "seconds" else aoi_slots
    return math.exp(-power_w) + cfg.vartheta * math.exp(-drops) + cfg.xi * math.exp(-age)


def discounted_return(utilities: Sequence[float], gamma: float) -> float:
    """(1 - gamma) * sum_j gamma^(j-1) * u_j, the normalized discounted return."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if len(utilities) == 0:
        raise ValueError("need at least one utility sample")
    acc = 0.0
    for j, u in enumerate(utilities):
        acc += gamma ** j * u
    return (1.0 - gamma) * acc


class QTable:
    """Action-value table with optimistic-free zero defaults and visit counts."""

    def __init__(self):
        self.q: dict = {}
        self.visits: dict = {}

    def get(self, key: Hashable, action: Hashable) -> float:
        return self.q.get((key, action), 0.0)

    def set(self, key: Hashable, action: Hashable, value: float) -> None:
        self.q[(key, action)] = value

    def __len__(self) -> int:
        return len(self.q)


def sarsa_update(
    table: QTable,
    key: Hashable,
    action: Hashable,
    utility_value: float,
    next_key: Hashable,
    next_action: Hashable,
    gamma: float,
    alpha: Optional[float] = None,
) -> float:
    """One on-policy update toward (1-gamma)*u + gamma*Q(next, action-taken-next).

    Works for the joint table (tuple-valued actions) and for per-link tables
    (scalar (f, r) actions) alike.  With alpha=None the step size follows the
    1 / (1 + visit count) schedule.
    """
    if alpha is None:
        seen = table.visits.get((key, action), 0)
        alpha = 1.0 / (1.0 + seen)
        table.visits[(key, action)] = seen + 1
    elif not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    old = table.get(key, action)
    target = (1.0 - gamma) * utility_value + gamma * table.get(next_key, next_action)
    new = (1.0 - alpha) * old + alpha * target
    table.set(key, action, new)
    return new


def quantize_state(state: VuePairState, obs: Observation, bin_m: float = 5.0) -> tuple:
    """Hashable tabular key; positions are snapped to bin_m-sized grid cells."""
    qp = lambda p: (int(math.floor(p[0] / bin_m)), int(math.floor(p[1] / bin_m)))
    return (
        qp(state.vtx_pos),
        qp(state.vrx_pos),
        state.arrivals,
        state.aoi_slots,
        obs.prev_band_flag,
        obs.prev_scheduled,
    )


# --- greedy joint decision ---------------------------------------------------


def allocate_bands(
    grant_gain: np.ndarray,
    best_r: np.ndarray,
    groups: np.ndarray,
    num_bands: int,
) -> Decision:
    """Grant bands group by group to the largest strictly-positive gains.

    grant_gain[k] is the value improvement of granting pair k its best
    transmission over leaving it silent; best_r[k] is that best packet count.
    Bands are reused across groups; within a group at most num_bands pairs are
    granted, ties broken toward the lower pair index, band ids handed out in
    ascending order of pair index.
    """
    k_total = len(grant_gain)
    flag = np.zeros(k_total, dtype=int)
    sched = np.zeros(k_total, dtype=int)
    band = np.full(k_total, -1, dtype=int)
    for g in np.unique(groups):
        members = np.flatnonzero(groups == g)
        eligible = [k for k in members if grant_gain[k] > 0.0]
        # stable sort: descending gain, then ascending index
        eligible.sort(key=lambda k: (-grant_gain[k], k))
        granted = sorted(eligible[: min(num_bands, len(members))])
        for b, k in enumerate(granted):
            flag[k] = 1
            sched[k] = best_r[k]
            band[k] = b
    return Decision(flag, sched, band)


def table_grant_values(
    table: QTable, key: Hashable, cap: int
) -> tuple[float, float, int]:
    """(silent value, best granted value, best r) from one per-link table.

    A grant always moves at least one packet, so candidate counts run from 1
    to cap; cap=0 leaves the pair ineligible.  Ties prefer the larger count.
    """
    q0 = table.get(key, (0, 0))
    best_q, best_r = -math.inf, 0
    for r in range(1, cap + 1):
        q = table.get(key, (1, r))
        if q > best_q or (q == best_q and r > best_r):
            best_q, best_r = q, r
    return q0, best_q, best_r


def greedy_joint_decision(
    tables: Sequence[QTable],
    keys: Sequence[Hashable],
    caps: Sequence[int],
    groups: np.ndarray,
    num_bands: int,
) -> Decision:
    """Maximize the summed per-link action values under the band budget.

    Decomposes into: rank pairs inside each group by the gain of their best
    grant over staying silent, grant the top num_bands strictly-positive
    gains.
    """
    k_total = len(tables)
    gain = np.full(k_total, -math.inf)
    best_r = np.zeros(k_total, dtype=int)
    for k in range(k_total):
        if caps[k] <= 0:
            continue
        q0, q1, r_star = table_grant_values(tables[k], keys[k], caps[k])
        gain[k] = q1 - q0
        best_r[k] = r_star
    return allocate_bands(gain, best_r, groups, num_bands)


# --- enumerable MDPs (test oracle) -------------------------------------------


@dataclass
class TabularMdp:
    """Explicit finite MDP: states, per-state action lists, transition lists."""

    states: list
    actions: dict                      # state -> list of actions
    transitions: dict                  # (state, action) -> list[(next_state, prob)]
    utilities: dict                    # (state, action) -> float
    gamma: float

    def validate(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        index = set(self.states)
        for s in self.states:
            acts = self.actions.get(s)
            if not acts:
                raise ValueError(f"state {s!r} has no actions")
            for a in acts:
                rows = self.transitions[(s, a)]
                total = 0.0
                for s2, p in rows:
                    if p < 0:
                        raise ValueError(f"negative probability at {(s, a)}")
                    if s2 not in index:
                        raise ValueError(f"transition to unknown state {s2!r}")
                    total += p
                if abs(total - 1.0) > 1e-9:
                    raise ValueError(
                        f"transition row {(s, a)} sums to {total!r}, not 1"
                    )
                if (s, a) not in self.utilities:
                    raise ValueError(f"missing utility for {(s, a)}")


def value_iteration(
    mdp: TabularMdp, tol: float = 1e-9, max_iter: int = 200000
) -> tuple[dict, dict]:
    """Optimal values and a greedy policy; ties keep the first-listed action."""
    mdp.validate()
    v = {s: 0.0 for s in mdp.states}
    for _ in range(max_iter):
        delta = 0.0
        new_v = {}
        for s in mdp.states:
            best = -math.inf
            for a in mdp.actions[s]:
                q = (1.0 - mdp.gamma) * mdp.utilities[(s, a)] + mdp.gamma * sum(
                    p * v[s2] for s2, p in mdp.transitions[(s, a)]
                )
                if q > best:
                    best = q
            new_v[s] = best
            delta = max(delta, abs(best - v[s]))
        v = new_v
        if delta < tol:
            break
    policy = {}
    for s in mdp.states:
        qs = {
            a: (1.0 - mdp.gamma) * mdp.utilities[(s, a)]
            + mdp.gamma * sum(p * v[s2] for s2, p in mdp.transitions[(s, a)])
            for a in mdp.actions[s]
        }
        best_q = max(qs.values())
        ties = [a for a, q in qs.items() if q == best_q]
        try:
            policy[s] = min(ties)  # lexicographically smallest on ties
        except TypeError:
            policy[s] = ties[0]
    return v, policy


def policy_evaluation(
    mdp: TabularMdp, policy: dict, tol: float = 1e-9, max_iter: int = 200000
) -> dict:
    mdp.validate()
    v = {s: 0.0 for s in mdp.states}
    for _ in range(max_iter):
        delta = 0.0
        for s in mdp.states:
            a = policy[s]
            q = (1.0 - mdp.gamma) * mdp.utilities[(s, a)] + mdp.gamma * sum(
                p * v[s2] for s2, p in mdp.transitions[(s, a)]
            )
            delta = max(delta, abs(q - v[s]))
            v[s] = q
        if delta < tol:
            break
    return v
