"""Episode runner, training loop, and parameter sweeps.

A run advances the simulator slot by slot: price the standing decision,
advance the world, regroup if due, then let the policy pick the next slot's
allocation.  Training additionally logs every transition to replay and takes
one optimizer step per slot once warm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .clustering import cluster_groups
from .config import ExperimentConfig
from .drqn import (
    FEATURE_DIM,
    AdamState,
    Experience,
    FeatureScale,
    ObservationPool,
    ReplayMemory,
    adam_step,
    encode_features,
    epsilon_at,
    forward,
    init_params,
    loss_and_grad,
    num_actions,
    sync_target,
)
from .env import SimEnv, idle_decision
from .mdp import Decision, Observation, discounted_return
from .policies import (
    PolicyKind,
    decide_baseline,
    decide_proposed,
    decision_action_indices,
)

METRIC_NAMES = ("avg_power_w", "avg_drops", "avg_aoi_slots", "avg_aoi_s", "avg_utility")

LOSS_MA_WINDOW = 500


def rng_streams(seed: int, count: int) -> list[np.random.Generator]:
    """Independent named streams: env, clustering, policy, init, replay order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def encode_all(states, decision: Decision, scale: FeatureScale) -> np.ndarray:
    feats = np.empty((len(states), FEATURE_DIM))
    for k, st in enumerate(states):
        obs = Observation(int(decision.band_flag[k]), int(decision.scheduled[k]))
        feats[k] = encode_features(st, obs, scale)
    return feats


@dataclass
class EpisodeResult:
    rows: dict[str, np.ndarray]          # per-slot metric columns
    summary: dict[str, float]            # slot means plus the return estimate


def _blank_rows(slots: int) -> dict[str, np.ndarray]:
    rows = {"slot": np.arange(slots)}
    for name in METRIC_NAMES:
        rows[name] = np.zeros(slots)
    return rows


def _record(rows, j, res, aoi, cfg) -> None:
    rows["avg_power_w"][j] = res["power_w"].mean()
    rows["avg_drops"][j] = res["drops"].mean()
    rows["avg_aoi_slots"][j] = aoi.mean()
    rows["avg_aoi_s"][j] = aoi.mean() * cfg.slot_s
    rows["avg_utility"][j] = res["utility"].mean()


def _summarize(rows: dict[str, np.ndarray], gamma: float) -> dict[str, float]:
    out = {name: float(rows[name].mean()) for name in METRIC_NAMES}
    out["discounted_return"] = float(discounted_return(rows["avg_utility"], gamma))
    return out


def run_episode(
    cfg: ExperimentConfig,
    kind: PolicyKind,
    seed: int,
    slots: Optional[int] = None,
    params: Optional[dict] = None,
) -> EpisodeResult:
    """Simulate one policy for a fixed horizon and report per-slot means."""
    slots = cfg.eval_slots if slots is None else slots
    env_rng, cluster_rng, policy_rng = rng_streams(seed, 3)
    env = SimEnv(cfg, env_rng)
    k_n = env.num_pairs
    scale = FeatureScale.from_config(cfg)
    decision = idle_decision(k_n)
    pool = None
    if kind is PolicyKind.PROPOSED:
        if params is None:
            raise ValueError("the learned policy needs checkpoint parameters")
        pool = ObservationPool(encode_all(env.states(), decision, scale), cfg.window_slots)
    groups = cluster_groups(env.midpoints(), cfg, cluster_rng)
    rows = _blank_rows(slots)
    for j in range(slots):
        env.validate_decision(decision, groups)
        res = env.realize(decision)
        _record(rows, j, res, env.aoi, cfg)
        env.advance(decision)
        if env.slot % cfg.recluster_every_slots == 0:
            groups = cluster_groups(env.midpoints(), cfg, cluster_rng)
        if kind is PolicyKind.PROPOSED:
            pool.push(encode_all(env.states(), decision, scale))
            decision = decide_proposed(params, pool.windows(), env.caps(), groups, cfg)
        else:
            decision = decide_baseline(
                kind, env.gain, env.arrivals, env.aoi, env.caps(), groups, cfg, policy_rng
            )
    return EpisodeResult(rows=rows, summary=_summarize(rows, cfg.gamma))


@dataclass
class TrainResult:
    params: dict
    loss_slots: np.ndarray
    loss_values: np.ndarray
    rows: dict[str, np.ndarray]
    summary: dict[str, float]
    config_hash: str
    rng_state: dict


def train(cfg: ExperimentConfig, seed: Optional[int] = None) -> TrainResult:
    """Run the full learning loop and return the trained parameters."""
    seed = cfg.seed if seed is None else seed
    env_rng, cluster_rng, policy_rng, init_rng, replay_rng = rng_streams(seed, 5)
    env = SimEnv(cfg, env_rng)
    k_n = env.num_pairs
    scale = FeatureScale.from_config(cfg)
    actions = num_actions(cfg.r_max_global)
    params = init_params(init_rng, FEATURE_DIM, cfg.lstm_hidden, cfg.dense_units, actions)
    target = sync_target(params)
    adam = AdamState.zeros_like(params)
    replay = ReplayMemory(cfg.replay_capacity)
    decision = idle_decision(k_n)
    pool = ObservationPool(encode_all(env.states(), decision, scale), cfg.window_slots)
    groups = cluster_groups(env.midpoints(), cfg, cluster_rng)
    rows = _blank_rows(cfg.train_slots)
    loss_slots: list[int] = []
    loss_values: list[float] = []
    ma_trace: list[float] = []
    ma_sum = 0.0
    slots_run = cfg.train_slots
    for j in range(cfg.train_slots):
        env.validate_decision(decision, groups)
        res = env.realize(decision)
        _record(rows, j, res, env.aoi, cfg)
        windows_prev = pool.windows()
        env.advance(decision)
        if env.slot % cfg.recluster_every_slots == 0:
            groups = cluster_groups(env.midpoints(), cfg, cluster_rng)
        pool.push(encode_all(env.states(), decision, scale))
        windows_next = pool.windows()
        if policy_rng.random() < epsilon_at(j, cfg.train_slots, cfg):
            nxt = decide_baseline(
                PolicyKind.RANDOM, env.gain, env.arrivals, env.aoi,
                env.caps(), groups, cfg, policy_rng,
            )
        else:
            nxt = decide_proposed(params, windows_next, env.caps(), groups, cfg)
        replay.push(
            Experience(
                windows=windows_prev.astype(np.float32),
                actions=decision_action_indices(decision, cfg.r_max_global),
                utilities=res["utility"].copy(),
                next_windows=windows_next.astype(np.float32),
                next_actions=decision_action_indices(nxt, cfg.r_max_global),
            )
        )
        stop = False
        if len(replay) >= cfg.warmup_experiences:
            batch = replay.sample(replay_rng, cfg.minibatch_size)
            loss, grads = loss_and_grad(params, target, batch, cfg.gamma)
            adam_step(params, grads, adam, cfg)
            loss_slots.append(j)
            loss_values.append(loss)
            ma_sum += loss
            if len(loss_values) > LOSS_MA_WINDOW:
                ma_sum -= loss_values[-LOSS_MA_WINDOW - 1]
            if len(loss_values) >= LOSS_MA_WINDOW:
                ma_trace.append(ma_sum / LOSS_MA_WINDOW)
            # plateau stop: the loss moving average barely moved over a
            # whole comparison window
            if cfg.plateau_rel_tol > 0 and len(ma_trace) > cfg.plateau_window_slots:
                ref = ma_trace[-cfg.plateau_window_slots - 1]
                delta = abs(ma_trace[-1] - ref)
                if delta < cfg.plateau_rel_tol * max(abs(ref), 1e-12):
                    stop = True
        if (j + 1) % cfg.target_sync_slots == 0:
            target = sync_target(params)
        decision = nxt
        if stop:
            slots_run = j + 1
            break
    if slots_run < cfg.train_slots:
        rows = {k: v[:slots_run] for k, v in rows.items()}
    return TrainResult(
        params=params,
        loss_slots=np.array(loss_slots, dtype=int),
        loss_values=np.array(loss_values),
        rows=rows,
        summary=_summarize(rows, cfg.gamma),
        config_hash=cfg.config_hash(),
        rng_state=policy_rng.bit_generator.state,
    )


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    if window < 1 or window > len(values):
        raise ValueError("bad moving-average window")
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")


SWEEP_FIELDS = {
    "B": "num_bands",
    "ell": "pair_separation_m",
    "K": "num_pairs",
    "lambda": "arrival_rate",
}


@dataclass
class SweepCell:
    sweep_param: str
    sweep_value: float
    policy: PolicyKind
    seed: int
    result: EpisodeResult


def run_experiment(
    cfg: ExperimentConfig,
    param: str,
    values: Sequence[float],
    kinds: Sequence[PolicyKind],
    seeds: Sequence[int],
    params: Optional[dict] = None,
    slots: Optional[int] = None,
) -> list[SweepCell]:
    """Cross product of sweep values, policies and seeds, common-random-numbered
    by reusing each seed across every cell."""
    if param not in SWEEP_FIELDS:
        raise ValueError(f"unknown sweep parameter {param!r}; expected one of "
                         f"{sorted(SWEEP_FIELDS)}")
    field_name = SWEEP_FIELDS[param]
    cells = []
    for value in values:
        cast = int(value) if field_name in ("num_bands", "num_pairs") else float(value)
        run_cfg = cfg.replace(**{field_name: cast})
        for kind in kinds:
            for seed in seeds:
                result = run_episode(run_cfg, kind, seed, slots=slots, params=params)
                cells.append(SweepCell(param, float(value), kind, seed, result))
    return cells


def summarize_cells(cells: Sequence[SweepCell]) -> list[dict]:
    """Per (value, policy, metric): mean and sample stddev over seeds."""
    grouped: dict[tuple, list[SweepCell]] = {}
    for cell in cells:
        grouped.setdefault((cell.sweep_param, cell.sweep_value, cell.policy), []).append(cell)
    out = []
    for (param, value, policy), members in grouped.items():
        for metric in METRIC_NAMES:
            samples = np.array([m.result.summary[metric] for m in members])
            std = float(samples.std(ddof=1)) if len(samples) > 1 else 0.0
            out.append(
                {
                    "sweep_param": param,
                    "sweep_value": value,
                    "policy": policy.value,
                    "metric": metric,
                    "mean": float(samples.mean()),
                    "stddev": std,
                    "n": len(samples),
                }
            )
    return out
