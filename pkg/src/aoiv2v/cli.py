"""Command line entry points.

Subcommands: train, eval, sweep, cluster-demo, oracle-check.  Every command
reads the same key = value config format and writes deterministic CSV; the
report directory also receives rendered PNG figures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import report
from .clustering import cluster_groups
from .config import load_config
from .drqn import FEATURE_DIM, load_checkpoint, num_actions, save_checkpoint
from .env import SimEnv
from .harness import (
    LOSS_MA_WINDOW,
    SWEEP_FIELDS,
    EpisodeResult,
    moving_average,
    rng_streams,
    run_episode,
    run_experiment,
    summarize_cells,
    train,
)
from .mdp import TabularMdp, value_iteration
from .policies import PolicyKind, parse_policy


def _load_params(path: str, cfg) -> dict:
    params, header = load_checkpoint(path)
    if header.get("config_hash") != cfg.config_hash():
        print(
            "warning: checkpoint was trained under a different config "
            f"(hash {header.get('config_hash')} vs {cfg.config_hash()})",
            file=sys.stderr,
        )
    return params


def _print_summary(summary: dict) -> None:
    for name in sorted(summary):
        print(f"{name} = {report.format_cell(summary[name])}")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(cfg, seed)
    ckpt = out / "checkpoint.bin"
    save_checkpoint(
        ckpt,
        result.params,
        feature_dim=FEATURE_DIM,
        hidden=cfg.lstm_hidden,
        dense=cfg.dense_units,
        action_count=num_actions(cfg.r_max_global),
        config_hash=result.config_hash,
        rng_state=result.rng_state,
    )
    report.write_text(out / "loss.csv",
                      report.loss_csv_text(result.loss_slots, result.loss_values))
    episode = EpisodeResult(rows=result.rows, summary=result.summary)
    entries = [("none", None, "proposed", seed, episode)]
    report.write_text(out / "train_metrics.csv", report.metrics_csv_text(entries))
    report.write_text(out / "train_summary.csv",
                      report.summary_csv_text(report.single_run_summary("proposed", episode)))
    if len(result.loss_values):
        report.save_loss_figure(out / "loss.png", result.loss_slots,
                                result.loss_values, LOSS_MA_WINDOW)
    report.save_episode_figure(out / "train_metrics.png", episode,
                               "metrics along the training run")
    slots_run = len(result.rows["slot"])
    print(f"trained {slots_run} slots, {len(result.loss_values)} gradient steps")
    if len(result.loss_values) >= LOSS_MA_WINDOW:
        ma = moving_average(result.loss_values, LOSS_MA_WINDOW)
        print(f"terminal {LOSS_MA_WINDOW}-step loss average = "
              f"{report.format_cell(float(ma[-1]))}")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    kind = parse_policy(args.policy)
    params = None
    if kind is PolicyKind.PROPOSED:
        if not args.checkpoint:
            print("error: the proposed policy requires --checkpoint", file=sys.stderr)
            return 2
        params = _load_params(args.checkpoint, cfg)
    seed = cfg.seed if args.seed is None else args.seed
    result = run_episode(cfg, kind, seed, slots=args.slots, params=params)
    _print_summary(result.summary)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        entries = [("none", None, kind.value, seed, result)]
        report.write_text(out / "metrics.csv", report.metrics_csv_text(entries))
        report.write_text(out / "summary.csv",
                          report.summary_csv_text(report.single_run_summary(kind.value, result)))
        report.save_episode_figure(out / "metrics.png", result,
                                   f"{kind.value}, seed {seed}")
        print(f"report: {out}")
    return 0


def _split(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = [float(v) for v in _split(args.values)]
    kinds = [parse_policy(p) for p in _split(args.policies)]
    seeds = [int(s) for s in _split(args.seeds)]
    params = None
    if any(k is PolicyKind.PROPOSED for k in kinds):
        if not args.checkpoint:
            print("error: sweeping the proposed policy requires --checkpoint",
                  file=sys.stderr)
            return 2
        params = _load_params(args.checkpoint, cfg)
    cells = run_experiment(cfg, args.param, values, kinds, seeds,
                           params=params, slots=args.slots)
    summary = summarize_cells(cells)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_text(out / "metrics.csv",
                      report.metrics_csv_text(report.cells_to_entries(cells)))
    report.write_text(out / "summary.csv", report.summary_csv_text(summary))
    if cells:
        report.save_sweep_figures(out, summary, args.param)
    print(f"swept {args.param} over {len(values)} values, "
          f"{len(cells)} episodes; report: {out}")
    return 0


def cmd_cluster_demo(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    env_rng, cluster_rng, _ = rng_streams(seed, 3)
    env = SimEnv(cfg, env_rng)
    mids = env.midpoints()
    labels = cluster_groups(mids, cfg, cluster_rng)
    out = Path(args.out)
    report.write_text(out, report.cluster_csv_text(mids, labels))
    report.save_cluster_figure(out.with_suffix(".png"), mids, labels, cfg.side_m)
    sizes = [int((labels == g).sum()) for g in range(cfg.g_groups)]
    print(f"grouped {len(labels)} pair midpoints into {cfg.g_groups} groups, "
          f"sizes {sizes}")
    print(f"assignments: {out}")
    return 0


def _fixture_transitions(raw) -> list[tuple]:
    # accept both the natural JSON mapping {next: prob} and [next, prob] pairs
    items = raw.items() if isinstance(raw, dict) else raw
    return [(s2, float(p)) for s2, p in items]


def _mdp_from_fixture(fixture: dict) -> TabularMdp:
    states = list(fixture["states"])
    actions = {s: list(fixture["actions"][s]) for s in states}
    utilities = {}
    transitions = {}
    for s in states:
        for a in actions[s]:
            utilities[(s, a)] = float(fixture["utilities"][s][a])
            transitions[(s, a)] = _fixture_transitions(fixture["transitions"][s][a])
    return TabularMdp(
        states=states,
        actions=actions,
        transitions=transitions,
        utilities=utilities,
        gamma=float(fixture["gamma"]),
    )


def cmd_oracle_check(args) -> int:
    try:
        fixture = json.loads(Path(args.fixture).read_text())
        mdp = _mdp_from_fixture(fixture)
        mdp.validate()
    except KeyError as exc:
        print(f"error: bad fixture {args.fixture}: missing entry {exc}",
              file=sys.stderr)
        return 2
    except (TypeError, ValueError, OSError) as exc:
        print(f"error: bad fixture {args.fixture}: {exc}", file=sys.stderr)
        return 2
    tol = float(fixture.get("tol", 1e-9))
    values, policy = value_iteration(mdp, tol=tol)
    for s in mdp.states:
        print(f"{s}: value = {report.format_cell(values[s])}, action = {policy[s]}")
    expected = fixture.get("expected_values")
    if expected is None:
        return 0
    value_tol = float(fixture.get("value_tolerance", 1e-6))
    failed = False
    for s, want in expected.items():
        got = values[s]
        ok = abs(got - float(want)) <= value_tol
        print(f"{'PASS' if ok else 'FAIL'} {s}: expected {want}, got "
              f"{report.format_cell(got)} (tolerance {value_tol})")
        failed = failed or not ok
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoiv2v",
        description="AoI-aware V2V band allocation: simulate, train, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the recurrent Q-network")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate one policy for one seed")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--policy", required=True,
                        help="proposed | channel-aware | packet-aware | aoi-aware | random")
    p_eval.add_argument("--slots", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--out", default=None, help="optional report directory")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter across policies and seeds")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True, choices=sorted(SWEEP_FIELDS))
    p_sweep.add_argument("--values", required=True, help="comma separated")
    p_sweep.add_argument("--policies", required=True, help="comma separated")
    p_sweep.add_argument("--seeds", required=True, help="comma separated")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--checkpoint", default=None)
    p_sweep.add_argument("--slots", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_demo = sub.add_parser("cluster-demo", help="dump one slot's group assignment")
    p_demo.add_argument("--config", required=True)
    p_demo.add_argument("--out", required=True, help="output CSV file")
    p_demo.add_argument("--seed", type=int, default=None)
    p_demo.set_defaults(func=cmd_cluster_demo)

    p_oracle = sub.add_parser("oracle-check",
                              help="value-iterate an explicit MDP fixture")
    p_oracle.add_argument("--fixture", required=True, help="JSON fixture file")
    p_oracle.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:  # bad config, bad policy name, bad fixture
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
