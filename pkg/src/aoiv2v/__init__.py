"""AoI-aware frequency band allocation and packet scheduling for V2V networks.

A discrete-time simulator of vehicle pairs on a Manhattan street grid, the
channel and queueing physics of their sidelinks, spectral grouping for band
reuse, tabular SARSA on the decomposed decision problem, and a from-scratch
recurrent Q-network trained on windowed partial observations.
"""

from .clustering import cluster_groups, jacobi_eigh, kmeans, normalized_laplacian, similarity_matrix
from .config import ExperimentConfig, load_config, parse_config_text, write_config
from .drqn import (
    FEATURE_DIM,
    AdamState,
    Experience,
    FeatureScale,
    ObservationPool,
    ReplayMemory,
    action_index,
    adam_step,
    encode_features,
    forward,
    init_params,
    load_checkpoint,
    loss_and_grad,
    num_actions,
    save_checkpoint,
    sync_target,
)
from .env import SimEnv, idle_decision
from .harness import (
    EpisodeResult,
    TrainResult,
    run_episode,
    run_experiment,
    summarize_cells,
    train,
)
from .mdp import (
    Decision,
    Observation,
    QTable,
    TabularMdp,
    VuePairState,
    allocate_bands,
    discounted_return,
    greedy_joint_decision,
    policy_evaluation,
    sarsa_update,
    utility,
    value_iteration,
)
from .mobility import RoadMap, VehicleTrace, build_map, classify_link, place_vtx, spawn_vehicle, step_vehicle
from .phy import LinkClass, advance_aoi, channel_gain, max_packets, packet_drops, sample_arrivals, tx_power
from .policies import PolicyKind, decide_baseline, decide_from_q, decide_proposed, parse_policy

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Decision",
    "EpisodeResult",
    "Experience",
    "ExperimentConfig",
    "FEATURE_DIM",
    "FeatureScale",
    "LinkClass",
    "Observation",
    "ObservationPool",
    "PolicyKind",
    "QTable",
    "ReplayMemory",
    "RoadMap",
    "SimEnv",
    "TabularMdp",
    "TrainResult",
    "VehicleTrace",
    "VuePairState",
    "action_index",
    "adam_step",
    "advance_aoi",
    "allocate_bands",
    "build_map",
    "channel_gain",
    "classify_link",
    "cluster_groups",
    "decide_baseline",
    "decide_from_q",
    "decide_proposed",
    "discounted_return",
    "encode_features",
    "forward",
    "greedy_joint_decision",
    "idle_decision",
    "init_params",
    "jacobi_eigh",
    "kmeans",
    "load_checkpoint",
    "load_config",
    "loss_and_grad",
    "max_packets",
    "normalized_laplacian",
    "num_actions",
    "packet_drops",
    "parse_config_text",
    "parse_policy",
    "place_vtx",
    "policy_evaluation",
    "run_episode",
    "run_experiment",
    "sample_arrivals",
    "sarsa_update",
    "save_checkpoint",
    "similarity_matrix",
    "spawn_vehicle",
    "step_vehicle",
    "summarize_cells",
    "sync_target",
    "train",
    "tx_power",
    "utility",
    "value_iteration",
    "write_config",
]
