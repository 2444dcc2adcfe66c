"""Experiment configuration: defaults, file parsing, validation, unit conversion.

Config files are plain text, one ``key = value`` pair per line, ``#`` starts a
comment.  Keys are exactly the field names of :class:`ExperimentConfig`.
dB-valued inputs are converted to linear SI once, at load time; everything
downstream works in watts, hertz, metres and slots.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_per_hz_to_w_per_hz(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


@dataclass
class ExperimentConfig:
    """All knobs for one experiment, flat so the file format stays trivial."""

    # map and mobility
    side_m: float = 250.0
    intersections_per_axis: int = 3
    lane_width_m: float = 4.0
    speed_kmh: float = 60.0
    slot_s: float = 3e-3
    pair_separation_m: float = 50.0  # arc-length gap between vTx and vRx

    # network size and spectrum
    num_pairs: int = 56
    num_bands: int = 10
    bandwidth_hz: float = 8e5
    noise_psd_dbm_per_hz: float = -174.0

    # path loss
    phi_db: float = -68.5   # LOS / WLOS coefficient
    rho_db: float = -54.5   # NLOS coefficient
    path_loss_exponent: float = 1.61
    corner_radius_m: float = 15.0
    shadowing_gain: float = 1.0
    # Aggregate interference at the receiver, watts.  None means "equal to the
    # thermal noise power W*sigma^2"; scaled desk configs raise it so that the
    # power and capacity mechanisms stay visible at small K.
    interference_w: Optional[float] = None
    p_max_w: float = 2.0
    packet_bits: float = 2000.0

    # traffic and age
    arrival_rate: float = 4.0
    x_max: int = 15
    a_max_slots: int = 100
    r_max: Optional[int] = None  # None -> x_max; scheduling above x_max never helps

    # clustering
    g_groups: int = 10
    similarity_cutoff_m: float = 150.0
    similarity_scale_m: float = 30.0
    recluster_every_slots: int = 1
    jacobi_tol: float = 1e-10
    jacobi_max_sweeps: int = 50
    kmeans_max_iter: int = 100

    # utility weights
    vartheta: float = 2.0
    xi: float = 0.9
    aoi_utility_units: str = "slots"  # or "seconds"

    # learning
    gamma: float = 0.9
    window_slots: int = 10
    replay_capacity: int = 5000
    minibatch_size: int = 200
    lstm_hidden: int = 32
    dense_units: int = 32
    adam_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    target_sync_slots: int = 100
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.6
    warmup_min_experiences: int = 500
    train_slots: int = 20000
    # early stop: halt when the 500-step loss moving average changes by less
    # than plateau_rel_tol (relative) over plateau_window_slots steps; a zero
    # tolerance disables the check
    plateau_window_slots: int = 2000
    plateau_rel_tol: float = 1e-3

    # evaluation
    eval_slots: int = 5000
    seed: int = 0

    # --- derived, linear-unit accessors -------------------------------------

    @property
    def phi(self) -> float:
        return db_to_linear(self.phi_db)

    @property
    def rho(self) -> float:
        return db_to_linear(self.rho_db)

    @property
    def noise_w(self) -> float:
        """Thermal noise power W*sigma^2 over the band, watts."""
        return self.bandwidth_hz * dbm_per_hz_to_w_per_hz(self.noise_psd_dbm_per_hz)

    @property
    def interference(self) -> float:
        return self.noise_w if self.interference_w is None else self.interference_w

    @property
    def speed_mps(self) -> float:
        return self.speed_kmh / 3.6

    @property
    def r_max_global(self) -> int:
        return self.x_max if self.r_max is None else self.r_max

    @property
    def warmup_experiences(self) -> int:
        return max(self.minibatch_size, self.warmup_min_experiences)

    def validate(self) -> None:
        """Raise ValueError naming the first violated constraint."""
        checks = [
            (self.side_m > 0, "side_m must be positive"),
            (self.intersections_per_axis >= 2,
             "intersections_per_axis must be at least 2"),
            (self.lane_width_m > 0, "lane_width_m must be positive"),
            (self.speed_kmh > 0, "speed_kmh must be positive"),
            (self.slot_s > 0, "slot_s must be positive"),
            (self.pair_separation_m > 0, "pair_separation_m must be positive"),
            (self.num_pairs >= 1, "num_pairs must be at least 1"),
            # zero bands is the no-transmission limit, useful for testing
            (self.num_bands >= 0, "num_bands must be non-negative"),
            (self.bandwidth_hz > 0, "bandwidth_hz must be positive"),
            (self.path_loss_exponent > 0, "path_loss_exponent must be positive"),
            (self.corner_radius_m > 0, "corner_radius_m must be positive"),
            (self.shadowing_gain > 0, "shadowing_gain must be positive"),
            (self.interference >= 0, "interference_w must be non-negative"),
            (self.p_max_w > 0, "p_max_w must be positive"),
            (self.packet_bits > 0, "packet_bits must be positive"),
            (self.arrival_rate >= 0, "arrival_rate must be non-negative"),
            (self.x_max >= 1, "x_max must be at least 1"),
            (self.a_max_slots >= 1, "a_max_slots must be at least 1"),
            (self.r_max_global >= 1, "r_max must be at least 1"),
            (self.g_groups > 1, "g_groups must exceed 1"),
            (self.num_pairs >= self.g_groups,
             "num_pairs must be at least g_groups"),
            (self.similarity_cutoff_m > 0, "similarity_cutoff_m must be positive"),
            (self.similarity_scale_m > 0, "similarity_scale_m must be positive"),
            (self.recluster_every_slots >= 1,
             "recluster_every_slots must be at least 1"),
            (0.0 <= self.gamma < 1.0, "gamma must lie in [0, 1)"),
            (self.vartheta >= 0, "vartheta must be non-negative"),
            (self.xi >= 0, "xi must be non-negative"),
            (self.aoi_utility_units in ("slots", "seconds"),
             "aoi_utility_units must be 'slots' or 'seconds'"),
            (self.window_slots >= 1, "window_slots must be at least 1"),
            (self.replay_capacity >= 1, "replay_capacity must be at least 1"),
            (1 <= self.minibatch_size <= self.replay_capacity,
             "minibatch_size must lie in [1, replay_capacity]"),
            (self.lstm_hidden >= 1, "lstm_hidden must be at least 1"),
            (self.dense_units >= 1, "dense_units must be at least 1"),
            (self.adam_lr > 0, "adam_lr must be positive"),
            (0.0 <= self.eps_end <= self.eps_start <= 1.0,
             "need 0 <= eps_end <= eps_start <= 1"),
            (0.0 < self.eps_decay_frac <= 1.0,
             "eps_decay_frac must lie in (0, 1]"),
            (self.target_sync_slots >= 1, "target_sync_slots must be at least 1"),
            (self.plateau_window_slots >= 1,
             "plateau_window_slots must be at least 1"),
            (self.plateau_rel_tol >= 0, "plateau_rel_tol must be non-negative"),
            (self.train_slots >= 1, "train_slots must be at least 1"),
            (self.eval_slots >= 1, "eval_slots must be at least 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(f"invalid config: {msg}")
        # NLOS coefficient must stay below the LOS value at the corner radius,
        # otherwise the corner model hands blocked links a better channel.
        bound = self.phi * (self.corner_radius_m / 2.0) ** self.path_loss_exponent
        if not self.rho < bound:
            raise ValueError(
                "invalid config: rho must satisfy rho < phi*(corner_radius/2)^eta "
                f"({self.rho:.6g} >= {bound:.6g})"
            )

    def canonical_text(self) -> str:
        """Stable key = value rendering, used for hashing and reproducibility."""
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def replace(self, **kw) -> "ExperimentConfig":
        out = dataclasses.replace(self, **kw)
        out.validate()
        return out


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    t = _FIELD_TYPES[name]
    raw = raw.strip()
    if raw.lower() in ("none", "null"):
        return None
    if t == "int":
        return int(raw)
    if t == "float":
        return float(raw)
    if t == "str":
        return raw
    if t == "Optional[float]":
        return float(raw)
    if t == "Optional[int]":
        return int(raw)
    raise ValueError(f"unhandled config field type for {name}: {t}")


def parse_config_text(text: str) -> ExperimentConfig:
    values = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {ln}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"config line {ln}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"config line {ln}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


def write_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.canonical_text())
