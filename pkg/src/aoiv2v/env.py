"""Slot-level simulation: K transmitter/receiver pairs on the grid.

Each pair is a head vehicle (receiver) with its transmitter trailing a fixed
arc length behind on the same driven path.  Per slot the environment exposes
gains, fresh arrivals and ages; `realize` prices a decision against the
current state and `advance` rolls mobility, channel, arrivals and ages
forward under that decision.
"""

from __future__ import annotations

import numpy as np

from .config import ExperimentConfig
from .mdp import Decision, VuePairState, utility
from .mobility import (
    LinkClass,
    build_map,
    classify_link,
    midpoint,
    place_vtx,
    spawn_vehicle,
    step_vehicle,
)
from .phy import advance_aoi, channel_gain, max_packets, packet_drops, sample_arrivals, tx_power

# floor on the NLOS coordinate-difference product (square metres); keeps the
# published gain expression finite when a vehicle crosses the x = y diagonal
_NLOS_PRODUCT_FLOOR = 1e-9


class SimEnv:
    def __init__(self, cfg: ExperimentConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.rng = rng
        self.rm = build_map(cfg.side_m, cfg.intersections_per_axis, cfg.lane_width_m)
        self.step_m = cfg.speed_mps * cfg.slot_s
        k = cfg.num_pairs
        self.traces = [spawn_vehicle(self.rm, rng, cfg.pair_separation_m) for _ in range(k)]
        self.vtx = np.stack([place_vtx(t, cfg.pair_separation_m) for t in self.traces])
        self.links: list[LinkClass] = []
        self.gain = np.zeros(k)
        self._refresh_channel()
        self.arrivals = sample_arrivals(rng, cfg, size=k).astype(int)
        self.aoi = np.ones(k, dtype=int)
        self.slot = 0

    # -- channel -------------------------------------------------------------

    def _pair_gain(self, link: LinkClass, vtx, vrx) -> float:
        if link is LinkClass.NLOS:
            prod = abs(vtx[0] - vtx[1]) * abs(vrx[0] - vrx[1])
            prod = max(prod, _NLOS_PRODUCT_FLOOR)
            return (
                self.cfg.shadowing_gain
                * self.cfg.rho
                * prod ** -self.cfg.path_loss_exponent
            )
        return channel_gain(link, tuple(vtx), tuple(vrx), self.cfg)

    def _refresh_channel(self) -> None:
        links = []
        gains = np.empty(len(self.traces))
        for k, trace in enumerate(self.traces):
            link = classify_link(self.vtx[k], trace.pos, self.rm, self.cfg.corner_radius_m)
            links.append(link)
            gains[k] = self._pair_gain(link, self.vtx[k], trace.pos)
        self.links = links
        self.gain = gains

    # -- views ---------------------------------------------------------------

    @property
    def num_pairs(self) -> int:
        return len(self.traces)

    def vrx(self) -> np.ndarray:
        return np.stack([t.pos for t in self.traces])

    def midpoints(self) -> np.ndarray:
        return np.stack(
            [midpoint(self.vtx[k], t.pos) for k, t in enumerate(self.traces)]
        )

    def caps(self) -> np.ndarray:
        """Per-pair feasible packet ceiling if granted a band: min(X, R_max)."""
        return np.array(
            [
                min(int(self.arrivals[k]), max_packets(self.gain[k], True, self.cfg))
                for k in range(self.num_pairs)
            ],
            dtype=int,
        )

    def states(self) -> list[VuePairState]:
        return [
            VuePairState(
                vtx_pos=(float(self.vtx[k][0]), float(self.vtx[k][1])),
                vrx_pos=(float(t.pos[0]), float(t.pos[1])),
                gain=float(self.gain[k]),
                arrivals=int(self.arrivals[k]),
                aoi_slots=int(self.aoi[k]),
            )
            for k, t in enumerate(self.traces)
        ]

    # -- dynamics ------------------------------------------------------------

    def validate_decision(self, dec: Decision, groups: np.ndarray) -> None:
        """Assert band budget, per-group uniqueness and scheduling feasibility."""
        cfg = self.cfg
        if dec.num_pairs != self.num_pairs:
            raise ValueError("decision size mismatch")
        caps = self.caps()
        for k in range(self.num_pairs):
            f, r, b = int(dec.band_flag[k]), int(dec.scheduled[k]), int(dec.band_index[k])
            if f not in (0, 1):
                raise ValueError("band flag must be 0 or 1")
            if f == 0 and (r != 0 or b != -1):
                raise ValueError("pair without a band cannot transmit")
            if f == 1 and not 0 <= b < cfg.num_bands:
                raise ValueError("band index out of range")
            if f == 1 and not 0 <= r <= caps[k]:
                raise ValueError(
                    f"scheduled count {r} breaks the min(arrivals, capacity) cap {caps[k]}"
                )
        for g in np.unique(groups):
            used = [int(b) for b, f in zip(dec.band_index[groups == g], dec.band_flag[groups == g]) if f]
            if len(used) != len(set(used)):
                raise ValueError("band reused inside one group")

    def realize(self, dec: Decision) -> dict[str, np.ndarray]:
        """Price the decision against the current slot's state."""
        k_n = self.num_pairs
        power = np.zeros(k_n)
        drops = np.zeros(k_n, dtype=int)
        utils = np.zeros(k_n)
        for k in range(k_n):
            f = int(dec.band_flag[k])
            r = int(dec.scheduled[k])
            power[k] = tx_power(self.gain[k], bool(f), r, self.cfg)
            drops[k] = packet_drops(int(self.arrivals[k]), bool(f), r)
            utils[k] = utility(power[k], drops[k], int(self.aoi[k]), self.cfg)
        delivered = (dec.band_flag * dec.scheduled) > 0
        return {"power_w": power, "drops": drops, "utility": utils, "delivered": delivered}

    def advance(self, dec: Decision) -> None:
        """Roll one slot forward under the decision just performed."""
        self.aoi = np.array(
            [
                advance_aoi(int(a), bool(f), int(r), self.cfg)
                for a, f, r in zip(self.aoi, dec.band_flag, dec.scheduled)
            ],
            dtype=int,
        )
        for trace in self.traces:
            step_vehicle(
                trace,
                self.rm,
                self.step_m,
                self.rng,
                prune_to_m=self.cfg.pair_separation_m,
            )
        self.vtx = np.stack(
            [place_vtx(t, self.cfg.pair_separation_m) for t in self.traces]
        )
        self._refresh_channel()
        self.arrivals = sample_arrivals(self.rng, self.cfg, size=self.num_pairs).astype(int)
        self.slot += 1


def idle_decision(k: int) -> Decision:
    return Decision(
        band_flag=np.zeros(k, dtype=int),
        scheduled=np.zeros(k, dtype=int),
        band_index=np.full(k, -1, dtype=int),
    )
