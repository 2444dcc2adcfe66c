"""Manhattan-grid road map and vehicle motion.

Geometry conventions:
  * Road centers sit at side * (i + 1) / (n + 1) on each axis, so a 250 m side
    with 3 roads per axis puts centers at 62.5 / 125 / 187.5 m.
  * Every road carries two 4 m lanes under right-hand traffic; an eastbound
    lane centerline runs half a lane width south of its road center, and so on
    around the compass.
  * Vehicles drive the lane-centerline graph between the outermost road
    centers.  A turn decision is drawn when the head reaches the entry edge of
    an intersection (half a lane width before the near target lane): straight
    keeps the lane, a right turn pivots at the entry corner, a left turn
    crosses to the far corner before pivoting.  Weights 0.5 / 0.25 / 0.25 are
    renormalized over the exits that actually exist, which forces a turn at
    the map edge.
  * Each vehicle keeps its polyline of past turn vertices so a trailing
    transmitter can be placed an exact arc length behind the head.  Initial
    histories extend straight back along the spawn heading, which may poke
    past the drivable span; link classification therefore tests membership
    against full road lines rather than finite spans.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .phy import LinkClass

_EPS = 1e-9

_TURN_WEIGHTS = {"straight": 0.5, "left": 0.25, "right": 0.25}


def _left_of(h: np.ndarray) -> np.ndarray:
    return np.array([-h[1], h[0]])


def _right_of(h: np.ndarray) -> np.ndarray:
    return np.array([h[1], -h[0]])


@dataclass(frozen=True)
class Lane:
    axis: str            # 'h' lanes run along x, 'v' lanes along y
    road_center: float   # perpendicular coordinate of the parent road
    fixed: float         # perpendicular coordinate of this lane centerline
    heading: tuple[float, float]


@dataclass(frozen=True)
class RoadMap:
    side_m: float
    centers: np.ndarray          # road center coordinates, shared by both axes
    lane_width_m: float
    lanes: tuple[Lane, ...]

    @property
    def half_road_m(self) -> float:
        return self.lane_width_m  # two lanes per road

    @property
    def half_lane_m(self) -> float:
        return self.lane_width_m / 2.0

    def roads_containing(self, pos) -> list[tuple[str, float]]:
        """Roads whose band (center +/- half road width) covers the position.

        Tested against the infinite road line, not the finite drivable span:
        synthetic warm-up history may lie slightly outside the span but stays
        on the line.
        """
        out = []
        for c in self.centers:
            if abs(pos[1] - c) <= self.half_road_m + 1e-6:
                out.append(("h", float(c)))
        for c in self.centers:
            if abs(pos[0] - c) <= self.half_road_m + 1e-6:
                out.append(("v", float(c)))
        return out


def build_map(side_m: float, intersections_per_axis: int, lane_width_m: float) -> RoadMap:
    n = intersections_per_axis
    if n < 2:
        raise ValueError("need at least a 2x2 intersection grid")
    if side_m <= 0 or lane_width_m <= 0:
        raise ValueError("side and lane width must be positive")
    centers = side_m * np.arange(1, n + 1) / (n + 1)
    if centers[0] - lane_width_m < 0:
        raise ValueError("lane centerlines would leave the map area")
    half = lane_width_m / 2.0
    lanes = []
    for c in centers:
        c = float(c)
        lanes.append(Lane("h", c, c - half, (1.0, 0.0)))    # eastbound
        lanes.append(Lane("h", c, c + half, (-1.0, 0.0)))   # westbound
        lanes.append(Lane("v", c, c + half, (0.0, 1.0)))    # northbound
        lanes.append(Lane("v", c, c - half, (0.0, -1.0)))   # southbound
    return RoadMap(side_m, centers, lane_width_m, tuple(lanes))


@dataclass
class VehicleTrace:
    """Head position plus the turn-vertex polyline behind it."""

    pos: np.ndarray
    heading: np.ndarray
    # pending left turn: (pivot point, heading after the pivot)
    committed: Optional[tuple[np.ndarray, np.ndarray]] = None
    # turn vertices, oldest first; trace.pos -> history[-1] is the current leg
    history: list = field(default_factory=list)


def _progress(pos: np.ndarray, heading: np.ndarray) -> float:
    return float(pos @ heading)


def _exits(rm: RoadMap, heading: np.ndarray, cx: float, cy: float) -> dict[str, np.ndarray]:
    """Exits of intersection (cx, cy) that lead onto existing road."""
    lo, hi = float(rm.centers[0]), float(rm.centers[-1])

    def extends(direction) -> bool:
        tip_x, tip_y = cx + direction[0], cy + direction[1]
        return lo - _EPS <= tip_x <= hi + _EPS and lo - _EPS <= tip_y <= hi + _EPS

    options = {}
    for name, h in (("straight", heading),
                    ("left", _left_of(heading)),
                    ("right", _right_of(heading))):
        if extends(h):
            options[name] = h
    return options


def _draw_turn(options: dict[str, np.ndarray], rng: np.random.Generator) -> str:
    names = [n for n in ("straight", "left", "right") if n in options]
    weights = np.array([_TURN_WEIGHTS[n] for n in names])
    weights = weights / weights.sum()
    u = rng.random()
    acc = 0.0
    for name, w in zip(names, weights):
        acc += w
        if u <= acc:
            return name
    return names[-1]


def _next_decision(rm: RoadMap, pos: np.ndarray, heading: np.ndarray):
    """(progress, road center) of the next intersection entry edge ahead."""
    s = _progress(pos, heading)
    sign = float(heading[0] + heading[1])  # +1 or -1 along the moving axis
    best = None
    for c in rm.centers:
        trig = float(c) * sign - rm.half_lane_m
        if trig > s + _EPS and (best is None or trig < best[0]):
            best = (trig, float(c))
    return best


def step_vehicle(
    trace: VehicleTrace,
    rm: RoadMap,
    dist_m: float,
    rng: np.random.Generator,
    prune_to_m: Optional[float] = None,
) -> VehicleTrace:
    """Advance the head by dist_m of arc length, drawing turns as reached."""
    if dist_m < 0:
        raise ValueError("distance must be non-negative")
    remaining = dist_m
    guard = 0
    while remaining > 1e-12:
        guard += 1
        if guard > 10000:
            raise RuntimeError("vehicle stepping failed to terminate")
        s = _progress(trace.pos, trace.heading)
        if trace.committed is not None:
            pivot, new_heading = trace.committed
            d = _progress(pivot, trace.heading) - s
            if d > remaining + 1e-12:
                trace.pos = trace.pos + trace.heading * remaining
                break
            remaining -= max(d, 0.0)
            trace.pos = pivot.copy()
            trace.history.append(pivot.copy())
            trace.heading = new_heading.copy()
            trace.committed = None
            continue
        nxt = _next_decision(rm, trace.pos, trace.heading)
        if nxt is None:
            raise RuntimeError("vehicle ran out of road; bad placement or map")
        trig_s, center = nxt
        d = trig_s - s
        if d > remaining + 1e-12:
            trace.pos = trace.pos + trace.heading * remaining
            break
        remaining -= max(d, 0.0)
        trace.pos = trace.pos + trace.heading * d
        # crossing-road center is `center`; own road center sits half a lane
        # width to the left of the lane centerline
        if trace.heading[0] != 0:
            cx = center
            cy = float(trace.pos[1] + rm.half_lane_m * (1.0 if trace.heading[0] > 0 else -1.0))
        else:
            cy = center
            cx = float(trace.pos[0] - rm.half_lane_m * (1.0 if trace.heading[1] > 0 else -1.0))
        choice = _draw_turn(_exits(rm, trace.heading, cx, cy), rng)
        if choice == "right":
            trace.history.append(trace.pos.copy())
            trace.heading = _right_of(trace.heading)
        elif choice == "left":
            pivot = trace.pos + trace.heading * rm.lane_width_m
            trace.committed = (pivot, _left_of(trace.heading))
        # straight: carry on to the next decision point
    if prune_to_m is not None:
        _prune_history(trace, prune_to_m)
    return trace


def _prune_history(trace: VehicleTrace, keep_m: float) -> None:
    acc = 0.0
    prev = trace.pos
    for i in range(len(trace.history) - 1, -1, -1):
        acc += float(np.linalg.norm(prev - trace.history[i]))
        prev = trace.history[i]
        if acc >= keep_m + 1.0:
            del trace.history[:i]
            return


def place_vtx(trace: VehicleTrace, separation_m: float) -> np.ndarray:
    """Point exactly separation_m of arc length behind the head."""
    if separation_m < 0:
        raise ValueError("separation must be non-negative")
    if separation_m == 0:
        return trace.pos.copy()
    remaining = separation_m
    newer = trace.pos
    for older in reversed(trace.history):
        seg_vec = older - newer
        seg_len = float(np.linalg.norm(seg_vec))
        if seg_len >= remaining - 1e-9:
            if seg_len == 0.0:
                return newer.copy()
            return newer + seg_vec * (remaining / seg_len)
        remaining -= seg_len
        newer = older
    raise ValueError("path history shorter than the requested separation")


def spawn_vehicle(rm: RoadMap, rng: np.random.Generator, back_extension_m: float) -> VehicleTrace:
    """Uniform draw over drivable lane centerlines, history extended straight back."""
    lane = rm.lanes[rng.integers(len(rm.lanes))]
    heading = np.array(lane.heading)
    lo, hi = float(rm.centers[0]), float(rm.centers[-1])
    sign = float(heading[0] + heading[1])
    s_lo = lo if sign > 0 else -hi
    s_hi = (hi if sign > 0 else -lo) * 1.0 - rm.half_lane_m * 2.0  # short of the last entry edge
    s = rng.uniform(s_lo, s_hi)
    along = s * sign
    pos = np.array([along, lane.fixed]) if lane.axis == "h" else np.array([lane.fixed, along])
    trace = VehicleTrace(pos=pos, heading=heading)
    trace.history.append(pos - heading * (back_extension_m + 1.0))
    return trace


def classify_link(vtx_pos, vrx_pos, rm: RoadMap, corner_radius_m: float) -> LinkClass:
    """LOS on a shared road, WLOS around one corner near the crossing, else NLOS."""
    tx_roads = rm.roads_containing(vtx_pos)
    rx_roads = rm.roads_containing(vrx_pos)
    if not tx_roads:
        raise ValueError(f"position {tuple(vtx_pos)} is not on any road")
    if not rx_roads:
        raise ValueError(f"position {tuple(vrx_pos)} is not on any road")
    if set(tx_roads) & set(rx_roads):
        return LinkClass.LOS
    vtx_pos = np.asarray(vtx_pos, dtype=float)
    vrx_pos = np.asarray(vrx_pos, dtype=float)
    for ax_t, c_t in tx_roads:
        for ax_r, c_r in rx_roads:
            if ax_t == ax_r:
                continue  # parallel roads never share a crossing
            cx, cy = (c_r, c_t) if ax_t == "h" else (c_t, c_r)
            crossing = np.array([cx, cy])
            d = min(float(np.linalg.norm(vtx_pos - crossing)),
                    float(np.linalg.norm(vrx_pos - crossing)))
            if d <= corner_radius_m:
                return LinkClass.WLOS
    return LinkClass.NLOS


def midpoint(vtx_pos, vrx_pos) -> np.ndarray:
    return (np.asarray(vtx_pos, dtype=float) + np.asarray(vrx_pos, dtype=float)) / 2.0
