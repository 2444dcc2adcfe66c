"""Radio and traffic kernels: path loss, link capacity, transmit power,
packet arrivals, packet drops, and age-of-information bookkeeping.

All quantities are linear SI (watts, hertz, metres); ages are in slots.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .config import ExperimentConfig


class LinkClass(enum.Enum):
    LOS = "los"
    WLOS = "wlos"
    NLOS = "nlos"


def channel_gain(
    link: LinkClass,
    vtx_pos: tuple[float, float],
    vrx_pos: tuple[float, float],
    cfg: ExperimentConfig,
) -> float:
    """Channel gain for one vTx -> vRx link.

    LOS decays with the Euclidean separation, WLOS (around one corner) with
    the Manhattan separation.  NLOS multiplies the two per-vehicle coordinate
    differences |x - y|; that is the published corner-blockage form and it is
    kept verbatim even though it is unusual (it rewards positions near the
    x = y diagonal, see README).
    """
    eta = cfg.path_loss_exponent
    psi = cfg.shadowing_gain
    if link is LinkClass.LOS:
        d = math.hypot(vtx_pos[0] - vrx_pos[0], vtx_pos[1] - vrx_pos[1])
        if d <= 0.0:
            raise ValueError("LOS gain undefined for coincident positions")
        return psi * cfg.phi * d ** -eta
    if link is LinkClass.WLOS:
        d = abs(vtx_pos[0] - vrx_pos[0]) + abs(vtx_pos[1] - vrx_pos[1])
        if d <= 0.0:
            raise ValueError("WLOS gain undefined for coincident positions")
        return psi * cfg.phi * d ** -eta
    prod = abs(vtx_pos[0] - vtx_pos[1]) * abs(vrx_pos[0] - vrx_pos[1])
    if prod <= 0.0:
        raise ValueError("NLOS gain undefined when a coordinate difference is zero")
    return psi * cfg.rho * prod ** -eta


def max_packets(gain: float, band_granted: bool, cfg: ExperimentConfig) -> int:
    """Largest packet count deliverable in one slot at full transmit power.

    Without a band the link carries nothing.  The count is clamped to the
    global scheduling cap so downstream action spaces stay finite.
    """
    if not band_granted:
        return 0
    if gain <= 0.0:
        raise ValueError("channel gain must be positive")
    snr = gain * cfg.p_max_w / (cfg.interference + cfg.noise_w)
    raw = math.floor(
        cfg.slot_s * cfg.bandwidth_hz * math.log2(1.0 + snr) / cfg.packet_bits
    )
    return max(0, min(raw, cfg.r_max_global))


def tx_power(gain: float, band_granted: bool, scheduled: int, cfg: ExperimentConfig) -> float:
    """Transmit power in watts needed to deliver `scheduled` packets this slot.

    Inverts the capacity formula; zero when no band is granted or nothing is
    scheduled.  Raises when the request exceeds the per-slot packet ceiling,
    which is what keeps the result inside the power budget.
    """
    if scheduled < 0:
        raise ValueError("scheduled packet count must be non-negative")
    if not band_granted or scheduled == 0:
        if scheduled > 0:
            raise ValueError("cannot schedule packets without a band grant")
        return 0.0
    if gain <= 0.0:
        raise ValueError("channel gain must be positive")
    cap = max_packets(gain, band_granted, cfg)
    if scheduled > cap:
        raise ValueError(
            f"{scheduled} packets exceed the per-slot ceiling of {cap}; "
            "the power budget only covers rates up to the ceiling"
        )
    rate_exp = cfg.packet_bits * scheduled / (cfg.bandwidth_hz * cfg.slot_s)
    return (cfg.interference + cfg.noise_w) / gain * (2.0 ** rate_exp - 1.0)


def sample_arrivals(rng: np.random.Generator, cfg: ExperimentConfig, size=None):
    """Poisson packet arrivals, clamped (not resampled) to the buffer cap."""
    draw = rng.poisson(cfg.arrival_rate, size=size)
    return np.minimum(draw, cfg.x_max)


def packet_drops(arrivals: int, band_granted: bool, scheduled: int) -> int:
    """Packets left unserved this slot (buffer empties every slot)."""
    if scheduled < 0 or arrivals < 0:
        raise ValueError("counts must be non-negative")
    if not band_granted:
        if scheduled != 0:
            raise ValueError("cannot schedule packets without a band")
        return arrivals
    if scheduled > arrivals:
        raise ValueError("cannot schedule more packets than arrived")
    return arrivals - scheduled


def advance_aoi(aoi_slots: int, band_granted: bool, scheduled: int,
                cfg: ExperimentConfig) -> int:
    """Next-slot age: reset to one on any delivery, else saturating count-up."""
    if not 1 <= aoi_slots <= cfg.a_max_slots:
        raise ValueError("age out of range")
    if band_granted and scheduled > 0:
        return 1
    return min(aoi_slots + 1, cfg.a_max_slots)


def truncated_poisson_mean(rate: float, x_max: int) -> float:
    """Mean of min(Poisson(rate), x_max), by direct pmf summation."""
    mean = 0.0
    below = 0.0
    for x in range(x_max):
        pmf = math.exp(-rate) * rate ** x / math.factorial(x)
        below += pmf
        mean += x * pmf
    return mean + x_max * (1.0 - below)
