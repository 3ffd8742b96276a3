"""Propagation model for the shared infrared medium in a 2D arena.

Emitters radiate a codeword into a forward cone of limited range; receivers
are omnidirectional.  A receiver that is reached by exactly one emission
hears it cleanly (possibly with independent per-bit noise standing in for
ambient light).  Two or more simultaneous arrivals superpose: on-off-keyed
light adds, so the receiver hears the bitwise OR of everything arriving.
An emitter whose forward ray strikes an obstacle close enough hears its own
word back as an echo, which is the obstacle-detection signal.

All functions are pure given their inputs plus an explicitly passed random
generator; iteration orders are fixed by robot id so a seeded run is fully
reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import _kernels
from .codec import CODEWORD_BITS, Codeword


@dataclass(frozen=True)
class Pose:
    """Planar position in meters plus heading in degrees, kept in [0, 360)."""

    x: float
    y: float
    heading: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")
        if not math.isfinite(self.heading):
            raise ValueError(f"non-finite heading {self.heading}")
        object.__setattr__(self, "heading", self.heading % 360.0)


@dataclass(frozen=True)
class ObstacleSegment:
    """Reflecting wall segment; reflectivity is the returned intensity fraction."""

    x1: float
    y1: float
    x2: float
    y2: float
    reflectivity: float

    def __post_init__(self) -> None:
        if (self.x1, self.y1) == (self.x2, self.y2):
            raise ValueError("obstacle endpoints coincide")
        if not 0.0 < self.reflectivity <= 1.0:
            raise ValueError(f"reflectivity {self.reflectivity} not in (0, 1]")


@dataclass(frozen=True)
class ChannelParams:
    """Physical parameters of the infrared medium.

    bit_error_rate is the per-bit flip probability modeling ambient light.
    reflectivity_default doubles as the reflectivity assumed when inverting
    an echo intensity back into a distance.
    """

    max_range: float = 2.0
    cone_half_angle_deg: float = 60.0
    base_intensity: float = 1.0
    min_distance: float = 0.01
    bit_error_rate: float = 0.0
    reflectivity_default: float = 0.5

    def __post_init__(self) -> None:
        if self.max_range <= 0.0:
            raise ValueError("max_range must be > 0")
        if not 0.0 < self.cone_half_angle_deg <= 180.0:
            raise ValueError("cone_half_angle_deg must be in (0, 180]")
        if self.base_intensity <= 0.0:
            raise ValueError("base_intensity must be > 0")
        if self.min_distance <= 0.0:
            raise ValueError("min_distance must be > 0")
        if not 0.0 <= self.bit_error_rate < 1.0:
            raise ValueError("bit_error_rate must be in [0, 1)")
        if not 0.0 < self.reflectivity_default <= 1.0:
            raise ValueError("reflectivity_default must be in (0, 1]")


@dataclass(frozen=True)
class Transmission:
    """One emitted codeword: who sent it, from where, at which tick."""

    emitter: int
    pose: Pose
    codeword: Codeword
    tick: int


@dataclass(frozen=True)
class Clean:
    """A single undisturbed arrival (bit noise may still have been applied)."""

    codeword: Codeword
    intensity: float
    bearing: float


@dataclass(frozen=True)
class Corrupted:
    """Superposition of simultaneous arrivals: OR of the words, summed power."""

    codeword: Codeword
    intensity: float
    bearing: float


@dataclass(frozen=True)
class Echo:
    """The receiver's own last emission bounced back by an obstacle."""

    codeword: Codeword
    intensity: float


Reception = Union[Clean, Corrupted, Echo]


def _heading_vector(heading_deg: float) -> tuple[float, float]:
    r = math.radians(heading_deg)
    return math.cos(r), math.sin(r)


def bearing_deg(from_x: float, from_y: float, to_x: float, to_y: float) -> float:
    """Compass-free bearing of the to-point as seen from the from-point."""
    return math.degrees(math.atan2(to_y - from_y, to_x - from_x)) % 360.0


def obstacle_array(obstacles: list[ObstacleSegment]) -> np.ndarray:
    """Endpoint rows (x1, y1, x2, y2) as float64 for the geometry kernels."""
    if not obstacles:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array(
        [(o.x1, o.y1, o.x2, o.y2) for o in obstacles], dtype=np.float64
    )


def in_cone(emitter: Pose, point: tuple[float, float], params: ChannelParams) -> bool:
    """True if the point is inside the emitter's range-limited emission cone.

    The angular test compares the dot product of the emitter's heading with
    the direction to the point against the cosine of the half angle; a point
    coincident with the emitter counts as inside.
    """
    vx = point[0] - emitter.x
    vy = point[1] - emitter.y
    d = math.sqrt(vx * vx + vy * vy)
    if d > params.max_range:
        return False
    if d == 0.0:
        return True
    hx, hy = _heading_vector(emitter.heading)
    cos_alpha = math.cos(math.radians(params.cone_half_angle_deg))
    return hx * vx + hy * vy >= cos_alpha * d


def line_of_sight(
    a: tuple[float, float],
    b: tuple[float, float],
    obstacles: list[ObstacleSegment],
) -> bool:
    """True if no obstacle touches the open segment between a and b."""
    if a == b:
        raise ValueError("line_of_sight endpoints coincide")
    return bool(
        _kernels.los_clear(a[0], a[1], b[0], b[1], obstacle_array(obstacles))
    )


def intensity_at(distance: float, params: ChannelParams) -> float:
    """Received intensity at a distance, inverse-square with a near-field floor."""
    if distance < 0.0:
        raise ValueError(f"negative distance {distance}")
    d = max(distance, params.min_distance)
    return params.base_intensity / (d * d)


def echo_probe(
    emitter: Pose,
    codeword: Codeword,
    obstacles: list[ObstacleSegment],
    params: ChannelParams,
) -> Echo | None:
    """Reflection of the emitter's own word off the nearest obstacle ahead.

    Casts a single ray along the emitter's heading; a hit at distance d
    returns the word with the round trip 2d attenuated by the obstacle's
    reflectivity, provided the round trip fits within the channel range.
    """
    hx, hy = _heading_vector(emitter.heading)
    dist, idx = _kernels.ray_nearest_hit(
        emitter.x, emitter.y, hx, hy, obstacle_array(obstacles)
    )
    if idx < 0:
        return None
    round_trip = 2.0 * dist
    if round_trip > params.max_range:
        return None
    rho = obstacles[int(idx)].reflectivity
    d = max(round_trip, params.min_distance)
    return Echo(codeword=codeword, intensity=rho * params.base_intensity / (d * d))


def estimate_distance(
    echo_intensity: float, reflectivity: float, params: ChannelParams
) -> float:
    """Invert the echo intensity model back to the obstacle distance."""
    if echo_intensity <= 0.0:
        raise ValueError(f"echo intensity {echo_intensity} must be > 0")
    return math.sqrt(reflectivity * params.base_intensity / echo_intensity) / 2.0


def arrivals(
    transmissions: list[Transmission],
    receivers: list[tuple[int, Pose]],
    obstacles: list[ObstacleSegment],
    params: ChannelParams,
) -> dict[int, list[tuple[Transmission, float]]]:
    """Which transmissions geometrically reach each receiver, with distances.

    A receiver never counts its own transmission.  Arrival lists are ordered
    by emitter id; the result has an entry for every receiver.
    """
    txs = sorted(transmissions, key=lambda t: t.emitter)
    for prev, cur in zip(txs, txs[1:]):
        if prev.emitter == cur.emitter:
            raise ValueError(f"emitter {cur.emitter} transmitted twice in one tick")
        if prev.tick != cur.tick:
            raise ValueError("transmissions span multiple ticks")

    out: dict[int, list[tuple[Transmission, float]]] = {
        rid: [] for rid, _ in receivers
    }
    if not txs or not receivers:
        return out

    ex = np.array([t.pose.x for t in txs], dtype=np.float64)
    ey = np.array([t.pose.y for t in txs], dtype=np.float64)
    heads = [_heading_vector(t.pose.heading) for t in txs]
    edx = np.array([h[0] for h in heads], dtype=np.float64)
    edy = np.array([h[1] for h in heads], dtype=np.float64)
    rx = np.array([p.x for _, p in receivers], dtype=np.float64)
    ry = np.array([p.y for _, p in receivers], dtype=np.float64)
    cos_alpha = math.cos(math.radians(params.cone_half_angle_deg))

    reaches, dists = _kernels.reach_table(
        ex, ey, edx, edy, rx, ry, obstacle_array(obstacles),
        params.max_range, cos_alpha,
    )
    for i, (rid, _) in enumerate(receivers):
        for j, tx in enumerate(txs):
            if tx.emitter != rid and reaches[i, j]:
                out[rid].append((tx, float(dists[i, j])))
    return out


def _apply_bit_noise(
    codeword: Codeword, params: ChannelParams, rng: np.random.Generator
) -> Codeword:
    if params.bit_error_rate == 0.0:
        return codeword
    flips = rng.random(CODEWORD_BITS) < params.bit_error_rate
    word = codeword.word
    for i in np.flatnonzero(flips):
        word ^= 1 << (CODEWORD_BITS - 1 - int(i))
    return Codeword(word)


def propagate(
    transmissions: list[Transmission],
    receivers: list[tuple[int, Pose]],
    obstacles: list[ObstacleSegment],
    params: ChannelParams,
    rng: np.random.Generator,
) -> dict[int, list[Reception]]:
    """Deliver one tick's transmissions to every receiver.

    A single arrival is heard Clean with per-bit noise applied; multiple
    arrivals collapse into one Corrupted reception (OR of the words, summed
    intensity, bearing of the strongest).  A receiver that itself transmitted
    this tick additionally hears its echo, if its forward ray produced one.
    Echoes are delivered unnoised.  Receivers are processed in id order so
    noise draws are reproducible.
    """
    reach = arrivals(transmissions, receivers, obstacles, params)
    by_emitter = {t.emitter: t for t in transmissions}

    out: dict[int, list[Reception]] = {}
    for rid, rpose in sorted(receivers, key=lambda r: r[0]):
        receptions: list[Reception] = []
        arriving = reach[rid]
        if len(arriving) == 1:
            tx, d = arriving[0]
            receptions.append(
                Clean(
                    codeword=_apply_bit_noise(tx.codeword, params, rng),
                    intensity=intensity_at(d, params),
                    bearing=bearing_deg(rpose.x, rpose.y, tx.pose.x, tx.pose.y),
                )
            )
        elif arriving:
            word = 0
            total = 0.0
            strongest = -1.0
            strongest_tx = arriving[0][0]
            for tx, d in arriving:
                word |= tx.codeword.word
                power = intensity_at(d, params)
                total += power
                if power > strongest:
                    strongest = power
                    strongest_tx = tx
            receptions.append(
                Corrupted(
                    codeword=Codeword(word),
                    intensity=total,
                    bearing=bearing_deg(
                        rpose.x, rpose.y, strongest_tx.pose.x, strongest_tx.pose.y
                    ),
                )
            )
        own = by_emitter.get(rid)
        if own is not None:
            echo = echo_probe(own.pose, own.codeword, obstacles, params)
            if echo is not None:
                receptions.append(echo)
        out[rid] = receptions
    return out
