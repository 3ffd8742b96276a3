"""Per-robot controller.

Each robot runs the same loop every tick: classify whatever arrived on the
infrared receiver, learn neighbors from beacons, fold received headings into
its own via a circular mean, dodge obstacles its echo reports as close, and
(on its transmit slot) emit the next frame of its beacon/heading schedule.

The controller never reads another robot's state; everything it knows
arrives through receptions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

from .channel import ChannelParams, Clean, Corrupted, Echo, Pose, Reception, estimate_distance
from .codec import (
    BROADCAST,
    Beacon,
    Codeword,
    DecodeFailure,
    Frame,
    Heading,
    decode_frame,
    dequantize_heading,
    encode_frame,
    quantize_heading,
)


@dataclass(frozen=True)
class Obstacle:
    """Own signal came back: something reflecting is ahead at roughly this range."""

    estimated_distance: float


@dataclass(frozen=True)
class Familiar:
    """A readable frame from a robot whose id is in the database."""

    peer: int


@dataclass(frozen=True)
class Unknown:
    """A signal that is neither an echo nor attributable to a known peer."""


@dataclass(frozen=True)
class NoDetection:
    """Nothing arrived this tick: no obstacle ahead, nobody in view."""


Classification = Union[Obstacle, Familiar, Unknown, NoDetection]


@dataclass(frozen=True)
class HeadingUpdated:
    old: float
    new: float


@dataclass(frozen=True)
class AvoidanceTurn:
    old: float
    new: float


Event = Union[Classification, HeadingUpdated, AvoidanceTurn]


@dataclass(frozen=True)
class NeighborEntry:
    """Last sighting of a known peer: where its beacon came from, and when."""

    peer: int
    bearing: float
    last_seen: int


@dataclass(frozen=True)
class AgentState:
    """One robot's private state.

    database is the set of ids this robot accepts as homologous (it always
    contains the robot's own id).  transmit_count numbers the robot's
    transmit occasions so the beacon/heading alternation survives across
    ticks; heading_send_cursor walks the neighbor table round-robin.
    """

    agent_id: int
    database: frozenset[int]
    pose: Pose
    neighbors: dict[int, NeighborEntry]
    slot_index: int
    d_avoid: float
    last_emitted: Codeword | None = None
    heading_send_cursor: int = 0
    transmit_count: int = 0

    def __post_init__(self) -> None:
        if self.agent_id not in self.database:
            raise ValueError(f"agent {self.agent_id} missing from own database")
        stray = set(self.neighbors) - set(self.database)
        if stray:
            raise ValueError(f"neighbors outside database: {sorted(stray)}")


@dataclass(frozen=True)
class AgentOutput:
    state: AgentState
    intent: Frame | None
    events: tuple[Event, ...]


def circular_mean(angles: list[float]) -> float | None:
    """Mean direction of the angles in degrees, or None when degenerate.

    Degenerate means the resultant vector is shorter than 1e-9, i.e. the
    angles cancel out and no mean direction exists.
    """
    if not angles:
        raise ValueError("circular_mean of an empty list")
    s = 0.0
    c = 0.0
    for a in angles:
        r = math.radians(a)
        s += math.sin(r)
        c += math.cos(r)
    n = len(angles)
    s /= n
    c /= n
    if math.sqrt(s * s + c * c) < 1e-9:
        return None
    return math.degrees(math.atan2(s, c)) % 360.0


def angular_distance(a: float, b: float) -> float:
    """Unsigned separation of two angles in degrees, in [0, 180]."""
    return abs((a - b + 180.0) % 360.0 - 180.0)


def classify(
    agent: AgentState,
    reception: Reception,
    decoded: Frame | DecodeFailure | None,
    params: ChannelParams,
) -> Classification:
    """Sort one reception into the obstacle / familiar / unknown decision.

    An echo of the robot's own word means an obstacle ahead, at the distance
    recovered from the echo intensity (assuming the channel's default
    reflectivity).  A readable frame is familiar exactly when its sender is
    in the database; everything else, unreadable superpositions included,
    is an unknown source.
    """
    if isinstance(reception, Echo):
        if agent.last_emitted is None or reception.codeword != agent.last_emitted:
            raise ValueError("echo does not match this agent's last emission")
        return Obstacle(
            estimated_distance=estimate_distance(
                reception.intensity, params.reflectivity_default, params
            )
        )
    if isinstance(decoded, (Beacon, Heading)):
        if decoded.sender in agent.database:
            return Familiar(peer=decoded.sender)
        return Unknown()
    return Unknown()


def may_transmit(agent: AgentState, tick: int, n_slots: int) -> bool:
    """True when the tick lands on this agent's transmit slot."""
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    if not 0 <= agent.slot_index < n_slots:
        raise ValueError(f"slot_index {agent.slot_index} not in 0..{n_slots - 1}")
    return tick % n_slots == agent.slot_index


def next_frame(agent: AgentState) -> Frame:
    """The frame for this transmit occasion.

    With no neighbors known there is only the beacon.  Otherwise even
    occasions beacon and odd occasions report the current heading to the
    next neighbor in id order (round-robin via heading_send_cursor).
    """
    if not agent.neighbors or agent.transmit_count % 2 == 0:
        return Beacon(sender=agent.agent_id)
    peers = sorted(agent.neighbors)
    target = peers[agent.heading_send_cursor % len(peers)]
    return Heading(
        sender=agent.agent_id,
        target=target,
        heading_q=quantize_heading(agent.pose.heading),
    )


def step_agent(
    agent: AgentState,
    inbox: list[Reception],
    tick: int,
    n_slots: int,
    params: ChannelParams,
) -> AgentOutput:
    """Run one robot for one tick against its inbox.

    Order of business: classify everything (an empty inbox classifies as
    NoDetection), learn neighbors from clean beacons, average received
    headings into the own one, turn 90 degrees away if an echo put an
    obstacle inside the avoidance distance, then transmit if the slot
    counter says so.  Pure: the caller's state is never mutated.
    """
    events: list[Event] = []
    decoded: list[Frame | DecodeFailure | None] = []
    for reception in inbox:
        if isinstance(reception, (Clean, Corrupted)):
            decoded.append(decode_frame(reception.codeword))
        else:
            decoded.append(None)

    obstacle_near = False
    if inbox:
        for reception, dec in zip(inbox, decoded):
            c = classify(agent, reception, dec, params)
            events.append(c)
            if isinstance(c, Obstacle) and c.estimated_distance < agent.d_avoid:
                obstacle_near = True
    else:
        events.append(NoDetection())

    neighbors = agent.neighbors
    for reception, dec in zip(inbox, decoded):
        if (
            isinstance(reception, Clean)
            and isinstance(dec, Beacon)
            and dec.sender in agent.database
        ):
            if neighbors is agent.neighbors:
                neighbors = dict(agent.neighbors)
            neighbors[dec.sender] = NeighborEntry(
                peer=dec.sender, bearing=reception.bearing, last_seen=tick
            )

    heading = agent.pose.heading
    received_headings = [
        dequantize_heading(dec.heading_q)
        for reception, dec in zip(inbox, decoded)
        if isinstance(reception, Clean)
        and isinstance(dec, Heading)
        and dec.sender in agent.database
        and dec.target in (agent.agent_id, BROADCAST)
    ]
    if received_headings:
        mean = circular_mean([heading] + received_headings)
        if mean is not None:
            events.append(HeadingUpdated(old=heading, new=mean))
            heading = mean

    if obstacle_near:
        turned = (heading + 90.0) % 360.0
        events.append(AvoidanceTurn(old=heading, new=turned))
        heading = turned

    pose = agent.pose
    if heading != pose.heading:
        pose = Pose(pose.x, pose.y, heading)

    intent: Frame | None = None
    last_emitted = agent.last_emitted
    cursor = agent.heading_send_cursor
    count = agent.transmit_count
    if may_transmit(agent, tick, n_slots):
        staged = replace(agent, pose=pose, neighbors=neighbors)
        intent = next_frame(staged)
        last_emitted = encode_frame(intent)
        if isinstance(intent, Heading):
            cursor += 1
        count += 1

    state = replace(
        agent,
        pose=pose,
        neighbors=neighbors,
        last_emitted=last_emitted,
        heading_send_cursor=cursor,
        transmit_count=count,
    )
    return AgentOutput(state=state, intent=intent, events=tuple(events))
