"""Deterministic world stepper and run harness.

One tick is one complete emit/listen cycle.  The stepper is two-phase:
agents first all consume the inboxes produced from the PREVIOUS tick's
transmissions (so nobody observes a same-tick update), then the collected
transmit intents become this tick's transmissions, then (optionally) agents
advance along their headings, reflecting off the arena walls.

Runs are reproducible byte for byte: all iteration is in robot-id order and
the only randomness flows through one seeded generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .agent import (
    AgentState,
    AvoidanceTurn,
    Classification,
    Familiar,
    HeadingUpdated,
    NoDetection,
    Obstacle,
    Unknown,
    angular_distance,
    circular_mean,
    step_agent,
)
from .channel import (
    ChannelParams,
    Clean,
    Corrupted,
    Echo,
    ObstacleSegment,
    Pose,
    Reception,
    Transmission,
    arrivals,
    echo_probe,
    propagate,
)
from .codec import Beacon, DecodeFailure, Heading, decode_frame

VARIANT_OBSTACLE = "obstacle"
VARIANT_FAMILIAR = "familiar"
VARIANT_UNKNOWN = "unknown"
VARIANT_NO_DETECTION = "no_detection"


@dataclass(frozen=True)
class AgentPlacement:
    """Initial id, pose, and known-id database for one robot.

    database None means "knows every robot in the scenario"; anything else
    is taken verbatim (it must at least contain the robot's own id).
    """

    agent_id: int
    pose: Pose
    database: Optional[frozenset[int]] = None


@dataclass
class Scenario:
    """Complete description of one simulated world."""

    width: float = 10.0
    height: float = 10.0
    obstacles: list[ObstacleSegment] = field(default_factory=list)
    channel: ChannelParams = field(default_factory=ChannelParams)
    count: int = 10
    layout: str = "grid"
    placements: Optional[list[AgentPlacement]] = None
    motion: bool = False
    speed: float = 0.05
    d_avoid: float = 0.5
    n_slots: int = 10
    alignment_epsilon: float = 3.0
    steps: int = 1000

    def agent_ids(self) -> list[int]:
        if self.layout == "explicit":
            return sorted(p.agent_id for p in self.placements or [])
        return list(range(self.count))

    def validate(self) -> list[str]:
        """All invariant violations, empty when the scenario is runnable."""
        problems: list[str] = []
        if self.width <= 0.0 or self.height <= 0.0:
            problems.append(f"arena {self.width}x{self.height} is not positive")
        if self.layout not in ("grid", "random", "explicit"):
            problems.append(f"unknown layout {self.layout!r}")
        if self.layout == "explicit":
            if not self.placements:
                problems.append("explicit layout without agent placements")
            else:
                seen: set[int] = set()
                for p in self.placements:
                    if not 0 <= p.agent_id <= 254:
                        problems.append(f"agent id {p.agent_id} outside 0..254")
                    if p.agent_id in seen:
                        problems.append(f"duplicate agent id {p.agent_id}")
                    seen.add(p.agent_id)
                    if not (0.0 <= p.pose.x <= self.width and 0.0 <= p.pose.y <= self.height):
                        problems.append(
                            f"agent {p.agent_id} at ({p.pose.x}, {p.pose.y}) "
                            "is outside the arena"
                        )
                    if p.database is not None and p.agent_id not in p.database:
                        problems.append(
                            f"agent {p.agent_id} database does not contain itself"
                        )
                if len(self.placements) != self.count:
                    problems.append(
                        f"count {self.count} does not match "
                        f"{len(self.placements)} placements"
                    )
        elif self.count < 1:
            problems.append(f"count {self.count} must be >= 1")
        if self.n_slots < 1:
            problems.append(f"n_slots {self.n_slots} must be >= 1")
        if self.speed < 0.0:
            problems.append(f"speed {self.speed} must be >= 0")
        if self.d_avoid < 0.0:
            problems.append(f"d_avoid {self.d_avoid} must be >= 0")
        if self.steps < 0:
            problems.append(f"steps {self.steps} must be >= 0")
        if self.alignment_epsilon <= 0.0:
            problems.append(f"alignment_epsilon {self.alignment_epsilon} must be > 0")
        return problems


class ScenarioError(ValueError):
    """Raised by run() for a scenario that fails validation."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class WorldState:
    tick: int
    agents: dict[int, AgentState]
    transmissions: list[Transmission]


TRACE_COLUMNS = (
    "tick",
    "agent_id",
    "event",
    "frame_type",
    "sender",
    "target",
    "classification",
    "value_a",
    "value_b",
)


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    agent_id: int
    event: str
    frame_type: Optional[str] = None
    sender: Optional[int] = None
    target: Optional[int] = None
    classification: Optional[str] = None
    value_a: Optional[float] = None
    value_b: Optional[float] = None

    def row(self) -> list[str]:
        def fmt(v) -> str:
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [
            str(self.tick),
            str(self.agent_id),
            self.event,
            fmt(self.frame_type),
            fmt(self.sender),
            fmt(self.target),
            fmt(self.classification),
            fmt(self.value_a),
            fmt(self.value_b),
        ]


@dataclass(frozen=True)
class Metrics:
    total_receptions: int
    decode_failures: int
    message_loss_rate: float
    collisions: int
    time_to_alignment: Optional[int]
    final_spread: float
    confusion: dict[tuple[str, str], int]

    @property
    def misclassifications(self) -> int:
        return sum(n for (truth, seen), n in self.confusion.items() if truth != seen)


def heading_spread(headings: list[float]) -> float:
    """Largest angular distance from any heading to the group's mean heading.

    A degenerate mean (angles cancelling out) counts as maximal disagreement,
    180 degrees.
    """
    if not headings:
        raise ValueError("heading_spread of an empty list")
    mean = circular_mean(headings)
    if mean is None:
        return 180.0
    return max(angular_distance(h, mean) for h in headings)


def _classification_variant(c: Classification) -> str:
    if isinstance(c, Obstacle):
        return VARIANT_OBSTACLE
    if isinstance(c, Familiar):
        return VARIANT_FAMILIAR
    if isinstance(c, Unknown):
        return VARIANT_UNKNOWN
    return VARIANT_NO_DETECTION


@dataclass
class _RunStats:
    total_receptions: int = 0
    decode_failures: int = 0
    collisions: int = 0
    confusion: dict[tuple[str, str], int] = field(default_factory=dict)

    def count(self, truth: str, seen: str) -> None:
        key = (truth, seen)
        self.confusion[key] = self.confusion.get(key, 0) + 1


def _grid_placements(scenario: Scenario) -> list[AgentPlacement]:
    cols = math.ceil(math.sqrt(scenario.count))
    rows = math.ceil(scenario.count / cols)
    placements = []
    for i in range(scenario.count):
        col = i % cols
        row = i // cols
        placements.append(
            AgentPlacement(
                agent_id=i,
                pose=Pose(
                    (col + 0.5) * scenario.width / cols,
                    (row + 0.5) * scenario.height / rows,
                    0.0,
                ),
            )
        )
    return placements


def _random_placements(scenario: Scenario, rng: np.random.Generator) -> list[AgentPlacement]:
    placements = []
    for i in range(scenario.count):
        x = rng.uniform(0.0, scenario.width)
        y = rng.uniform(0.0, scenario.height)
        heading = rng.uniform(0.0, 360.0)
        placements.append(AgentPlacement(agent_id=i, pose=Pose(x, y, heading)))
    return placements


def initial_world(scenario: Scenario, rng: np.random.Generator) -> WorldState:
    """Materialize tick-0 agent states (random layouts draw from rng here)."""
    if scenario.layout == "explicit":
        placements = list(scenario.placements or [])
    elif scenario.layout == "grid":
        placements = _grid_placements(scenario)
    else:
        placements = _random_placements(scenario, rng)

    all_ids = frozenset(p.agent_id for p in placements)
    agents: dict[int, AgentState] = {}
    for rank, p in enumerate(sorted(placements, key=lambda p: p.agent_id)):
        agents[p.agent_id] = AgentState(
            agent_id=p.agent_id,
            database=p.database if p.database is not None else all_ids,
            pose=p.pose,
            neighbors={},
            slot_index=rank % scenario.n_slots,
            d_avoid=scenario.d_avoid,
        )
    return WorldState(tick=0, agents=agents, transmissions=[])


def _reflect_move(pose: Pose, speed: float, width: float, height: float) -> Pose:
    """Advance one step along the heading, bouncing off the arena walls."""
    r = math.radians(pose.heading)
    x = pose.x + speed * math.cos(r)
    y = pose.y + speed * math.sin(r)
    heading = pose.heading
    if x < 0.0:
        x = -x
        heading = (180.0 - heading) % 360.0
    elif x > width:
        x = 2.0 * width - x
        heading = (180.0 - heading) % 360.0
    if y < 0.0:
        y = -y
        heading = -heading % 360.0
    elif y > height:
        y = 2.0 * height - y
        heading = -heading % 360.0
    return Pose(min(max(x, 0.0), width), min(max(y, 0.0), height), heading)


def _truth_labels(
    agent: AgentState,
    inbox: list[Reception],
    arriving: list[tuple[Transmission, float]],
) -> list[str]:
    """Ground-truth variant per reception, from full channel knowledge.

    Mirrors the reception assembly order: at most one message reception
    (familiar/unknown by the ACTUAL emitters, unknown for any superposition),
    then the echo (always a real obstacle), else a single no-detection.
    """
    truths: list[str] = []
    if len(arriving) == 1:
        truths.append(
            VARIANT_FAMILIAR
            if arriving[0][0].emitter in agent.database
            else VARIANT_UNKNOWN
        )
    elif arriving:
        truths.append(VARIANT_UNKNOWN)
    if any(isinstance(r, Echo) for r in inbox):
        truths.append(VARIANT_OBSTACLE)
    if not truths:
        truths.append(VARIANT_NO_DETECTION)
    return truths


def step_world(
    world: WorldState,
    scenario: Scenario,
    rng: np.random.Generator,
    stats: Optional[_RunStats] = None,
) -> tuple[WorldState, list[TraceEvent]]:
    """Advance the world one tick; optionally accumulate run statistics."""
    receivers = [(aid, st.pose) for aid, st in sorted(world.agents.items())]
    inboxes = propagate(
        world.transmissions, receivers, scenario.obstacles, scenario.channel, rng
    )
    truth_arrivals = (
        arrivals(world.transmissions, receivers, scenario.obstacles, scenario.channel)
        if stats is not None
        else None
    )

    tick = world.tick
    events: list[TraceEvent] = []
    new_states: dict[int, AgentState] = {}
    transmissions: list[Transmission] = []

    for aid, state in sorted(world.agents.items()):
        inbox = inboxes[aid]
        out = step_agent(state, inbox, tick, scenario.n_slots, scenario.channel)

        classifications = [e for e in out.events if isinstance(e, (Obstacle, Familiar, Unknown, NoDetection))]
        for reception, classification in zip(
            inbox, classifications if inbox else []
        ):
            events.append(_receive_event(tick, aid, reception))
            events.append(_classify_event(tick, aid, classification))
        if not inbox:
            events.append(_classify_event(tick, aid, classifications[0]))

        for e in out.events:
            if isinstance(e, HeadingUpdated):
                events.append(
                    TraceEvent(tick, aid, "heading_update", value_a=e.old, value_b=e.new)
                )
            elif isinstance(e, AvoidanceTurn):
                events.append(
                    TraceEvent(tick, aid, "avoidance", value_a=e.old, value_b=e.new)
                )

        if out.intent is not None:
            assert out.state.last_emitted is not None
            transmissions.append(
                Transmission(
                    emitter=aid,
                    pose=out.state.pose,
                    codeword=out.state.last_emitted,
                    tick=tick,
                )
            )
            events.append(_transmit_event(tick, aid, out.intent))

        new_state = out.state
        if scenario.motion:
            moved = _reflect_move(
                new_state.pose, scenario.speed, scenario.width, scenario.height
            )
            new_state = AgentState(
                agent_id=new_state.agent_id,
                database=new_state.database,
                pose=moved,
                neighbors=new_state.neighbors,
                slot_index=new_state.slot_index,
                d_avoid=new_state.d_avoid,
                last_emitted=new_state.last_emitted,
                heading_send_cursor=new_state.heading_send_cursor,
                transmit_count=new_state.transmit_count,
            )
            events.append(
                TraceEvent(tick, aid, "move", value_a=moved.x, value_b=moved.y)
            )
        new_states[aid] = new_state

        if stats is not None:
            assert truth_arrivals is not None
            for reception in inbox:
                if isinstance(reception, Corrupted):
                    stats.collisions += 1
                if isinstance(reception, (Clean, Corrupted)):
                    stats.total_receptions += 1
                    if isinstance(decode_frame(reception.codeword), DecodeFailure):
                        stats.decode_failures += 1
            truths = _truth_labels(state, inbox, truth_arrivals[aid])
            for truth, classification in zip(truths, classifications):
                stats.count(truth, _classification_variant(classification))

    return WorldState(tick + 1, new_states, transmissions), events


def _receive_event(tick: int, aid: int, reception: Reception) -> TraceEvent:
    if isinstance(reception, Echo):
        return TraceEvent(
            tick, aid, "receive", frame_type="echo", value_a=reception.intensity
        )
    kind = "clean" if isinstance(reception, Clean) else "corrupted"
    decoded = decode_frame(reception.codeword)
    sender = target = None
    if isinstance(decoded, Beacon):
        sender, target = decoded.sender, 255
    elif isinstance(decoded, Heading):
        sender, target = decoded.sender, decoded.target
    return TraceEvent(
        tick,
        aid,
        "receive",
        frame_type=kind,
        sender=sender,
        target=target,
        value_a=reception.intensity,
        value_b=reception.bearing,
    )


def _classify_event(tick: int, aid: int, c: Classification) -> TraceEvent:
    return TraceEvent(
        tick,
        aid,
        "classify",
        classification=_classification_variant(c),
        sender=c.peer if isinstance(c, Familiar) else None,
        value_a=c.estimated_distance if isinstance(c, Obstacle) else None,
    )


def _transmit_event(tick: int, aid: int, frame) -> TraceEvent:
    if isinstance(frame, Heading):
        return TraceEvent(
            tick,
            aid,
            "transmit",
            frame_type="heading",
            sender=frame.sender,
            target=frame.target,
            value_a=float(frame.heading_q),
        )
    return TraceEvent(
        tick, aid, "transmit", frame_type="beacon", sender=frame.sender, target=255
    )


def run(scenario: Scenario, seed: int) -> tuple[Metrics, list[TraceEvent]]:
    """Execute a scenario start to finish under one seed."""
    violations = scenario.validate()
    if violations:
        raise ScenarioError(violations)

    rng = np.random.default_rng(seed)
    world = initial_world(scenario, rng)
    stats = _RunStats()
    trace: list[TraceEvent] = []

    def spread(w: WorldState) -> float:
        return heading_spread([st.pose.heading for st in w.agents.values()])

    time_to_alignment: Optional[int] = None
    if spread(world) < scenario.alignment_epsilon:
        time_to_alignment = 0

    for _ in range(scenario.steps):
        world, events = step_world(world, scenario, rng, stats)
        trace.extend(events)
        if time_to_alignment is None and spread(world) < scenario.alignment_epsilon:
            time_to_alignment = world.tick

    metrics = Metrics(
        total_receptions=stats.total_receptions,
        decode_failures=stats.decode_failures,
        message_loss_rate=stats.decode_failures / max(stats.total_receptions, 1),
        collisions=stats.collisions,
        time_to_alignment=time_to_alignment,
        final_spread=spread(world),
        confusion=dict(stats.confusion),
    )
    return metrics, trace
