"""Point-queue model of a four-arm, single-lane signalized intersection.

Time advances in 1 s steps. A vehicle enters its arm at position 0, drives at
free-flow speed until it reaches the back of the arm's queue, then occupies a
queue slot until the arm's green discharges it at the saturation headway.

Positions are measured from the arm entry to the vehicle front, so queue slot
``i`` sits at ``road_length - i * vehicle_space`` and slot 0 touches the stop
line.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class Arm(enum.IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3

    @property
    def letter(self) -> str:
        return self.name

    @classmethod
    def parse(cls, value) -> "Arm":
        if isinstance(value, Arm):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown arm {value!r}") from None
        return cls(int(value))


ARMS: tuple[Arm, ...] = (Arm.N, Arm.E, Arm.S, Arm.W)


class MovementKind(enum.Enum):
    STRAIGHT = "straight"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True, order=True)
class Movement:
    source: Arm
    destination: Arm

    def __post_init__(self):
        if self.source == self.destination:
            raise ValueError("a movement cannot return to its source arm")

    @property
    def kind(self) -> MovementKind:
        # Arms are indexed clockwise; a car arriving from N heads south, so E is on its left.
        offset = (self.destination - self.source) % 4
        if offset == 2:
            return MovementKind.STRAIGHT
        return MovementKind.LEFT if offset == 1 else MovementKind.RIGHT

    def __str__(self) -> str:
        return f"{self.source.letter}->{self.destination.letter}"


# Row order of the scenario probability table.
MOVEMENTS: tuple[Movement, ...] = (
    Movement(Arm.N, Arm.S),
    Movement(Arm.S, Arm.N),
    Movement(Arm.E, Arm.W),
    Movement(Arm.W, Arm.E),
    Movement(Arm.N, Arm.E),
    Movement(Arm.N, Arm.W),
    Movement(Arm.S, Arm.W),
    Movement(Arm.S, Arm.E),
    Movement(Arm.E, Arm.N),
    Movement(Arm.E, Arm.S),
    Movement(Arm.W, Arm.S),
    Movement(Arm.W, Arm.N),
)


class PhaseKind(enum.Enum):
    GREEN = "G"
    YELLOW = "Y"


@dataclass(frozen=True)
class PhaseDirective:
    """A controller decision: signal ``kind`` on ``arm`` for ``duration`` steps."""

    kind: PhaseKind
    arm: Arm
    duration: int

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError(f"directive duration must be >= 1, got {self.duration}")

    @classmethod
    def green(cls, arm, duration: int) -> "PhaseDirective":
        return cls(PhaseKind.GREEN, Arm.parse(arm), int(duration))

    @classmethod
    def yellow(cls, arm, duration: int = 3) -> "PhaseDirective":
        return cls(PhaseKind.YELLOW, Arm.parse(arm), int(duration))

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.arm.letter}:{self.duration}"


@dataclass(frozen=True)
class Phase:
    kind: PhaseKind
    arm: Arm
    remaining: int

    @property
    def label(self) -> str:
        return f"{self.kind.value}{self.arm.letter}"


@dataclass(frozen=True)
class SimConfig:
    road_length: float = 242.8
    free_speed: float = 13.89
    vehicle_space: float = 7.5
    saturation_headway: float = 2.0
    yellow_duration: int = 3
    step_duration: float = 1.0
    episode_length: int = 5400

    def __post_init__(self):
        for name in ("road_length", "free_speed", "vehicle_space",
                     "saturation_headway", "yellow_duration", "step_duration",
                     "episode_length"):
            if getattr(self, name) <= 0:
                raise ValueError(f"SimConfig.{name} must be positive")

    @property
    def capacity(self) -> int:
        return math.floor(self.road_length / self.vehicle_space)

    def slot_position(self, slot: int) -> float:
        return self.road_length - slot * self.vehicle_space


# Distance-from-stop-line cell edges, finer near the light. Last cell is closed.
CELL_EDGES: tuple[float, ...] = (0.0, 7.0, 14.0, 21.0, 28.0, 42.0, 63.0, 105.0, 168.0, 242.8)
CELLS_PER_ARM = len(CELL_EDGES) - 1
STATE_SIZE = CELLS_PER_ARM * len(ARMS)
_INNER_EDGES = np.array(CELL_EDGES[1:-1])


def cell_index(distance: float) -> int:
    """Cell (0 at the stop line) containing a vehicle front ``distance`` metres upstream."""
    for i in range(CELLS_PER_ARM - 1):
        if distance < CELL_EDGES[i + 1]:
            return i
    return CELLS_PER_ARM - 1


def encode_distances(distances_by_arm: Sequence[Iterable[float]]) -> np.ndarray:
    """36-element 0/1 occupancy vector laid out as [N cells, E cells, S cells, W cells]."""
    out = np.zeros(STATE_SIZE, dtype=np.float64)
    for a, distances in enumerate(distances_by_arm):
        d = np.fromiter(distances, dtype=np.float64)
        if d.size:
            out[a * CELLS_PER_ARM + np.searchsorted(_INNER_EDGES, d, side="right")] = 1.0
    return out


@dataclass(frozen=True)
class Vehicle:
    """Read-only snapshot of a vehicle on the network."""

    id: int
    movement: Movement
    spawn_step: int
    position: float
    queued: bool
    wait_steps: int


@dataclass
class StepEvents:
    step: int
    spawned: list[int] = field(default_factory=list)
    departed: list[int] = field(default_factory=list)
    phase: Optional[Phase] = None


class SimulationError(RuntimeError):
    """Raised when the simulation is driven outside its contract."""


class _Car:
    __slots__ = ("id", "movement", "spawn_step", "entered_step", "queued_at")

    def __init__(self, vid: int, movement: Movement, spawn_step: int):
        self.id = vid
        self.movement = movement
        self.spawn_step = spawn_step
        self.entered_step = -1
        self.queued_at = -1


class Simulation:
    """Mutable intersection state. Create with :func:`new_simulation`."""

    def __init__(self, config: SimConfig, routes: Sequence[tuple[int, Movement]]):
        self.config = config
        prev = -1
        plan: list[_Car] = []
        for i, (spawn_step, movement) in enumerate(routes):
            spawn_step = int(spawn_step)
            if spawn_step < prev:
                raise SimulationError(f"route {i} spawns at {spawn_step}, before route {i - 1} at {prev}")
            if not 0 <= spawn_step < config.episode_length:
                raise SimulationError(
                    f"route {i} spawn_step {spawn_step} outside [0, {config.episode_length})")
            plan.append(_Car(i, movement, spawn_step))
            prev = spawn_step
        self._plan = plan
        self._next = 0
        self.step_count = 0
        self.phase = Phase(PhaseKind.GREEN, Arm.N, 0)
        self._phase_active = False
        self._held: list[deque[_Car]] = [deque() for _ in ARMS]
        self._queued: list[deque[_Car]] = [deque() for _ in ARMS]
        self._moving: list[deque[_Car]] = [deque() for _ in ARMS]
        self.spawned = 0
        self.departed = 0
        self.discharge_credit = 0.0
        self.cumulative_wait = 0
        self.departed_wait = 0
        self._n_queued = 0

    # -- observation -------------------------------------------------------

    @property
    def step(self) -> int:
        return self.step_count

    @property
    def pending_spawns(self) -> int:
        """Routes not yet on the network, including spawns held at a full arm."""
        return len(self._plan) - self._next + sum(len(h) for h in self._held)

    def queue_length(self, arm) -> int:
        return len(self._queued[Arm.parse(arm)])

    def queue_lengths(self) -> tuple[int, int, int, int]:
        q = self._queued
        return (len(q[0]), len(q[1]), len(q[2]), len(q[3]))

    def total_queue(self) -> int:
        return self._n_queued

    def queue_length_meters(self, arm) -> float:
        return self.queue_length(arm) * self.config.vehicle_space

    def vehicles_on_arm(self, arm) -> int:
        a = Arm.parse(arm)
        return len(self._queued[a]) + len(self._moving[a])

    def on_network(self) -> int:
        return self._n_queued + sum(len(m) for m in self._moving)

    @property
    def network_wait(self) -> int:
        """Queued steps accumulated by the vehicles still on the network."""
        return self.cumulative_wait - self.departed_wait

    def average_speed(self) -> float:
        """Mean speed over the last step of all vehicles present, floored at 0.1 m/s."""
        moving = sum(len(m) for m in self._moving)
        total = moving + self._n_queued
        if total == 0:
            return self.config.free_speed
        return max(moving * self.config.free_speed / total, 0.1)

    def _position(self, car: _Car) -> float:
        return min(self.config.free_speed * (self.step_count - car.entered_step),
                   self.config.road_length)

    def vehicles(self, arm) -> list[Vehicle]:
        """Vehicles on ``arm`` ordered from the stop line backwards."""
        a = Arm.parse(arm)
        cfg = self.config
        out = [Vehicle(c.id, c.movement, c.spawn_step, cfg.slot_position(i), True,
                       self.step_count - c.queued_at)
               for i, c in enumerate(self._queued[a])]
        out.extend(Vehicle(c.id, c.movement, c.spawn_step, self._position(c), False, 0)
                   for c in self._moving[a])
        return out

    def stop_line_distances(self, arm) -> list[float]:
        """Distance of each vehicle front on ``arm`` from the stop line."""
        a = Arm.parse(arm)
        cfg = self.config
        out = [i * cfg.vehicle_space for i in range(len(self._queued[a]))]
        out.extend(cfg.road_length - self._position(c) for c in self._moving[a])
        return out

    def encode_cell_state(self) -> np.ndarray:
        return encode_distances([self.stop_line_distances(a) for a in ARMS])

    # -- dynamics ----------------------------------------------------------

    def advance(self, directive: Optional[PhaseDirective] = None) -> StepEvents:
        """Advance one timestep, consuming ``directive`` when the phase has expired."""
        cfg = self.config
        t = self.step_count
        if t >= cfg.episode_length:
            raise SimulationError(f"episode already finished at step {t}")
        self._apply_directive(directive)
        events = StepEvents(step=t)

        while self._next < len(self._plan) and self._plan[self._next].spawn_step == t:
            car = self._plan[self._next]
            self._held[car.movement.source].append(car)
            self._next += 1
        cap = cfg.capacity
        for a in ARMS:
            held = self._held[a]
            moving = self._moving[a]
            while held and len(self._queued[a]) + len(moving) < cap:
                car = held.popleft()
                car.entered_step = t
                moving.append(car)
                events.spawned.append(car.id)
                self.spawned += 1

        # Moving cars all travel at free speed, so only the lead car can reach the queue tail.
        reach = t + 1
        for a in ARMS:
            moving = self._moving[a]
            queued = self._queued[a]
            while moving:
                car = moving[0]
                if cfg.free_speed * (reach - car.entered_step) < cfg.slot_position(len(queued)):
                    break
                moving.popleft()
                car.queued_at = t
                queued.append(car)
                self._n_queued += 1

        if self.phase.kind is PhaseKind.GREEN:
            self.discharge_credit += cfg.step_duration / cfg.saturation_headway
            queued = self._queued[self.phase.arm]
            while self.discharge_credit >= 1.0:
                self.discharge_credit -= 1.0
                if queued:
                    car = queued.popleft()
                    self._n_queued -= 1
                    self.departed += 1
                    self.departed_wait += t - car.queued_at
                    events.departed.append(car.id)

        self.cumulative_wait += self._n_queued
        self.phase = Phase(self.phase.kind, self.phase.arm, self.phase.remaining - 1)
        self.step_count = t + 1
        events.phase = self.phase
        return events

    def _apply_directive(self, directive: Optional[PhaseDirective]) -> None:
        if self.phase.remaining > 0:
            if directive is not None:
                raise SimulationError(
                    f"directive {directive} supplied mid-phase ({self.phase.remaining} steps left)")
            return
        if directive is None:
            raise SimulationError(f"phase expired at step {self.step_count}; a directive is required")
        old = self.phase
        if (self._phase_active and old.kind is PhaseKind.GREEN
                and directive.kind is PhaseKind.GREEN and directive.arm != old.arm):
            raise SimulationError(
                f"green on {old.arm.letter} cannot switch to green on {directive.arm.letter} without yellow")
        if not self._phase_active or old.kind is not directive.kind or old.arm != directive.arm:
            self.discharge_credit = 0.0
        self.phase = Phase(directive.kind, directive.arm, directive.duration)
        self._phase_active = True

    @property
    def done(self) -> bool:
        return self.step_count >= self.config.episode_length


def new_simulation(config: Optional[SimConfig] = None,
                   routes: Iterable[tuple[int, Movement]] = ()) -> Simulation:
    return Simulation(config or SimConfig(), list(routes))


def step(sim: Simulation, directive: Optional[PhaseDirective] = None) -> StepEvents:
    return sim.advance(directive)

