"""Feedback control: round-robin turns with a green length fitted to the queue.

For the arm whose turn it is, the green duration ``a`` is the member of the
action set minimising ``|s - v * a|``, where ``s`` is that arm's queue length in
metres and ``v`` the mean junction speed over the last step.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..sim import ARMS, Arm, PhaseDirective


@dataclass(frozen=True)
class MonopolyConfig:
    action_set: tuple[int, ...] = tuple(range(5, 61, 5))
    arm_order: tuple[Arm, ...] = ARMS
    yellow_duration: int = 3

    def __post_init__(self):
        acts = self.action_set
        if not acts or any(b <= a for a, b in zip(acts, acts[1:])) or acts[0] < 1:
            raise ValueError("action_set must be non-empty, positive and strictly increasing")

    @classmethod
    def from_range(cls, min_time: int = 5, max_time: int = 60, step: int = 5, **kw) -> "MonopolyConfig":
        return cls(action_set=tuple(range(min_time, max_time + 1, step)), **kw)

    @property
    def min_time(self) -> int:
        return self.action_set[0]

    @property
    def max_time(self) -> int:
        return self.action_set[-1]


@dataclass(frozen=True)
class MonopolyObservation:
    queue_meters: float
    speed: float

    def __post_init__(self):
        if self.queue_meters < 0:
            raise ValueError("queue length must be >= 0")
        if self.speed < 0.1:
            raise ValueError("speed must be >= 0.1 m/s")


def monopoly_best_action(obs: MonopolyObservation, config: MonopolyConfig | None = None) -> int:
    """Green duration that best matches the queue; ties go to the longer duration."""
    config = config or MonopolyConfig()
    best, best_err = None, None
    for a in config.action_set:
        err = abs(obs.queue_meters - obs.speed * a)
        if best_err is None or err <= best_err:
            best, best_err = a, err
    return best


class Monopoly:
    name = "monopoly"

    def __init__(self, config: MonopolyConfig | None = None):
        self.config = config or MonopolyConfig()
        self.reset()

    def reset(self) -> None:
        self._turn = 0
        self._yellow_next = False

    def observe(self, sim) -> MonopolyObservation:
        arm = self.config.arm_order[self._turn]
        return MonopolyObservation(sim.queue_length_meters(arm), sim.average_speed())

    def next_directive(self, sim) -> PhaseDirective:
        return monopoly_next(self, sim)


def monopoly_next(state: Monopoly, sim) -> PhaseDirective:
    cfg = state.config
    arm = cfg.arm_order[state._turn]
    if state._yellow_next:
        state._yellow_next = False
        state._turn = (state._turn + 1) % len(cfg.arm_order)
        return PhaseDirective.yellow(arm, cfg.yellow_duration)
    state._yellow_next = True
    return PhaseDirective.green(arm, monopoly_best_action(state.observe(sim), cfg))
