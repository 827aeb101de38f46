"""Fixed-time round robin: every arm gets the same green quantum, then yellow."""

from __future__ import annotations

from dataclasses import dataclass

from ..sim import ARMS, Arm, PhaseDirective


@dataclass(frozen=True)
class RrConfig:
    green_quantum: int = 30
    yellow_quantum: int = 3
    arm_order: tuple[Arm, ...] = ARMS

    def __post_init__(self):
        if self.green_quantum < 1 or self.yellow_quantum < 1:
            raise ValueError("round-robin quanta must be >= 1")
        if not self.arm_order:
            raise ValueError("arm_order must not be empty")

    @property
    def cycle_length(self) -> int:
        return len(self.arm_order) * (self.green_quantum + self.yellow_quantum)


class RoundRobin:
    name = "rr"

    def __init__(self, config: RrConfig | None = None):
        self.config = config or RrConfig()
        self.reset()

    def reset(self) -> None:
        self._turn = 0
        self._yellow_next = False

    def next_directive(self, sim=None) -> PhaseDirective:
        # Traffic-independent: the simulation argument is accepted but ignored.
        return rr_next(self)


def rr_next(state: RoundRobin) -> PhaseDirective:
    cfg = state.config
    arm = cfg.arm_order[state._turn]
    if state._yellow_next:
        state._yellow_next = False
        state._turn = (state._turn + 1) % len(cfg.arm_order)
        return PhaseDirective.yellow(arm, cfg.yellow_quantum)
    state._yellow_next = True
    return PhaseDirective.green(arm, cfg.green_quantum)
