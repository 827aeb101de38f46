"""Route generation: Weibull-timed arrivals with scenario-dependent movements."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .sim import MOVEMENTS, Arm, Movement


class Scenario(enum.IntEnum):
    SCEN_1 = 1  # uniform
    SCEN_2 = 2  # north-south heavy
    SCEN_3 = 3  # east-west heavy

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, Scenario):
            return value
        text = str(value).strip().upper().replace("-", "_")
        if text.startswith("SCEN_"):
            text = text[5:]
        try:
            return cls(int(text))
        except ValueError:
            raise ValueError(f"unknown scenario {value!r}") from None


SCENARIOS: tuple[Scenario, ...] = tuple(Scenario)

# Per-movement probability, rows in MOVEMENTS order (N-S, S-N, E-W, W-E, then turns).
_TABLE: dict[Scenario, tuple[str, ...]] = {
    Scenario.SCEN_1: ("0.1875",) * 4 + ("0.03125",) * 8,
    Scenario.SCEN_2: ("0.3375", "0.3375", "0.0375", "0.0375")
    + ("0.05625",) * 4 + ("0.00625",) * 4,
    Scenario.SCEN_3: ("0.0375", "0.0375", "0.3375", "0.3375")
    + ("0.00625",) * 4 + ("0.05625",) * 4,
}


def scenario_fractions(scen) -> dict[Movement, Fraction]:
    """Exact per-movement probabilities for ``scen``."""
    scen = Scenario.parse(scen)
    return {m: Fraction(p) for m, p in zip(MOVEMENTS, _TABLE[scen])}


def scenario_probabilities(scen) -> np.ndarray:
    """Probabilities aligned with :data:`signalbench.sim.MOVEMENTS`."""
    scen = Scenario.parse(scen)
    return np.array([float(p) for p in _TABLE[scen]])


def weibull_inverse_cdf(shape: float, u: float) -> float:
    """Unit-scale Weibull quantile ``(-ln(1 - u)) ** (1 / shape)``."""
    if shape <= 0:
        raise ValueError(f"shape must be positive, got {shape}")
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    return (-math.log1p(-u)) ** (1.0 / shape)


@dataclass(frozen=True)
class GenConfig:
    n_vehicles: int = 1000
    episode_length: int = 5400
    weibull_shape: float = 2.0
    seed: int = 0

    def __post_init__(self):
        # Zero vehicles is allowed so empty-traffic episodes can be configured.
        if self.n_vehicles < 0:
            raise ValueError("n_vehicles must be >= 0")
        if self.weibull_shape <= 0:
            raise ValueError("weibull_shape must be positive")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")


class Route(NamedTuple):
    spawn_step: int
    movement: Movement


RoutePlan = list[Route]


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    times, moves = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(times), np.random.default_rng(moves)


def weibull_variates(shape: float, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(n)
    # Vectorised form of weibull_inverse_cdf.
    return (-np.log1p(-u)) ** (1.0 / shape)


def sample_movements(scen, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices into MOVEMENTS drawn i.i.d. from the scenario distribution."""
    cdf = np.cumsum(scenario_probabilities(scen))
    idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    return np.minimum(idx, len(MOVEMENTS) - 1)


def generate_routes(config: GenConfig, scen) -> RoutePlan:
    """Deterministic route plan for ``(config, scen)``, sorted by spawn step."""
    scen = Scenario.parse(scen)
    n = config.n_vehicles
    if n == 0:
        return []
    time_rng, move_rng = _streams(config.seed)
    raw = weibull_variates(config.weibull_shape, n, time_rng)
    lo, hi = raw.min(), raw.max()
    top = config.episode_length - 1
    if hi > lo:
        scaled = (raw - lo) / (hi - lo) * top
    else:
        scaled = np.zeros(n)
    steps = np.clip(np.rint(scaled), 0, top).astype(np.int64)
    steps.sort()
    moves = sample_movements(scen, n, move_rng)
    return [Route(int(s), MOVEMENTS[m]) for s, m in zip(steps, moves)]


def write_routes_csv(plan: RoutePlan, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["spawn_step", "source", "destination"])
            for r in plan:
                w.writerow([r.spawn_step, r.movement.source.letter, r.movement.destination.letter])
    except OSError as exc:
        raise OSError(f"cannot write routes to {path}: {exc}") from exc


def read_routes_csv(path) -> RoutePlan:
    with Path(path).open(newline="", encoding="utf-8") as f:
        rows = csv.DictReader(f)
        if rows.fieldnames != ["spawn_step", "source", "destination"]:
            raise ValueError(f"{path}: unexpected header {rows.fieldnames}")
        return [Route(int(r["spawn_step"]), Movement(Arm.parse(r["source"]), Arm.parse(r["destination"])))
                for r in rows]
