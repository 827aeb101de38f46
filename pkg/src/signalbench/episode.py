"""Run one controller over one episode and record the per-step log."""

from __future__ import annotations

import numpy as np

from .metrics import EpisodeLog
from .sim import SimConfig, Simulation, SimulationError, new_simulation
from .traffic import GenConfig, RoutePlan, Scenario, generate_routes


class ConservationError(SimulationError):
    pass


def run_episode(controller, routes: RoutePlan, sim_config: SimConfig | None = None, *,
                scenario: int = 0, seed: int = 0, check_conservation: bool = False,
                sim: Simulation | None = None) -> EpisodeLog:
    """Drive ``controller`` for a full episode.

    The controller is asked for a directive whenever the current phase has run
    out. Controllers exposing ``finish(sim)`` get a call after the last step.
    """
    sim = sim or new_simulation(sim_config, routes)
    if hasattr(controller, "reset"):
        controller.reset()
    n = sim.config.episode_length
    queues = np.zeros((n, 4), dtype=np.int64)
    cum_wait = np.zeros(n, dtype=np.int64)
    phases: list[str] = [""] * n
    for t in range(n):
        directive = controller.next_directive(sim) if sim.phase.remaining == 0 else None
        sim.advance(directive)
        queues[t] = sim.queue_lengths()
        cum_wait[t] = sim.cumulative_wait
        phases[t] = sim.phase.label
        if check_conservation and sim.spawned != sim.departed + sim.on_network():
            raise ConservationError(
                f"step {t}: spawned {sim.spawned} != departed {sim.departed} + on network {sim.on_network()}")
    if hasattr(controller, "finish"):
        controller.finish(sim)
    return EpisodeLog(queues, cum_wait, phases, controller=getattr(controller, "name", ""),
                      scenario=int(scenario), seed=int(seed))


def eval_episode(controller, scenario, seed: int, gen_config: GenConfig | None = None,
                 sim_config: SimConfig | None = None, **kw) -> EpisodeLog:
    """Generate routes for ``(scenario, seed)`` and run one episode."""
    scenario = Scenario.parse(scenario)
    gen = gen_config or GenConfig()
    sim_config = sim_config or SimConfig()
    gen = GenConfig(gen.n_vehicles, sim_config.episode_length, gen.weibull_shape, seed)
    routes = generate_routes(gen, scenario)
    return run_episode(controller, routes, sim_config, scenario=int(scenario), seed=seed, **kw)
