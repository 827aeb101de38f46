"""Experiment grid: evaluation runs, training runs and the worker-scaling report."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .config import ConfigError, Settings, apply_overrides
from .controllers import (
    CONTROLLERS, LEARNED, A2cAgent, ActorCritic, DqnAgent, Monopoly, RoundRobin, a2c_train, dqn_train,
)
from .episode import eval_episode
from .metrics import summarize, total_wait, write_rows, write_step_csv, write_summary_csv
from .nn import load_model, save_model
from .traffic import SCENARIOS, Scenario

log = logging.getLogger(__name__)

CURVE_HEADER = ["episode", "scenario", "cum_reward", "total_wait", "wall_ms"]
WORKER_HEADER = ["worker", "episodes", "env_steps", "compute_ms", "steps_per_sec"]
SCALING_HEADER = ["n_workers", "scenario", "total_wait", "train_wall_ms", "steps_per_sec"]


class UsageError(ConfigError):
    pass


@dataclass
class RunConfig:
    controller: str = "rr"
    scenario: Any = "all"
    mode: str = "eval"
    seeds: list = field(default_factory=lambda: [0])
    episodes: int | None = None
    n_workers: int | None = None
    workers: list | None = None
    out: str = "out"
    model: str | None = None
    overrides: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.mode not in ("eval", "train", "scaling"):
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.controller not in CONTROLLERS:
            raise UsageError(f"unknown controller {self.controller!r}; choose from {CONTROLLERS}")
        if self.mode in ("train", "scaling") and self.controller not in LEARNED:
            raise UsageError(f"{self.mode} mode needs a learning controller (dqn or a2c), not {self.controller}")
        if self.mode == "scaling" and self.controller != "a2c":
            raise UsageError("the scaling report is only defined for a2c")
        if self.n_workers is not None and self.controller != "a2c":
            raise UsageError("n_workers only applies to a2c")
        if self.n_workers is not None and self.n_workers < 1:
            raise UsageError("n_workers must be >= 1")
        if self.episodes is not None and self.episodes < 1:
            raise UsageError("episodes must be >= 1")
        if not self.seeds:
            raise UsageError("at least one seed is required")
        self.scenarios()

    def scenarios(self) -> list[Scenario]:
        if str(self.scenario).lower() == "all":
            return list(SCENARIOS)
        try:
            return [Scenario.parse(self.scenario)]
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def settings(self) -> Settings:
        s = apply_overrides(Settings(), self.overrides)
        if self.episodes is not None:
            s.dqn = dataclasses.replace(s.dqn, episodes=self.episodes)
            s.a2c = dataclasses.replace(s.a2c, episodes=self.episodes)
        if self.n_workers is not None:
            s.a2c = dataclasses.replace(s.a2c, n_workers=self.n_workers)
        return s


RUN_CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)}


def run_config_from_mapping(data: dict) -> RunConfig:
    unknown = set(data) - RUN_CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**data)


def build_controller(name: str, settings: Settings, model: str | None = None):
    if name == "rr":
        return RoundRobin(settings.rr)
    if name == "monopoly":
        return Monopoly(settings.monopoly.build())
    if model is None:
        raise UsageError(f"evaluating {name} needs a trained model file (--model)")
    path = Path(model)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    nets, meta = load_model(path)
    if meta.get("controller") != name:
        raise ConfigError(f"{path} holds a {meta.get('controller')!r} model, not {name!r}")
    if name == "dqn":
        return DqnAgent(nets["q"], settings.dqn)
    return A2cAgent(ActorCritic(nets["trunk"], nets["policy"], nets["value"]), settings.a2c)


def run_eval(cfg: RunConfig) -> list[Path]:
    """One step CSV per (scenario, seed) plus ``summary.csv``; returns written paths."""
    cfg.validate()
    settings = cfg.settings()
    controller = build_controller(cfg.controller, settings, cfg.model)
    out = Path(cfg.out)
    written, logs = [], []
    for scen in cfg.scenarios():
        for seed in cfg.seeds:
            ep = eval_episode(controller, scen, int(seed), settings.gen, settings.sim)
            ep.controller = cfg.controller
            path = out / f"steps_{cfg.controller}_scen{int(scen)}_seed{seed}.csv"
            write_step_csv(ep, path)
            written.append(path)
            logs.append(ep)
            log.info("%s scen %d seed %s: total wait %d", cfg.controller, scen, seed, total_wait(ep))
    summary = out / "summary.csv"
    write_summary_csv(summarize(logs), summary)
    written.append(summary)
    return written


def _train(cfg: RunConfig, settings: Settings, seed: int, n_workers: int | None = None):
    if cfg.controller == "dqn":
        return dqn_train(settings.dqn, seed, sim_config=settings.sim, gen_config=settings.gen)
    a2c = settings.a2c if n_workers is None else dataclasses.replace(settings.a2c, n_workers=n_workers)
    return a2c_train(a2c, seed, sim_config=settings.sim, gen_config=settings.gen)


def save_trained(result, controller: str, settings: Settings, path: Path, seed: int) -> None:
    if controller == "dqn":
        save_model(path, {"q": result.qnet},
                   {"controller": "dqn", "seed": seed, "config": dataclasses.asdict(settings.dqn)})
    else:
        save_model(path, result.net.nets,
                   {"controller": "a2c", "seed": seed, "config": dataclasses.asdict(settings.a2c)})


def run_train(cfg: RunConfig) -> list[Path]:
    cfg.mode = "train"
    cfg.validate()
    settings = cfg.settings()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(cfg.seeds[0])
    result = _train(cfg, settings, seed)
    model_path = out / f"{cfg.controller}_model.bin"
    save_trained(result, cfg.controller, settings, model_path, seed)
    curve_path = out / f"{cfg.controller}_curve.csv"
    if cfg.controller == "dqn":
        stats = result.curve
    else:
        n = len(result.curves)
        stats = [dataclasses.replace(s, episode=s.episode * n + i)
                 for k in range(len(result.curves[0])) for i, s in
                 enumerate(c[k] for c in result.curves)]
    write_rows(curve_path, CURVE_HEADER,
               ([s.episode, s.scenario, s.cum_reward, s.total_wait, round(s.wall_ms, 3)] for s in stats))
    written = [model_path, curve_path]
    if cfg.controller == "a2c":
        workers_path = out / "a2c_workers.csv"
        write_rows(workers_path, WORKER_HEADER,
                   ([w.worker, w.episodes, w.env_steps, round(w.compute_s * 1000.0, 3),
                     round(w.steps_per_sec, 3)] for w in result.workers))
        written.append(workers_path)
    return written


def run_scaling_report(cfg: RunConfig) -> Path:
    """Train one a2c model per worker count and evaluate each on every scenario."""
    cfg.controller = "a2c"
    cfg.mode = "scaling"
    cfg.validate()
    settings = cfg.settings()
    worker_counts = [int(n) for n in (cfg.workers or [1, 2, 4])]
    if any(n < 1 for n in worker_counts):
        raise UsageError("worker counts must be >= 1")
    seed = int(cfg.seeds[0])
    rows = []
    for n in worker_counts:
        result = _train(cfg, settings, seed, n_workers=n)
        agent = A2cAgent(result.net, dataclasses.replace(settings.a2c, n_workers=n))
        for scen in cfg.scenarios():
            waits = [total_wait(eval_episode(agent, scen, int(s), settings.gen, settings.sim))
                     for s in cfg.seeds]
            rows.append([n, int(scen), float(np.mean(waits)), round(result.train_wall_s * 1000.0, 3),
                         round(result.steps_per_sec, 3)])
        log.info("a2c n_workers=%d: %.0f env steps/s", n, result.steps_per_sec)
    path = Path(cfg.out) / "scaling.csv"
    write_rows(path, SCALING_HEADER, rows)
    return path
