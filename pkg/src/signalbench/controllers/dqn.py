"""Deep Q-network signal agent over the 36-cell occupancy state.

The agent picks which arm gets the next green. Switching arms inserts a yellow
on the outgoing arm first; re-picking the current arm just extends its green.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from ..episode import run_episode
from ..metrics import total_wait
from ..nn import Adam, Mlp, ReplayBuffer, apply_update, mlp_new
from ..sim import ARMS, STATE_SIZE, PhaseDirective, SimConfig
from ..traffic import SCENARIOS, GenConfig, Scenario, generate_routes

N_ACTIONS = len(ARMS)
WAIT_MEASURES = ("cumulative", "network")


def wait_measure(sim, kind: str) -> int:
    """``cumulative``: all queued steps so far; ``network``: only those of vehicles still present."""
    return sim.cumulative_wait if kind == "cumulative" else sim.network_wait


@dataclass(frozen=True)
class DqnConfig:
    gamma: float = 0.75
    learning_rate: float = 0.001
    green_duration: int = 10
    yellow_duration: int = 3
    episodes: int = 100
    replay_samples_per_episode: int = 800
    replay_capacity: int = 50_000
    batch_size: int = 100
    min_replay_before_training: int = 600
    hidden_layers: int = 5
    hidden_width: int = 64
    reward_scale: float = 0.01
    reward_wait: str = "network"

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.green_duration < 5 or self.green_duration % 5:
            raise ValueError("green_duration must be a positive multiple of 5")
        if self.reward_wait not in WAIT_MEASURES:
            raise ValueError(f"reward_wait must be one of {WAIT_MEASURES}")
        if self.episodes < 1 or self.batch_size < 1:
            raise ValueError("episodes and batch_size must be >= 1")

    @property
    def layer_sizes(self) -> list[int]:
        return [STATE_SIZE] + [self.hidden_width] * self.hidden_layers + [N_ACTIONS]

    def epsilon(self, episode: int) -> float:
        return 1.0 - episode / self.episodes


class Transition(NamedTuple):
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray


def dqn_select_action(qnet: Mlp, s, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties resolve to the lowest action index."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(qnet(s)))


def dqn_reward(wait_prev: float, wait_cur: float) -> float:
    """Drop in cumulative queued-vehicle-steps between two decisions."""
    return float(wait_prev - wait_cur)


def q_target(r: float, gamma: float, q_next) -> float:
    return r + gamma * max(q_next)


def dqn_replay_update(qnet: Mlp, buffer: ReplayBuffer, cfg: DqnConfig, rng: np.random.Generator,
                      opt=None) -> bool:
    """One minibatch step towards the bootstrapped targets.

    Returns False, without touching the network, while the buffer holds fewer
    than ``cfg.min_replay_before_training`` transitions.
    """
    if len(buffer) < max(cfg.min_replay_before_training, 1):
        return False
    opt = opt if opt is not None else Adam(cfg.learning_rate)
    batch = buffer.sample(cfg.batch_size, rng)
    s = np.stack([t.s for t in batch])
    s_next = np.stack([t.s_next for t in batch])
    a = np.fromiter((t.a for t in batch), dtype=np.int64, count=len(batch))
    r = np.fromiter((t.r for t in batch), dtype=np.float64, count=len(batch))
    q_next = qnet(s_next)
    target = qnet(s)
    target[np.arange(len(batch)), a] = r + cfg.gamma * q_next.max(axis=1)
    fit_q_targets(qnet, s, target, opt)
    return True


def q_loss(qnet: Mlp, s: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over every output of the batch."""
    return float(np.mean((qnet(s) - target) ** 2))


def fit_q_targets(qnet: Mlp, s: np.ndarray, target: np.ndarray, opt) -> float:
    """One gradient step of :func:`q_loss` towards fixed targets; returns the pre-step loss."""
    q, cache = qnet.forward(s)
    diff = q - target
    grads, _ = qnet.backward(cache, 2.0 * diff / diff.size)
    apply_update(qnet, grads, opt)
    return float(np.mean(diff ** 2))


class DqnAgent:
    """Signal controller backed by a Q-network; records transitions when given a buffer."""

    name = "dqn"

    def __init__(self, qnet: Mlp, config: DqnConfig | None = None, *, epsilon: float = 0.0,
                 rng: np.random.Generator | None = None, buffer: ReplayBuffer | None = None):
        self.qnet = qnet
        self.config = config or DqnConfig()
        self.epsilon = epsilon
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.buffer = buffer
        self.reset()

    def reset(self) -> None:
        self.prev_arm = None
        self._pending: PhaseDirective | None = None
        self._last: tuple[np.ndarray, int, int] | None = None
        self.episode_reward = 0.0
        self.decisions = 0

    def next_directive(self, sim) -> PhaseDirective:
        return dqn_next(self, sim)

    def _record(self, sim) -> np.ndarray:
        s = sim.encode_cell_state()
        if self._last is not None:
            s0, a0, w0 = self._last
            r = dqn_reward(w0, wait_measure(sim, self.config.reward_wait)) * self.config.reward_scale
            self.episode_reward += r
            if self.buffer is not None:
                self.buffer.push(Transition(s0, a0, r, s))
        return s

    def finish(self, sim) -> None:
        # The horizon truncates the episode; the last transition still bootstraps.
        self._record(sim)
        self._last = None


def dqn_next(agent: DqnAgent, sim) -> PhaseDirective:
    if agent._pending is not None:
        d, agent._pending = agent._pending, None
        return d
    s = agent._record(sim)
    a = dqn_select_action(agent.qnet, s, agent.epsilon, agent.rng)
    agent._last = (s, a, wait_measure(sim, agent.config.reward_wait))
    agent.decisions += 1
    cfg = agent.config
    arm = ARMS[a]
    green = PhaseDirective.green(arm, cfg.green_duration)
    prev, agent.prev_arm = agent.prev_arm, arm
    if prev is not None and prev != arm:
        agent._pending = green
        return PhaseDirective.yellow(prev, cfg.yellow_duration)
    return green


@dataclass
class EpisodeStat:
    episode: int
    scenario: int
    cum_reward: float
    total_wait: int
    wall_ms: float
    epsilon: float = 0.0


@dataclass
class DqnTrainResult:
    qnet: Mlp
    curve: list[EpisodeStat] = field(default_factory=list)
    train_wall_s: float = 0.0


def training_route_seed(seed: int, episode: int, stream: int = 0) -> int:
    """Route seed for a training episode, disjoint from small evaluation seeds."""
    return int(np.random.SeedSequence([seed, stream, episode, 0xD0]).generate_state(1)[0])


def dqn_train(cfg: DqnConfig | None = None, seed: int = 0, *, sim_config: SimConfig | None = None,
              gen_config: GenConfig | None = None, schedule=SCENARIOS,
              progress: Callable[[EpisodeStat], None] | None = None) -> DqnTrainResult:
    """Train for ``cfg.episodes`` episodes, cycling through ``schedule`` scenarios."""
    cfg = cfg or DqnConfig()
    sim_config = sim_config or SimConfig()
    gen = gen_config or GenConfig()
    init_ss, act_ss, replay_ss = np.random.SeedSequence(seed).spawn(3)
    qnet = mlp_new(cfg.layer_sizes, seed=init_ss)
    act_rng = np.random.default_rng(act_ss)
    replay_rng = np.random.default_rng(replay_ss)
    buffer = ReplayBuffer(cfg.replay_capacity)
    opt = Adam(cfg.learning_rate)
    agent = DqnAgent(qnet, cfg, rng=act_rng, buffer=buffer)
    result = DqnTrainResult(qnet)
    start = time.perf_counter()
    for e in range(cfg.episodes):
        t0 = time.perf_counter()
        scen = Scenario.parse(schedule[e % len(schedule)])
        routes = generate_routes(
            GenConfig(gen.n_vehicles, sim_config.episode_length, gen.weibull_shape,
                      training_route_seed(seed, e)), scen)
        agent.epsilon = cfg.epsilon(e)
        log = run_episode(agent, routes, sim_config, scenario=int(scen))
        for _ in range(cfg.replay_samples_per_episode):
            if not dqn_replay_update(qnet, buffer, cfg, replay_rng, opt):
                break
        stat = EpisodeStat(e, int(scen), agent.episode_reward, total_wait(log),
                           (time.perf_counter() - t0) * 1000.0, agent.epsilon)
        result.curve.append(stat)
        if progress:
            progress(stat)
    result.train_wall_s = time.perf_counter() - start
    return result
