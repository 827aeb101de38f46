"""Synchronous advantage actor-critic with parallel workers.

Each worker owns an environment and a local copy of the network. Workers run
one episode each, updating locally every few decisions; at the episode barrier
their weights are averaged into the global network, which every worker then
reloads.
"""

from __future__ import annotations

import multiprocessing as mp
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..episode import run_episode
from ..metrics import total_wait
from ..nn import Adam, Mlp, apply_update, average_weights, mlp_new
from ..sim import ARMS, STATE_SIZE, PhaseDirective, SimConfig
from ..traffic import SCENARIOS, GenConfig, Scenario, generate_routes
from .dqn import WAIT_MEASURES, EpisodeStat, Transition, dqn_reward, training_route_seed, wait_measure

N_ACTIONS = len(ARMS)
_EPS = 1e-12


@dataclass(frozen=True)
class A2cConfig:
    gamma: float = 0.75
    learning_rate: float = 0.001
    n_workers: int = 1
    trunk_layers: int = 2
    trunk_width: int = 64
    entropy_coefficient: float = 0.01
    value_loss_coefficient: float = 0.5
    update_every: int = 8
    sync_period: int = 1
    green_duration: int = 10
    yellow_duration: int = 3
    episodes: int = 100
    reward_scale: float = 0.01
    reward_wait: str = "network"

    def __post_init__(self):
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        if self.entropy_coefficient < 0 or self.value_loss_coefficient < 0:
            raise ValueError("loss coefficients must be >= 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.reward_wait not in WAIT_MEASURES:
            raise ValueError(f"reward_wait must be one of {WAIT_MEASURES}")
        if self.update_every < 1 or self.sync_period < 1 or self.episodes < 1:
            raise ValueError("update_every, sync_period and episodes must be >= 1")


class ActorCritic:
    """Shared trunk feeding a softmax policy head and a scalar value head."""

    def __init__(self, trunk: Mlp, policy: Mlp, value: Mlp):
        if trunk.sizes[-1] != policy.sizes[0] or trunk.sizes[-1] != value.sizes[0]:
            raise ValueError("heads must take the trunk output")
        self.trunk, self.policy, self.value = trunk, policy, value

    @classmethod
    def new(cls, cfg: A2cConfig | None = None, seed=0) -> "ActorCritic":
        cfg = cfg or A2cConfig()
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        t_ss, p_ss, v_ss = ss.spawn(3)
        width = cfg.trunk_width
        trunk = mlp_new([STATE_SIZE] + [width] * cfg.trunk_layers, t_ss, hidden="relu", output="relu")
        policy = mlp_new([width, N_ACTIONS], p_ss, output="softmax")
        value = mlp_new([width, 1], v_ss, output="linear")
        return cls(trunk, policy, value)

    @property
    def nets(self) -> dict[str, Mlp]:
        return {"trunk": self.trunk, "policy": self.policy, "value": self.value}

    def copy(self) -> "ActorCritic":
        return ActorCritic(self.trunk.copy(), self.policy.copy(), self.value.copy())

    def params(self) -> list[np.ndarray]:
        return self.trunk.params() + self.policy.params() + self.value.params()

    def load_params(self, params: Sequence[np.ndarray]) -> None:
        nt, npol = len(self.trunk.params()), len(self.policy.params())
        self.trunk.load_params(params[:nt])
        self.policy.load_params(params[nt:nt + npol])
        self.value.load_params(params[nt + npol:])

    def same_architecture(self, other: "ActorCritic") -> bool:
        return all(a.same_architecture(b) for a, b in zip(self.nets.values(), other.nets.values()))

    def __call__(self, s) -> tuple[np.ndarray, np.ndarray]:
        h = self.trunk(s)
        return self.policy(h), self.value(h)


def a2c_advantage(r: float, gamma: float, v_next: float, v_cur: float) -> float:
    """Temporal-difference error used as the advantage."""
    return r + gamma * v_next - v_cur


def make_optimizers(cfg: A2cConfig) -> dict[str, Adam]:
    return {name: Adam(cfg.learning_rate) for name in ("trunk", "policy", "value")}


def a2c_loss_parts(net: ActorCritic, trajectory: Sequence[Transition], cfg: A2cConfig):
    """Forward pass over a trajectory; returns pieces shared by loss and gradient."""
    s = np.stack([t.s for t in trajectory])
    s_next = np.stack([t.s_next for t in trajectory])
    a = np.fromiter((t.a for t in trajectory), dtype=np.int64, count=len(trajectory))
    r = np.fromiter((t.r for t in trajectory), dtype=np.float64, count=len(trajectory))
    n = len(trajectory)
    h, h_cache = net.trunk.forward(np.vstack([s, s_next]))
    pi, p_cache = net.policy.forward(h[:n])
    v, v_cache = net.value.forward(h)
    v_cur, v_next = v[:n, 0], v[n:, 0]
    adv = a2c_advantage(r, cfg.gamma, v_next, v_cur)
    return dict(n=n, a=a, pi=pi, adv=adv, h_cache=h_cache, p_cache=p_cache, v_cache=v_cache)


def a2c_loss(net: ActorCritic, trajectory: Sequence[Transition], cfg: A2cConfig) -> float:
    p = a2c_loss_parts(net, trajectory, cfg)
    pi, a, adv = p["pi"], p["a"], p["adv"]
    logp = np.log(np.maximum(pi, _EPS))
    entropy = -(pi * logp).sum(axis=1)
    chosen = logp[np.arange(p["n"]), a]
    return float(np.sum(-chosen * adv + cfg.value_loss_coefficient * adv ** 2
                        - cfg.entropy_coefficient * entropy))


def a2c_gradients(net: ActorCritic, trajectory: Sequence[Transition], cfg: A2cConfig):
    """Gradients of the summed actor-critic loss.

    The advantage is held constant in the policy term, and the bootstrap value
    ``V(s_next)`` is held constant in the value term.
    """
    if not trajectory:
        raise ValueError("trajectory must not be empty")
    p = a2c_loss_parts(net, trajectory, cfg)
    n, a, pi, adv = p["n"], p["a"], p["pi"], p["adv"]
    rows = np.arange(n)
    safe = np.maximum(pi, _EPS)
    g_pi = cfg.entropy_coefficient * (np.log(safe) + 1.0)
    g_pi[rows, a] -= adv / safe[rows, a]
    g_policy, g_h_pol = net.policy.backward(p["p_cache"], g_pi)
    g_v = np.zeros((2 * n, 1))
    g_v[:n, 0] = -2.0 * cfg.value_loss_coefficient * adv
    g_value, g_h_val = net.value.backward(p["v_cache"], g_v)
    g_h = g_h_val
    g_h[:n] += g_h_pol
    g_trunk, _ = net.trunk.backward(p["h_cache"], g_h)
    return {"trunk": g_trunk, "policy": g_policy, "value": g_value}


def a2c_update(net: ActorCritic, trajectory: Sequence[Transition], cfg: A2cConfig,
               opts: dict | None = None) -> ActorCritic:
    """One gradient step on ``trajectory``; without ``opts`` a fresh Adam state is used."""
    grads = a2c_gradients(net, trajectory, cfg)
    opts = opts if opts is not None else make_optimizers(cfg)
    for name, sub in net.nets.items():
        apply_update(sub, grads[name], opts[name])
    return net


def a2c_sync(workers: Sequence[ActorCritic]) -> ActorCritic:
    """Average worker weights into a global net and load it back into every worker."""
    if not workers:
        raise ValueError("need at least one worker")
    for w in workers[1:]:
        if not workers[0].same_architecture(w):
            raise ValueError("worker networks differ in architecture")
    merged = ActorCritic(*(average_weights([w.nets[k] for w in workers]) for k in ("trunk", "policy", "value")))
    for w in workers:
        w.load_params(merged.params())
    return merged


class A2cAgent:
    """Signal controller driven by the policy head.

    In training mode actions are sampled from the policy and the agent updates
    its network every ``cfg.update_every`` decisions; otherwise it acts greedily.
    """

    name = "a2c"

    def __init__(self, net: ActorCritic, config: A2cConfig | None = None, *, train: bool = False,
                 rng: np.random.Generator | None = None, opts: dict | None = None):
        self.net = net
        self.config = config or A2cConfig()
        self.train = train
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.opts = opts if opts is not None else make_optimizers(self.config)
        self.reset()

    def reset(self) -> None:
        self.prev_arm = None
        self._pending = None
        self._last = None
        self._traj: list[Transition] = []
        self.episode_reward = 0.0
        self.decisions = 0
        self.updates = 0

    def select(self, s) -> int:
        pi, _ = self.net(s)
        if self.train:
            return int(self.rng.choice(N_ACTIONS, p=pi / pi.sum()))
        return int(np.argmax(pi))

    def _record(self, sim) -> np.ndarray:
        s = sim.encode_cell_state()
        if self._last is not None:
            s0, a0, w0 = self._last
            r = dqn_reward(w0, wait_measure(sim, self.config.reward_wait)) * self.config.reward_scale
            self.episode_reward += r
            if self.train:
                self._traj.append(Transition(s0, a0, r, s))
                if len(self._traj) >= self.config.update_every:
                    self._flush()
        return s

    def _flush(self) -> None:
        if self._traj:
            a2c_update(self.net, self._traj, self.config, self.opts)
            self.updates += 1
            self._traj = []

    def finish(self, sim) -> None:
        self._record(sim)
        if self.train:
            self._flush()
        self._last = None

    def next_directive(self, sim) -> PhaseDirective:
        if self._pending is not None:
            d, self._pending = self._pending, None
            return d
        s = self._record(sim)
        a = self.select(s)
        self._last = (s, a, wait_measure(sim, self.config.reward_wait))
        self.decisions += 1
        cfg = self.config
        arm = ARMS[a]
        green = PhaseDirective.green(arm, cfg.green_duration)
        prev, self.prev_arm = self.prev_arm, arm
        if prev is not None and prev != arm:
            self._pending = green
            return PhaseDirective.yellow(prev, cfg.yellow_duration)
        return green


# -- training ---------------------------------------------------------------


@dataclass
class WorkerTask:
    worker: int
    episode: int
    scenario: int
    route_seed: int
    params: list
    opts: dict
    rng: np.random.Generator


@dataclass
class WorkerResult:
    worker: int
    params: list
    opts: dict
    rng: np.random.Generator
    stat: EpisodeStat
    steps: int
    compute_s: float


_WORKER_CTX: dict = {}


def _init_worker(cfg: A2cConfig, sim_config: SimConfig, gen: GenConfig) -> None:
    # Tiny matrices: BLAS threading only adds contention between worker processes.
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(1)
    except ImportError:
        pass
    _WORKER_CTX.update(cfg=cfg, sim_config=sim_config, gen=gen, net=ActorCritic.new(cfg, 0))


def _run_worker(task: WorkerTask) -> WorkerResult:
    cfg, sim_config, gen = _WORKER_CTX["cfg"], _WORKER_CTX["sim_config"], _WORKER_CTX["gen"]
    net: ActorCritic = _WORKER_CTX["net"]
    t0 = time.perf_counter()
    net.load_params(task.params)
    agent = A2cAgent(net, cfg, train=True, rng=task.rng, opts=task.opts)
    routes = generate_routes(
        GenConfig(gen.n_vehicles, sim_config.episode_length, gen.weibull_shape, task.route_seed),
        task.scenario)
    log = run_episode(agent, routes, sim_config, scenario=task.scenario)
    elapsed = time.perf_counter() - t0
    stat = EpisodeStat(task.episode, task.scenario, agent.episode_reward, total_wait(log), elapsed * 1000.0)
    return WorkerResult(task.worker, [p.copy() for p in net.params()], agent.opts, agent.rng, stat,
                        sim_config.episode_length, elapsed)


@dataclass
class WorkerReport:
    worker: int
    episodes: int
    env_steps: int
    compute_s: float

    @property
    def steps_per_sec(self) -> float:
        return self.env_steps / self.compute_s if self.compute_s > 0 else 0.0


@dataclass
class A2cTrainResult:
    net: ActorCritic
    curves: list[list[EpisodeStat]] = field(default_factory=list)
    workers: list[WorkerReport] = field(default_factory=list)
    train_wall_s: float = 0.0
    env_steps: int = 0

    @property
    def steps_per_sec(self) -> float:
        return self.env_steps / self.train_wall_s if self.train_wall_s > 0 else 0.0


def a2c_train(cfg: A2cConfig | None = None, seed: int = 0, *, sim_config: SimConfig | None = None,
              gen_config: GenConfig | None = None, schedule=SCENARIOS, parallel: bool | None = None,
              progress: Callable[[int, list[EpisodeStat]], None] | None = None) -> A2cTrainResult:
    """Train ``cfg.n_workers`` workers for ``cfg.episodes`` rounds of one episode each.

    Worker ``i`` in round ``k`` plays scenario ``schedule[(k * n + i) % len]`` so
    a single worker cycles through the scenarios in order. Results are merged in
    worker order, so training is deterministic for a fixed seed regardless of
    process scheduling.
    """
    cfg = cfg or A2cConfig()
    sim_config = sim_config or SimConfig()
    gen = gen_config or GenConfig()
    n = cfg.n_workers
    init_ss, *worker_ss = np.random.SeedSequence(seed).spawn(n + 1)
    global_net = ActorCritic.new(cfg, init_ss)
    rngs = [np.random.default_rng(ss) for ss in worker_ss]
    opts = [make_optimizers(cfg) for _ in range(n)]
    local_params = [[p.copy() for p in global_net.params()] for _ in range(n)]
    result = A2cTrainResult(global_net, curves=[[] for _ in range(n)],
                            workers=[WorkerReport(i, 0, 0, 0.0) for i in range(n)])
    if parallel is None:
        parallel = n > 1
    pool = None
    if parallel:
        ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
        pool = ctx.Pool(n, initializer=_init_worker, initargs=(cfg, sim_config, gen))
    else:
        _init_worker(cfg, sim_config, gen)
    start = time.perf_counter()
    try:
        for k in range(cfg.episodes):
            tasks = []
            for i in range(n):
                idx = k * n + i
                scen = int(Scenario.parse(schedule[idx % len(schedule)]))
                tasks.append(WorkerTask(i, k, scen, training_route_seed(seed, idx, stream=1),
                                        local_params[i], opts[i], rngs[i]))
            outs = pool.map(_run_worker, tasks) if pool else [_run_worker(t) for t in tasks]
            workers = []
            for out in sorted(outs, key=lambda o: o.worker):
                i = out.worker
                opts[i], rngs[i] = out.opts, out.rng
                local = global_net.copy()
                local.load_params(out.params)
                workers.append(local)
                result.curves[i].append(out.stat)
                rep = result.workers[i]
                rep.episodes += 1
                rep.env_steps += out.steps
                rep.compute_s += out.compute_s
                result.env_steps += out.steps
            if (k + 1) % cfg.sync_period == 0 or k == cfg.episodes - 1:
                merged = a2c_sync(workers)
                global_net.load_params(merged.params())
                local_params = [[p.copy() for p in global_net.params()] for _ in range(n)]
            else:
                local_params = [w.params() for w in workers]
            if progress:
                progress(k, [c[-1] for c in result.curves])
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    result.train_wall_s = time.perf_counter() - start
    return result


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1
