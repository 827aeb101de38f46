"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The learned-controller criteria train full-length models (100 episodes of 5400
steps), so this module takes several minutes. Trained models are shared through
module-scoped fixtures.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from signalbench.bench import RunConfig, run_eval, save_trained
from signalbench.config import Settings
from signalbench.controllers import (
    A2cAgent, A2cConfig, ActorCritic, DqnAgent, DqnConfig, Monopoly, MonopolyConfig, MonopolyObservation,
    RoundRobin, a2c_train, dqn_train, monopoly_best_action, q_target,
)
from signalbench.controllers.a2c import available_cores
from signalbench.episode import eval_episode
from signalbench.metrics import fraction_above_half, total_wait
from signalbench.nn import load_model, mlp_new, save_model
from signalbench.sim import ARMS, MOVEMENTS, MovementKind
from signalbench.traffic import SCENARIOS, GenConfig, sample_movements, scenario_probabilities

pytestmark = pytest.mark.slow

EVAL_SEEDS = range(5)
TRAIN_SEEDS = (0, 1, 2)
DQN_SHAPE = [36, 64, 64, 64, 64, 64, 4]


@pytest.fixture
def verdict(capsys):
    def report(cid, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {cid}: {detail}")
        assert ok, f"criterion {cid}: {detail}"
    return report


def mean_metric(controller, scen, metric, seeds=EVAL_SEEDS):
    return float(np.mean([metric(eval_episode(controller, scen, s)) for s in seeds]))


@pytest.fixture(scope="module")
def dqn_runs():
    return {seed: dqn_train(DqnConfig(), seed) for seed in TRAIN_SEEDS}


@pytest.fixture(scope="module")
def a2c_runs():
    runs = {}
    for n in (1, 4):
        for seed in TRAIN_SEEDS:
            runs[n, seed] = a2c_train(A2cConfig(n_workers=n), seed)
    return runs


def untrained_controllers():
    return [RoundRobin(), Monopoly(), DqnAgent(mlp_new(DqnConfig().layer_sizes, 0)),
            A2cAgent(ActorCritic.new(A2cConfig(), 0))]


def test_1_conservation(verdict):
    t0 = time.perf_counter()
    runs = 0
    for ctrl in untrained_controllers():
        for scen in SCENARIOS:
            for seed in range(3):
                eval_episode(ctrl, scen, seed, check_conservation=True)  # raises on any violation
                runs += 1
    elapsed = time.perf_counter() - t0
    verdict("1", elapsed < 5.0, f"{runs} episodes conserved at every step in {elapsed:.2f} s (limit 5 s)")


def test_2_determinism(verdict, tmp_path, dqn_runs, a2c_runs):
    settings = Settings()
    save_trained(dqn_runs[0], "dqn", settings, tmp_path / "dqn.bin", 0)
    save_trained(a2c_runs[1, 0], "a2c", settings, tmp_path / "a2c.bin", 0)
    models = {"dqn": str(tmp_path / "dqn.bin"), "a2c": str(tmp_path / "a2c.bin")}
    mismatched = []
    files = 0
    for ctrl in ("rr", "monopoly", "dqn", "a2c"):
        outs = []
        for run in ("a", "b"):
            cfg = RunConfig(controller=ctrl, seeds=[0, 1], out=str(tmp_path / run / ctrl), model=models.get(ctrl))
            outs.append(run_eval(cfg))
        for pa, pb in zip(*outs):
            files += 1
            if pa.read_bytes() != pb.read_bytes():
                mismatched.append(pa.name)
    verdict("2", not mismatched, f"{files} CSV pairs compared, mismatches: {mismatched or 'none'}")


def test_3_route_statistics(verdict):
    t0 = time.perf_counter()
    pvalues = {}
    for scen in SCENARIOS:
        rng = np.random.default_rng(int(scen))
        idx = sample_movements(scen, 100_000, rng)
        observed = np.bincount(idx, minlength=len(MOVEMENTS))
        pvalues[int(scen)] = stats.chisquare(observed, scenario_probabilities(scen) * len(idx)).pvalue
        if scen == 1:
            straight = np.array([m.kind is MovementKind.STRAIGHT for m in MOVEMENTS])
            straight_frac = float(straight[idx].mean())
    elapsed = time.perf_counter() - t0
    ok = all(p > 0.01 for p in pvalues.values()) and abs(straight_frac - 0.75) <= 0.01 and elapsed < 2.0
    detail = ", ".join(f"SCEN-{k} p={p:.3f}" for k, p in pvalues.items())
    verdict("3", ok, f"{detail}; SCEN-1 straight {straight_frac:.4f}; {elapsed:.2f} s")


def test_4_q_target_oracle(verdict):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        r, gamma = float(rng.normal() * 10), float(rng.random())
        q = [float(x) for x in rng.normal(size=4) * 10]
        best = q[0]
        for x in q[1:]:
            if x > best:
                best = x
        worst = max(worst, abs(q_target(r, gamma, q) - (r + gamma * best)))
    hand = q_target(1.0, 0.75, (2.0, 1.0, 0.0, -1.0))
    verdict("4", worst <= 1e-12 and hand == 2.5, f"max deviation {worst:.1e}; hand case {hand}")


def test_5_monopoly_oracle(verdict):
    cfg = MonopolyConfig()
    rng = np.random.default_rng(5)
    mismatches = saturated_bad = 0
    for _ in range(10_000):
        s, v = float(rng.uniform(0, 600)), float(rng.uniform(0.1, 20))
        got = monopoly_best_action(MonopolyObservation(s, v), cfg)
        errs = {a: abs(s - v * a) for a in cfg.action_set}
        best = min(errs.values())
        if got != max(a for a, e in errs.items() if e == best):
            mismatches += 1
        if s >= 60 * v and got != 60:
            saturated_bad += 1
    verdict("5", mismatches == 0 and saturated_bad == 0,
            f"{mismatches} brute-force mismatches, {saturated_bad} saturation violations over 10^4 pairs")


def _fd_max_rel_error(net, x, c, h=1e-5):
    """Finite differences for every parameter, batched per layer.

    Perturbing layer ``l`` only shifts its pre-activation, so every perturbed
    network is evaluated from that point on as one row of a batch.
    """
    acts = [x]
    for layer in net.layers:
        z = layer.weight @ acts[-1] + layer.bias
        acts.append(np.maximum(z, 0) if layer.activation == "relu" else z)
    _, cache = net.forward(x)
    grads, _ = net.backward(cache, c)

    def tail(z, start):
        for k, layer in enumerate(net.layers[start:], start):
            if k > start:
                z = z @ layer.weight.T + layer.bias
            z = np.maximum(z, 0) if layer.activation == "relu" else z
        return z @ c

    worst = 0.0
    for l, layer in enumerate(net.layers):
        out, inp = layer.weight.shape
        z = layer.weight @ acts[l] + layer.bias
        # Rows: one per weight (i, j) then one per bias i.
        delta = np.zeros((out * inp + out, out))
        rows = np.arange(out * inp)
        delta[rows, rows // inp] = acts[l][rows % inp]
        delta[out * inp + np.arange(out), np.arange(out)] = 1.0
        num = (tail(z + h * delta, l) - tail(z - h * delta, l)) / (2 * h)
        ana = np.concatenate([grads[2 * l].ravel(), grads[2 * l + 1]])
        denom = np.maximum(np.maximum(np.abs(num), np.abs(ana)), 1e-6)
        worst = max(worst, float(np.max(np.abs(num - ana) / denom)))
    return worst


def test_6_gradient_check(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for k in range(20):
        net = mlp_new(DQN_SHAPE, seed=100 + k)
        for layer in net.layers:
            layer.bias[:] = rng.normal(scale=0.05, size=layer.bias.shape)
        worst = max(worst, _fd_max_rel_error(net, rng.normal(size=36), rng.normal(size=4)))
    elapsed = time.perf_counter() - t0
    verdict("6", worst < 1e-4 and elapsed < 10.0,
            f"max relative error {worst:.2e} over 20 nets of shape {DQN_SHAPE} in {elapsed:.2f} s")


def test_7_rr_structure(verdict):
    cycle = []
    for arm in ARMS:
        cycle += [f"G{arm.letter}"] * 30 + [f"Y{arm.letter}"] * 3
    expected = (cycle * math.ceil(5400 / len(cycle)))[:5400]
    streams_ok = all(eval_episode(RoundRobin(), scen, seed).phases == expected
                     for scen in SCENARIOS for seed in range(2))
    empty = GenConfig(n_vehicles=0)
    peaks = {c.name: max(int(eval_episode(c, 1, 0, empty).total_queue.max()), 0)
             for c in untrained_controllers()}
    ok = streams_ok and len(cycle) == 132 and not any(peaks.values())
    verdict("7", ok, f"RR stream matches 132-step cycle: {streams_ok}; empty-traffic peak queues {peaks}")


@pytest.fixture(scope="module")
def rr_scores():
    return {scen: mean_metric(RoundRobin(), scen, fraction_above_half) for scen in SCENARIOS}


def test_8a_rr_scenarios(verdict, rr_scores):
    s1, s2, s3 = (rr_scores[k] for k in SCENARIOS)
    verdict("8a", s2 - s1 >= 0.15 and s3 - s1 >= 0.15,
            f"RR fraction above half: SCEN-1 {s1:.3f}, SCEN-2 {s2:.3f}, SCEN-3 {s3:.3f}")


def test_8b_monopoly_vs_rr(verdict, rr_scores):
    mono = mean_metric(Monopoly(), 2, fraction_above_half)
    verdict("8b", rr_scores[2] - mono >= 0.10, f"SCEN-2 MONOPOLY {mono:.3f} vs RR {rr_scores[2]:.3f}")


def test_8c_dqn_vs_rr(verdict, rr_scores, dqn_runs):
    run = dqn_runs[0]
    dqn = mean_metric(DqnAgent(run.qnet), 2, fraction_above_half)
    ok = dqn < rr_scores[2] and run.train_wall_s <= 15 * 60
    verdict("8c", ok, f"SCEN-2 DQN {dqn:.3f} vs RR {rr_scores[2]:.3f}; training took {run.train_wall_s:.0f} s")


def test_9_dqn_learning_progress(verdict, dqn_runs):
    parts, improved = [], 0
    for seed, run in dqn_runs.items():
        waits = [s.total_wait for s in run.curve]
        first, last = np.mean(waits[:10]), np.mean(waits[-10:])
        improved += last < first
        parts.append(f"seed {seed}: {first:.0f} -> {last:.0f}")
    verdict("9", improved >= 2, f"{improved}/3 seeds improved ({'; '.join(parts)})")


def test_10a_a2c_vs_rr(verdict, rr_scores, a2c_runs):
    a2c = mean_metric(A2cAgent(a2c_runs[1, 0].net), 2, fraction_above_half)
    verdict("10a", a2c < rr_scores[2], f"SCEN-2 A2C (1 worker) {a2c:.3f} vs RR {rr_scores[2]:.3f}")


def test_10b_a2c_throughput(verdict, capsys, a2c_runs):
    cores = available_cores()
    one = np.mean([a2c_runs[1, s].steps_per_sec for s in TRAIN_SEEDS])
    four = np.mean([a2c_runs[4, s].steps_per_sec for s in TRAIN_SEEDS])
    if cores < 4:
        with capsys.disabled():
            print(f"\nSKIP criterion 10b: needs >= 4 cores, have {cores} "
                  f"(measured {four:.0f} vs {one:.0f} env steps/s, ratio {four / one:.2f})")
        pytest.skip(f"throughput scaling needs >= 4 cores; this machine has {cores}")
    verdict("10b", four >= 1.5 * one, f"{four:.0f} env steps/s with 4 workers vs {one:.0f} with 1 "
                                      f"(ratio {four / one:.2f}, {cores} cores)")


def test_10c_a2c_wait_parity(verdict, a2c_runs):
    def mean_wait(n):
        return float(np.mean([mean_metric(A2cAgent(a2c_runs[n, s].net), scen, total_wait)
                              for s in TRAIN_SEEDS for scen in SCENARIOS]))
    one, four = mean_wait(1), mean_wait(4)
    verdict("10c", four <= 1.1 * one, f"mean eval total wait {four:.0f} (4 workers) vs {one:.0f} (1 worker), "
                                      f"ratio {four / one:.3f}")


def test_11_serialization(verdict, tmp_path, dqn_runs, a2c_runs):
    x = np.random.default_rng(11).normal(size=(100, 36))
    nets = {"q": dqn_runs[0].qnet, **a2c_runs[1, 0].net.nets}
    save_model(tmp_path / "m.bin", nets, {"controller": "acceptance"})
    loaded, _ = load_model(tmp_path / "m.bin")
    h, h2 = nets["trunk"](x), loaded["trunk"](x)
    same = {
        "q": np.array_equal(nets["q"](x), loaded["q"](x)),
        "trunk": np.array_equal(h, h2),
        "policy": np.array_equal(nets["policy"](h), loaded["policy"](h2)),
        "value": np.array_equal(nets["value"](h), loaded["value"](h2)),
    }
    verdict("11", all(same.values()), f"bit-identical forward outputs on 100 inputs: {same}")
