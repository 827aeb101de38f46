import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from signalbench.sim import MOVEMENTS, Arm, Movement, MovementKind
from signalbench.traffic import (
    SCENARIOS, GenConfig, Scenario, generate_routes, read_routes_csv, sample_movements,
    scenario_fractions, scenario_probabilities, weibull_inverse_cdf, weibull_variates, write_routes_csv,
)

N, E, S, W = Arm.N, Arm.E, Arm.S, Arm.W


def prob(scen, src, dst):
    return scenario_fractions(scen)[Movement(src, dst)]


def test_scen1_values():
    for m, p in scenario_fractions(1).items():
        assert p == (Fraction("0.1875") if m.kind is MovementKind.STRAIGHT else Fraction("0.03125"))


def test_scen2_values():
    assert prob(2, N, S) == prob(2, S, N) == Fraction("0.3375")
    assert prob(2, E, W) == prob(2, W, E) == Fraction("0.0375")
    assert prob(2, N, E) == Fraction("0.05625")
    assert prob(2, E, N) == Fraction("0.00625")


@pytest.mark.parametrize("scen", SCENARIOS)
def test_probabilities_sum_to_one_exactly(scen):
    assert sum(scenario_fractions(scen).values()) == 1
    assert scenario_probabilities(scen).sum() == pytest.approx(1.0, abs=1e-15)


def test_scen2_is_scen3_with_axes_swapped():
    swap = {N: E, E: N, S: W, W: S}
    for m in MOVEMENTS:
        assert prob(2, m.source, m.destination) == prob(3, swap[m.source], swap[m.destination])


def test_north_south_share_is_ninety_percent():
    ns = sum(p for m, p in scenario_fractions(2).items() if m.source in (N, S))
    assert ns == Fraction(9, 10)


def test_scenario_parse():
    assert Scenario.parse("SCEN-2") is Scenario.SCEN_2
    assert Scenario.parse(3) is Scenario.SCEN_3
    with pytest.raises(ValueError):
        Scenario.parse("4")


def test_weibull_inverse_cdf_examples():
    assert weibull_inverse_cdf(2.0, 0.0) == 0.0
    assert weibull_inverse_cdf(2.0, 1 - math.exp(-1)) == pytest.approx(1.0, rel=1e-15)
    assert weibull_inverse_cdf(1.0, 0.5) == pytest.approx(math.log(2), rel=1e-15)


@pytest.mark.parametrize("shape,u", [(2.0, 1.0), (2.0, -0.1), (0.0, 0.5), (-1.0, 0.5)])
def test_weibull_inverse_cdf_rejects(shape, u):
    with pytest.raises(ValueError):
        weibull_inverse_cdf(shape, u)


@given(shape=st.floats(0.2, 8.0), u=st.floats(0.0, 0.999999))
def test_weibull_inverse_cdf_inverts_cdf(shape, u):
    x = weibull_inverse_cdf(shape, u)
    assert 1.0 - math.exp(-x ** shape) == pytest.approx(u, abs=1e-12)


def test_vectorised_variates_match_scalar():
    rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)
    xs = weibull_variates(2.0, 50, rng_a)
    us = rng_b.random(50)
    assert np.allclose(xs, [weibull_inverse_cdf(2.0, u) for u in us], rtol=1e-14)


@pytest.mark.parametrize("scen", SCENARIOS)
def test_generate_routes_contract(scen):
    plan = generate_routes(GenConfig(n_vehicles=1000, seed=11), scen)
    steps = [r.spawn_step for r in plan]
    assert len(plan) == 1000
    assert steps == sorted(steps)
    assert steps[0] == 0 and steps[-1] == 5399
    assert all(0 <= s < 5400 for s in steps)


def test_generate_routes_deterministic_and_seeded():
    a = generate_routes(GenConfig(seed=1), 2)
    assert a == generate_routes(GenConfig(seed=1), 2)
    assert a != generate_routes(GenConfig(seed=2), 2)


def test_zero_and_single_vehicle():
    assert generate_routes(GenConfig(n_vehicles=0), 1) == []
    (only,) = generate_routes(GenConfig(n_vehicles=1), 1)
    assert only.spawn_step == 0


def test_straight_fraction_scen1():
    plan = generate_routes(GenConfig(n_vehicles=10_000, seed=4), 1)
    frac = np.mean([r.movement.kind is MovementKind.STRAIGHT for r in plan])
    assert frac == pytest.approx(0.75, abs=0.03)


@pytest.mark.parametrize("scen", SCENARIOS)
def test_movement_chi_square(scen):
    rng = np.random.default_rng(1000 + int(scen))
    idx = sample_movements(scen, 100_000, rng)
    observed = np.bincount(idx, minlength=12)
    expected = scenario_probabilities(scen) * len(idx)
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_raw_variates_ks_against_weibull():
    xs = weibull_variates(2.0, 10_000, np.random.default_rng(8))
    assert stats.kstest(xs, stats.weibull_min(2.0).cdf).pvalue > 0.01


def test_routes_csv_round_trip(tmp_path):
    plan = generate_routes(GenConfig(n_vehicles=200, seed=3), 3)
    path = tmp_path / "routes.csv"
    write_routes_csv(plan, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "spawn_step,source,destination"
    assert len(lines) == 201
    assert read_routes_csv(path) == plan
