from __future__ import annotations
import numpy as np
import pytest
from mdp_safety.errors import ConfigError
from mdp_safety.models.mdp import Mdp, PolicyTable, compose_behavior_policy
from mdp_safety.safety.exact import solve_safety
from mdp_safety.safety.montecarlo import cumulative, monte_carlo_safety


def test_cumulative_pins_last_positive_entry():
    cum = cumulative(np.array([[0.3, 0.7, 0.0], [0.2, 0.0, 0.8], [0.0, 0.0, 0.0]]))
    assert cum[0].tolist() == [0.3, 1.0, 1.0]
    assert cum[1, 2] == 1.0
    assert cum[2].tolist() == [0.0, 0.0, 0.0]
    u = np.nextafter(1.0, 0.0)
    assert int((cum[0] <= u).sum()) == 1
    assert int((cum[1] <= 0.25).sum()) == 2


def test_gambler_estimates_cover_exact(gambler):
    exact = solve_safety(gambler.mdp, gambler.target)
    for x in gambler.mdp.taboo:
        est = monte_carlo_safety(gambler.mdp, gambler.target, x, 20_000, seed=11)
        assert est.truncated == 0
        assert abs(est.estimate - exact[x]) <= 4 * est.half_width + 1e-12


def test_same_seed_same_estimate(gambler):
    behavior = compose_behavior_policy(gambler.target, gambler.baseline, gambler.proxy)
    first = monte_carlo_safety(gambler.mdp, behavior, 'h1', 5000, seed=3)
    second = monte_carlo_safety(gambler.mdp, behavior, 'h1', 5000, seed=3)
    assert first == second


def test_random_mdps_agree_with_solver(random_mdp):
    for seed in range(5):
        mdp, policy = random_mdp(100 + seed, n_taboo=6, n_actions=3)
        exact = solve_safety(mdp, policy)
        for x in mdp.taboo:
            est = monte_carlo_safety(mdp, policy, x, 10_000, seed=seed)
            exact_hw = 1.96 * np.sqrt(exact[x] * (1 - exact[x]) / est.completed)
            assert abs(est.estimate - exact[x]) <= 4 * max(est.half_width, exact_hw)


def test_truncated_episodes_are_excluded():
    kernel = np.zeros((3, 1, 3))
    kernel[0, 0, 0] = 0.999
    kernel[0, 0, 2] = 0.001
    mdp = Mdp.build(['h', 'e', 'u'], ['a'], kernel, target=[1], forbidden=[2])
    policy = PolicyTable.build(mdp, {0: [1.0]})
    est = monte_carlo_safety(mdp, policy, 'h', 1000, seed=0, horizon_cap=5)
    assert est.truncated > 900
    assert est.completed == 1000 - est.truncated
    assert est.hits == est.completed


def test_start_in_forbidden_set(gambler):
    est = monte_carlo_safety(gambler.mdp, gambler.target, 'fail', 10, seed=0)
    assert est.estimate == 1.0 and est.half_width == 0.0


def test_rejects_zero_episodes(gambler):
    with pytest.raises(ConfigError):
        monte_carlo_safety(gambler.mdp, gambler.target, 'h1', 0, seed=0)


@pytest.mark.slow
def test_twenty_random_mdps_within_three_half_widths(random_mdp):
    for seed in range(20):
        mdp, policy = random_mdp(200 + seed, n_taboo=6, n_actions=3)
        exact = solve_safety(mdp, policy)
        for x in mdp.taboo:
            est = monte_carlo_safety(mdp, policy, x, 100_000, seed=seed)
            assert est.truncated == 0
            assert est.covers(exact[x], factor=3), (seed, mdp.states[x], est.estimate, exact[x])
