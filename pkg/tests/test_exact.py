from __future__ import annotations
import numpy as np
import pytest
from mdp_safety.errors import SingularSystemError, ValidationError
from mdp_safety.harness.generator import RandomMdpSpec, generate_instance
from mdp_safety.models.mdp import Mdp, PolicyKind, PolicyTable, compose_behavior_policy, uniform_policy
from mdp_safety.safety import exact
from mdp_safety.safety.exact import (
    SafetyVector, bellman_residual, certify_p_safety, certify_termination, kappa, solve_safety, trapped_states,
)


def _trap():
    # h loops on a0, exits to e on a1
    kernel = np.zeros((3, 2, 3))
    kernel[0, 0, 0] = 1.0
    kernel[0, 1, 1] = 0.5
    kernel[0, 1, 2] = 0.5
    return Mdp.build(['h', 'e', 'u'], ['a0', 'a1'], kernel, target=[1], forbidden=[2])


def test_kappa(gambler):
    kap = kappa(gambler.mdp)
    b = gambler.mdp.state_index('b')
    assert kap[b, 1] == 1.0
    assert kap[b, 0] == 0.0
    assert not kap.values[:2].any()


def test_gambler_target_values(gambler):
    s = solve_safety(gambler.mdp, gambler.target)
    assert s['h1'] == pytest.approx(1 / 3, abs=1e-12)
    assert s['h2'] == pytest.approx(2 / 3, abs=1e-12)
    assert s['b'] == pytest.approx(1.0, abs=1e-12)
    assert s['goal'] == 0.0
    assert s['fail'] == 1.0


def test_gambler_behavior_values(gambler):
    behavior = compose_behavior_policy(gambler.target, gambler.baseline, gambler.proxy)
    s = solve_safety(gambler.mdp, behavior)
    assert s.policy_tag == 'behavior'
    assert s['b'] == pytest.approx(0.04, abs=1e-12)
    assert s['h2'] == pytest.approx(0.02 / 0.75, abs=1e-12)
    assert s['h1'] == pytest.approx(0.01 / 0.75, abs=1e-12)


def test_p_safety_verdicts(gambler):
    target = certify_p_safety(solve_safety(gambler.mdp, gambler.target), 0.1)
    assert not target.safe
    assert target.worst_label == 'b'
    behavior = compose_behavior_policy(gambler.target, gambler.baseline, gambler.proxy)
    verdict = certify_p_safety(solve_safety(gambler.mdp, behavior), 0.1)
    assert verdict.safe
    assert verdict.margin == pytest.approx(0.06, abs=1e-12)


def test_tie_breaks_on_lowest_index():
    s = SafetyVector(values=np.array([0.2, 0.5, 0.5, 0.0, 1.0]), policy_tag='target',
                     states=('x', 'y', 'z', 'e', 'u'), taboo=(0, 1, 2))
    assert s.argmax() == (1, 0.5)
    verdict = certify_p_safety(s, 0.5)
    assert verdict.safe
    assert verdict.worst_label == 'y'


def test_value_equal_to_p_is_safe():
    s = SafetyVector(values=np.array([0.1, 0.0, 1.0]), policy_tag='target', states=('h', 'e', 'u'), taboo=(0,))
    assert certify_p_safety(s, 0.1).safe
    assert not certify_p_safety(s, 0.1 - 1e-15).safe


def test_empty_taboo_set():
    mdp = Mdp.build(['e', 'u'], ['a'], np.zeros((2, 1, 2)), target=[0], forbidden=[1])
    policy = PolicyTable.build(mdp, {}, PolicyKind.TARGET)
    s = solve_safety(mdp, policy)
    verdict = certify_p_safety(s, 0.1)
    assert verdict.safe and verdict.worst_state is None and verdict.value == 0.0


def test_all_to_target_is_zero():
    kernel = np.zeros((4, 1, 4))
    kernel[0, 0, 1] = 1.0
    kernel[1, 0, 2] = 1.0
    mdp = Mdp.build(['h1', 'h2', 'e', 'u'], ['a'], kernel, target=[2], forbidden=[3])
    verdict = certify_p_safety(solve_safety(mdp, uniform_policy(mdp)), 0.1)
    assert verdict.safe and verdict.value == 0.0


def test_trapped_state_is_reported():
    mdp = _trap()
    stay = PolicyTable.build(mdp, {0: [1.0, 0.0]})
    assert trapped_states(mdp, stay) == [0]
    assert not certify_termination(mdp, stay)
    with pytest.raises(SingularSystemError) as err:
        solve_safety(mdp, stay)
    assert err.value.trapped == ('h',)


def test_mixed_policy_on_trap_terminates():
    mdp = _trap()
    mixed = PolicyTable.build(mdp, {0: [0.9, 0.1]})
    assert certify_termination(mdp, mixed)
    assert solve_safety(mdp, mixed)['h'] == pytest.approx(0.5, abs=1e-12)


def test_taboo_cap(monkeypatch, gambler):
    monkeypatch.setattr(exact, 'MAX_TABOO', 2)
    with pytest.raises(ValidationError, match='cap'):
        solve_safety(gambler.mdp, gambler.target)


def test_fixed_point_residual_on_random_mdps(random_mdp):
    rng = np.random.default_rng(2024)
    for seed in range(200):
        mdp, policy = random_mdp(seed, n_taboo=int(rng.integers(1, 11)), n_actions=int(rng.integers(1, 4)))
        s = solve_safety(mdp, policy)
        assert bellman_residual(mdp, policy, s) <= 1e-10
        assert ((s.values >= 0.0) & (s.values <= 1.0)).all()


def test_proxy_maximum_bounds_taboo_states():
    rng = np.random.default_rng(7)
    violations = 0
    for seed in range(200):
        spec = RandomMdpSpec(n_taboo=int(rng.integers(1, 11)), n_actions=int(rng.integers(2, 4)))
        inst = generate_instance(spec, seed)
        rows = {x: rng.dirichlet(np.ones(spec.n_actions)) for x in inst.mdp.taboo}
        policies = [inst.target, compose_behavior_policy(inst.target, inst.baseline, inst.proxy),
                    PolicyTable.build(inst.mdp, rows)]
        for policy in policies:
            s = solve_safety(inst.mdp, policy)
            bound = max(s.on(inst.proxy.ordered()))
            violations += int((s.on() > bound + 1e-9).sum())
    assert violations == 0


def test_sup_error_only_looks_at_taboo_states(gambler):
    exact_values = solve_safety(gambler.mdp, gambler.target)
    shifted = SafetyVector(values=exact_values.values + np.array([0.0, 0.25, -0.1, 5.0, 5.0]), policy_tag='learned',
                           states=exact_values.states, taboo=exact_values.taboo)
    assert shifted.sup_error(exact_values) == pytest.approx(0.25)
    assert shifted.sup_error(exact_values, indices=[2]) == pytest.approx(0.1)
    assert shifted.sup_error(exact_values, indices=[]) == 0.0
