from __future__ import annotations
import math
import numpy as np
import pytest
from mdp_safety.errors import DomainMismatchError, ValidationError
from mdp_safety.models.mdp import (
    Mdp, Partition, PolicyKind, PolicyTable, ProxySet, compose_behavior_policy, coverage_check,
    induced_chain, normalize_rows, proxy_set, uncovered_pairs, uniform_policy,
)


def _two_state_kernel():
    kernel = np.zeros((3, 1, 3))
    kernel[0, 0, 1] = 0.7
    kernel[0, 0, 2] = 0.3
    return kernel


def test_build_makes_terminals_absorbing():
    mdp = Mdp.build(['h', 'e', 'u'], ['a'], _two_state_kernel(), target=[1], forbidden=[2])
    assert mdp.kernel[1, 0, 1] == 1.0
    assert mdp.kernel[2, 0, 2] == 1.0
    assert mdp.taboo == (0,)
    assert not mdp.kernel.flags.writeable


def test_overlapping_partition_rejected():
    kernel = np.zeros((3, 1, 3))
    kernel[:, 0, :] = np.eye(3)
    part = Partition(target=frozenset({1}), forbidden=frozenset({1, 2}), taboo=frozenset({0}))
    with pytest.raises(ValidationError, match='overlap'):
        Mdp(states=('h', 'e', 'u'), actions=('a',), kernel=kernel, partition=part)


def test_empty_target_rejected():
    with pytest.raises(ValidationError, match='target set E is empty'):
        Mdp.build(['h', 'e', 'u'], ['a'], _two_state_kernel(), target=[], forbidden=[2])


def test_zero_row_rejected():
    kernel = np.zeros((3, 2, 3))
    kernel[0, 0, 1] = 1.0
    with pytest.raises(ValidationError, match=r'row \(h, b\)'):
        Mdp.build(['h', 'e', 'u'], ['a', 'b'], kernel, target=[1], forbidden=[2])


def test_normalize_rows_sums_exactly_to_one():
    rows = normalize_rows(np.array([[0.1, 0.2, 0.699999999], [0.5, 0.5, 0.0], [0.0, 0.0, 0.0]]))
    assert math.fsum(rows[0]) == 1.0
    assert rows[1].tolist() == [0.5, 0.5, 0.0]
    assert rows[2].tolist() == [0.0, 0.0, 0.0]


def test_policy_row_must_sum_to_one(gambler):
    probs = np.zeros((gambler.mdp.n_states, gambler.mdp.n_actions))
    probs[0] = [0.5, 0.4]
    with pytest.raises(ValidationError, match='sums to'):
        PolicyTable(domain=frozenset({0}), probs=probs, kind=PolicyKind.TARGET,
                    states=gambler.mdp.states, actions=gambler.mdp.actions)


def test_policy_outside_domain_rejected(gambler):
    probs = np.zeros((gambler.mdp.n_states, gambler.mdp.n_actions))
    probs[0] = [0.5, 0.5]
    probs[1] = [1.0, 0.0]
    with pytest.raises(ValidationError, match='outside its domain'):
        PolicyTable(domain=frozenset({0}), probs=probs, kind=PolicyKind.TARGET,
                    states=gambler.mdp.states, actions=gambler.mdp.actions)


def test_proxy_must_be_taboo(gambler):
    with pytest.raises(ValidationError, match='not in H: fail'):
        proxy_set(gambler.mdp, ['b', 'fail'])
    assert proxy_set(gambler.mdp, ['b']).ordered() == (2,)


def test_compose_behavior_policy(gambler):
    behavior = compose_behavior_policy(gambler.target, gambler.baseline, gambler.proxy)
    b = gambler.mdp.state_index('b')
    assert behavior.kind is PolicyKind.BEHAVIOR
    assert behavior.probs[b].tolist() == [0.96, 0.04]
    assert behavior.probs[0].tolist() == [0.5, 0.5]


def test_compose_rejects_mismatched_domain(gambler):
    other = ProxySet(frozenset({0, 2}))
    with pytest.raises(DomainMismatchError):
        compose_behavior_policy(gambler.target, gambler.baseline, other)


def test_coverage(gambler):
    assert coverage_check(gambler.target, gambler.baseline, gambler.proxy)
    b = gambler.mdp.state_index('b')
    only_safe = PolicyTable.build(gambler.mdp, {b: [1.0, 0.0]}, PolicyKind.BASELINE)
    assert uncovered_pairs(gambler.target, only_safe, gambler.proxy) == [(b, 1)]
    assert not coverage_check(gambler.target, only_safe, gambler.proxy)


def test_induced_chain_rows(gambler):
    chain = induced_chain(gambler.mdp, uniform_policy(gambler.mdp))
    np.testing.assert_allclose(chain[list(gambler.mdp.taboo)].sum(axis=1), 1.0)
    assert chain[gambler.mdp.state_index('goal')].sum() == 0.0


def test_compose_requires_target_on_all_of_h(gambler):
    partial = PolicyTable.build(gambler.mdp, {0: [0.5, 0.5], 2: [0.5, 0.5]})
    behavior = compose_behavior_policy(partial, gambler.baseline, gambler.proxy)
    assert 1 not in behavior.domain
    with pytest.raises(DomainMismatchError, match='taboo states: h2'):
        compose_behavior_policy(partial, gambler.baseline, gambler.proxy, gambler.mdp)
