"""Built-in example instances.

``gambler-buffer``: a five-state walk with a single buffer state in front of U.
``twelve-state``: a reconstruction of the published twelve-state example. Its
kernel reproduces the published target values and the behavior values on the
proxy states; states 1 and 2 under the behavior policy differ from the published
column (see DESIGN.md).
"""
from __future__ import annotations
from dataclasses import dataclass
from mdp_safety.errors import ConfigError
from mdp_safety.models.formats import load_mdp, load_policy, parse_proxy
from mdp_safety.models.mdp import Mdp, PolicyKind, PolicyTable, ProxySet

GAMBLER_BUFFER = """\
# walk between h1 and h2; leaving h2 passes through the buffer b
[states] h1 h2 b goal fail
[actions] a0 a1
[target] goal
[forbidden] fail
[transitions]
h1 a0 goal 0.5
h1 a0 h2 0.5
h1 a1 goal 0.5
h1 a1 h2 0.5
h2 a0 h1 0.5
h2 a0 b 0.5
h2 a1 h1 0.5
h2 a1 b 0.5
b a0 goal 1
b a1 fail 1
"""

GAMBLER_BUFFER_TARGET = """\
[policy]
h1 a0 0.5
h1 a1 0.5
h2 a0 0.5
h2 a1 0.5
b a1 1
"""

GAMBLER_BUFFER_BASELINE = """\
[policy]
b a0 0.96
b a1 0.04
"""

TWELVE_STATE = """\
# reconstruction; E = {9, 11}, U = {10, 12}, proxy set {3..8}
[states] 1 2 3 4 5 6 7 8 9 10 11 12
[actions] 1 2
[target] 9 11
[forbidden] 10 12
[transitions]
1 1 2 1
1 2 3 1
2 1 3 1
2 2 4 1
3 1 5 0.4
3 1 6 0.6
3 2 10 1
4 1 7 0.6
4 1 8 0.4
4 2 12 1
5 1 9 1
5 2 10 1
6 1 8 0.4
6 1 11 0.6
6 2 12 0.4
6 2 9 0.6
7 1 5 0.5
7 1 9 0.5
7 2 10 1
8 1 11 1
8 2 12 1
"""

TWELVE_STATE_TARGET = '[policy]\n' + ''.join(f'{x} 1 0.5\n{x} 2 0.5\n' for x in range(1, 9))
TWELVE_STATE_BASELINE = '[policy]\n' + ''.join(f'{x} 1 0.96\n{x} 2 0.04\n' for x in range(3, 9))

# published reference columns for states 1..8
TWELVE_STATE_REFERENCE = {
    'target': (0.7144, 0.7387, 0.69, 0.7875, 0.5, 0.3, 0.625, 0.5),
    'behavior': (0.0882, 0.0888, 0.0734, 0.0895, 0.04, 0.0314, 0.0592, 0.04),
    'learned_target': (0.7140, 0.7381, 0.6906, 0.7866, 0.5017, 0.3041, 0.6197, 0.4939),
    'learned_behavior': (0.0703, 0.0766, 0.0641, 0.0891, 0.0403, 0.0155, 0.0582, 0.0391),
}


@dataclass(frozen=True, eq=False)
class Instance:
    name: str
    mdp: Mdp
    target: PolicyTable
    baseline: PolicyTable
    proxy: ProxySet
    p: float


def _instance(name: str, mdp_text: str, target_text: str, baseline_text: str, proxy_text: str, p: float) -> Instance:
    mdp = load_mdp(mdp_text)
    proxy = parse_proxy(mdp, proxy_text)
    target = load_policy(target_text, mdp, mdp.taboo, PolicyKind.TARGET)
    baseline = load_policy(baseline_text, mdp, proxy.states, PolicyKind.BASELINE)
    return Instance(name=name, mdp=mdp, target=target, baseline=baseline, proxy=proxy, p=p)


def gambler_buffer() -> Instance:
    return _instance('gambler-buffer', GAMBLER_BUFFER, GAMBLER_BUFFER_TARGET, GAMBLER_BUFFER_BASELINE, 'b', 0.1)


def twelve_state() -> Instance:
    return _instance('twelve-state', TWELVE_STATE, TWELVE_STATE_TARGET, TWELVE_STATE_BASELINE, '3 4 5 6 7 8', 0.1)


INSTANCES = {'gambler-buffer': gambler_buffer, 'twelve-state': twelve_state}


def get_instance(name: str) -> Instance:
    try:
        return INSTANCES[name]()
    except KeyError:
        raise ConfigError(f'unknown instance {name!r}; choose from {", ".join(INSTANCES)}') from None
