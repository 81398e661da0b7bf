"""Proxy-set validation and safe-baseline certification."""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional
import numpy as np
from mdp_safety.errors import CertificationError, ConfigError, TerminationError
from mdp_safety.models.mdp import (
    Mdp, PolicyKind, PolicyTable, ProxySet, compose_behavior_policy, coverage_check,
)
from mdp_safety.safety.exact import SafetyVector, kappa, solve_safety, trapped_states

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Witness:
    """Why a proxy condition fails: a state, and for the buffer condition the offending edge."""
    condition: str
    state: str
    action: Optional[str] = None
    next_state: Optional[str] = None

    def describe(self) -> str:
        if self.condition == 'buffer':
            return (f'buffer condition violated: {self.state} --{self.action}--> {self.next_state} '
                    'reaches U without passing through the proxy set')
        return f'escape condition violated: every action at proxy state {self.state} moves into U with probability 1'


@dataclass(frozen=True, eq=False)
class ProxyCertificate:
    proxy: ProxySet
    buffer_holds: bool
    escape_holds: bool
    safe_actions: Mapping[int, frozenset[int]] = field(default_factory=dict)
    buffer_witness: Optional[Witness] = None
    escape_witness: Optional[Witness] = None

    @property
    def valid(self) -> bool:
        return self.buffer_holds and self.escape_holds

    @property
    def witness(self) -> Optional[Witness]:
        return self.buffer_witness or self.escape_witness

    def states_without_safe_action(self) -> tuple[int, ...]:
        return tuple(x for x in self.proxy.ordered() if not self.safe_actions.get(x))


def validate_proxy(mdp: Mdp, proxy: ProxySet, restrict_to: Optional[PolicyTable] = None) -> ProxyCertificate:
    """Check that U' is a one-step buffer in front of U.

    Buffer: no state of H \\ U' has a positive edge into U (over every action, or
    only the actions ``restrict_to`` plays with positive probability).
    Escape: every proxy state has some action with a positive edge outside U.
    """
    kap = kappa(mdp).values
    forbidden = sorted(mdp.partition.forbidden)
    outside_u = [y for y in range(mdp.n_states) if y not in mdp.partition.forbidden]

    buffer_witness = None
    for x in mdp.taboo:
        if x in proxy:
            continue
        for a in range(mdp.n_actions):
            if restrict_to is not None and restrict_to.probs[x, a] <= 0:
                continue
            if kap[x, a] > 0:
                y = next(u for u in forbidden if mdp.kernel[x, a, u] > 0)
                buffer_witness = Witness('buffer', mdp.states[x], mdp.actions[a], mdp.states[y])
                break
        if buffer_witness:
            break

    escape_witness = None
    safe_actions: dict[int, frozenset[int]] = {}
    for x in proxy.ordered():
        safe_actions[x] = frozenset(a for a in range(mdp.n_actions) if kap[x, a] == 0)
        escapes = (mdp.kernel[x][:, outside_u] > 0).any()
        if not escapes and escape_witness is None:
            escape_witness = Witness('escape', mdp.states[x])

    cert = ProxyCertificate(proxy=proxy, buffer_holds=buffer_witness is None, escape_holds=escape_witness is None,
                            safe_actions=safe_actions, buffer_witness=buffer_witness, escape_witness=escape_witness)
    if cert.valid:
        logger.info('proxy set of %d states satisfies the buffer and escape conditions', len(proxy))
    else:
        logger.info(cert.witness.describe())
    return cert


@dataclass(frozen=True, eq=False)
class BaselineVerdict:
    safe: bool
    p: float
    bound: float
    worst_state: Optional[int]
    worst_label: Optional[str]
    safety: SafetyVector
    behavior: PolicyTable
    coverage: bool
    certificate: ProxyCertificate

    @property
    def margin(self) -> float:
        return self.p - self.bound

    def describe(self) -> str:
        where = f' at {self.worst_label}' if self.worst_label else ''
        verdict = 'safe' if self.safe else 'NOT safe'
        return f'baseline {verdict}: max over proxy of S_behavior = {self.bound!r}{where}, p = {self.p}, margin = {self.margin!r}'


def certify_baseline(mdp: Mdp, target: PolicyTable, baseline: PolicyTable, proxy: ProxySet, p: float,
                     certificate: Optional[ProxyCertificate] = None) -> BaselineVerdict:
    """Solve S under the composed behavior policy; the bound is its max over U'.

    A valid proxy set makes that max bound S on all of H, so bound <= p certifies
    the behavior policy p-safe. An empty proxy set gives bound 0.
    """
    certificate = certificate or validate_proxy(mdp, proxy)
    if not certificate.valid:
        raise CertificationError(f'proxy set is invalid; {certificate.witness.describe()}')
    behavior = compose_behavior_policy(target, baseline, proxy, mdp)
    trapped = tuple(mdp.states[x] for x in trapped_states(mdp, behavior))
    if trapped:
        raise TerminationError(f'behavior policy does not terminate almost surely; trapped state {trapped[0]}',
                               trapped=trapped)
    safety = solve_safety(mdp, behavior, tag='behavior')
    if len(proxy):
        worst, bound = safety.argmax(proxy.ordered())
        label = mdp.states[worst]
    else:
        worst, bound, label = None, 0.0, None
    verdict = BaselineVerdict(safe=bound <= p, p=p, bound=bound, worst_state=worst, worst_label=label,
                              safety=safety, behavior=behavior,
                              coverage=coverage_check(target, baseline, proxy), certificate=certificate)
    logger.info(verdict.describe())
    return verdict


def mixture_baseline(mdp: Mdp, certificate: ProxyCertificate, q: float, rng: np.random.Generator) -> PolicyTable:
    """Put q on one uniformly chosen safe action, (1 - q)/(|A| - 1) on each other action.

    Every action keeps positive probability when q < 1, so coverage holds for any target.
    """
    if not 0.0 < q <= 1.0:
        raise ConfigError(f'mixture weight q must lie in (0, 1], got {q}')
    m = mdp.n_actions
    rows = {}
    for x in certificate.proxy.ordered():
        safe = sorted(certificate.safe_actions.get(x, ()))
        if not safe:
            raise CertificationError(f'proxy state {mdp.states[x]} has no action that avoids U')
        choice = safe[int(rng.integers(len(safe)))]
        row = np.full(m, (1.0 - q) / (m - 1)) if m > 1 else np.zeros(m)
        row[choice] = q if m > 1 else 1.0
        rows[x] = row
    return PolicyTable.build(mdp, rows, PolicyKind.BASELINE)
