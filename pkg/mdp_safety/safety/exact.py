"""Exact safety function and p-safety certification.

The safety function of a policy is the probability of hitting the forbidden set U
before the target set E. With kappa(x, a) = sum over y in U of p(x, a, y) it solves

    s(x) = sum_a pi(a|x) [kappa(x, a) + sum_{y in H} p(x, a, y) s(y)]    for x in H

i.e. the dense |H| x |H| system (I - P_H) s_H = b, factored by LU with partial
pivoting (LAPACK getrf through scipy).
"""
from __future__ import annotations
import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence
import numpy as np
from scipy import linalg
from mdp_safety.errors import SingularSystemError, ValidationError
from mdp_safety.models.formats import fmt
from mdp_safety.models.mdp import Mdp, PolicyTable, induced_chain

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-10
MAX_TABOO = 10_000


@dataclass(frozen=True, eq=False)
class KappaTable:
    """kappa(x, a): one-step probability of entering U from (x, a)."""
    values: np.ndarray

    def __getitem__(self, key: tuple[int, int]) -> float:
        return float(self.values[key])


def kappa(mdp: Mdp) -> KappaTable:
    forbidden = sorted(mdp.partition.forbidden)
    values = np.clip(mdp.kernel[:, :, forbidden].sum(axis=2), 0.0, 1.0)
    values.flags.writeable = False
    return KappaTable(values=values)


@dataclass(frozen=True, eq=False)
class SafetyVector:
    """Per-state safety values for one policy (exact or learned)."""
    values: np.ndarray
    policy_tag: str
    states: tuple[str, ...]
    taboo: tuple[int, ...]

    def __getitem__(self, key: int | str) -> float:
        if isinstance(key, str):
            key = self.states.index(key)
        return float(self.values[key])

    def on(self, indices: Optional[Iterable[int]] = None) -> np.ndarray:
        idx = list(self.taboo if indices is None else indices)
        return self.values[idx]

    def argmax(self, indices: Optional[Sequence[int]] = None) -> tuple[int, float]:
        """Worst state and its value; ties go to the lowest state index."""
        idx = sorted(self.taboo if indices is None else indices)
        vals = self.values[idx]
        i = int(np.argmax(vals))
        return idx[i], float(vals[i])

    def to_report(self, p: float) -> list[tuple[str, str, str, str]]:
        """(state, exact, margin, verdict) rows over H with 17-digit decimals."""
        return [
            (self.states[x], fmt(self.values[x]), fmt(p - self.values[x]), 'safe' if self.values[x] <= p else 'unsafe')
            for x in self.taboo
        ]

    def sup_error(self, other: 'SafetyVector', indices: Optional[Iterable[int]] = None) -> float:
        idx = list(self.taboo if indices is None else indices)
        if not idx:
            return 0.0
        return float(np.max(np.abs(self.values[idx] - other.values[idx])))


@dataclass(frozen=True)
class PSafetyVerdict:
    safe: bool
    p: float
    value: float
    worst_state: Optional[int]
    worst_label: Optional[str]

    @property
    def margin(self) -> float:
        return self.p - self.value

    def describe(self) -> str:
        if self.worst_state is None:
            return f'safe (no taboo states) at p={self.p}'
        verdict = 'safe' if self.safe else 'unsafe'
        return f'{verdict}: max {self.value!r} at state {self.worst_label} (p={self.p}, margin={self.margin!r})'


def trapped_states(mdp: Mdp, policy: PolicyTable) -> list[int]:
    """Taboo states with no positive-probability path into E or U under the policy."""
    support = induced_chain(mdp, policy) > 0
    reached = mdp.mask(mdp.partition.terminal)
    queue = deque(sorted(mdp.partition.terminal))
    while queue:
        y = queue.popleft()
        for x in np.flatnonzero(support[:, y]):
            if not reached[x]:
                reached[x] = True
                queue.append(int(x))
    return [x for x in mdp.taboo if not reached[x]]


def _system(mdp: Mdp, policy: PolicyTable) -> tuple[np.ndarray, np.ndarray]:
    idx = list(mdp.taboo)
    chain = induced_chain(mdp, policy)
    lhs = np.eye(len(idx)) - chain[np.ix_(idx, idx)]
    rhs = (policy.probs * kappa(mdp).values).sum(axis=1)[idx]
    return lhs, rhs


def _factor(lhs: np.ndarray):
    lu, piv = linalg.lu_factor(lhs, check_finite=False)
    pivots = np.abs(np.diag(lu))
    scale = max(1.0, float(np.max(np.abs(lhs))))
    if pivots.size and pivots.min() <= np.finfo(float).eps * lhs.shape[0] * scale:
        raise SingularSystemError('hitting-probability system is singular: episodes need not terminate')
    return lu, piv


def certify_termination(mdp: Mdp, policy: PolicyTable) -> bool:
    """True iff every taboo state reaches E or U almost surely under the policy."""
    if trapped_states(mdp, policy):
        return False
    if not mdp.taboo:
        return True
    try:
        _factor(_system(mdp, policy)[0])
    except SingularSystemError:
        return False
    return True


def bellman_residual(mdp: Mdp, policy: PolicyTable, safety: SafetyVector) -> float:
    """max over H of |s(x) - sum_a pi(a|x)[kappa(x,a) + sum_{y in H} p(x,a,y) s(y)]|."""
    if not mdp.taboo:
        return 0.0
    lhs, rhs = _system(mdp, policy)
    return float(np.max(np.abs(lhs @ safety.on() - rhs)))


def solve_safety(mdp: Mdp, policy: PolicyTable, tag: Optional[str] = None) -> SafetyVector:
    taboo = mdp.taboo
    if len(taboo) > MAX_TABOO:
        raise ValidationError(f'{len(taboo)} taboo states exceeds the dense solver cap of {MAX_TABOO}')
    uncovered = [mdp.states[x] for x in taboo if x not in policy.domain]
    if uncovered:
        raise ValidationError('policy does not cover taboo states: ' + ', '.join(uncovered))
    trapped = tuple(mdp.states[x] for x in trapped_states(mdp, policy))
    if trapped:
        raise SingularSystemError(f'episodes need not terminate; trapped state {trapped[0]}', trapped=trapped)

    values = np.zeros(mdp.n_states)
    values[sorted(mdp.partition.forbidden)] = 1.0
    if taboo:
        lhs, rhs = _system(mdp, policy)
        lu = _factor(lhs)
        sol = linalg.lu_solve(lu, rhs, check_finite=False)
        residual = float(np.max(np.abs(lhs @ sol - rhs)))
        if residual > RESIDUAL_TOLERANCE:
            sol = sol + linalg.lu_solve(lu, rhs - lhs @ sol, check_finite=False)
            residual = float(np.max(np.abs(lhs @ sol - rhs)))
        if residual > RESIDUAL_TOLERANCE:
            raise SingularSystemError(f'residual {residual:.3e} above {RESIDUAL_TOLERANCE:g} after refinement')
        logger.debug('solved %d-state system, residual %.3e', len(taboo), residual)
        values[list(taboo)] = np.clip(sol, 0.0, 1.0)
    values.flags.writeable = False
    return SafetyVector(values=values, policy_tag=tag or policy.kind.value, states=mdp.states, taboo=taboo)


def certify_p_safety(safety: SafetyVector, p: float) -> PSafetyVerdict:
    """Safe iff max over H of S(x) <= p, with no slack."""
    if not safety.taboo:
        return PSafetyVerdict(safe=True, p=p, value=0.0, worst_state=None, worst_label=None)
    worst, value = safety.argmax()
    return PSafetyVerdict(safe=value <= p, p=p, value=value, worst_state=worst, worst_label=safety.states[worst])
