"""Finite MDP, state partition, stationary policies and proxy sets.

States and actions are dense integer indices internally; every object keeps the
display labels so messages and files can speak in labels.
All types are immutable after construction (kernels and policy tables are
read-only numpy arrays).
"""
from __future__ import annotations
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence
import numpy as np
from mdp_safety.errors import DomainMismatchError, ValidationError

ROW_TOLERANCE = 1e-9


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Return a copy whose last-axis rows sum to exactly 1.0 under ``math.fsum``.

    Rows that already sum to 1.0 (and all-zero rows) are left bit-for-bit
    untouched, which keeps serialize/parse round-trips exact.
    """
    out = np.array(matrix, dtype=float, copy=True)
    flat = out.reshape(-1, out.shape[-1])
    for row in flat:
        total = math.fsum(row)
        if total == 0.0 or total == 1.0:
            continue
        row /= total
        top = int(np.argmax(row))
        for _ in range(8):
            residual = 1.0 - math.fsum(row)
            if residual == 0.0:
                break
            row[top] += residual
    return out


def _readonly(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Partition:
    target: frozenset[int]
    forbidden: frozenset[int]
    taboo: frozenset[int]

    @classmethod
    def from_sets(cls, n_states: int, target: Iterable[int], forbidden: Iterable[int]) -> 'Partition':
        target = frozenset(target); forbidden = frozenset(forbidden)
        taboo = frozenset(range(n_states)) - target - forbidden
        return cls(target=target, forbidden=forbidden, taboo=taboo)

    @property
    def terminal(self) -> frozenset[int]:
        return self.target | self.forbidden

    def validate(self, n_states: int, labels: Sequence[str]) -> None:
        overlap = (self.target & self.forbidden) | (self.target & self.taboo) | (self.forbidden & self.taboo)
        if overlap:
            names = ', '.join(labels[i] for i in sorted(overlap))
            raise ValidationError(f'partition sets overlap at: {names}')
        if self.target | self.forbidden | self.taboo != frozenset(range(n_states)):
            raise ValidationError('partition does not cover every state')
        if not self.target:
            raise ValidationError('target set E is empty')
        if not self.forbidden:
            raise ValidationError('forbidden set U is empty')


@dataclass(frozen=True, eq=False)
class Mdp:
    states: tuple[str, ...]
    actions: tuple[str, ...]
    kernel: np.ndarray
    partition: Partition
    _state_index: dict = field(init=False, repr=False)
    _action_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'states', tuple(self.states))
        object.__setattr__(self, 'actions', tuple(self.actions))
        object.__setattr__(self, '_state_index', _bijection(self.states, 'state'))
        object.__setattr__(self, '_action_index', _bijection(self.actions, 'action'))
        kernel = _readonly(self.kernel)
        n, m = len(self.states), len(self.actions)
        if kernel.shape != (n, m, n):
            raise ValidationError(f'kernel shape {kernel.shape} does not match ({n}, {m}, {n})')
        self.partition.validate(n, self.states)
        if (kernel < 0).any():
            x, a, y = (int(i) for i in np.argwhere(kernel < 0)[0])
            raise ValidationError(f'negative probability p({self.states[x]}, {self.actions[a]}, {self.states[y]})')
        sums = kernel.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > ROW_TOLERANCE)
        if len(bad):
            x, a = (int(i) for i in bad[0])
            raise ValidationError(f'row ({self.states[x]}, {self.actions[a]}) sums to {sums[x, a]!r}, not 1')
        for x in self.partition.terminal:
            if not np.all(kernel[x, :, x] == 1.0):
                raise ValidationError(f'terminal state {self.states[x]} is not absorbing')
        object.__setattr__(self, 'kernel', kernel)

    @classmethod
    def build(cls, states: Sequence[str], actions: Sequence[str], kernel: np.ndarray,
              target: Iterable[int], forbidden: Iterable[int]) -> 'Mdp':
        """Make terminals absorbing, renormalise rows, then validate."""
        partition = Partition.from_sets(len(states), target, forbidden)
        kernel = np.array(kernel, dtype=float, copy=True)
        for x in partition.terminal:
            kernel[x, :, :] = 0.0
            kernel[x, :, x] = 1.0
        return cls(states=tuple(states), actions=tuple(actions), kernel=normalize_rows(kernel), partition=partition)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def taboo(self) -> tuple[int, ...]:
        return tuple(sorted(self.partition.taboo))

    def mask(self, indices: Iterable[int]) -> np.ndarray:
        out = np.zeros(self.n_states, dtype=bool)
        out[list(indices)] = True
        return out

    def state_index(self, label: str) -> int:
        try:
            return self._state_index[label]
        except KeyError:
            raise ValidationError(f'unknown state label {label!r}') from None

    def action_index(self, label: str) -> int:
        try:
            return self._action_index[label]
        except KeyError:
            raise ValidationError(f'unknown action label {label!r}') from None

    def resolve_states(self, items: Iterable[int | str]) -> frozenset[int]:
        out = set()
        for item in items:
            if isinstance(item, str):
                out.add(self.state_index(item))
            elif 0 <= int(item) < self.n_states:
                out.add(int(item))
            else:
                raise ValidationError(f'state index {item} out of range')
        return frozenset(out)


def _bijection(labels: Sequence[str], what: str) -> dict[str, int]:
    index: dict[str, int] = {}
    for i, label in enumerate(labels):
        if label in index:
            raise ValidationError(f'duplicate {what} label {label!r}')
        index[label] = i
    if not index:
        raise ValidationError(f'no {what}s declared')
    return index


class PolicyKind(str, Enum):
    TARGET = 'target'
    BASELINE = 'baseline-sub-policy'
    BEHAVIOR = 'behavior'


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Stationary stochastic policy ``π(a|x)`` over ``domain``; rows outside the domain are zero."""
    domain: frozenset[int]
    probs: np.ndarray
    kind: PolicyKind
    states: tuple[str, ...]
    actions: tuple[str, ...]

    def __post_init__(self):
        probs = _readonly(self.probs)
        if probs.shape != (len(self.states), len(self.actions)):
            raise ValidationError(f'policy table shape {probs.shape} does not match the MDP')
        if (probs < 0).any():
            x, a = (int(i) for i in np.argwhere(probs < 0)[0])
            raise ValidationError(f'negative probability for ({self.states[x]}, {self.actions[a]})')
        for x in range(len(self.states)):
            total = probs[x].sum()
            if x in self.domain and abs(total - 1.0) > ROW_TOLERANCE:
                raise ValidationError(f'policy row {self.states[x]} sums to {total!r}, not 1')
            if x not in self.domain and total != 0.0:
                raise ValidationError(f'policy assigns probabilities outside its domain at {self.states[x]}')
        object.__setattr__(self, 'domain', frozenset(self.domain))
        object.__setattr__(self, 'probs', probs)

    @classmethod
    def build(cls, mdp: Mdp, rows: Mapping[int, Sequence[float]], kind: PolicyKind = PolicyKind.TARGET) -> 'PolicyTable':
        probs = np.zeros((mdp.n_states, mdp.n_actions))
        for x, row in rows.items():
            probs[x] = row
        return cls(domain=frozenset(rows), probs=normalize_rows(probs), kind=kind,
                   states=mdp.states, actions=mdp.actions)


def uniform_policy(mdp: Mdp, domain: Optional[Iterable[int]] = None, kind: PolicyKind = PolicyKind.TARGET) -> PolicyTable:
    domain = mdp.taboo if domain is None else sorted(domain)
    row = np.full(mdp.n_actions, 1.0 / mdp.n_actions)
    return PolicyTable.build(mdp, {x: row for x in domain}, kind)


@dataclass(frozen=True)
class ProxySet:
    states: frozenset[int]

    def __contains__(self, x: int) -> bool:
        return x in self.states

    def __len__(self) -> int:
        return len(self.states)

    def ordered(self) -> tuple[int, ...]:
        return tuple(sorted(self.states))


def proxy_set(mdp: Mdp, states: Iterable[int | str]) -> ProxySet:
    resolved = mdp.resolve_states(states)
    outside = resolved - mdp.partition.taboo
    if outside:
        names = ', '.join(mdp.states[x] for x in sorted(outside))
        raise ValidationError(f'proxy states must be taboo states; not in H: {names}')
    return ProxySet(states=resolved)


def compose_behavior_policy(target: PolicyTable, baseline: PolicyTable, proxy: ProxySet,
                            mdp: Optional[Mdp] = None) -> PolicyTable:
    """π on H \\ U', π^S on U'.

    Given ``mdp``, the target must also cover every taboo state.
    """
    if mdp is not None:
        uncovered = [mdp.states[x] for x in mdp.taboo if x not in target.domain]
        if uncovered:
            raise DomainMismatchError(f'target policy does not cover taboo states: {", ".join(uncovered)}')
    if baseline.domain != proxy.states:
        raise DomainMismatchError('baseline sub-policy domain differs from the proxy set')
    missing = proxy.states - target.domain
    if missing:
        names = ', '.join(target.states[x] for x in sorted(missing))
        raise DomainMismatchError(f'target policy does not cover proxy states: {names}')
    probs = np.array(target.probs, copy=True)
    for x in proxy.states:
        probs[x] = baseline.probs[x]
    return PolicyTable(domain=target.domain | proxy.states, probs=probs, kind=PolicyKind.BEHAVIOR,
                       states=target.states, actions=target.actions)


def uncovered_pairs(target: PolicyTable, baseline: PolicyTable, proxy: ProxySet) -> list[tuple[int, int]]:
    """(x', a) pairs on U' where π(a|x') > 0 but π^S(a|x') = 0."""
    idx = proxy.ordered()
    if not idx:
        return []
    rows = list(idx)
    bad = np.argwhere((target.probs[rows] > 0) & (baseline.probs[rows] <= 0))
    return [(idx[int(i)], int(a)) for i, a in bad]


def coverage_check(target: PolicyTable, baseline: PolicyTable, proxy: ProxySet) -> bool:
    return not uncovered_pairs(target, baseline, proxy)


def induced_chain(mdp: Mdp, policy: PolicyTable) -> np.ndarray:
    """p(x, y) = Σ_a π(a|x) p(x, a, y); zero rows outside the policy's domain."""
    return np.einsum('xa,xay->xy', policy.probs, mdp.kernel)
