"""Line-oriented MDP / policy / proxy-list documents.

MDP document::

    [states]    s1 s2 ...
    [actions]   a1 a2 ...
    [target]    labels...
    [forbidden] labels...
    [transitions]
    <state> <action> <next-state> <prob>     # omitted triples are 0

Policy document: a ``[policy]`` section of ``<state> <action> <prob>`` lines.
'#' starts a comment anywhere on a line. Probabilities are read as decimals so
the 1e-9 row tolerance is checked on the written digits, not on binary floats.
"""
from __future__ import annotations
import re
from collections import defaultdict
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Optional
import numpy as np
from mdp_safety.errors import ParseError, ValidationError
from mdp_safety.models.mdp import (
    ROW_TOLERANCE, Mdp, PolicyKind, PolicyTable, ProxySet, proxy_set,
)

MDP_SECTIONS = ('states', 'actions', 'target', 'forbidden', 'transitions')
DIGITS = 17
_HEADER = re.compile(r'^\[([A-Za-z_]+)\]\s*(.*)$')
_TOLERANCE = Decimal(repr(ROW_TOLERANCE))


def fmt(value: float) -> str:
    """Canonical decimal: 17 significant digits (round-trips every float)."""
    return format(float(value), f'.{DIGITS}g')


def _content_lines(text: str) -> Iterable[tuple[int, str]]:
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if line:
            yield no, line


def _sections(text: str, allowed: tuple[str, ...]) -> dict[str, list[tuple[int, list[str]]]]:
    found: dict[str, list[tuple[int, list[str]]]] = {}
    current: Optional[str] = None
    for no, line in _content_lines(text):
        m = _HEADER.match(line)
        if m:
            name = m.group(1).lower()
            if name not in allowed:
                raise ParseError(f'unknown section [{name}]', no)
            if name in found:
                raise ParseError(f'section [{name}] declared twice', no)
            found[name] = []
            current = name
            rest = m.group(2).split()
            if rest:
                found[name].append((no, rest))
            continue
        if current is None:
            raise ParseError('content before the first section header', no)
        found[current].append((no, line.split()))
    return found


def _decimal(token: str, no: int) -> Decimal:
    try:
        value = Decimal(token)
    except InvalidOperation:
        raise ParseError(f'not a decimal probability: {token!r}', no) from None
    if not value.is_finite():
        raise ParseError(f'not a finite probability: {token!r}', no)
    if value < 0 or value > 1:
        raise ValidationError(f'line {no}: probability {token} outside [0, 1]')
    return value


def _labels(entries: list[tuple[int, list[str]]]) -> list[tuple[int, str]]:
    return [(no, tok) for no, toks in entries for tok in toks]


def _lookup(index: dict[str, int], label: str, what: str, no: int) -> int:
    if label not in index:
        raise ValidationError(f'line {no}: unknown {what} label {label!r}')
    return index[label]


def _index(entries: list[tuple[int, str]], what: str) -> dict[str, int]:
    index: dict[str, int] = {}
    for no, label in entries:
        if label in index:
            raise ValidationError(f'line {no}: duplicate {what} label {label!r}')
        index[label] = len(index)
    return index


def load_mdp(text: str) -> Mdp:
    sections = _sections(text, MDP_SECTIONS)
    for required in ('states', 'actions'):
        if required not in sections:
            raise ParseError(f'missing [{required}] section')
    state_ix = _index(_labels(sections['states']), 'state')
    action_ix = _index(_labels(sections['actions']), 'action')
    if not state_ix or not action_ix:
        raise ValidationError('states and actions must be nonempty')
    target = [_lookup(state_ix, lab, 'state', no) for no, lab in _labels(sections.get('target', []))]
    forbidden = [_lookup(state_ix, lab, 'state', no) for no, lab in _labels(sections.get('forbidden', []))]
    terminal = set(target) | set(forbidden)

    n, m = len(state_ix), len(action_ix)
    kernel = np.zeros((n, m, n))
    sums: dict[tuple[int, int], Decimal] = defaultdict(Decimal)
    first_line: dict[tuple[int, int], int] = {}
    seen: dict[tuple[int, int, int], int] = {}
    for no, toks in sections.get('transitions', []):
        if len(toks) != 4:
            raise ParseError(f'transition lines need 4 fields (state action next-state prob), got {len(toks)}', no)
        x = _lookup(state_ix, toks[0], 'state', no)
        a = _lookup(action_ix, toks[1], 'action', no)
        y = _lookup(state_ix, toks[2], 'state', no)
        prob = _decimal(toks[3], no)
        if (x, a, y) in seen:
            raise ValidationError(f'line {no}: transition ({toks[0]}, {toks[1]}, {toks[2]}) repeats line {seen[x, a, y]}')
        seen[x, a, y] = no
        first_line.setdefault((x, a), no)
        sums[x, a] += prob
        kernel[x, a, y] = float(prob)

    labels = list(state_ix); actions = list(action_ix)
    for x in range(n):
        if x in terminal:
            continue
        for a in range(m):
            total = sums.get((x, a), Decimal(0))
            if abs(total - 1) > _TOLERANCE:
                where = f'line {first_line[x, a]}: ' if (x, a) in first_line else ''
                raise ValidationError(f'{where}row ({labels[x]}, {actions[a]}) sums to {total}, not 1')
    return Mdp.build(labels, actions, kernel, target=target, forbidden=forbidden)


def dump_mdp(mdp: Mdp) -> str:
    part = mdp.partition
    out = [
        '[states] ' + ' '.join(mdp.states),
        '[actions] ' + ' '.join(mdp.actions),
        '[target] ' + ' '.join(mdp.states[x] for x in sorted(part.target)),
        '[forbidden] ' + ' '.join(mdp.states[x] for x in sorted(part.forbidden)),
        '[transitions]',
    ]
    for x, a, y in np.argwhere(mdp.kernel > 0):
        out.append(f'{mdp.states[x]} {mdp.actions[a]} {mdp.states[y]} {fmt(mdp.kernel[x, a, y])}')
    return '\n'.join(out) + '\n'


def load_policy(text: str, mdp: Mdp, domain: Iterable[int],
                kind: PolicyKind = PolicyKind.TARGET) -> PolicyTable:
    domain = frozenset(domain)
    sections = _sections(text, ('policy',))
    if 'policy' not in sections:
        raise ParseError('missing [policy] section')
    state_ix = {label: i for i, label in enumerate(mdp.states)}
    action_ix = {label: i for i, label in enumerate(mdp.actions)}
    rows: dict[int, np.ndarray] = {}
    sums: dict[int, Decimal] = defaultdict(Decimal)
    seen: set[tuple[int, int]] = set()
    for no, toks in sections['policy']:
        if len(toks) != 3:
            raise ParseError(f'policy lines need 3 fields (state action prob), got {len(toks)}', no)
        x = _lookup(state_ix, toks[0], 'state', no)
        a = _lookup(action_ix, toks[1], 'action', no)
        prob = _decimal(toks[2], no)
        if x not in domain:
            raise ValidationError(f'line {no}: state {toks[0]} is outside the policy domain')
        if (x, a) in seen:
            raise ValidationError(f'line {no}: duplicate entry for ({toks[0]}, {toks[1]})')
        seen.add((x, a))
        rows.setdefault(x, np.zeros(mdp.n_actions))[a] = float(prob)
        sums[x] += prob
    missing = sorted(domain - set(rows))
    if missing:
        raise ValidationError('policy is missing states: ' + ', '.join(mdp.states[x] for x in missing))
    for x in sorted(rows):
        if abs(sums[x] - 1) > _TOLERANCE:
            raise ValidationError(f'policy row {mdp.states[x]} sums to {sums[x]}, not 1')
    return PolicyTable.build(mdp, rows, kind)


def dump_policy(policy: PolicyTable, header: str = '') -> str:
    out = [f'# {line}' for line in header.splitlines()]
    out.append('[policy]')
    for x in sorted(policy.domain):
        for a in range(len(policy.actions)):
            if policy.probs[x, a] > 0:
                out.append(f'{policy.states[x]} {policy.actions[a]} {fmt(policy.probs[x, a])}')
    return '\n'.join(out) + '\n'


def parse_proxy(mdp: Mdp, text: str) -> ProxySet:
    labels = []
    for _, line in _content_lines(text):
        labels.extend(line.replace(',', ' ').split())
    return proxy_set(mdp, labels)


def dump_proxy(mdp: Mdp, proxy: ProxySet) -> str:
    return ' '.join(mdp.states[x] for x in proxy.ordered()) + '\n'


def read_text(path: str | Path) -> str:
    return Path(path).read_text(encoding='utf-8')
