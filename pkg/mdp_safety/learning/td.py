"""Tabular TD(0) for the safety function: on-policy, and safe off-policy with a proxy set.

The off-policy learner acts with the behavior policy (pi on H \\ U', the baseline
sub-policy on U') and keeps two estimates from the same episodes:

* S   tracks S_pi: at proxy states the TD error is weighted by
  rho = pi(a|x) / pi_S(a|x); elsewhere it is the plain TD(0) update.
* S_b tracks S_behavior with plain TD(0) everywhere.

The cost is c = 1 exactly when the next state lies in U; terminal estimates
stay 0. Randomness comes from ``default_rng([seed, 0])`` consumed in a fixed
order (start, then action and next state per step) so the S_b track of the
off-policy learner equals ``run_on_policy`` on the behavior policy for the
same seed. The initial estimate draws from ``default_rng([seed, 1])``.
"""
from __future__ import annotations
import logging
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional, Sequence
import numpy as np
from mdp_safety.errors import CertificationError, ConfigError, CoverageError, TerminationError, ValidationError
from mdp_safety.learning.schedules import LearningRateSchedule, TwoPhaseRate
from mdp_safety.learning.trace import Outcome, RunTrace, Snapshot
from mdp_safety.models.mdp import (
    Mdp, PolicyTable, ProxySet, compose_behavior_policy, uncovered_pairs,
)
from mdp_safety.safety.exact import SafetyVector, certify_termination, trapped_states
from mdp_safety.safety.montecarlo import cumulative
from mdp_safety.safety.proxy import BaselineVerdict, certify_baseline, validate_proxy

logger = logging.getLogger(__name__)

_UNIFORM_BLOCK = 1 << 16


class InitialEstimate(str, Enum):
    RANDOM = 'random'
    ZEROS = 'zeros'


@dataclass(frozen=True)
class LearnerConfig:
    episodes: int
    max_steps_per_episode: int = 10_000
    seed: int = 0
    schedule: LearningRateSchedule = field(default_factory=TwoPhaseRate)
    initial_estimate: InitialEstimate = InitialEstimate.RANDOM
    is_ratio_cap: Optional[float] = None
    eval_every: int = 1000

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError('episodes must be positive')
        if self.max_steps_per_episode < 1:
            raise ConfigError('max steps per episode must be positive')
        if self.eval_every < 1:
            raise ConfigError('eval_every must be positive')
        if self.seed < 0:
            raise ConfigError('seed must be non-negative')
        if self.is_ratio_cap is not None and self.is_ratio_cap <= 0:
            raise ConfigError('importance-ratio cap must be positive')
        object.__setattr__(self, 'initial_estimate', InitialEstimate(self.initial_estimate))

    def with_seed(self, seed: int) -> 'LearnerConfig':
        return replace(self, seed=seed)

    def echo(self) -> dict[str, str]:
        return {
            'episodes': str(self.episodes),
            'max_steps_per_episode': str(self.max_steps_per_episode),
            'seed': str(self.seed),
            'schedule': self.schedule.describe(),
            'initial_estimate': self.initial_estimate.value,
            'is_ratio_cap': 'none' if self.is_ratio_cap is None else repr(self.is_ratio_cap),
            'eval_every': str(self.eval_every),
        }


def step_on_policy(estimate: list[float], x: int, y: int, c: int, alpha: float) -> float:
    """S(x) <- S(x) + alpha (c + S(y) - S(x))."""
    estimate[x] += alpha * (c + estimate[y] - estimate[x])
    return estimate[x]


def step_off_policy(estimate: list[float], x: int, a: int, y: int, c: int, alpha: float, rho: float,
                    states: Optional[Sequence[str]] = None, actions: Optional[Sequence[str]] = None) -> float:
    """S(x) <- S(x) + alpha rho (c + S(y) - S(x)) for a draw of action a at proxy state x.

    ``states``/``actions`` label the (x, a) pair in the error an infinite ratio raises.
    """
    if not np.isfinite(rho):
        raise CoverageError(states[x] if states else str(x), actions[a] if actions else str(a))
    estimate[x] += alpha * rho * (c + estimate[y] - estimate[x])
    return estimate[x]


def importance_ratios(target: PolicyTable, baseline: PolicyTable, proxy: ProxySet,
                      cap: Optional[float] = None) -> np.ndarray:
    """rho(x, a) = pi(a|x) / pi_S(a|x) on proxy rows, optionally capped; zero elsewhere.

    Without a cap an uncovered pair (pi > 0, pi_S = 0) is an error. With a cap it gets
    the cap; that pair is then never drawn, so the value only documents the choice.
    """
    uncovered = uncovered_pairs(target, baseline, proxy)
    if uncovered and cap is None:
        x, a = uncovered[0]
        raise CoverageError(target.states[x], target.actions[a])
    ratios = np.zeros_like(target.probs)
    for x in proxy.ordered():
        for a in range(target.probs.shape[1]):
            pt, ps = target.probs[x, a], baseline.probs[x, a]
            if ps > 0:
                ratios[x, a] = pt / ps
            elif pt > 0:
                ratios[x, a] = np.inf
            if cap is not None:
                ratios[x, a] = min(ratios[x, a], cap)
    return ratios


def _uniforms(rng: np.random.Generator) -> Iterator[float]:
    while True:
        yield from rng.random(_UNIFORM_BLOCK).tolist()


def initial_estimate(mdp: Mdp, config: LearnerConfig) -> list[float]:
    values = [0.0] * mdp.n_states
    if config.initial_estimate is InitialEstimate.RANDOM:
        draws = np.random.default_rng([config.seed, 1]).random(len(mdp.taboo)).tolist()
        for x, u in zip(mdp.taboo, draws):
            values[x] = u
    return values


def _run(mdp: Mdp, acting: PolicyTable, config: LearnerConfig, proxy: ProxySet,
         ratios: Optional[np.ndarray], track_behavior: bool) -> tuple[list[float], Optional[list[float]], RunTrace]:
    if not config.schedule.convergent:
        logger.warning('schedule %s does not satisfy the Robbins-Monro conditions', config.schedule.describe())
    n = mdp.n_states
    taboo = list(mdp.taboo)
    n_taboo = len(taboo)
    if not n_taboo:
        raise ValidationError('taboo set is empty; there is no start state to learn from')
    action_cum = cumulative(acting.probs).tolist()
    next_cum = cumulative(mdp.kernel).tolist()
    forbidden = mdp.mask(mdp.partition.forbidden).tolist()
    terminal = mdp.mask(mdp.partition.terminal).tolist()
    in_proxy = [x in proxy for x in range(n)]
    ratio_rows = ratios.tolist() if ratios is not None else None

    estimate = initial_estimate(mdp, config)
    behavior = list(estimate) if track_behavior else None
    visits = [0] * n
    target_draws = [0] * n
    baseline_draws = [0] * n
    from_target = [0] * n
    from_baseline = [0] * n
    L, T = config.episodes, config.max_steps_per_episode
    starts = np.empty(L, dtype=np.int64)
    steps = np.empty(L, dtype=np.int64)
    outcomes = np.empty(L, dtype=np.int8)
    snapshots: list[Snapshot] = []

    draw = _uniforms(np.random.default_rng([config.seed, 0])).__next__
    rates = config.schedule.episode_rates(L)
    alpha_of = config.schedule.alpha
    hits = 0
    for k in range(1, L + 1):
        base = next(rates)
        x = taboo[min(int(draw() * n_taboo), n_taboo - 1)]
        starts[k - 1] = x
        outcome = Outcome.TRUNCATED
        t = 0
        while t < T:
            a = bisect_right(action_cum[x], draw())
            y = bisect_right(next_cum[x][a], draw())
            t += 1
            c = 1 if forbidden[y] else 0
            alpha = alpha_of(base, visits[x])
            visits[x] += 1
            off_policy = ratio_rows is not None and in_proxy[x]
            if off_policy:
                baseline_draws[x] += 1
                from_baseline[x] += c
                step_off_policy(estimate, x, a, y, c, alpha, ratio_rows[x][a], mdp.states, mdp.actions)
            else:
                target_draws[x] += 1
                from_target[x] += c
                step_on_policy(estimate, x, y, c, alpha)
            if behavior is not None:
                step_on_policy(behavior, x, y, c, alpha)
            x = y
            if terminal[y]:
                outcome = Outcome.HIT_U if c else Outcome.HIT_E
                break
        steps[k - 1] = t
        outcomes[k - 1] = outcome
        hits += outcome == Outcome.HIT_U
        if k % config.eval_every == 0 or k == L:
            snapshots.append(Snapshot(
                episode=k,
                target=np.array(estimate),
                behavior=None if behavior is None else np.array(behavior),
                forbidden_hits=int(hits),
            ))

    trace = RunTrace(
        states=mdp.states, taboo=mdp.taboo, proxy=proxy.ordered(), config=config.echo(),
        starts=starts, steps=steps, outcomes=outcomes, visits=np.array(visits),
        target_draws=np.array(target_draws), baseline_draws=np.array(baseline_draws),
        entries_from_target=np.array(from_target), entries_from_baseline=np.array(from_baseline),
        snapshots=snapshots,
    )
    trace.check()
    logger.info('%d episodes, %d hit U, %d truncated', trace.episodes, trace.forbidden_hits, trace.truncated)
    return estimate, behavior, trace


def _vector(values: list[float], mdp: Mdp, tag: str) -> SafetyVector:
    arr = np.array(values)
    arr.flags.writeable = False
    return SafetyVector(values=arr, policy_tag=tag, states=mdp.states, taboo=mdp.taboo)


@dataclass(frozen=True, eq=False)
class OffPolicyResult:
    target: SafetyVector
    behavior: SafetyVector
    trace: RunTrace
    verdict: Optional[BaselineVerdict] = None


def run_on_policy(mdp: Mdp, policy: PolicyTable, config: LearnerConfig) -> tuple[SafetyVector, RunTrace]:
    """Plain TD(0) estimate of S under ``policy``."""
    trapped = trapped_states(mdp, policy)
    if trapped or not certify_termination(mdp, policy):
        names = tuple(mdp.states[x] for x in trapped)
        raise TerminationError('policy does not terminate almost surely', trapped=names)
    estimate, _, trace = _run(mdp, policy, config, ProxySet(frozenset()), ratios=None, track_behavior=False)
    return _vector(estimate, mdp, policy.kind.value), trace


def run_algorithm1(mdp: Mdp, target: PolicyTable, baseline: PolicyTable, proxy: ProxySet,
                   config: LearnerConfig, p: Optional[float] = None) -> OffPolicyResult:
    """Safe off-policy TD(0): learn S_pi and S_behavior while acting with the behavior policy.

    With ``p`` the baseline must certify p-safe before any episode runs.
    """
    certificate = validate_proxy(mdp, proxy)
    if not certificate.valid:
        raise CertificationError(f'proxy set is invalid; {certificate.witness.describe()}')
    ratios = importance_ratios(target, baseline, proxy, cap=config.is_ratio_cap)
    behavior_policy = compose_behavior_policy(target, baseline, proxy, mdp)
    verdict = None
    if p is not None:
        verdict = certify_baseline(mdp, target, baseline, proxy, p, certificate=certificate)
        if not verdict.safe:
            raise CertificationError(verdict.describe())
    elif not certify_termination(mdp, behavior_policy):
        names = tuple(mdp.states[x] for x in trapped_states(mdp, behavior_policy))
        raise TerminationError('behavior policy does not terminate almost surely', trapped=names)
    estimate, behavior, trace = _run(mdp, behavior_policy, config, proxy, ratios=ratios, track_behavior=True)
    return OffPolicyResult(target=_vector(estimate, mdp, 'target'), behavior=_vector(behavior, mdp, 'behavior'),
                           trace=trace, verdict=verdict)
