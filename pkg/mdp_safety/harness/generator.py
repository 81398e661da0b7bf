"""Seeded random instances that satisfy the proxy conditions and certify at p."""
from __future__ import annotations
import logging
from dataclasses import dataclass
import numpy as np
from mdp_safety.errors import ConfigError, GenerationError, MdpSafetyError
from mdp_safety.models.mdp import Mdp, PolicyTable, ProxySet, uniform_policy
from mdp_safety.safety.proxy import BaselineVerdict, ProxyCertificate, certify_baseline, mixture_baseline, validate_proxy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RandomMdpSpec:
    n_taboo: int
    n_actions: int = 2
    n_target: int = 1
    n_forbidden: int = 1
    leak_to_terminals: float = 0.05
    unsafe_edge_prob: float = 0.3
    q: float = 0.96
    p: float = 0.1
    max_attempts: int = 200

    def __post_init__(self):
        if self.n_taboo < 1:
            raise ConfigError('need at least one taboo state')
        if self.n_actions < 2:
            raise ConfigError('need at least two actions')
        if self.n_target < 1 or self.n_forbidden < 1:
            raise ConfigError('E and U must be nonempty')
        if not 0.05 <= self.leak_to_terminals < 1.0:
            raise ConfigError('leak to terminals must lie in [0.05, 1)')
        if not 0.0 <= self.unsafe_edge_prob <= 1.0:
            raise ConfigError('unsafe edge probability must lie in [0, 1]')
        if not 0.0 < self.q <= 1.0:
            raise ConfigError('q must lie in (0, 1]')
        if not 0.0 < self.p < 1.0:
            raise ConfigError('p must lie in (0, 1)')
        if self.max_attempts < 1:
            raise ConfigError('max attempts must be positive')


@dataclass(frozen=True, eq=False)
class GeneratedInstance:
    spec: RandomMdpSpec
    seed: int
    attempts: int
    mdp: Mdp
    target: PolicyTable
    baseline: PolicyTable
    proxy: ProxySet
    certificate: ProxyCertificate
    verdict: BaselineVerdict


def _random_kernel(spec: RandomMdpSpec, rng: np.random.Generator) -> tuple[np.ndarray, list[int], list[int]]:
    h, m = spec.n_taboo, spec.n_actions
    n = h + spec.n_target + spec.n_forbidden
    target = list(range(h, h + spec.n_target))
    forbidden = list(range(h + spec.n_target, n))
    kernel = np.zeros((n, m, n))
    leak_hi = min(1.0, spec.leak_to_terminals + 0.3)
    for x in range(h):
        for a in range(m):
            leak = rng.uniform(spec.leak_to_terminals, leak_hi)
            unsafe = rng.uniform(0.05, 0.5) if rng.random() < spec.unsafe_edge_prob else 0.0
            unsafe = min(unsafe, 1.0 - leak)
            rest = 1.0 - leak - unsafe
            kernel[x, a, target] = leak * rng.dirichlet(np.ones(spec.n_target))
            if unsafe > 0:
                kernel[x, a, forbidden] = unsafe * rng.dirichlet(np.ones(spec.n_forbidden))
            support = rng.choice(h, size=int(rng.integers(1, min(3, h) + 1)), replace=False)
            kernel[x, a, support] += rest * rng.dirichlet(np.ones(support.size))
    if not kernel[:h][:, :, forbidden].any():
        x, a = int(rng.integers(h)), int(rng.integers(m))
        donors = list(range(h)) if kernel[x, a, :h].any() else target
        moved = 0.5 * kernel[x, a, donors]
        kernel[x, a, donors] -= moved
        kernel[x, a, forbidden] += moved.sum() / len(forbidden)
    # buffer: one action at each U-adjacent state is rerouted from U to E
    for x in range(h):
        risk = kernel[x][:, forbidden].sum(axis=1)
        if risk.any() and (risk > 0).all():
            a = int(rng.integers(m))
            kernel[x, a, target] += kernel[x, a, forbidden].sum() / len(target)
            kernel[x, a, forbidden] = 0.0
    return kernel, target, forbidden


def _attempt(spec: RandomMdpSpec, seed: int, attempt: int) -> GeneratedInstance:
    rng = np.random.default_rng([seed, attempt])
    kernel, target, forbidden = _random_kernel(spec, rng)
    states = [f'h{i + 1}' for i in range(spec.n_taboo)]
    states += [f'e{i + 1}' for i in range(spec.n_target)]
    states += [f'u{i + 1}' for i in range(spec.n_forbidden)]
    actions = [f'a{i}' for i in range(spec.n_actions)]
    mdp = Mdp.build(states, actions, kernel, target=target, forbidden=forbidden)
    proxy = ProxySet(frozenset(x for x in range(spec.n_taboo) if kernel[x][:, forbidden].any()))
    certificate = validate_proxy(mdp, proxy)
    if not certificate.valid:
        raise GenerationError(f'generated proxy set is invalid: {certificate.witness.describe()}')
    baseline = mixture_baseline(mdp, certificate, spec.q, rng)
    policy = uniform_policy(mdp)
    verdict = certify_baseline(mdp, policy, baseline, proxy, spec.p, certificate=certificate)
    return GeneratedInstance(spec=spec, seed=seed, attempts=attempt + 1, mdp=mdp, target=policy,
                             baseline=baseline, proxy=proxy, certificate=certificate, verdict=verdict)


def generate_instance(spec: RandomMdpSpec, seed: int) -> GeneratedInstance:
    """Rejection-sample ``[seed, attempt]`` until the baseline certifies p-safe."""
    last = None
    for attempt in range(spec.max_attempts):
        try:
            inst = _attempt(spec, seed, attempt)
        except MdpSafetyError as exc:
            last = str(exc)
            logger.debug('seed %d attempt %d rejected: %s', seed, attempt, exc)
            continue
        if inst.verdict.safe:
            logger.info('seed %d accepted after %d attempt(s); bound %.6g', seed, inst.attempts, inst.verdict.bound)
            return inst
        last = inst.verdict.describe()
    raise GenerationError(f'no certifiable instance for seed {seed} in {spec.max_attempts} attempts; last: {last}')
