"""Monte-Carlo estimation of the safety function, used to cross-check the exact solver."""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
import numpy as np
from scipy import stats
from mdp_safety.errors import ConfigError
from mdp_safety.models.mdp import Mdp, PolicyTable

logger = logging.getLogger(__name__)

DEFAULT_HORIZON_CAP = 1_000_000
Z95 = float(stats.norm.ppf(0.975))
_BLOCK_CELLS = 1 << 22


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    half_width: float
    episodes: int
    hits: int
    truncated: int

    @property
    def completed(self) -> int:
        return self.episodes - self.truncated

    def covers(self, value: float, factor: float = 1.0) -> bool:
        return abs(self.estimate - value) <= factor * self.half_width


def cumulative(probs: np.ndarray) -> np.ndarray:
    """Cumulative sums along the last axis, pinned to exactly 1.0 from the last positive entry on.

    Sampling index i = #{j : cum[j] <= u} for u in [0, 1) then never picks a
    zero-probability entry, even when float sums fall short of 1.
    """
    probs = np.asarray(probs, dtype=float)
    cum = np.cumsum(probs, axis=-1)
    positive = probs > 0
    width = probs.shape[-1]
    last = width - 1 - np.argmax(positive[..., ::-1], axis=-1)
    pin = (np.arange(width) >= last[..., None]) & positive.any(axis=-1)[..., None]
    return np.where(pin, 1.0, cum)


def block_size(n_states: int) -> int:
    return int(max(64, min(8192, _BLOCK_CELLS // max(1, n_states))))


def monte_carlo_safety(mdp: Mdp, policy: PolicyTable, start: int | str, episodes: int, seed: int,
                       horizon_cap: int = DEFAULT_HORIZON_CAP) -> MonteCarloEstimate:
    """Fraction of episodes from ``start`` that hit U before E, with a 95% half-width.

    Episodes are simulated in blocks; block b draws from ``default_rng([seed, b])``.
    Episodes still running after ``horizon_cap`` steps are reported as truncated and
    left out of the estimate.
    """
    if episodes < 1:
        raise ConfigError('episodes must be positive')
    if horizon_cap < 1:
        raise ConfigError('horizon cap must be positive')
    x0 = mdp.state_index(start) if isinstance(start, str) else int(start)
    if x0 in mdp.partition.terminal:
        hits = episodes if x0 in mdp.partition.forbidden else 0
        return MonteCarloEstimate(estimate=hits / episodes, half_width=0.0, episodes=episodes, hits=hits, truncated=0)
    if x0 not in policy.domain:
        raise ConfigError(f'policy does not cover start state {mdp.states[x0]}')

    action_cum = cumulative(policy.probs)
    next_cum = cumulative(mdp.kernel)
    forbidden = mdp.mask(mdp.partition.forbidden)
    terminal = mdp.mask(mdp.partition.terminal)
    block = block_size(mdp.n_states)

    hits = truncated = 0
    for b, lo in enumerate(range(0, episodes, block)):
        rng = np.random.default_rng([seed, b])
        current = np.full(min(block, episodes - lo), x0)
        steps = 0
        while current.size and steps < horizon_cap:
            actions = (action_cum[current] <= rng.random(current.size)[:, None]).sum(axis=1)
            nxt = (next_cum[current, actions] <= rng.random(current.size)[:, None]).sum(axis=1)
            steps += 1
            hits += int(forbidden[nxt].sum())
            current = nxt[~terminal[nxt]]
        truncated += int(current.size)

    completed = episodes - truncated
    if truncated:
        logger.warning('%d of %d episodes from %s truncated at %d steps', truncated, episodes, mdp.states[x0], horizon_cap)
    if not completed:
        return MonteCarloEstimate(estimate=math.nan, half_width=math.inf, episodes=episodes, hits=0, truncated=truncated)
    est = hits / completed
    half = Z95 * math.sqrt(est * (1.0 - est) / completed)
    return MonteCarloEstimate(estimate=est, half_width=half, episodes=episodes, hits=hits, truncated=truncated)
