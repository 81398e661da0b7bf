"""Learning-rate schedules for the TD learners."""
from __future__ import annotations
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar, Iterator
import numpy as np
from mdp_safety.errors import ConfigError


class LearningRateSchedule(ABC):
    """Episode-level base rate plus an optional per-state visit-count adjustment."""
    kind: ClassVar[str]
    convergent: ClassVar[bool] = True

    @abstractmethod
    def episode_rates(self, total_episodes: int) -> Iterator[float]:
        """Yield the base rate for episodes k = 1 .. total_episodes."""

    def alpha(self, base: float, visits: int) -> float:
        """Step size for an update at a state already updated ``visits`` times."""
        return base

    @abstractmethod
    def rates(self, n: int) -> np.ndarray:
        """The first n step sizes seen along one state's update sequence."""

    @abstractmethod
    def describe(self) -> str:
        ...


@dataclass(frozen=True)
class ConstantRate(LearningRateSchedule):
    """Fixed step size. Biased at the limit; kept for comparison runs."""
    value: float = 0.01
    kind: ClassVar[str] = 'constant'
    convergent: ClassVar[bool] = False

    def __post_init__(self):
        if not 0.0 < self.value <= 1.0:
            raise ConfigError(f'constant rate must lie in (0, 1], got {self.value}')

    def episode_rates(self, total_episodes: int) -> Iterator[float]:
        for _ in range(total_episodes):
            yield self.value

    def rates(self, n: int) -> np.ndarray:
        return np.full(n, self.value)

    def describe(self) -> str:
        return f'constant:{self.value!r}'


@dataclass(frozen=True)
class TwoPhaseRate(LearningRateSchedule):
    """alpha_k = alpha0 for k <= L/2, then alpha_k = alpha_{k-1} / (1 + decay * ln(k + 1))."""
    alpha0: float = 0.001
    decay: float = 1e-6
    kind: ClassVar[str] = 'two-phase'

    def __post_init__(self):
        if not 0.0 < self.alpha0 <= 1.0:
            raise ConfigError(f'alpha0 must lie in (0, 1], got {self.alpha0}')
        if self.decay < 0.0:
            raise ConfigError(f'decay must be non-negative, got {self.decay}')

    def episode_rates(self, total_episodes: int) -> Iterator[float]:
        alpha = self.alpha0
        for k in range(1, total_episodes + 1):
            if 2 * k > total_episodes:
                alpha = alpha / (1.0 + self.decay * math.log(k + 1))
            yield alpha

    def rates(self, n: int) -> np.ndarray:
        k = np.arange(1, n + 1, dtype=float)
        factors = np.where(2 * k > n, 1.0 / (1.0 + self.decay * np.log(k + 1)), 1.0)
        return self.alpha0 * np.cumprod(factors)

    def describe(self) -> str:
        return f'two-phase:{self.alpha0!r}:{self.decay!r}'


@dataclass(frozen=True)
class HarmonicRate(LearningRateSchedule):
    """alpha = c / (c + N(x)) with N(x) the number of earlier updates at x."""
    c: float = 10.0
    kind: ClassVar[str] = 'harmonic'

    def __post_init__(self):
        if self.c <= 0.0:
            raise ConfigError(f'harmonic constant must be positive, got {self.c}')

    def episode_rates(self, total_episodes: int) -> Iterator[float]:
        for _ in range(total_episodes):
            yield 1.0

    def alpha(self, base: float, visits: int) -> float:
        return self.c / (self.c + visits)

    def rates(self, n: int) -> np.ndarray:
        return self.c / (self.c + np.arange(n, dtype=float))

    def describe(self) -> str:
        return f'harmonic:{self.c!r}'


def parse_schedule(text: str) -> LearningRateSchedule:
    """``constant:<a>`` | ``two-phase[:<alpha0>[:<decay>]]`` | ``harmonic[:<c>]``."""
    kind, *params = text.strip().lower().split(':')
    try:
        values = [float(p) for p in params]
    except ValueError:
        raise ConfigError(f'schedule parameters must be numbers: {text!r}') from None
    if kind == 'constant' and len(values) == 1:
        return ConstantRate(values[0])
    if kind == 'two-phase' and len(values) <= 2:
        return TwoPhaseRate(*values)
    if kind == 'harmonic' and len(values) <= 1:
        return HarmonicRate(*values)
    raise ConfigError(f'unknown schedule {text!r}; use constant:<a>, two-phase[:a0[:decay]] or harmonic[:c]')


def robbins_monro_sums(schedule: LearningRateSchedule, n: int) -> tuple[float, float]:
    """Partial sums (sum alpha, sum alpha^2) over the first n step sizes."""
    rates = schedule.rates(n)
    return math.fsum(rates), math.fsum(rates * rates)
