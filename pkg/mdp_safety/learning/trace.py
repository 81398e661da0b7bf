"""Per-run diagnostics: the RunTrace, convergence reports and the trace CSV."""
from __future__ import annotations
import csv
import hashlib
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional
import numpy as np
from mdp_safety.errors import ParseError
from mdp_safety.models.formats import fmt
from mdp_safety.safety.exact import SafetyVector

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ('episode', 'state', 'S_target_est', 'S_behavior_est',
                 'sup_err_target', 'sup_err_behavior', 'unsafe_episode_frac')
TRUNCATION_WARNING = 0.5


class Outcome(IntEnum):
    HIT_E = 0
    HIT_U = 1
    TRUNCATED = 2


@dataclass(frozen=True, eq=False)
class Snapshot:
    episode: int
    target: np.ndarray
    behavior: Optional[np.ndarray]
    forbidden_hits: int

    @property
    def unsafe_frac(self) -> float:
        return self.forbidden_hits / self.episode


@dataclass(eq=False)
class RunTrace:
    states: tuple[str, ...]
    taboo: tuple[int, ...]
    proxy: tuple[int, ...]
    config: dict[str, str]
    starts: np.ndarray
    steps: np.ndarray
    outcomes: np.ndarray
    visits: np.ndarray
    target_draws: np.ndarray
    baseline_draws: np.ndarray
    entries_from_target: np.ndarray
    entries_from_baseline: np.ndarray
    snapshots: list[Snapshot] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def episodes(self) -> int:
        return int(self.outcomes.size)

    @property
    def forbidden_hits(self) -> int:
        return int(np.count_nonzero(self.outcomes == Outcome.HIT_U))

    @property
    def truncated(self) -> int:
        return int(np.count_nonzero(self.outcomes == Outcome.TRUNCATED))

    @property
    def unsafe_rate(self) -> float:
        return self.forbidden_hits / self.episodes if self.episodes else 0.0

    def proxy_target_draws(self) -> int:
        """Target-policy action draws made at proxy states (zero for a correct run)."""
        return int(self.target_draws[list(self.proxy)].sum()) if self.proxy else 0

    def check(self) -> None:
        if self.episodes and self.truncated / self.episodes > TRUNCATION_WARNING:
            msg = f'{self.truncated} of {self.episodes} episodes hit the step cap'
            self.warnings.append(msg)
            logger.warning(msg)

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for arr in (self.starts, self.steps, self.outcomes, self.target_draws, self.baseline_draws):
            digest.update(np.ascontiguousarray(arr).tobytes())
        for snap in self.snapshots:
            digest.update(snap.target.tobytes())
            if snap.behavior is not None:
                digest.update(snap.behavior.tobytes())
        return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class ConvergencePoint:
    episode: int
    target_error: np.ndarray
    sup_err_target: float
    behavior_error: Optional[np.ndarray]
    sup_err_behavior: Optional[float]
    unsafe_frac: float


def convergence_report(trace: RunTrace, oracle: SafetyVector,
                       behavior_oracle: Optional[SafetyVector] = None) -> list[ConvergencePoint]:
    """Absolute per-state and sup-norm errors over H at every snapshot."""
    idx = list(trace.taboo)
    points = []
    for snap in trace.snapshots:
        err = np.abs(snap.target[idx] - oracle.values[idx])
        b_err = None
        if behavior_oracle is not None and snap.behavior is not None:
            b_err = np.abs(snap.behavior[idx] - behavior_oracle.values[idx])
        points.append(ConvergencePoint(
            episode=snap.episode,
            target_error=err,
            sup_err_target=float(err.max()) if err.size else 0.0,
            behavior_error=b_err,
            sup_err_behavior=None if b_err is None else (float(b_err.max()) if b_err.size else 0.0),
            unsafe_frac=snap.unsafe_frac,
        ))
    return points


def _cell(value: Optional[float]) -> str:
    return '' if value is None else fmt(value)


def write_trace_csv(path: str | Path, trace: RunTrace, oracle: Optional[SafetyVector] = None,
                    behavior_oracle: Optional[SafetyVector] = None) -> None:
    report = {p.episode: p for p in convergence_report(trace, oracle, behavior_oracle)} if oracle is not None else {}
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(TRACE_COLUMNS)
        for snap in trace.snapshots:
            point = report.get(snap.episode)
            for x in trace.taboo:
                writer.writerow([
                    snap.episode, trace.states[x],
                    fmt(snap.target[x]),
                    _cell(None if snap.behavior is None else snap.behavior[x]),
                    _cell(point and point.sup_err_target),
                    _cell(point and point.sup_err_behavior),
                    fmt(snap.unsafe_frac),
                ])


@dataclass(frozen=True)
class TraceRow:
    episode: int
    state: str
    target: float
    behavior: Optional[float]
    unsafe_frac: float


def read_trace_csv(path: str | Path) -> list[TraceRow]:
    rows = []
    with open(path, newline='', encoding='utf-8') as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise ParseError(f'{path}: expected trace columns {",".join(TRACE_COLUMNS)}', 1)
        for no, rec in enumerate(reader, 2):
            if len(rec) != len(TRACE_COLUMNS):
                raise ParseError(f'{path}: expected {len(TRACE_COLUMNS)} fields, got {len(rec)}', no)
            try:
                rows.append(TraceRow(episode=int(rec[0]), state=rec[1], target=float(rec[2]),
                                     behavior=float(rec[3]) if rec[3] else None, unsafe_frac=float(rec[6])))
            except ValueError as exc:
                raise ParseError(f'{path}: {exc}', no) from None
    return rows


def final_rows(rows: list[TraceRow]) -> dict[str, TraceRow]:
    """The last snapshot's row for each state."""
    if not rows:
        return {}
    last = max(r.episode for r in rows)
    return {r.state: r for r in rows if r.episode == last}
