"""Certified learning runs: gate the inputs, fan out over seeds, write the run directory.

Output layout::

    <out>/audit.log             ordered certification chain and per-seed outcomes
    <out>/config.txt            inputs and learner settings
    <out>/oracle-target.csv     exact S_pi (when the target policy terminates)
    <out>/oracle-behavior.csv   exact S_behavior
    <out>/summary.txt           per-seed errors and unsafety rates
    <out>/run-<seed>/trace.csv  snapshots of both estimates
"""
from __future__ import annotations
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence
from mdp_safety import config as settings
from mdp_safety.errors import CertificationError, ConfigError, TerminationError
from mdp_safety.learning.td import LearnerConfig, OffPolicyResult, run_algorithm1
from mdp_safety.learning.trace import write_trace_csv
from mdp_safety.models.formats import fmt
from mdp_safety.models.mdp import Mdp, PolicyTable, ProxySet, compose_behavior_policy, uncovered_pairs
from mdp_safety.safety.exact import SafetyVector, certify_termination, solve_safety, trapped_states
from mdp_safety.safety.proxy import BaselineVerdict, ProxyCertificate, certify_baseline, validate_proxy
from mdp_safety.harness.reports import write_safety_csv

logger = logging.getLogger(__name__)


class AuditLog:
    """Numbered, timestamp-free record of every gate and run."""

    def __init__(self):
        self.lines: list[str] = []

    def record(self, step: str, ok: bool, detail: str = '') -> None:
        line = f'{len(self.lines) + 1:02d} {step:<12} {"PASS" if ok else "FAIL"}'
        if detail:
            line += f'  {detail}'
        self.lines.append(line)
        logger.info(line)

    def steps(self) -> list[str]:
        return [line.split()[1] for line in self.lines]

    def write(self, path: Path) -> None:
        path.write_text('\n'.join(self.lines) + '\n', encoding='utf-8')


@dataclass(frozen=True, eq=False)
class CertifiedSetup:
    mdp: Mdp
    target: PolicyTable
    baseline: PolicyTable
    proxy: ProxySet
    behavior: PolicyTable
    certificate: ProxyCertificate
    verdict: BaselineVerdict
    oracle_target: Optional[SafetyVector]
    oracle_behavior: SafetyVector


def certification_chain(mdp: Mdp, target: PolicyTable, baseline: PolicyTable, proxy: ProxySet, p: float,
                        audit: AuditLog, ratio_cap: Optional[float] = None) -> CertifiedSetup:
    """validate -> coverage -> baseline -> termination; any failure stops the chain."""
    certificate = validate_proxy(mdp, proxy)
    audit.record('validate', certificate.valid,
                 f'{len(proxy)} proxy states' if certificate.valid else certificate.witness.describe())
    if not certificate.valid:
        raise CertificationError(certificate.witness.describe())

    uncovered = uncovered_pairs(target, baseline, proxy)
    covered = not uncovered or ratio_cap is not None
    detail = 'pi << pi_S on the proxy set'
    if uncovered:
        x, a = uncovered[0]
        detail = f'uncovered ({mdp.states[x]}, {mdp.actions[a]})' + (f'; ratios capped at {ratio_cap!r}' if covered else '')
    audit.record('coverage', covered, detail)
    if not covered:
        raise CertificationError(f'coverage fails: {detail}')

    try:
        verdict = certify_baseline(mdp, target, baseline, proxy, p, certificate=certificate)
    except TerminationError as exc:
        audit.record('baseline', False, str(exc))
        raise CertificationError(str(exc)) from exc
    audit.record('baseline', verdict.safe, f'bound={fmt(verdict.bound)} p={fmt(p)} margin={fmt(verdict.margin)}')
    if not verdict.safe:
        raise CertificationError(verdict.describe())

    behavior = compose_behavior_policy(target, baseline, proxy, mdp)
    terminates = certify_termination(mdp, behavior)
    audit.record('termination', terminates, 'behavior policy reaches E or U almost surely' if terminates else
                 'trapped: ' + ', '.join(mdp.states[x] for x in trapped_states(mdp, behavior)))
    if not terminates:
        raise CertificationError('behavior policy does not terminate almost surely')

    oracle_target = None
    if certify_termination(mdp, target):
        oracle_target = solve_safety(mdp, target, tag='target')
    else:
        logger.warning('target policy does not terminate; no exact oracle for S_pi')
    return CertifiedSetup(mdp=mdp, target=target, baseline=baseline, proxy=proxy, behavior=behavior,
                          certificate=certificate, verdict=verdict, oracle_target=oracle_target,
                          oracle_behavior=verdict.safety)


@dataclass(frozen=True)
class SeedSummary:
    seed: int
    episodes: int
    sup_err_target: Optional[float]
    sup_err_behavior: float
    unsafe_rate: float
    proxy_target_draws: int
    truncated: int


def _learn(args: tuple[CertifiedSetup, LearnerConfig]) -> OffPolicyResult:
    setup, learner = args
    return run_algorithm1(setup.mdp, setup.target, setup.baseline, setup.proxy, learner)


def run_seeds(setup: CertifiedSetup, learner: LearnerConfig, seeds: Sequence[int],
              workers: Optional[int] = None) -> list[OffPolicyResult]:
    """One learner run per seed, returned in seed order whatever the worker count."""
    jobs = [(setup, learner.with_seed(s)) for s in seeds]
    workers = settings.SWEEP_WORKERS if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        return [_learn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_learn, jobs))


def summarize(seed: int, result: OffPolicyResult, setup: CertifiedSetup) -> SeedSummary:
    oracle = setup.oracle_target
    return SeedSummary(
        seed=seed,
        episodes=result.trace.episodes,
        sup_err_target=None if oracle is None else result.target.sup_error(oracle),
        sup_err_behavior=result.behavior.sup_error(setup.oracle_behavior),
        unsafe_rate=result.trace.unsafe_rate,
        proxy_target_draws=result.trace.proxy_target_draws(),
        truncated=result.trace.truncated,
    )


def _summary_text(setup: CertifiedSetup, p: float, rows: list[SeedSummary]) -> str:
    v = setup.verdict
    out = [
        f'p = {fmt(p)}',
        f'baseline bound = {fmt(v.bound)} (state {v.worst_label or "-"})',
        f'margin = {fmt(v.margin)}',
        '',
        'seed episodes sup_err_target sup_err_behavior unsafe_rate proxy_target_draws truncated',
    ]
    for r in rows:
        err_t = fmt(r.sup_err_target) if r.sup_err_target is not None else 'n/a'
        out.append(f'{r.seed} {r.episodes} {err_t} {fmt(r.sup_err_behavior)} {fmt(r.unsafe_rate)} '
                   f'{r.proxy_target_draws} {r.truncated}')
    return '\n'.join(out) + '\n'


def write_config(path: Path, inputs: dict[str, str], learner: LearnerConfig, p: float, seeds: Sequence[int]) -> None:
    lines = [f'{k} = {v}' for k, v in inputs.items()]
    lines.append(f'p = {fmt(p)}')
    lines.append('seeds = ' + ' '.join(str(s) for s in seeds))
    lines += [f'{k} = {v}' for k, v in learner.echo().items() if k != 'seed']
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')


def run_experiment(mdp: Mdp, target: PolicyTable, baseline: PolicyTable, proxy: ProxySet, p: float,
                   learner: LearnerConfig, seeds: Sequence[int], out_dir: Path,
                   inputs: Optional[dict[str, str]] = None, workers: Optional[int] = None) -> list[SeedSummary]:
    """Certify, learn once per seed and write the run directory. No episode runs unless every gate passes."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f'p must lie in (0, 1), got {p}')
    if not seeds:
        raise ConfigError('at least one seed is required')
    out_dir.mkdir(parents=True, exist_ok=True)
    audit = AuditLog()
    try:
        setup = certification_chain(mdp, target, baseline, proxy, p, audit, ratio_cap=learner.is_ratio_cap)
        write_config(out_dir / 'config.txt', inputs or {}, learner, p, seeds)
        if setup.oracle_target is not None:
            write_safety_csv(out_dir / 'oracle-target.csv', setup.oracle_target, p)
        write_safety_csv(out_dir / 'oracle-behavior.csv', setup.oracle_behavior, p)

        results = run_seeds(setup, learner, seeds, workers)
        rows = []
        for seed, result in zip(seeds, results):
            run_dir = out_dir / f'run-{seed}'
            run_dir.mkdir(exist_ok=True)
            write_trace_csv(run_dir / 'trace.csv', result.trace, setup.oracle_target, setup.oracle_behavior)
            row = summarize(seed, result, setup)
            rows.append(row)
            audit.record(f'run-{seed}', row.proxy_target_draws == 0,
                         f'unsafe_rate={fmt(row.unsafe_rate)} proxy_target_draws={row.proxy_target_draws}')
        (out_dir / 'summary.txt').write_text(_summary_text(setup, p, rows), encoding='utf-8')
        return rows
    finally:
        audit.write(out_dir / 'audit.log')
