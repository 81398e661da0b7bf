from __future__ import annotations
import pytest
from mdp_safety.errors import CertificationError
from mdp_safety.harness.experiment import AuditLog, certification_chain, run_experiment
from mdp_safety.harness.reports import build_report, read_safety_csv
from mdp_safety.learning.td import LearnerConfig
from mdp_safety.learning.trace import final_rows, read_trace_csv
from mdp_safety.models.mdp import PolicyKind, PolicyTable

FILES = ('audit.log', 'config.txt', 'summary.txt', 'oracle-target.csv', 'oracle-behavior.csv',
         'run-0/trace.csv', 'run-1/trace.csv')


def _run(gambler, out, workers=1):
    learner = LearnerConfig(episodes=2000, eval_every=500)
    return run_experiment(gambler.mdp, gambler.target, gambler.baseline, gambler.proxy, 0.1, learner,
                          [0, 1], out, inputs={'instance': 'gambler-buffer'}, workers=workers)


def test_chain_order(gambler):
    audit = AuditLog()
    setup = certification_chain(gambler.mdp, gambler.target, gambler.baseline, gambler.proxy, 0.1, audit)
    assert audit.steps() == ['validate', 'coverage', 'baseline', 'termination']
    assert all('PASS' in line for line in audit.lines)
    assert setup.oracle_target['b'] == pytest.approx(1.0)
    assert setup.oracle_behavior['b'] == pytest.approx(0.04)


def test_run_directory_layout(tmp_path, gambler):
    rows = _run(gambler, tmp_path / 'out')
    for name in FILES:
        assert (tmp_path / 'out' / name).is_file(), name
    audit = (tmp_path / 'out' / 'audit.log').read_text().splitlines()
    assert [line.split()[1] for line in audit] == ['validate', 'coverage', 'baseline', 'termination', 'run-0', 'run-1']
    assert [r.seed for r in rows] == [0, 1]
    assert all(r.proxy_target_draws == 0 for r in rows)
    assert 'schedule = two-phase:0.001:1e-06' in (tmp_path / 'out' / 'config.txt').read_text()
    assert read_safety_csv(tmp_path / 'out' / 'oracle-behavior.csv')['b'] == pytest.approx(0.04)


def test_reruns_are_byte_identical(tmp_path, gambler):
    _run(gambler, tmp_path / 'a')
    _run(gambler, tmp_path / 'b')
    for name in FILES:
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes(), name


def test_worker_pool_matches_serial(tmp_path, gambler):
    _run(gambler, tmp_path / 'serial', workers=1)
    _run(gambler, tmp_path / 'pool', workers=2)
    for name in FILES:
        assert (tmp_path / 'serial' / name).read_bytes() == (tmp_path / 'pool' / name).read_bytes(), name


def test_uncovered_baseline_is_refused(tmp_path, gambler):
    b = gambler.mdp.state_index('b')
    safe_only = PolicyTable.build(gambler.mdp, {b: [1.0, 0.0]}, PolicyKind.BASELINE)
    with pytest.raises(CertificationError, match='coverage'):
        run_experiment(gambler.mdp, gambler.target, safe_only, gambler.proxy, 0.1,
                       LearnerConfig(episodes=100), [0], tmp_path / 'out')
    audit = (tmp_path / 'out' / 'audit.log').read_text()
    assert 'coverage     FAIL' in audit
    assert not (tmp_path / 'out' / 'run-0').exists()


def test_unsafe_baseline_is_refused(tmp_path, gambler):
    with pytest.raises(CertificationError):
        run_experiment(gambler.mdp, gambler.target, gambler.baseline, gambler.proxy, 0.03,
                       LearnerConfig(episodes=100), [0], tmp_path / 'out')
    assert 'baseline     FAIL' in (tmp_path / 'out' / 'audit.log').read_text()
    assert not (tmp_path / 'out' / 'summary.txt').exists()


def test_report_from_run(tmp_path, gambler):
    out = tmp_path / 'out'
    _run(gambler, out)
    text = build_report([out / 'run-0' / 'trace.csv', out / 'run-1' / 'trace.csv'],
                        out / 'oracle-target.csv', out / 'oracle-behavior.csv', tmp_path / 'report')
    assert 'run-0' in text and 'run-1' in text
    lines = (tmp_path / 'report' / 'convergence.csv').read_text().splitlines()
    assert lines[0] == 'trace,episode,sup_err_target,sup_err_behavior,unsafe_episode_frac'
    assert len(lines) == 1 + 2 * 4


def test_summary_errors_match_final_trace_rows(tmp_path, gambler):
    out = tmp_path / 'out'
    rows = _run(gambler, out)
    exact_target = read_safety_csv(out / 'oracle-target.csv')
    exact_behavior = read_safety_csv(out / 'oracle-behavior.csv')
    for summary in rows:
        last = final_rows(read_trace_csv(out / f'run-{summary.seed}' / 'trace.csv'))
        assert summary.sup_err_target == pytest.approx(max(abs(r.target - exact_target[s]) for s, r in last.items()))
        assert summary.sup_err_behavior == pytest.approx(
            max(abs(r.behavior - exact_behavior[s]) for s, r in last.items()))
