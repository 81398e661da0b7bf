"""Prefect flows for end-to-end runs.

Flows:
  reproduce_example: example -> validate -> solve (target, behavior) -> learn -> report
  generated_sweep:   generate -> validate -> learn -> report

To run locally (ephemeral):
  python -m orchestration.flows reproduce-example --out runs/gambler
  python -m orchestration.flows generated-sweep --out runs/gen --n-taboo 8
"""
from __future__ import annotations
import subprocess
from pathlib import Path
from prefect import flow, task

PY = ['python', '-m', 'mdp_safety.cli.main']


def _instance_args(inst: Path) -> list[str]:
    return ['--mdp', str(inst / 'mdp.txt'), '--policy', str(inst / 'target.txt')]


@task
def write_example(name: str, inst: Path):
    subprocess.run(PY + ['example', name, '--out', str(inst)], check=True)


@task
def generate(inst: Path, n_taboo: int, n_actions: int, p: float, seed: int):
    subprocess.run(PY + ['generate', '--n-taboo', str(n_taboo), '--actions', str(n_actions), '--p', repr(p),
                         '--seed', str(seed), '--out', str(inst)], check=True)


@task
def validate(inst: Path):
    subprocess.run(PY + ['validate', '--mdp', str(inst / 'mdp.txt'), '--proxy', str(inst / 'proxy.txt')], check=True)


@task
def solve(inst: Path, p: float, out_csv: Path, behavior: bool = False):
    args = PY + ['solve'] + _instance_args(inst) + ['--p', repr(p), '--out', str(out_csv)]
    if behavior:
        args += ['--baseline', str(inst / 'baseline.txt'), '--proxy', str(inst / 'proxy.txt')]
    subprocess.run(args, check=True)


@task
def learn(inst: Path, p: float, episodes: int, seeds: str, out: Path):
    subprocess.run(PY + ['learn'] + _instance_args(inst) + [
        '--baseline', str(inst / 'baseline.txt'), '--proxy', str(inst / 'proxy.txt'),
        '--p', repr(p), '--episodes', str(episodes), '--seeds', seeds, '--out', str(out)], check=True)


@task
def report(run: Path, seeds: str, out: Path):
    traces = [str(run / f'run-{s}' / 'trace.csv') for s in seeds.replace(',', ' ').split()]
    oracles = ['--behavior-oracle', str(run / 'oracle-behavior.csv')]
    # absent when the target policy does not terminate
    target_oracle = run / 'oracle-target.csv'
    if target_oracle.exists():
        oracles += ['--oracle', str(target_oracle)]
    subprocess.run(PY + ['report', *traces, *oracles, '--out', str(out)], check=True)


@flow(name='reproduce_example')
def reproduce_example(out: str, name: str = 'gambler-buffer', p: float = 0.1, episodes: int = 100_000,
                      seeds: str = '0,1,2'):
    root = Path(out)
    inst = root / 'instance'
    write_example(name, inst)
    validate(inst)
    solve(inst, p, root / 'exact-target.csv')
    solve(inst, p, root / 'exact-behavior.csv', behavior=True)
    learn(inst, p, episodes, seeds, root / 'learn')
    report(root / 'learn', seeds, root / 'report')


@flow(name='generated_sweep')
def generated_sweep(out: str, n_taboo: int = 8, n_actions: int = 2, p: float = 0.1, seed: int = 0,
                    episodes: int = 100_000, seeds: str = '0,1,2'):
    root = Path(out)
    inst = root / 'instance'
    generate(inst, n_taboo, n_actions, p, seed)
    validate(inst)
    learn(inst, p, episodes, seeds, root / 'learn')
    report(root / 'learn', seeds, root / 'report')


if __name__ == '__main__':
    import argparse
    ap = argparse.ArgumentParser()
    ap.add_argument('command', choices=['reproduce-example', 'generated-sweep'])
    ap.add_argument('--out', required=True)
    ap.add_argument('--name', default='gambler-buffer')
    ap.add_argument('--n-taboo', type=int, default=8)
    ap.add_argument('--seed', type=int, default=0)
    ap.add_argument('--seeds', default='0,1,2')
    ap.add_argument('--episodes', type=int, default=100_000)
    args = ap.parse_args()
    if args.command == 'reproduce-example':
        reproduce_example(out=args.out, name=args.name, episodes=args.episodes, seeds=args.seeds)
    else:
        generated_sweep(out=args.out, n_taboo=args.n_taboo, seed=args.seed, episodes=args.episodes, seeds=args.seeds)
