"""Command-line front end (``python -m mdp_safety.cli.main``).

Typical flow:
    1. example / generate  -> write an MDP, target policy, baseline and proxy list
    2. validate            -> check the proxy set is a buffer in front of U
    3. solve               -> exact safety function and p-safety verdict
    4. learn               -> certify, then run safe off-policy TD(0) per seed
    5. report              -> compare learned traces against exact oracles

Exit codes: 0 success, 1 a domain check failed, 2 unreadable or invalid input.
"""
from __future__ import annotations
from functools import wraps
from pathlib import Path
from typing import Optional
import click
from mdp_safety.config import configure_logging
from mdp_safety.errors import MdpSafetyError, ParseError, TerminationError, ValidationError
from mdp_safety.harness import instances
from mdp_safety.harness.experiment import run_experiment
from mdp_safety.harness.generator import RandomMdpSpec, generate_instance
from mdp_safety.harness.reports import build_report, render, safety_table, write_safety_csv
from mdp_safety.learning.schedules import parse_schedule
from mdp_safety.learning.td import InitialEstimate, LearnerConfig
from mdp_safety.models.formats import dump_mdp, dump_policy, dump_proxy, fmt, load_mdp, load_policy, parse_proxy, read_text
from mdp_safety.models.mdp import Mdp, PolicyKind, PolicyTable, ProxySet, compose_behavior_policy
from mdp_safety.safety.exact import certify_p_safety, certify_termination, solve_safety, trapped_states
from mdp_safety.safety.montecarlo import monte_carlo_safety
from mdp_safety.safety.proxy import validate_proxy

FILE = click.Path(exists=True, dir_okay=False, path_type=Path)
DIR = click.Path(file_okay=False, path_type=Path)


class DomainFailure(click.ClickException):
    exit_code = 1


class InputFailure(click.ClickException):
    exit_code = 2


def exit_codes(fn):
    """Map package errors onto the exit-code contract."""
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ParseError, ValidationError, OSError) as exc:
            raise InputFailure(str(exc)) from exc
        except MdpSafetyError as exc:
            raise DomainFailure(str(exc)) from exc
    return wrapper


def _proxy(mdp: Mdp, value: str) -> ProxySet:
    """--proxy takes either a file or an inline comma/space separated list."""
    path = Path(value)
    return parse_proxy(mdp, read_text(path) if path.is_file() else value)


def _seeds(value: str) -> list[int]:
    try:
        seeds = [int(s) for s in value.replace(',', ' ').split()]
    except ValueError:
        raise click.BadParameter(f'seeds must be integers: {value!r}') from None
    if not seeds:
        raise click.BadParameter('at least one seed is required')
    return seeds


def _load_setup(mdp_path: Path, policy_path: Path, baseline_path: Path, proxy: str):
    mdp = load_mdp(read_text(mdp_path))
    proxy_states = _proxy(mdp, proxy)
    target = load_policy(read_text(policy_path), mdp, mdp.taboo, PolicyKind.TARGET)
    baseline = load_policy(read_text(baseline_path), mdp, proxy_states.states, PolicyKind.BASELINE)
    return mdp, target, baseline, proxy_states


def _write_instance(out: Path, mdp: Mdp, target: PolicyTable, baseline: PolicyTable, proxy: ProxySet,
                    header: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    comment = ''.join(f'# {line}\n' for line in header.splitlines())
    (out / 'mdp.txt').write_text(comment + dump_mdp(mdp), encoding='utf-8')
    (out / 'target.txt').write_text(dump_policy(target, header), encoding='utf-8')
    (out / 'baseline.txt').write_text(dump_policy(baseline, header), encoding='utf-8')
    (out / 'proxy.txt').write_text(dump_proxy(mdp, proxy), encoding='utf-8')


@click.group(name='verify')
def cli():
    """p-safety certification and safe off-policy learning for finite MDPs."""
    configure_logging()


@cli.command()
@click.option('--mdp', 'mdp_path', required=True, type=FILE, help='MDP document.')
@click.option('--proxy', required=True, help='Proxy states: a file, or an inline comma/space separated list.')
@click.option('--policy', 'policy_path', type=FILE, help='Only check the buffer condition for actions this policy plays.')
@exit_codes
def validate(mdp_path: Path, proxy: str, policy_path: Optional[Path]):
    """Check the proxy-set buffer and escape conditions."""
    mdp = load_mdp(read_text(mdp_path))
    proxy_states = _proxy(mdp, proxy)
    restrict = load_policy(read_text(policy_path), mdp, mdp.taboo) if policy_path else None
    cert = validate_proxy(mdp, proxy_states, restrict_to=restrict)
    click.echo(f'buffer condition {"holds" if cert.buffer_holds else "fails"}')
    click.echo(f'escape condition {"holds" if cert.escape_holds else "fails"}')
    for x in proxy_states.ordered():
        safe = ' '.join(mdp.actions[a] for a in sorted(cert.safe_actions[x])) or '-'
        click.echo(f'  {mdp.states[x]}: safe actions {safe}')
    if not cert.valid:
        raise DomainFailure(cert.witness.describe())


@cli.command()
@click.option('--mdp', 'mdp_path', required=True, type=FILE)
@click.option('--policy', 'policy_path', required=True, type=FILE, help='Policy over every taboo state.')
@click.option('--baseline', 'baseline_path', type=FILE, help='Baseline sub-policy; solve under the behavior policy.')
@click.option('--proxy', help='Proxy states (with --baseline).')
@click.option('--p', 'p', required=True, type=float, help='Safety level to certify against.')
@click.option('--out', type=click.Path(dir_okay=False, path_type=Path), help='Write state,exact,margin,verdict CSV.')
@click.option('--mc-episodes', type=int, default=0, show_default=True, help='Monte-Carlo cross-check per state.')
@click.option('--seed', type=int, default=0, show_default=True, help='Monte-Carlo seed.')
@exit_codes
def solve(mdp_path: Path, policy_path: Path, baseline_path: Optional[Path], proxy: Optional[str], p: float,
          out: Optional[Path], mc_episodes: int, seed: int):
    """Exact safety function over H and the p-safety verdict."""
    if bool(baseline_path) != bool(proxy):
        raise click.UsageError('--baseline and --proxy go together')
    mdp = load_mdp(read_text(mdp_path))
    policy = load_policy(read_text(policy_path), mdp, mdp.taboo, PolicyKind.TARGET)
    if baseline_path:
        proxy_states = _proxy(mdp, proxy)
        baseline = load_policy(read_text(baseline_path), mdp, proxy_states.states, PolicyKind.BASELINE)
        policy = compose_behavior_policy(policy, baseline, proxy_states, mdp)
    if not certify_termination(mdp, policy):
        trapped = tuple(mdp.states[x] for x in trapped_states(mdp, policy))
        where = f'; trapped state {trapped[0]}' if trapped else ''
        raise TerminationError(f'policy does not terminate almost surely{where}', trapped=trapped)
    safety = solve_safety(mdp, policy)
    verdict = certify_p_safety(safety, p)
    click.echo(render(safety_table(safety, p, title=f'Safety function ({policy.kind.value})')), nl=False)
    click.echo(verdict.describe())
    if out:
        write_safety_csv(out, safety, p)
    for x in mdp.taboo if mc_episodes > 0 else ():
        est = monte_carlo_safety(mdp, policy, x, mc_episodes, seed)
        click.echo(f'  monte-carlo {mdp.states[x]}: {est.estimate:.6f} +/- {est.half_width:.6f} (exact {safety[x]:.6f})')


@cli.command()
@click.option('--mdp', 'mdp_path', required=True, type=FILE)
@click.option('--policy', 'policy_path', required=True, type=FILE, help='Target policy over every taboo state.')
@click.option('--baseline', 'baseline_path', required=True, type=FILE, help='Baseline sub-policy over the proxy set.')
@click.option('--proxy', required=True, help='Proxy states: a file or an inline list.')
@click.option('--p', 'p', required=True, type=float)
@click.option('--episodes', required=True, type=int)
@click.option('--seeds', '--seed', 'seeds', default='0', show_default=True, help='Comma or space separated seeds.')
@click.option('--schedule', default='two-phase', show_default=True,
              help='constant:<a> | two-phase[:a0[:decay]] | harmonic[:c]')
@click.option('--init', 'init', type=click.Choice([e.value for e in InitialEstimate]), default='random', show_default=True)
@click.option('--max-steps', type=int, default=10_000, show_default=True)
@click.option('--eval-every', type=int, default=1000, show_default=True)
@click.option('--is-cap', type=float, help='Cap on importance ratios (also admits uncovered pairs).')
@click.option('--workers', type=int, help='Process fan-out for seed sweeps (default MDP_SAFETY_SWEEP_WORKERS).')
@click.option('--out', required=True, type=DIR)
@exit_codes
def learn(mdp_path: Path, policy_path: Path, baseline_path: Path, proxy: str, p: float, episodes: int, seeds: str,
          schedule: str, init: str, max_steps: int, eval_every: int, is_cap: Optional[float],
          workers: Optional[int], out: Path):
    """Certify the baseline, then learn S_pi and S_behavior with safe off-policy TD(0)."""
    mdp, target, baseline, proxy_states = _load_setup(mdp_path, policy_path, baseline_path, proxy)
    learner = LearnerConfig(episodes=episodes, max_steps_per_episode=max_steps, schedule=parse_schedule(schedule),
                            initial_estimate=InitialEstimate(init), is_ratio_cap=is_cap, eval_every=eval_every)
    inputs = {'mdp': str(mdp_path), 'policy': str(policy_path), 'baseline': str(baseline_path),
              'proxy': dump_proxy(mdp, proxy_states).strip()}
    run_experiment(mdp, target, baseline, proxy_states, p, learner, _seeds(seeds), out, inputs=inputs, workers=workers)
    click.echo((out / 'summary.txt').read_text(encoding='utf-8'), nl=False)


@cli.command()
@click.option('--n-taboo', required=True, type=int)
@click.option('--actions', 'n_actions', default=2, show_default=True, type=int)
@click.option('--leak', default=0.05, show_default=True, type=float, help='Minimum mass from each (x, a) to E.')
@click.option('--q', default=0.96, show_default=True, type=float, help='Baseline weight on the safe action.')
@click.option('--p', 'p', default=0.1, show_default=True, type=float)
@click.option('--seed', default=0, show_default=True, type=int)
@click.option('--max-attempts', default=200, show_default=True, type=int)
@click.option('--out', required=True, type=DIR)
@exit_codes
def generate(n_taboo: int, n_actions: int, leak: float, q: float, p: float, seed: int, max_attempts: int, out: Path):
    """Random instance with a valid proxy set and a baseline certified p-safe."""
    spec = RandomMdpSpec(n_taboo=n_taboo, n_actions=n_actions, leak_to_terminals=leak, q=q, p=p,
                         max_attempts=max_attempts)
    inst = generate_instance(spec, seed)
    header = (f'generated: n_taboo={n_taboo} actions={n_actions} leak={leak!r} q={q!r} p={p!r} seed={seed} '
              f'attempts={inst.attempts}')
    _write_instance(out, inst.mdp, inst.target, inst.baseline, inst.proxy, header)
    click.echo(f'wrote {out} ({inst.mdp.n_states} states, proxy {dump_proxy(inst.mdp, inst.proxy).strip()})')
    click.echo(inst.verdict.describe())


@cli.command()
@click.argument('traces', nargs=-1, type=FILE)
@click.option('--oracle', type=FILE, help='Exact S_pi CSV (state,exact,...).')
@click.option('--behavior-oracle', type=FILE, help='Exact S_behavior CSV.')
@click.option('--out', required=True, type=DIR)
@exit_codes
def report(traces: tuple[Path, ...], oracle: Optional[Path], behavior_oracle: Optional[Path], out: Path):
    """Final-estimate tables and convergence series from trace CSVs.

    With only --behavior-oracle, learned S_target is listed without errors.
    """
    if not traces:
        raise InputFailure('no trace files given')
    click.echo(build_report(list(traces), oracle, behavior_oracle, out), nl=False)


@cli.command()
@click.argument('name', type=click.Choice(sorted(instances.INSTANCES)))
@click.option('--out', required=True, type=DIR)
@exit_codes
def example(name: str, out: Path):
    """Write a shipped instance (mdp.txt, target.txt, baseline.txt, proxy.txt)."""
    inst = instances.get_instance(name)
    header = f'{name}: shipped example, certify at p={fmt(inst.p)}'
    if name == 'twelve-state':
        header += '\nreconstruction of the twelve-state example; not the published kernel'
    _write_instance(out, inst.mdp, inst.target, inst.baseline, inst.proxy, header)
    click.echo(f'wrote {name} to {out}')


if __name__ == '__main__':
    cli()
