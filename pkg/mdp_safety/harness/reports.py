"""Safety CSVs, comparison tables and convergence summaries."""
from __future__ import annotations
import csv
import io
from pathlib import Path
from typing import Optional, Sequence
from rich.console import Console
from rich.table import Table
from mdp_safety.errors import ConfigError, ParseError
from mdp_safety.learning.trace import TraceRow, final_rows, read_trace_csv
from mdp_safety.models.formats import fmt
from mdp_safety.safety.exact import SafetyVector

SAFETY_COLUMNS = ('state', 'exact', 'margin', 'verdict')
CONVERGENCE_COLUMNS = ('trace', 'episode', 'sup_err_target', 'sup_err_behavior', 'unsafe_episode_frac')
_WIDTH = 110


def write_safety_csv(path: str | Path, safety: SafetyVector, p: float) -> None:
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(SAFETY_COLUMNS)
        writer.writerows(safety.to_report(p))


def read_safety_csv(path: str | Path) -> dict[str, float]:
    out: dict[str, float] = {}
    with open(path, newline='', encoding='utf-8') as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:2]) != SAFETY_COLUMNS[:2]:
            raise ParseError(f'{path}: expected columns starting with state,exact', 1)
        for no, rec in enumerate(reader, 2):
            try:
                out[rec[0]] = float(rec[1])
            except (IndexError, ValueError):
                raise ParseError(f'{path}: malformed row {rec!r}', no) from None
    return out


def render(table: Table) -> str:
    """Plain-text rendering with a fixed width (no colour) for files."""
    buf = io.StringIO()
    Console(file=buf, width=_WIDTH, color_system=None, force_terminal=False).print(table)
    return buf.getvalue()


def safety_table(safety: SafetyVector, p: float, title: str = 'Safety function') -> Table:
    table = Table(title=title)
    for col in ('State', 'S', 'p - S', 'Verdict'):
        table.add_column(col, justify='right' if col != 'Verdict' else 'left')
    for state, exact, margin, verdict in safety.to_report(p):
        table.add_row(state, exact, margin, verdict)
    return table


def _require_states(name: str, states: Sequence[str], oracle: Optional[dict[str, float]], label: str) -> None:
    if oracle is None:
        return
    missing = [s for s in states if s not in oracle]
    if missing:
        raise ParseError(f'{name}: states {", ".join(missing)} are not in the {label} oracle')


def comparison_table(states: Sequence[str], learned_target: dict[str, float],
                     exact_target: Optional[dict[str, float]] = None,
                     exact_behavior: Optional[dict[str, float]] = None,
                     learned_behavior: Optional[dict[str, float]] = None,
                     title: str = 'Exact vs learned safety') -> Table:
    """State | exact S_pi | learned S | exact S_behavior | learned S_b, four decimals.

    Without an exact S_pi the learned S column is shown alone, with no error column.
    """
    table = Table(title=title)
    table.add_column('State')
    if exact_target is not None:
        table.add_column('S_target', justify='right')
    table.add_column('S_learned', justify='right')
    if exact_target is not None:
        table.add_column('|err|', justify='right')
    with_behavior = exact_behavior is not None and learned_behavior is not None
    if with_behavior:
        table.add_column('S_behavior', justify='right')
        table.add_column('S_b_learned', justify='right')
        table.add_column('|err_b|', justify='right')
    for s in states:
        row = [s]
        if exact_target is not None:
            row += [f'{exact_target[s]:.4f}', f'{learned_target[s]:.4f}', f'{abs(exact_target[s] - learned_target[s]):.4f}']
        else:
            row.append(f'{learned_target[s]:.4f}')
        if with_behavior:
            row += [f'{exact_behavior[s]:.4f}', f'{learned_behavior[s]:.4f}',
                    f'{abs(exact_behavior[s] - learned_behavior[s]):.4f}']
        table.add_row(*row)
    return table


def convergence_rows(name: str, rows: list[TraceRow], exact_target: Optional[dict[str, float]],
                     exact_behavior: Optional[dict[str, float]] = None) -> list[list[str]]:
    """Sup-norm errors and unsafe-episode fraction per snapshot, recomputed against the given oracles.

    A missing oracle leaves its error column empty.
    """
    by_episode: dict[int, list[TraceRow]] = {}
    for r in rows:
        by_episode.setdefault(r.episode, []).append(r)
    out = []
    for episode in sorted(by_episode):
        snap = by_episode[episode]
        states = [r.state for r in snap]
        _require_states(name, states, exact_target, 'target')
        _require_states(name, states, exact_behavior, 'behavior')
        sup_t = '' if exact_target is None else fmt(max(abs(r.target - exact_target[r.state]) for r in snap))
        sup_b = ''
        if exact_behavior is not None and all(r.behavior is not None for r in snap):
            sup_b = fmt(max(abs(r.behavior - exact_behavior[r.state]) for r in snap))
        out.append([name, str(episode), sup_t, sup_b, fmt(snap[0].unsafe_frac)])
    return out


def build_report(trace_paths: Sequence[Path], oracle_path: Optional[Path], behavior_oracle_path: Optional[Path],
                 out_dir: Path) -> str:
    """Write convergence.csv and report.txt under out_dir; return the report text.

    At least one oracle is required. With only the behavior oracle the target
    estimates are listed but not scored, and the report says so.
    """
    if oracle_path is None and behavior_oracle_path is None:
        raise ConfigError('report needs --oracle, --behavior-oracle or both')
    exact_target = read_safety_csv(oracle_path) if oracle_path else None
    exact_behavior = read_safety_csv(behavior_oracle_path) if behavior_oracle_path else None
    out_dir.mkdir(parents=True, exist_ok=True)
    sections = []
    if exact_target is None:
        sections.append('no exact S_target oracle: learned S_target is listed without errors\n')
    with open(out_dir / 'convergence.csv', 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(CONVERGENCE_COLUMNS)
        for path in trace_paths:
            name = Path(path).parent.name or Path(path).stem
            rows = read_trace_csv(path)
            writer.writerows(convergence_rows(name, rows, exact_target, exact_behavior))
            last = final_rows(rows)
            states = list(last)
            learned_b = None
            if exact_behavior is not None and all(r.behavior is not None for r in last.values()):
                learned_b = {s: r.behavior for s, r in last.items()}
            table = comparison_table(states, {s: r.target for s, r in last.items()}, exact_target,
                                     exact_behavior if learned_b else None, learned_b, title=name)
            sections.append(render(table))
    text = '\n'.join(sections)
    (out_dir / 'report.txt').write_text(text, encoding='utf-8')
    return text
