"""Runtime settings.

Only knobs that cannot change a numerical result live here; everything that does
(files, seeds, p, schedules, episode counts) is an explicit CLI flag.
"""
from __future__ import annotations
import logging
import os
from pathlib import Path
from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler

load_dotenv(dotenv_path=Path('.') / '.env', override=False)

LOG_LEVEL = os.getenv('MDP_SAFETY_LOG_LEVEL', 'WARNING').upper()
SWEEP_WORKERS = max(1, int(os.getenv('MDP_SAFETY_SWEEP_WORKERS', '1')))

_configured = False


def configure_logging(level: str | None = None) -> None:
    global _configured
    if _configured:
        return
    logging.basicConfig(
        level=level or LOG_LEVEL,
        format='%(message)s',
        datefmt='[%X]',
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=True, show_path=False)],
    )
    _configured = True
