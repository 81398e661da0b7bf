from __future__ import annotations
from pathlib import Path
import numpy as np
import pytest
from mdp_safety.harness import instances
from mdp_safety.models.mdp import Mdp, PolicyKind, PolicyTable


@pytest.fixture
def gambler() -> instances.Instance:
    return instances.gambler_buffer()


@pytest.fixture
def twelve() -> instances.Instance:
    return instances.twelve_state()


def make_random_mdp(seed: int, n_taboo: int, n_actions: int, leak: float = 0.05) -> tuple[Mdp, PolicyTable]:
    """Random kernel where every (x, a) sends at least ``leak`` to E or U, plus a random full policy."""
    rng = np.random.default_rng(seed)
    n = n_taboo + 2
    kernel = np.zeros((n, n_actions, n))
    for x in range(n_taboo):
        for a in range(n_actions):
            out = rng.uniform(leak, 0.5)
            split = rng.uniform()
            kernel[x, a, n_taboo] = out * split
            kernel[x, a, n_taboo + 1] = out * (1 - split)
            kernel[x, a, :n_taboo] = (1 - out) * rng.dirichlet(np.ones(n_taboo))
    states = [f'h{i}' for i in range(n_taboo)] + ['e', 'u']
    actions = [f'a{i}' for i in range(n_actions)]
    mdp = Mdp.build(states, actions, kernel, target=[n_taboo], forbidden=[n_taboo + 1])
    policy = PolicyTable.build(mdp, {x: rng.dirichlet(np.ones(n_actions)) for x in range(n_taboo)}, PolicyKind.TARGET)
    return mdp, policy


@pytest.fixture
def random_mdp():
    return make_random_mdp


@pytest.fixture
def instance_dir(tmp_path: Path):
    """Write a shipped instance with the CLI file layout and return its directory."""
    from mdp_safety.cli.main import _write_instance

    def write(name: str = 'gambler-buffer') -> Path:
        inst = instances.get_instance(name)
        out = tmp_path / name
        _write_instance(out, inst.mdp, inst.target, inst.baseline, inst.proxy, name)
        return out
    return write
