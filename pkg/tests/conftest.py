"""Shared fixtures: the eight-state demonstration chain and random instances."""

from __future__ import annotations

import numpy as np
import pytest

from saferecur import ControlledChain, Policy

# Eight states, two actions, state 4 forbidden (1-based labels; arrays are
# 0-based). The bundled data file encodes the same chain; tests/test_chainfile
# checks the two stay in sync.
EX1_ACTION1 = np.array([
    [0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0],
    [0.3, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.3],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.1, 0.3, 0.0, 0.0, 0.6],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
])
EX1_ACTION2 = np.array([
    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.2, 0.0, 0.0, 0.2, 0.0, 0.6, 0.0],
    [0.0, 0.0, 0.2, 0.8, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.9],
])

# 0-based ground truth for the demonstration chain.
EX1_SAFE_SET = frozenset({0, 1, 2, 6, 7})
EX1_CLASSES = ((0, 1, 2), (6, 7))
EX1_ADMISSIBLE = {0: {1}, 1: {0, 1}, 2: {1}, 6: {0, 1}, 7: {0}}
EX1_SUPPORT_PAIRS = frozenset(
    {(0, 1), (1, 0), (1, 1), (2, 1), (6, 0), (6, 1), (7, 0)}
)


def make_example1() -> ControlledChain:
    kernel = np.stack([EX1_ACTION1, EX1_ACTION2], axis=1)
    return ControlledChain(kernel=kernel, forbidden=frozenset({3}))


def example1_star_policy() -> Policy:
    """The synthesized policy of the demonstration chain (uniform fallback
    on the three states outside the safe set)."""
    probs = np.array([
        [0.0, 1.0],
        [0.58, 0.42],
        [0.0, 1.0],
        [0.5, 0.5],
        [0.5, 0.5],
        [0.5, 0.5],
        [0.5, 0.5],
        [1.0, 0.0],
    ])
    return Policy(probs)


@pytest.fixture
def example1() -> ControlledChain:
    return make_example1()


@pytest.fixture
def example1_policy() -> Policy:
    return example1_star_policy()


def random_chain(rng: np.random.Generator, n: int, m: int, forbidden_mode: str = "random") -> ControlledChain:
    """A random sparse chain: each row picks a branching factor, a successor
    subset, and Dirichlet weights. ``forbidden_mode`` is one of ``empty``,
    ``full``, or ``random``."""
    kernel = np.zeros((n, m, n))
    for x in range(n):
        for u in range(m):
            branching = int(rng.integers(1, n + 1))
            successors = rng.choice(n, size=branching, replace=False)
            kernel[x, u, successors] = rng.dirichlet(np.ones(branching))
    if forbidden_mode == "empty":
        forbidden = frozenset()
    elif forbidden_mode == "full":
        forbidden = frozenset(range(n))
    elif forbidden_mode == "random":
        mask = rng.random(n) < 0.25
        forbidden = frozenset(int(x) for x in np.flatnonzero(mask))
    else:
        raise ValueError(forbidden_mode)
    return ControlledChain(kernel=kernel, forbidden=forbidden)


def random_chain_batch(count: int, seed0: int = 7000):
    """Deterministic stream of (index, chain) over n in 2..6, m in {2, 3},
    cycling the forbidden-set mode through empty, full, and random."""
    combos = [(n, m) for n in range(2, 7) for m in (2, 3)]
    out = []
    for i in range(count):
        n, m = combos[i % len(combos)]
        mode = ("empty", "full", "random", "random", "random")[i % 5]
        rng = np.random.default_rng(seed0 + i)
        out.append(random_chain(rng, n, m, mode))
    return out
