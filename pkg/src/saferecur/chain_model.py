"""Core types for finite controlled Markov chains plus recurrence analysis.

Conventions used across the package:

- ``kernel[x, u, y]`` is the probability of moving to state ``y`` from state
  ``x`` under action ``u``. Rows (fixed ``x, u``) are probability vectors.
- ``action_probs[x, u]`` is the probability a policy picks action ``u`` in
  state ``x``. Rows (fixed ``x``) are probability vectors.
- All state and action indices in the Python API are 0-based. Printed
  reports and the file format are 1-based (or label-based).

A transition edge exists when its probability is strictly positive. Entries
of a closed-loop matrix produced by summation are snapped to zero below
1e-14: products of exact zeros stay zero, so anything that small can only be
rounding dust.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from . import graphs

ROW_SUM_TOL = 1e-12
CLOSED_LOOP_DUST = 1e-14


def _frozen_array(values, shape_hint: str, ndim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{shape_hint} must be {ndim}-dimensional, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ControlledChain:
    """A finite controlled Markov chain with a set of forbidden states.

    ``kernel`` has shape ``(n, m, n)``. Construction checks shapes only;
    use :func:`validate` for the full stochasticity report, so that
    malformed inputs can be inspected rather than rejected blindly.
    """

    kernel: np.ndarray
    forbidden: frozenset[int] = frozenset()

    def __post_init__(self):
        arr = _frozen_array(self.kernel, "kernel", 3)
        if arr.shape[0] != arr.shape[2]:
            raise ValueError(f"kernel must have shape (n, m, n), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("need at least one state and one action")
        object.__setattr__(self, "kernel", arr)
        object.__setattr__(self, "forbidden", frozenset(int(x) for x in self.forbidden))

    @property
    def n(self) -> int:
        return self.kernel.shape[0]

    @property
    def m(self) -> int:
        return self.kernel.shape[1]

    def equals(self, other: "ControlledChain") -> bool:
        return (
            self.kernel.shape == other.kernel.shape
            and np.array_equal(self.kernel, other.kernel)
            and self.forbidden == other.forbidden
        )


@dataclass(frozen=True, eq=False)
class Policy:
    """A memoryless time-invariant policy: one action pmf per state."""

    action_probs: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.action_probs, "action_probs", 2)
        sums = arr.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(
                f"policy row for state {bad + 1} sums to {sums[bad]!r}, expected 1"
            )
        if arr.min() < -ROW_SUM_TOL or arr.max() > 1.0 + ROW_SUM_TOL:
            raise ValueError("policy entries must lie in [0, 1]")
        object.__setattr__(self, "action_probs", arr)

    @property
    def n(self) -> int:
        return self.action_probs.shape[0]

    @property
    def m(self) -> int:
        return self.action_probs.shape[1]

    @staticmethod
    def uniform(n: int, m: int) -> "Policy":
        return Policy(np.full((n, m), 1.0 / m))

    @staticmethod
    def deterministic(choices: Iterable[int], m: int) -> "Policy":
        choices = list(choices)
        probs = np.zeros((len(choices), m))
        for x, u in enumerate(choices):
            probs[x, u] = 1.0
        return Policy(probs)

    @staticmethod
    def from_support(action_sets: Iterable[Iterable[int]], m: int) -> "Policy":
        """Uniform weights over a nonempty action subset per state."""
        rows = []
        for x, actions in enumerate(action_sets):
            actions = sorted(set(actions))
            if not actions:
                raise ValueError(f"state {x + 1} has an empty action set")
            row = np.zeros(m)
            row[actions] = 1.0 / len(actions)
            rows.append(row)
        return Policy(np.array(rows))


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """A pmf over state/action pairs.

    ``support_threshold`` is the absolute mass level below which a
    coordinate counts as zero when deriving supports. The default 0.0 means
    strict positivity.
    """

    mass: np.ndarray
    support_threshold: float = 0.0

    def __post_init__(self):
        arr = _frozen_array(self.mass, "mass", 2)
        if arr.min() < -1e-12:
            raise ValueError(f"mass has a negative entry: {arr.min()!r}")
        total = arr.sum()
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"mass sums to {total!r}, expected 1 within 1e-10")
        object.__setattr__(self, "mass", arr)

    @property
    def n(self) -> int:
        return self.mass.shape[0]

    @property
    def m(self) -> int:
        return self.mass.shape[1]

    def state_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def support_states(self) -> frozenset[int]:
        marg = self.state_marginal()
        return frozenset(int(x) for x in np.flatnonzero(marg > self.support_threshold))

    def support_pairs(self) -> frozenset[tuple[int, int]]:
        xs, us = np.nonzero(self.mass > self.support_threshold)
        return frozenset((int(x), int(u)) for x, u in zip(xs, us))


@dataclass(frozen=True, eq=False)
class ClosedLoopChain:
    """The ordinary Markov chain obtained by averaging a kernel over a policy."""

    transition: np.ndarray
    chain: ControlledChain | None = None
    policy: Policy | None = None

    def __post_init__(self):
        arr = _frozen_array(self.transition, "transition", 2)
        if arr.shape[0] != arr.shape[1]:
            raise ValueError(f"transition must be square, got {arr.shape}")
        object.__setattr__(self, "transition", arr)

    @property
    def n(self) -> int:
        return self.transition.shape[0]

    def successor_sets(self) -> list[frozenset[int]]:
        return [
            frozenset(int(y) for y in np.flatnonzero(self.transition[x] > 0))
            for x in range(self.n)
        ]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()


class RecurrentClasses(NamedTuple):
    states: frozenset[int]
    classes: tuple[frozenset[int], ...]


@dataclass(frozen=True, eq=False)
class SafeRecurrentResult:
    """A safe recurrent state set with its class partition and, per state,
    the actions that can be used without breaking safety or recurrence."""

    states: frozenset[int]
    classes: tuple[tuple[int, ...], ...]
    actions: dict[int, frozenset[int]] = field(default_factory=dict)


def validate(chain: ControlledChain) -> ValidationReport:
    """Report-style stochasticity check of a chain.

    Collects every violation instead of stopping at the first: row sums off
    by more than 1e-12 (with the offending state/action), negative or
    non-finite entries, and forbidden indices outside ``1..n``. Indices in
    the messages are 1-based.
    """
    violations: list[str] = []
    kern = chain.kernel
    if not np.isfinite(kern).all():
        violations.append("kernel contains non-finite entries")
    n, m = chain.n, chain.m
    for x in range(n):
        for u in range(m):
            row = kern[x, u]
            if row.min() < 0:
                violations.append(
                    f"negative transition probability at state {x + 1}, action {u + 1}"
                )
            s = row.sum()
            if abs(s - 1.0) > ROW_SUM_TOL:
                violations.append(
                    f"transition row for state {x + 1}, action {u + 1} sums to"
                    f" {s:.12g}, expected 1"
                )
    for f in sorted(chain.forbidden):
        if f < 0 or f >= n:
            violations.append(
                f"forbidden state {f + 1} is outside the state range 1..{n}"
            )
    return ValidationReport(ok=not violations, violations=tuple(violations))


def closed_loop(chain: ControlledChain, policy: Policy) -> ClosedLoopChain:
    """Average the kernel over the policy: one transition matrix over states."""
    if policy.action_probs.shape != (chain.n, chain.m):
        raise ValueError(
            f"policy shape {policy.action_probs.shape} does not match chain"
            f" dimensions ({chain.n}, {chain.m})"
        )
    transition = np.einsum("xuy,xu->xy", chain.kernel, policy.action_probs)
    transition[transition < CLOSED_LOOP_DUST] = 0.0
    return ClosedLoopChain(transition=transition, chain=chain, policy=policy)


def recurrent_states(closed: ClosedLoopChain) -> RecurrentClasses:
    """States that are revisited with probability one, with their classes.

    In a finite chain these are exactly the members of closed communicating
    classes, computed here as the closed strongly connected components of
    the positive-probability edge graph.
    """
    classes = graphs.closed_components(closed.successor_sets())
    class_sets = tuple(frozenset(c) for c in classes)
    states = frozenset().union(*class_sets) if class_sets else frozenset()
    return RecurrentClasses(states=states, classes=class_sets)


def safe_recurrent_states(
    closed: ClosedLoopChain, forbidden: Iterable[int]
) -> frozenset[int]:
    """Recurrent states whose class never touches the forbidden set.

    A recurrent class is closed, so a class containing any edge into a
    forbidden state contains that forbidden state too. Dropping every class
    that intersects the forbidden set therefore leaves exactly the recurrent
    states that are not forbidden and carry zero one-step probability into
    the forbidden set.
    """
    forb = frozenset(int(x) for x in forbidden)
    rec = recurrent_states(closed)
    keep = [cls for cls in rec.classes if not (cls & forb)]
    return frozenset().union(*keep) if keep else frozenset()


def simulate(
    closed: ClosedLoopChain, start: int, horizon: int, seed: int
) -> np.ndarray:
    """Sample a trajectory of ``horizon`` states, beginning at ``start``.

    Deterministic for a fixed seed: uniforms are drawn in one block from
    ``numpy.random.default_rng(seed)`` and inverted through each row's
    cumulative distribution.
    """
    n = closed.n
    if not 0 <= start < n:
        raise ValueError(f"start state {start} outside 0..{n - 1}")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng = np.random.default_rng(seed)
    draws = rng.random(horizon - 1).tolist()
    # Per-state cumulative rows, trimmed of the final 1.0 so that bisect
    # always lands on a valid index even when the draw exceeds the row sum
    # by rounding.
    cums = [closed.transition[x].cumsum()[:-1].tolist() for x in range(n)]
    path = [start]
    x = start
    for r in draws:
        x = bisect.bisect_right(cums[x], r)
        path.append(x)
    return np.asarray(path, dtype=np.int64)
