"""Exact, solver-independent computations of the maximal safe recurrent set.

Two independent routes are provided so the numeric solver can be checked
against ground truth:

- :func:`brute_force_safe_recurrent` enumerates every support selection
  (one nonempty action subset per state) and unions the safe recurrent
  states of the induced closed loops. Which states are recurrent and safe
  depends only on which policy entries are positive, so the selections with
  uniform weights cover every randomized policy. Exponential, but honest.
- :func:`mec_decomposition` computes the same set in polynomial time by
  pruning the safe state/action pairs to closed strongly connected classes.

The enumeration works on per-state successor bitmasks with its own Tarjan
pass, so it shares no analysis code with the pruning route.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import graphs
from .chain_model import ControlledChain, JointDistribution, Policy, SafeRecurrentResult, closed_loop

DEFAULT_ENUMERATION_CAP = 10_000_000


class EnumerationCapError(RuntimeError):
    """The selection space is too large to enumerate; use mec_decomposition."""


@dataclass(frozen=True)
class SupportSelection:
    """One nonempty admissible action subset per state.

    The canonical representative of a randomized policy's zero pattern:
    recurrence and safety of the closed loop depend only on this pattern.
    """

    actions: tuple[frozenset[int], ...]

    def __post_init__(self):
        acts = tuple(frozenset(int(u) for u in a) for a in self.actions)
        if any(not a for a in acts):
            raise ValueError("every state needs at least one action")
        object.__setattr__(self, "actions", acts)

    def as_policy(self, m: int) -> Policy:
        return Policy.from_support(self.actions, m)


def iter_support_selections(n: int, m: int) -> Iterator[SupportSelection]:
    """All (2^m - 1)^n support selections, in a fixed deterministic order."""
    subsets = [
        frozenset(a for a in range(m) if mask & (1 << a))
        for mask in range(1, 2**m)
    ]
    for combo in itertools.product(subsets, repeat=n):
        yield SupportSelection(actions=combo)


def _successor_bitmasks(chain: ControlledChain) -> list[list[int]]:
    masks = []
    for x in range(chain.n):
        row_masks = []
        for u in range(chain.m):
            mask = 0
            for y in np.flatnonzero(chain.kernel[x, u]):
                mask |= 1 << int(y)
            row_masks.append(mask)
        masks.append(row_masks)
    return masks


def _scc_masks(adj: Sequence[int], n: int) -> list[int]:
    """Tarjan over bitmask adjacency; returns one bitmask per component."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    out: list[int] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        frames = [[root, adj[root]]]
        while frames:
            frame = frames[-1]
            v = frame[0]
            if frame[1]:
                w_bit = frame[1] & -frame[1]
                frame[1] &= frame[1] - 1
                w = w_bit.bit_length() - 1
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    frames.append([w, adj[w]])
                elif on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
            else:
                frames.pop()
                if frames and low[v] < low[frames[-1][0]]:
                    low[frames[-1][0]] = low[v]
                if low[v] == index[v]:
                    mask = 0
                    while True:
                        w = stack.pop()
                        on_stack[w] = False
                        mask |= 1 << w
                        if w == v:
                            break
                    out.append(mask)
    return out


def _closed_safe_mask(adj: Sequence[int], n: int, forbidden_mask: int) -> int:
    """Union of closed components that avoid the forbidden set, as a bitmask."""
    acc = 0
    for comp in _scc_masks(adj, n):
        if comp & forbidden_mask:
            continue
        rest = comp
        closed = True
        while rest:
            v_bit = rest & -rest
            rest &= rest - 1
            if adj[v_bit.bit_length() - 1] & ~comp:
                closed = False
                break
        if closed:
            acc |= comp
    return acc


def safe_recurrent_under_selection(
    chain: ControlledChain, selection: SupportSelection | Sequence[Iterable[int]]
) -> frozenset[int]:
    """Safe recurrent states of the closed loop induced by a support selection."""
    actions = (
        selection.actions if isinstance(selection, SupportSelection) else selection
    )
    masks = _successor_bitmasks(chain)
    adj = []
    for x in range(chain.n):
        mask = 0
        for u in actions[x]:
            mask |= masks[x][u]
        adj.append(mask)
    forbidden_mask = sum(1 << x for x in chain.forbidden)
    acc = _closed_safe_mask(adj, chain.n, forbidden_mask)
    return frozenset(x for x in range(chain.n) if acc & (1 << x))


def brute_force_safe_recurrent(
    chain: ControlledChain,
    cap: int = DEFAULT_ENUMERATION_CAP,
    shard: tuple[int, int] | None = None,
) -> frozenset[int]:
    """Union of safe recurrent states over every support selection.

    Refuses with :class:`EnumerationCapError` when (2^m - 1)^n exceeds
    ``cap``. ``shard=(i, k)`` restricts the enumeration to every k-th
    selection starting at offset i; unioning the results of any complete
    shard family equals the unsharded result, which is also the contract
    that makes parallel partitioning safe.
    """
    n, m = chain.n, chain.m
    total = (2**m - 1) ** n
    if total > cap:
        raise EnumerationCapError(
            f"{total} support selections exceed the enumeration cap {cap};"
            " use mec_decomposition instead"
        )
    masks = _successor_bitmasks(chain)
    # Pre-merge each state's action subsets into successor masks, deduplicated:
    # distinct subsets with identical reachable sets induce identical loops.
    per_state: list[list[int]] = []
    for x in range(n):
        merged = []
        for subset_mask in range(1, 2**m):
            mask = 0
            for u in range(m):
                if subset_mask & (1 << u):
                    mask |= masks[x][u]
            merged.append(mask)
        per_state.append(sorted(set(merged)))
    forbidden_mask = sum(1 << x for x in chain.forbidden)
    full_mask = (1 << n) - 1
    best_possible = full_mask & ~forbidden_mask
    acc = 0
    cache: dict[tuple[int, ...], int] = {}
    combos = itertools.product(*per_state)
    if shard is not None:
        offset, step = shard
        if step < 1 or not 0 <= offset < step:
            raise ValueError(f"invalid shard {shard}")
        combos = itertools.islice(combos, offset, None, step)
    for combo in combos:
        hit = cache.get(combo)
        if hit is None:
            hit = _closed_safe_mask(combo, n, forbidden_mask)
            cache[combo] = hit
        acc |= hit
        if acc == best_possible:
            break
    return frozenset(x for x in range(n) if acc & (1 << x))


def mec_decomposition(chain: ControlledChain) -> SafeRecurrentResult:
    """Maximal safe recurrent set in polynomial time, with certificates.

    Start from the safe pairs (state not forbidden, action row carries zero
    mass into the forbidden set) and delete, to a fixed point, every pair
    whose successors leave the strongly connected component of its state and
    every state without remaining pairs. What survives is the maximal safe
    recurrent set, its partition into closed classes, and for each state the
    admissible actions.
    """
    n, m = chain.n, chain.m
    candidates: list[dict[int, frozenset[int]]] = []
    for x in range(n):
        candidates.append(
            {
                u: frozenset(int(y) for y in np.flatnonzero(chain.kernel[x, u]))
                for u in range(m)
            }
        )
    kept, classes = graphs.prune_to_closed_pairs(candidates, chain.forbidden)
    actions = {x: frozenset(kept[x]) for x in range(n) if kept[x]}
    return SafeRecurrentResult(
        states=frozenset(actions),
        classes=tuple(classes),
        actions=actions,
    )


def feasible_point_from_policy(
    chain: ControlledChain,
    policy: Policy,
    class_states: Iterable[int],
) -> JointDistribution:
    """Invariant joint pmf of a policy restricted to one safe recurrent class.

    Solves the stationary linear system of the closed loop on the class and
    splits each state's stationary mass across actions by the policy. The
    result satisfies the stationarity and forbidden-mass constraints of the
    entropy program, which makes it a ready-made feasible point.
    """
    cls = sorted(set(int(x) for x in class_states))
    if not cls:
        raise ValueError("class must be nonempty")
    if chain.forbidden & set(cls):
        raise ValueError("class intersects the forbidden set")
    closed = closed_loop(chain, policy)
    inside = np.zeros(chain.n, dtype=bool)
    inside[cls] = True
    for x in cls:
        leak = closed.transition[x][~inside].sum()
        if leak > 0:
            raise ValueError(
                f"class is not closed under the policy: state {x + 1} leaks"
                f" probability {leak:.3g} outside"
            )
    sub = closed.transition[np.ix_(cls, cls)]
    comp = graphs.tarjan_scc(
        [list(np.flatnonzero(sub[i] > 0)) for i in range(len(cls))]
    )
    if len(comp) != 1:
        raise ValueError("class is not a single recurrent class under the policy")
    k = len(cls)
    system = np.vstack([sub.T - np.eye(k), np.ones((1, k))])
    rhs = np.zeros(k + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(system, rhs, rcond=None)[0]
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    mass = np.zeros((chain.n, chain.m))
    for i, x in enumerate(cls):
        mass[x] = pi[i] * policy.action_probs[x]
    return JointDistribution(mass=mass)
