"""Directed-graph analysis on positive-probability edge structures.

Everything here works on exact integer/set data: an edge either exists or it
does not. This keeps recurrence and closedness arguments free of
floating-point noise. The numeric layers decide which edges exist (using
their own cutoffs) before calling in.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence


def tarjan_scc(successors: Sequence[Iterable[int]]) -> list[list[int]]:
    """Strongly connected components of a directed graph.

    ``successors[v]`` lists the successors of node ``v``; nodes are
    ``0..len(successors)-1``. Iterative lowlink computation with an explicit
    stack, so deep graphs do not hit the interpreter recursion limit.
    Components come out in reverse topological order.
    """
    succ = [list(s) for s in successors]
    n = len(succ)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        frames: list[list[int]] = [[root, 0]]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while frames:
            frame = frames[-1]
            v = frame[0]
            advanced = False
            while frame[1] < len(succ[v]):
                w = succ[v][frame[1]]
                frame[1] += 1
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    frames.append([w, 0])
                    advanced = True
                    break
                if on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
            if advanced:
                continue
            frames.pop()
            if frames and low[v] < low[frames[-1][0]]:
                low[frames[-1][0]] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def closed_components(successors: Sequence[Iterable[int]]) -> list[list[int]]:
    """Strongly connected components with no edge leaving the component.

    For a finite row-stochastic chain these are exactly the recurrent
    classes of the positive-edge graph.
    """
    succ = [set(s) for s in successors]
    comps = tarjan_scc(succ)
    comp_of = [0] * len(succ)
    for i, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = i
    out = []
    for i, comp in enumerate(comps):
        if all(comp_of[w] == i for v in comp for w in succ[v]):
            out.append(sorted(comp))
    out.sort()
    return out


def prune_to_closed_pairs(
    action_successors: Sequence[Mapping[int, frozenset[int]]],
    forbidden: frozenset[int],
) -> tuple[list[dict[int, frozenset[int]]], list[tuple[int, ...]]]:
    """Shrink a state/action structure to its closed recurrent core.

    ``action_successors[x]`` maps each candidate action at state ``x`` to the
    exact set of successor states that action can reach. Pairs rooted at a
    forbidden state, or reaching one, are removed up front. Then, repeatedly:
    compute the strongly connected components of the graph whose edges come
    from all surviving pairs, delete every pair whose successors leave the
    component of its state, and drop states left without pairs. The returned
    structure is the fixed point, together with its class partition (each
    class is a closed strongly connected state set, and every surviving
    pair's successors stay inside its class).

    Deletion only: any state/action pair kept here is certified by the graph
    itself, independent of how the candidate structure was produced.
    """
    n = len(action_successors)
    pairs: list[dict[int, frozenset[int]]] = []
    for x in range(n):
        if x in forbidden:
            pairs.append({})
            continue
        kept = {
            u: frozenset(succ)
            for u, succ in action_successors[x].items()
            if not (frozenset(succ) & forbidden)
        }
        pairs.append(kept)

    while True:
        succ = [set() for _ in range(n)]
        for x in range(n):
            for targets in pairs[x].values():
                succ[x].update(targets)
        comps = tarjan_scc(succ)
        comp_of = [0] * n
        for i, comp in enumerate(comps):
            for v in comp:
                comp_of[v] = i
        changed = False
        for x in range(n):
            for u in list(pairs[x]):
                if any(comp_of[y] != comp_of[x] for y in pairs[x][u]):
                    del pairs[x][u]
                    changed = True
        if not changed:
            break

    alive = {x for x in range(n) if pairs[x]}
    classes = [
        tuple(comp)
        for comp in closed_components(
            [set().union(*pairs[x].values()) if pairs[x] else set() for x in range(n)]
        )
        if set(comp) <= alive
    ]
    classes.sort()
    return pairs, classes
