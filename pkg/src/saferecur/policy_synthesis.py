"""Turning an invariant state/action distribution into a policy, and exact
verification that a claimed state set really is safe and recurrent under it.

Verification is pure graph work on the positive-probability pattern (policy
entries above 1e-14 count as edges, kernel entries compare against exact
zero). This is the safeguard that removes any dependence on solver
numerics: a certificate from :func:`verify` holds regardless of how the
distribution was computed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import graphs
from .chain_model import ControlledChain, JointDistribution, Policy

POLICY_EDGE_CUTOFF = 1e-14


@dataclass(frozen=True, eq=False)
class SynthesizedPolicy:
    """A policy split into its supported part and the fallback used elsewhere.

    On ``support_states`` the action probabilities are the conditional
    distribution of the joint pmf the policy was extracted from. Outside the
    support they equal ``off_support``, which is free to be anything
    row-stochastic; it cannot affect which states are safely recurrent.
    """

    policy: Policy
    support_states: frozenset[int]
    off_support: np.ndarray


@dataclass(frozen=True)
class VerificationResult:
    ok: bool
    classes: tuple[tuple[int, ...], ...] | None
    violations: tuple[str, ...] = ()


def extract_policy(
    dist: JointDistribution,
    chain: ControlledChain,
    off_support: np.ndarray | None = None,
) -> SynthesizedPolicy:
    """Condition a joint pmf on its state marginal to obtain a policy.

    On each supported state the action row is ``mass[x] / marginal[x]``
    (coordinates at or below the distribution's support threshold count as
    zero). Off the support the row comes from ``off_support``; by default
    that is uniform over all actions.
    """
    n, m = chain.n, chain.m
    if dist.mass.shape != (n, m):
        raise ValueError(
            f"distribution shape {dist.mass.shape} does not match chain ({n}, {m})"
        )
    if off_support is None:
        off_support = np.full((n, m), 1.0 / m)
    else:
        off_support = np.asarray(off_support, dtype=float)
        if off_support.shape != (n, m):
            raise ValueError("off_support must be one action row per state")
        if np.any(np.abs(off_support.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("off_support rows must sum to 1")
    support = dist.support_states()
    if not support:
        raise ValueError("cannot extract a policy from an empty support")
    masked = np.where(dist.mass > dist.support_threshold, dist.mass, 0.0)
    probs = off_support.copy()
    for x in sorted(support):
        probs[x] = masked[x] / masked[x].sum()
    return SynthesizedPolicy(
        policy=Policy(probs),
        support_states=frozenset(support),
        off_support=off_support,
    )


def verify(
    chain: ControlledChain,
    policy: SynthesizedPolicy | Policy,
    claimed_support: Iterable[int],
) -> VerificationResult:
    """Certify that a claimed state set is safely recurrent under a policy.

    Checks, exactly and combinatorially: the claim avoids the forbidden set;
    no claimed state has a positive one-step path into the forbidden set
    under the policy; and the claim is a union of closed strongly connected
    classes of the closed-loop positive-probability graph. Returns the class
    partition as the certificate, or the list of violations (1-based state
    indices in the messages).
    """
    plain = policy.policy if isinstance(policy, SynthesizedPolicy) else policy
    probs = plain.action_probs
    if probs.shape != (chain.n, chain.m):
        raise ValueError("policy dimensions do not match the chain")
    claimed = frozenset(int(x) for x in claimed_support)
    if not claimed <= set(range(chain.n)):
        raise ValueError("claimed support contains out-of-range states")

    violations: list[str] = []
    for x in sorted(claimed & chain.forbidden):
        violations.append(f"state {x + 1} is forbidden but claimed")

    succ: dict[int, set[int]] = {}
    for x in sorted(claimed):
        targets: set[int] = set()
        for u in np.flatnonzero(probs[x] > POLICY_EDGE_CUTOFF):
            targets.update(int(y) for y in np.flatnonzero(chain.kernel[x, u]))
        succ[x] = targets
        hit_forbidden = sorted(targets & chain.forbidden)
        if hit_forbidden:
            violations.append(
                f"state {x + 1} reaches forbidden state"
                f" {hit_forbidden[0] + 1} in one step under the policy"
            )
        escaped = sorted(targets - claimed - chain.forbidden)
        if escaped:
            violations.append(
                f"state {x + 1} leaves the claimed set"
                f" (one-step transition to state {escaped[0] + 1})"
            )
    if violations:
        return VerificationResult(ok=False, classes=None, violations=tuple(violations))

    # All edges stay inside the claim; the claim must now split into closed
    # strongly connected classes.
    order = sorted(claimed)
    pos = {x: i for i, x in enumerate(order)}
    comps = graphs.tarjan_scc([[pos[y] for y in sorted(succ[x])] for x in order])
    comp_of = {}
    for i, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = i
    classes = []
    for i, comp in enumerate(comps):
        members = sorted(order[v] for v in comp)
        closed = all(comp_of[pos[y]] == i for v in members for y in succ[v])
        if closed:
            classes.append(tuple(members))
        else:
            for v in members:
                violations.append(
                    f"state {v + 1} is not in a closed recurrent class"
                    " of the claimed set"
                )
    if violations:
        return VerificationResult(ok=False, classes=None, violations=tuple(violations))
    classes.sort()
    return VerificationResult(ok=True, classes=tuple(classes), violations=())


def perturb_within_support(
    policy: SynthesizedPolicy | Policy,
    weights: np.ndarray | None = None,
    seed: int | None = None,
) -> Policy:
    """Reweight a policy without changing its zero pattern.

    Every positive entry is multiplied by the corresponding weight and rows
    are renormalized; zeros stay exactly zero. When ``weights`` is omitted,
    strictly positive weights are drawn from ``default_rng(seed)``. Raises
    if a weight on the positive pattern is not strictly positive or the
    shape disagrees.
    """
    plain = policy.policy if isinstance(policy, SynthesizedPolicy) else policy
    probs = plain.action_probs
    pattern = probs > 0
    if weights is None:
        rng = np.random.default_rng(seed)
        weights = rng.uniform(0.1, 10.0, size=probs.shape)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != probs.shape:
            raise ValueError(
                f"weight pattern mismatch: expected shape {probs.shape},"
                f" got {weights.shape}"
            )
        if np.any(weights[pattern] <= 0):
            raise ValueError(
                "weight pattern mismatch: weights must be strictly positive"
                " wherever the policy is positive"
            )
    reweighted = np.where(pattern, probs * weights, 0.0)
    return Policy(reweighted / reweighted.sum(axis=1, keepdims=True))
