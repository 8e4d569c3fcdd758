"""Entropy-maximizing invariant state/action distributions.

The program solved here: over joint pmfs f on state/action pairs, maximize
entropy subject to

- stationarity: for every state y, the state marginal of f at y equals the
  one-step inflow sum_{x,u} kernel[x,u,y] * f[x,u];
- zero mass on every forbidden state;
- optionally, extra linear action-cost bounds sum_{x,u} h[u] * f[x,u] <= beta.

The support of the state marginal of the optimum is the largest state set
that any memoryless policy can make recurrent while never stepping into the
forbidden set, and dividing the optimum by its marginal yields such a
policy (see :mod:`saferecur.policy_synthesis`).

Solution scheme
---------------
Stage A removes coordinates that are provably zero at every feasible point:
pairs that put positive mass on a forbidden (or already dead) state, then
states with no surviving pairs, repeated to a fixed point. This is sound but
deliberately incomplete; it never cuts the optimum.

Stage B solves the remaining smooth problem through its Lagrangian dual,
which for entropy objectives is an unconstrained log-sum-exp function of one
potential per surviving state (plus one nonnegative multiplier per extra
constraint, handled by an active-set loop). Damped Newton steps drive the
dual gradient, which is exactly the stationarity residual, to the requested
tolerance. The primal recovered from the dual is a softmax, so iterates stay
strictly positive and coordinates destined for the boundary decay
geometrically instead of going negative.

Coordinates below the relative threshold 1e-9 * max(f) are then declared
zero, and the surviving support is re-certified by exact graph tests
(closed strongly connected classes avoiding the forbidden set). If anything
fails the test it is deleted and the reduced problem is re-solved; the
support shrinks strictly, so this terminates, and the reported support is
combinatorially certified no matter what the floating point did.

Because entropy of a pmf is nonnegative, any dual point with value below
zero certifies an empty constraint polytope; that is the infeasibility test.

The marginal-entropy objective (entropy of the state marginal rather than
of the joint pmf) is handled by the same dual with a temperature parameter:
objective = H(marginal) + delta * H(actions | state). At delta=1 this is the
joint entropy; continuation down to delta=1e-7 brings the marginal-entropy
gap below 1e-7 * log(action count) while every stage stays smooth. The state
support is the same for every delta in (0, 1], so the support result is
unaffected by the smoothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import graphs
from .chain_model import ControlledChain, JointDistribution, validate

SUPPORT_THRESHOLD_RATIO = 1e-9
INFEASIBILITY_MARGIN = -1e-6
# Continuation schedule for the marginal objective. Ending at 1e-6 keeps the
# smoothing gap near 1e-6 * log(action count) while the dual stays solvable
# to tight tolerances in double precision; below ~3e-7 the within-state tie
# geometry needs more precision than float64 carries.
_MARGINAL_DELTAS = (
    1.0, 0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6,
)
# Dual gradient levels: warm-up stages only seed the next stage; the final
# stiff stage cannot always reach the headline tolerance in float64, so it
# gets a floor that still sits well below the 1e-8 residual contract.
_WARMUP_TOL_FLOOR = 1e-9
_STIFF_TOL_FLOOR = 5e-9


class SolverConvergenceError(RuntimeError):
    """The iteration budget ran out before the tolerances were met."""


class OracleMismatchError(RuntimeError):
    """The solver support disagreed with the exact decomposition (a bug trap)."""


@dataclass(frozen=True)
class LinearConstraint:
    """Bound on the expected action cost: sum_u h[u] * f_X(., u) <= bound."""

    action_costs: np.ndarray
    bound: float

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.action_costs, dtype=float))
        if arr.ndim != 1:
            raise ValueError("action_costs must be one-dimensional")
        arr.flags.writeable = False
        object.__setattr__(self, "action_costs", arr)
        object.__setattr__(self, "bound", float(self.bound))


@dataclass(frozen=True)
class MaxEntProblem:
    chain: ControlledChain
    objective: str = "joint"
    extra_constraints: tuple[LinearConstraint, ...] = ()

    def __post_init__(self):
        if self.objective not in ("joint", "marginal"):
            raise ValueError(f"unknown objective {self.objective!r}")
        extras = tuple(self.extra_constraints)
        for con in extras:
            if con.action_costs.shape != (self.chain.m,):
                raise ValueError(
                    "constraint cost vector must have one entry per action"
                )
        object.__setattr__(self, "extra_constraints", extras)


@dataclass(frozen=True)
class Residuals:
    """Constraint satisfaction of a reported optimum, on the full state space.

    ``extras`` holds the signed slack (expected cost minus bound) per extra
    constraint; positive means violated.
    """

    invariance: float
    forbidden_mass: float
    normalization: float
    extras: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class SolveReport:
    status: str  # "optimal" | "infeasible"
    objective: str
    joint: JointDistribution | None
    entropy_value: float | None
    residuals: Residuals | None
    support_states: tuple[int, ...]
    support_pairs: tuple[tuple[int, int], ...]
    classes: tuple[tuple[int, ...], ...]
    certificate_gap: float | None
    iterations: int
    repair_log: tuple[tuple[int, int], ...]


def entropy(dist: JointDistribution | np.ndarray) -> float:
    """Entropy in nats, with zero mass contributing zero."""
    mass = dist.mass if isinstance(dist, JointDistribution) else np.asarray(dist, float)
    pos = mass[mass > 0]
    return float(-(pos * np.log(pos)).sum())


def constraint_residuals(
    chain: ControlledChain,
    dist: JointDistribution,
    extras: Sequence[LinearConstraint] = (),
) -> Residuals:
    """Evaluate all program constraints at a candidate distribution."""
    mass = dist.mass
    marginal = mass.sum(axis=1)
    inflow = np.einsum("xuy,xu->y", chain.kernel, mass)
    forb = sorted(chain.forbidden)
    return Residuals(
        invariance=float(np.abs(marginal - inflow).max()),
        forbidden_mass=float(marginal[forb].sum()) if forb else 0.0,
        normalization=float(abs(mass.sum() - 1.0)),
        extras=tuple(
            float((mass * con.action_costs[None, :]).sum() - con.bound)
            for con in extras
        ),
    )


def solve_maxent(
    problem: MaxEntProblem,
    *,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    seed: int | None = None,
    verify_maximal: bool = False,
) -> SolveReport:
    """Maximize joint entropy subject to stationarity and forbidden-mass zero.

    Returns ``status="infeasible"`` exactly when the constraint polytope is
    empty, which happens precisely when no state can be made recurrent and
    safe. Raises :class:`SolverConvergenceError` if the iteration budget is
    exhausted first, which is a different outcome from infeasibility.
    """
    if problem.objective != "joint":
        raise ValueError("solve_maxent expects a joint-entropy problem")
    if problem.extra_constraints:
        raise ValueError(
            "solve_maxent handles the plain program;"
            " use solve_with_linear_constraints for extra constraints"
        )
    return _solve(problem.chain, (), "joint", tol, max_iter, seed, verify_maximal)


def solve_maxent_marginal(
    problem: MaxEntProblem,
    *,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    seed: int | None = None,
    verify_maximal: bool = False,
) -> SolveReport:
    """Maximize the entropy of the state marginal under the same constraints.

    The state support of the result matches :func:`solve_maxent`; the joint
    pmf itself is generally different and need not be unique, so only the
    support is contract here. ``entropy_value`` is the marginal entropy.
    """
    return _solve(
        problem.chain,
        problem.extra_constraints,
        "marginal",
        tol,
        max_iter,
        seed,
        verify_maximal,
    )


def solve_with_linear_constraints(
    problem: MaxEntProblem,
    *,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    seed: int | None = None,
    verify_maximal: bool = False,
) -> SolveReport:
    """Solve the program together with the problem's extra linear constraints."""
    return _solve(
        problem.chain,
        problem.extra_constraints,
        problem.objective,
        tol,
        max_iter,
        seed,
        verify_maximal,
    )


# ----------------------------------------------------------------------
# internals


def _stage_a_support(chain: ControlledChain) -> list[set[int]]:
    """Remove provably-zero coordinates: pairs feeding forbidden/dead states."""
    n, m = chain.n, chain.m
    alive = [set(range(m)) if x not in chain.forbidden else set() for x in range(n)]
    dead = set(chain.forbidden)
    while True:
        changed = False
        for x in range(n):
            for u in list(alive[x]):
                row = chain.kernel[x, u]
                if any(row[d] > 0 for d in dead):
                    alive[x].discard(u)
                    changed = True
        for x in range(n):
            if x not in dead and not alive[x]:
                dead.add(x)
                changed = True
        if not changed:
            return alive


class _DualModel:
    """Log-sum-exp dual of the entropy program on a fixed support."""

    def __init__(
        self,
        chain: ControlledChain,
        pairs: Sequence[tuple[int, int]],
        extras: Sequence[LinearConstraint],
    ):
        self.pairs = list(pairs)
        self.states = sorted({x for x, _ in self.pairs})
        sidx = {x: j for j, x in enumerate(self.states)}
        self.n_states = len(self.states)
        self.n_extras = len(extras)
        self.dim = self.n_states + self.n_extras
        T = len(self.pairs)
        M = np.zeros((T, self.dim))
        for t, (x, u) in enumerate(self.pairs):
            M[t, sidx[x]] += 1.0
            row = chain.kernel[x, u]
            for y in np.flatnonzero(row):
                if y not in sidx:
                    raise AssertionError(
                        "support is not closed; structural pruning is broken"
                    )
                M[t, sidx[y]] -= row[y]
            for j, con in enumerate(extras):
                M[t, self.n_states + j] = -con.action_costs[u]
        self.M = M
        self.state_of = np.array([sidx[x] for x, _ in self.pairs])
        self.bounds = np.array([con.bound for con in extras])
        # per-state contiguous blocks (pairs are sorted by state)
        starts = [0]
        for t in range(1, T):
            if self.state_of[t] != self.state_of[t - 1]:
                starts.append(t)
        starts.append(T)
        self.blocks = list(zip(starts[:-1], starts[1:]))

    def evaluate(self, z: np.ndarray, delta: float):
        """Return (value, primal f, state marginal g, grouped log terms)."""
        c = self.M @ z
        S = self.n_states
        ctil = np.empty(S)
        p = np.empty(len(self.pairs))
        for j, (a, b) in enumerate(self.blocks):
            blk = c[a:b]
            mx = blk.max()
            e = np.exp((blk - mx) / delta)
            s = e.sum()
            ctil[j] = mx + delta * math.log(s)
            p[a:b] = e / s
        gmx = ctil.max()
        ge = np.exp(ctil - gmx)
        Z = ge.sum()
        g = ge / Z
        value = gmx + math.log(Z)
        if self.n_extras:
            value += float(self.bounds @ z[S:])
        f = g[self.state_of] * p
        return value, f, g

    def gradient(self, f: np.ndarray) -> np.ndarray:
        grad = self.M.T @ f
        if self.n_extras:
            grad[self.n_states:] += self.bounds
        return grad

    def hessian(self, f: np.ndarray, g: np.ndarray, delta: float) -> np.ndarray:
        Mw = self.M * f[:, None]
        H1 = self.M.T @ Mw
        R = np.empty((self.n_states, self.dim))
        for j, (a, b) in enumerate(self.blocks):
            R[j] = Mw[a:b].sum(axis=0)
        H2 = np.zeros((self.dim, self.dim))
        for j in range(self.n_states):
            if g[j] > 1e-300:
                H2 += np.outer(R[j], R[j]) / g[j]
        bbar = R.sum(axis=0)
        if delta == 1.0:
            return H1 - np.outer(bbar, bbar)
        return (H1 - H2) / delta + H2 - np.outer(bbar, bbar)


@dataclass
class _StageResult:
    status: str  # "converged" | "stalled" | "budget" | "infeasible"
    z: np.ndarray
    f: np.ndarray
    value: float
    grad: np.ndarray
    steps: int


def _newton(
    model: _DualModel,
    z: np.ndarray,
    delta: float,
    free: np.ndarray,
    grad_tol: float,
    budget: int,
) -> _StageResult:
    """Damped Newton descent of the dual on the free coordinates."""
    value, f, g = model.evaluate(z, delta)
    steps = 0
    flat_steps = 0
    while True:
        grad = model.gradient(f)
        if _certifies_infeasible(model, z, value):
            return _StageResult("infeasible", z, f, value, grad, steps)
        grad_free = grad[free]
        if np.abs(grad_free).max(initial=0.0) <= grad_tol:
            return _StageResult("converged", z, f, value, grad, steps)
        if steps >= budget or flat_steps >= 6:
            status = "stalled" if flat_steps >= 6 else "budget"
            return _StageResult(status, z, f, value, grad, steps)
        H = model.hessian(f, g, delta)[np.ix_(free, free)]
        reg = 1e-13 * max(1.0, float(np.trace(H)) / max(1, H.shape[0]))
        H = H + reg * np.eye(H.shape[0])
        step_free = np.linalg.lstsq(H, -grad_free, rcond=None)[0]
        slope = float(grad_free @ step_free)
        if slope > 0:
            step_free = -grad_free
            slope = -float(grad_free @ grad_free)
        step = np.zeros_like(z)
        step[free] = step_free
        t = 1.0
        accepted = False
        while t >= 2.0 ** -60:
            z_try = z + t * step
            value_try, f_try, g_try = model.evaluate(z_try, delta)
            if value_try <= value + 0.25 * t * slope:
                if value - value_try <= 1e-15 * max(1.0, abs(value)):
                    flat_steps += 1
                else:
                    flat_steps = 0
                z, value, f, g = z_try, value_try, f_try, g_try
                accepted = True
                break
            t *= 0.5
        steps += 1
        if not accepted:
            grad = model.gradient(f)
            return _StageResult("stalled", z, f, value, grad, steps)


def _certifies_infeasible(model: _DualModel, z: np.ndarray, value: float) -> bool:
    """A dual value below zero at nonnegative multipliers proves emptiness."""
    if value >= INFEASIBILITY_MARGIN:
        return False
    if model.n_extras == 0:
        return True
    mu = z[model.n_states:]
    if mu.min(initial=0.0) >= 0:
        return True
    z_clipped = z.copy()
    z_clipped[model.n_states:] = np.maximum(mu, 0.0)
    clipped_value, _, _ = model.evaluate(z_clipped, delta=1.0)
    return clipped_value < INFEASIBILITY_MARGIN


def _solve_on_support(
    chain: ControlledChain,
    pairs: list[tuple[int, int]],
    extras: Sequence[LinearConstraint],
    objective: str,
    tol: float,
    budget: int,
    z0: np.ndarray | None,
) -> tuple[str, np.ndarray, np.ndarray, float, np.ndarray, int]:
    """Solve the dual on one fixed support, managing the active set of extras.

    Returns (status, z, f, value, grad, steps_used) with status "converged",
    "infeasible", or "budget".
    """
    model = _DualModel(chain, pairs, extras)
    S, K = model.n_states, model.n_extras
    z = np.zeros(model.dim) if z0 is None else z0.copy()
    deltas = (1.0,) if objective == "joint" else _MARGINAL_DELTAS
    active: set[int] = {j for j in range(K) if z[S + j] != 0.0}
    used = 0
    for _sweep in range(3 * K + 5):
        free = np.zeros(model.dim, dtype=bool)
        free[:S] = True
        for j in active:
            free[S + j] = True
        res = None
        final_tol = tol
        for i, delta in enumerate(deltas):
            if i + 1 < len(deltas):
                stage_tol = max(tol, _WARMUP_TOL_FLOOR)
            elif delta < 1.0:
                stage_tol = max(tol, _STIFF_TOL_FLOOR)
            else:
                stage_tol = tol
            final_tol = stage_tol
            res = _newton(model, z, delta, free, stage_tol, budget - used)
            used += res.steps
            z = res.z
            if res.status == "infeasible":
                return "infeasible", z, res.f, res.value, res.grad, used
            if res.status == "budget" and used >= budget:
                return "budget", z, res.f, res.value, res.grad, used
        delta_final = deltas[-1]
        # active-set management at the final temperature
        negative = [j for j in sorted(active) if z[S + j] < -1e-12]
        if negative:
            for j in negative:
                active.discard(j)
                z[S + j] = 0.0
            deltas = (delta_final,)
            continue
        violated = []
        for j in range(K):
            if j in active:
                continue
            slack = float(res.f @ (-model.M[:, S + j])) - model.bounds[j]
            if slack > 1e-10:
                violated.append((slack, j))
        if violated:
            active.add(max(violated)[1])
            deltas = (delta_final,)
            continue
        if np.abs(res.grad[free]).max(initial=0.0) > final_tol:
            return "budget", z, res.f, res.value, res.grad, used
        return "converged", z, res.f, res.value, res.grad, used
    return "budget", z, res.f, res.value, res.grad, used


def _infeasible_report(objective: str, iterations: int) -> SolveReport:
    return SolveReport(
        status="infeasible",
        objective=objective,
        joint=None,
        entropy_value=None,
        residuals=None,
        support_states=(),
        support_pairs=(),
        classes=(),
        certificate_gap=None,
        iterations=iterations,
        repair_log=(),
    )


def _solve(
    chain: ControlledChain,
    extras: Sequence[LinearConstraint],
    objective: str,
    tol: float,
    max_iter: int,
    seed: int | None,
    verify_maximal: bool,
) -> SolveReport:
    report = validate(chain)
    if not report.ok:
        raise ValueError("invalid chain: " + "; ".join(report.violations))
    for con in extras:
        if con.action_costs.shape != (chain.m,):
            raise ValueError("constraint cost vector must have one entry per action")

    alive = _stage_a_support(chain)
    pairs = [(x, u) for x in range(chain.n) for u in sorted(alive[x])]
    if not pairs:
        return _infeasible_report(objective, 0)

    z: np.ndarray | None = None
    if seed is not None:
        rng = np.random.default_rng(seed)
        model0 = _DualModel(chain, pairs, extras)
        z = rng.normal(0.0, 1e-2, model0.dim)

    repair_log: list[tuple[int, int]] = []
    used = 0
    classes: list[tuple[int, ...]] = []
    max_rounds = len(pairs) + 3
    final = None
    for _round in range(max_rounds):
        status, z, f, value, grad, steps = _solve_on_support(
            chain, pairs, extras, objective, tol, max_iter - used, z
        )
        used += steps
        if status == "infeasible":
            return _infeasible_report(objective, used)
        tau = SUPPORT_THRESHOLD_RATIO * float(f.max())
        candidate = [pairs[t] for t in range(len(pairs)) if f[t] > tau]
        cand_map: list[dict[int, frozenset[int]]] = [dict() for _ in range(chain.n)]
        for x, u in candidate:
            cand_map[x][u] = frozenset(
                int(y) for y in np.flatnonzero(chain.kernel[x, u])
            )
        kept_map, classes = graphs.prune_to_closed_pairs(cand_map, chain.forbidden)
        kept = [(x, u) for x in range(chain.n) for u in sorted(kept_map[x])]
        if not kept:
            return _infeasible_report(objective, used)
        if kept == pairs:
            if status == "converged":
                final = (z, f, value)
                break
            if used >= max_iter:
                raise SolverConvergenceError(
                    f"no convergence within {max_iter} iterations"
                    f" (residual {np.abs(grad).max():.3g})"
                )
            continue
        removed = [p for p in pairs if p not in set(kept)]
        repair_log.extend(removed)
        z = _restrict_potentials(z, pairs, kept, len(extras))
        pairs = kept
    if final is None:
        raise SolverConvergenceError(
            f"support did not stabilize within {max_rounds} repair rounds"
        )

    z, f, value = final
    mass = np.zeros((chain.n, chain.m))
    for t, (x, u) in enumerate(pairs):
        mass[x, u] = f[t]
    tau = SUPPORT_THRESHOLD_RATIO * float(f.max())
    dist = JointDistribution(mass=mass, support_threshold=tau)
    residuals = constraint_residuals(chain, dist, extras)
    if objective == "joint":
        objective_value = entropy(dist)
    else:
        objective_value = entropy(dist.state_marginal())
    gap = max(0.0, value - objective_value)
    if (
        residuals.invariance > 1e-8
        or residuals.forbidden_mass > 1e-12
        or residuals.normalization > 1e-10
        or any(s > 1e-8 for s in residuals.extras)
    ):
        raise SolverConvergenceError(
            f"residuals above tolerance at the reported point: {residuals}"
        )

    solve_report = SolveReport(
        status="optimal",
        objective=objective,
        joint=dist,
        entropy_value=objective_value,
        residuals=residuals,
        support_states=tuple(sorted({x for x, _ in pairs})),
        support_pairs=tuple(pairs),
        classes=tuple(classes),
        certificate_gap=gap,
        iterations=used,
        repair_log=tuple(repair_log),
    )
    if verify_maximal:
        from . import exact_oracle

        exact = exact_oracle.mec_decomposition(chain)
        if exact.states != frozenset(solve_report.support_states):
            raise OracleMismatchError(
                "solver support"
                f" {sorted(solve_report.support_states)} disagrees with the exact"
                f" decomposition {sorted(exact.states)}"
            )
    return solve_report


def _restrict_potentials(
    z: np.ndarray | None,
    old_pairs: list[tuple[int, int]],
    new_pairs: list[tuple[int, int]],
    n_extras: int,
) -> np.ndarray | None:
    """Carry dual potentials over to a shrunken support (warm start)."""
    if z is None:
        return None
    old_states = sorted({x for x, _ in old_pairs})
    new_states = sorted({x for x, _ in new_pairs})
    old_idx = {x: j for j, x in enumerate(old_states)}
    out = np.zeros(len(new_states) + n_extras)
    for j, x in enumerate(new_states):
        out[j] = z[old_idx[x]]
    if n_extras:
        out[len(new_states):] = z[len(old_states):]
    return out
