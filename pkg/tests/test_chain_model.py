"""Chain construction, validation, closed loops, recurrence, simulation."""

import numpy as np
import pytest

from saferecur import (
    ControlledChain,
    Policy,
    closed_loop,
    recurrent_states,
    safe_recurrent_states,
    simulate,
    validate,
)

from conftest import EX1_SAFE_SET, make_example1, example1_star_policy, random_chain


def test_validate_example1_ok(example1):
    report = validate(example1)
    assert report.ok
    assert report.violations == ()


def test_validate_flags_bad_row_sum(example1):
    kernel = example1.kernel.copy()
    kernel[2, 0] = kernel[2, 0] * 0.9  # row (state 3, action 1) now sums to 0.9
    report = validate(ControlledChain(kernel=kernel, forbidden=frozenset({3})))
    assert not report.ok
    assert any("state 3, action 1" in v for v in report.violations)


def test_validate_flags_out_of_range_forbidden(example1):
    chain = ControlledChain(kernel=example1.kernel, forbidden=frozenset({8}))
    report = validate(chain)
    assert not report.ok
    assert any("forbidden state 9" in v for v in report.violations)


def test_validate_flags_negative_entry(example1):
    kernel = example1.kernel.copy()
    kernel[0, 0, 1] = -0.5
    kernel[0, 0, 3] = 1.5
    report = validate(ControlledChain(kernel=kernel))
    assert not report.ok
    assert any("negative" in v for v in report.violations)


def test_closed_loop_under_star_policy_matches_action2_row(example1, example1_policy):
    loop = closed_loop(example1, example1_policy)
    # state 1 plays action 2 deterministically
    np.testing.assert_allclose(loop.transition[0], example1.kernel[0, 1])


def test_closed_loop_deterministic_policy_selects_slice(example1):
    policy = Policy.deterministic([1] * 8, m=2)
    loop = closed_loop(example1, policy)
    np.testing.assert_allclose(loop.transition, example1.kernel[:, 1, :])


def test_closed_loop_uniform_policy_averages_rows():
    rng = np.random.default_rng(5)
    chain = random_chain(rng, 2, 2, "empty")
    loop = closed_loop(chain, Policy.uniform(2, 2))
    expected = 0.5 * (chain.kernel[:, 0, :] + chain.kernel[:, 1, :])
    np.testing.assert_allclose(loop.transition, expected)


def test_closed_loop_dimension_mismatch(example1):
    with pytest.raises(ValueError, match="does not match"):
        closed_loop(example1, Policy.uniform(4, 2))


def test_closed_loop_rows_stochastic_on_random_instances():
    for i in range(25):
        rng = np.random.default_rng(100 + i)
        n, m = int(rng.integers(2, 7)), int(rng.integers(2, 4))
        chain = random_chain(rng, n, m, "random")
        probs = rng.dirichlet(np.ones(m), size=n)
        loop = closed_loop(chain, Policy(probs))
        np.testing.assert_allclose(loop.transition.sum(axis=1), np.ones(n), atol=1e-10)
        assert loop.transition.min() >= 0


def test_recurrent_states_example1_star(example1, example1_policy):
    result = recurrent_states(closed_loop(example1, example1_policy))
    assert result.states == EX1_SAFE_SET
    assert set(result.classes) == {frozenset({0, 1, 2}), frozenset({6, 7})}


def test_recurrent_states_identity_all_absorbing():
    kernel = np.eye(3)[:, None, :]
    chain = ControlledChain(kernel=kernel)
    result = recurrent_states(closed_loop(chain, Policy.uniform(3, 1)))
    assert result.states == frozenset({0, 1, 2})
    assert len(result.classes) == 3


def test_recurrent_states_transient_feeder():
    kernel = np.array([[[0.0, 1.0]], [[0.0, 1.0]]])
    chain = ControlledChain(kernel=kernel)
    result = recurrent_states(closed_loop(chain, Policy.uniform(2, 1)))
    assert result.states == frozenset({1})


def _reachability_oracle(transition: np.ndarray) -> frozenset[int]:
    """Recurrent iff everything reachable from s can reach s back."""
    n = transition.shape[0]
    reach = [set(np.flatnonzero(transition[x] > 0)) | {x} for x in range(n)]
    changed = True
    while changed:
        changed = False
        for x in range(n):
            extra = set().union(*(reach[y] for y in reach[x]))
            if not extra <= reach[x]:
                reach[x] |= extra
                changed = True
    return frozenset(
        x for x in range(n) if all(x in reach[y] for y in reach[x])
    )


def test_recurrent_states_match_reachability_oracle():
    for i in range(40):
        rng = np.random.default_rng(200 + i)
        n = int(rng.integers(2, 9))
        chain = random_chain(rng, n, 2, "empty")
        probs = rng.dirichlet(np.ones(2), size=n)
        loop = closed_loop(chain, Policy(probs))
        assert recurrent_states(loop).states == _reachability_oracle(loop.transition)


def test_safe_recurrent_example1(example1, example1_policy):
    loop = closed_loop(example1, example1_policy)
    assert safe_recurrent_states(loop, example1.forbidden) == EX1_SAFE_SET


def test_safe_recurrent_empty_forbidden_equals_recurrent(example1, example1_policy):
    loop = closed_loop(example1, example1_policy)
    assert safe_recurrent_states(loop, frozenset()) == recurrent_states(loop).states


def test_safe_recurrent_all_forbidden_is_empty(example1, example1_policy):
    loop = closed_loop(example1, example1_policy)
    assert safe_recurrent_states(loop, frozenset(range(8))) == frozenset()


def test_safe_recurrent_never_intersects_forbidden():
    for i in range(30):
        rng = np.random.default_rng(300 + i)
        n = int(rng.integers(2, 7))
        chain = random_chain(rng, n, 2, "random")
        loop = closed_loop(chain, Policy(rng.dirichlet(np.ones(2), size=n)))
        assert not safe_recurrent_states(loop, chain.forbidden) & chain.forbidden


def test_recurrence_depends_only_on_support_pattern():
    for i in range(30):
        rng = np.random.default_rng(400 + i)
        n, m = int(rng.integers(2, 7)), int(rng.integers(2, 4))
        chain = random_chain(rng, n, m, "random")
        probs = np.where(rng.random((n, m)) < 0.6, rng.random((n, m)) + 0.05, 0.0)
        probs[np.arange(n), rng.integers(0, m, size=n)] += 0.5  # nonempty rows
        probs = probs / probs.sum(axis=1, keepdims=True)
        policy = Policy(probs)
        # same zero pattern, different positive weights
        reweighted = np.where(probs > 0, probs * rng.uniform(0.2, 5.0, (n, m)), 0.0)
        policy2 = Policy(reweighted / reweighted.sum(axis=1, keepdims=True))
        loop1, loop2 = closed_loop(chain, policy), closed_loop(chain, policy2)
        assert recurrent_states(loop1).states == recurrent_states(loop2).states
        assert safe_recurrent_states(loop1, chain.forbidden) == safe_recurrent_states(
            loop2, chain.forbidden
        )


def test_simulate_example1_avoids_unsafe_states(example1, example1_policy):
    loop = closed_loop(example1, example1_policy)
    path = simulate(loop, start=0, horizon=100_000, seed=11)
    assert len(path) == 100_000
    assert not set(np.unique(path)) & {3, 4, 5}


def test_simulate_identity_is_constant():
    kernel = np.eye(4)[:, None, :]
    chain = ControlledChain(kernel=kernel)
    loop = closed_loop(chain, Policy.uniform(4, 1))
    path = simulate(loop, start=2, horizon=50, seed=0)
    assert (path == 2).all()


def test_simulate_same_seed_same_path(example1, example1_policy):
    loop = closed_loop(example1, example1_policy)
    a = simulate(loop, start=1, horizon=2000, seed=42)
    b = simulate(loop, start=1, horizon=2000, seed=42)
    assert np.array_equal(a, b)
    c = simulate(loop, start=1, horizon=2000, seed=43)
    assert not np.array_equal(a, c)


def test_simulate_rejects_bad_start(example1, example1_policy):
    loop = closed_loop(example1, example1_policy)
    with pytest.raises(ValueError):
        simulate(loop, start=8, horizon=10, seed=0)


def test_simulate_frequencies_match_transition_row():
    kernel = np.array([[[0.25, 0.75]], [[0.5, 0.5]]])
    chain = ControlledChain(kernel=kernel)
    loop = closed_loop(chain, Policy.uniform(2, 1))
    path = simulate(loop, start=0, horizon=200_000, seed=7)
    from_zero = path[1:][path[:-1] == 0]
    assert abs((from_zero == 1).mean() - 0.75) < 0.01
