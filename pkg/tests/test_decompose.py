import itertools

import numpy as np
import pytest

from convlower.decompose import (
    BOUNDARY,
    CORNER,
    FULL,
    MOVES,
    IndexSeq,
    LoweredPlan,
    apply_decomposition,
    build_index_set,
    decompose_once,
    lower_kernel,
    pattern_census,
    reembed,
    split_k_tilde,
)
from convlower.exceptions import InvalidDimension, InvalidKernel, ParseError
from convlower.harness import oracle_conv
from convlower.serialization import dumps, loads
from convlower.tensor import Constant, Periodic

PADS = [Constant(0.0), Constant(0.7), Periodic()]


def _leaf_zero_oracle(n):
    """Sequences of length n whose leaf kernel is nonzero, found by brute force over 9**n."""
    size = 2 * n + 3
    K = np.arange(1.0, size * size + 1).reshape(size, size)
    alive = []
    for seq in itertools.product(MOVES, repeat=n):
        ker = K
        for move in seq:
            ker = split_k_tilde(ker)[move]
        if np.any(ker):
            alive.append(seq)
    return alive


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_index_set_matches_brute_force(n):
    assert [s.moves for s in build_index_set(n)] == _leaf_zero_oracle(n)


@pytest.mark.parametrize("n", range(1, 7))
def test_census_and_recursion(n):
    census = pattern_census(build_index_set(n))
    assert (census[CORNER], census[BOUNDARY], census[FULL]) == (4 * n * n, 4 * n, 1)
    if n > 1:
        prev = pattern_census(build_index_set(n - 1))
        assert census[CORNER] == prev[CORNER] + 2 * prev[BOUNDARY] + 4
        assert census[BOUNDARY] == prev[BOUNDARY] + 4
    assert len(build_index_set(n)) == (2 * n + 1) ** 2


def test_index_set_order_and_prefix_closure():
    for n in range(2, 5):
        cur = [s.moves for s in build_index_set(n)]
        assert cur == sorted(cur)
        prev = {s.moves for s in build_index_set(n - 1)}
        assert all(m[:-1] in prev for m in cur)
    full = [s for s in build_index_set(3) if s.tag == FULL]
    assert [s.moves for s in full] == [((0, 0),) * 3]


def test_index_seq_validation():
    assert IndexSeq.from_moves([(1, 0), (1, 1)]).tag == CORNER
    assert IndexSeq.from_moves([(1, 0), (1, 0)]).prefix().moves == ((1, 0),)
    with pytest.raises(InvalidKernel):
        IndexSeq.from_moves([(1, 1), (0, 0)])
    with pytest.raises(InvalidKernel):
        IndexSeq.from_moves([(2, 0)])


@pytest.mark.parametrize("k", [2, 3, 4])
def test_split_reembed_roundtrip(rng, k):
    K = rng.normal(size=(2 * k + 1, 2 * k + 1))
    blocks = split_k_tilde(K)
    assert all(b.shape == (2 * k - 1, 2 * k - 1) for b in blocks.values())
    np.testing.assert_array_equal(reembed(blocks), K)
    assert np.array_equal(blocks[(0, 0)], K[1:-1, 1:-1])


def test_split_needs_k2():
    with pytest.raises(InvalidKernel):
        split_k_tilde(np.ones((3, 3)))


@pytest.mark.parametrize("pad", PADS)
def test_one_split_is_exact(rng, pad):
    K = rng.uniform(-1, 1, (7, 7))
    X = rng.uniform(-1, 1, (1, 8, 8))
    pairs = decompose_once(K, 8, pad)
    assert len(pairs) == 9
    got = apply_decomposition(pairs, X, pad)
    np.testing.assert_allclose(got, oracle_conv(K[None, None], X, pad), atol=1e-13)


def test_decompose_needs_d_above_k():
    with pytest.raises(InvalidDimension):
        decompose_once(np.ones((5, 5)), 2)
    with pytest.raises(InvalidDimension):
        lower_kernel(np.ones((1, 1, 7, 7)), 3)


@pytest.mark.parametrize("k,d", [(2, 3), (2, 6), (3, 4), (3, 9), (4, 5)])
@pytest.mark.parametrize("pad", PADS)
def test_plan_matches_oracle(rng, k, d, pad):
    K = rng.uniform(-1, 1, (1, 2, 2 * k + 1, 2 * k + 1))
    plan = lower_kernel(K, d, pad)
    X = rng.uniform(-1, 1, (1, d, d))
    np.testing.assert_allclose(plan.apply(X, pad), oracle_conv(K, X, pad), rtol=0, atol=1e-12)


def test_plan_widths_and_shapes(rng):
    plan = lower_kernel(rng.normal(size=(1, 3, 11, 11)))
    assert plan.widths == [1, 9, 25, 49, 81, 3]
    assert plan.terminal.shape == (81, 3, 3, 3)
    for n, stage in enumerate(plan.stages, start=1):
        assert stage.shape == ((2 * n - 1) ** 2, (2 * n + 1) ** 2, 3, 3)


def test_small_kernels_trivial_plan(rng):
    K = rng.normal(size=(1, 2, 3, 3))
    plan = lower_kernel(K, 4)
    assert plan.stages == () and np.array_equal(plan.terminal, K)
    K1 = rng.normal(size=(1, 2, 1, 1))
    X = rng.normal(size=(1, 4, 4))
    np.testing.assert_allclose(lower_kernel(K1).apply(X, Periodic()), oracle_conv(K1, X, Periodic()))


def test_multi_input_rejected():
    with pytest.raises(InvalidKernel):
        lower_kernel(np.ones((2, 1, 5, 5)))


def test_plan_json_roundtrip(rng):
    plan = lower_kernel(rng.normal(size=(1, 2, 7, 7)))
    text = dumps(plan.to_dict())
    again = LoweredPlan.from_dict(loads(text))
    assert dumps(again.to_dict()) == text
    assert again.index_sets == plan.index_sets


def test_plan_parse_errors(rng):
    doc = lower_kernel(rng.normal(size=(1, 1, 7, 7))).to_dict()
    bad = dict(doc, stages=doc["stages"][:1])
    with pytest.raises(ParseError, match="plan.stages"):
        LoweredPlan.from_dict(bad)
    bad = dict(doc, index_sets=[[[[0, 2]]]])
    with pytest.raises(ParseError, match=r"plan.index_sets\[0\]"):
        LoweredPlan.from_dict(bad)
    with pytest.raises(ParseError, match="plan.k"):
        LoweredPlan.from_dict({"stages": []})
