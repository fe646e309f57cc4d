import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpdepth.depthmap import SparsePointSet, sparse_from_map
from gpdepth.errors import InputError
from gpdepth.sampling import (RATIOS, SamplingSpec, apply_sampling, bias_threshold, biased_predicate,
                              default_side, format_ratio, parse_ratio, sample_biased, sample_random_n,
                              sample_uniform)

from conftest import random_depth_map, random_sparse


def as_set(points):
    return set(zip(points.u.tolist(), points.v.tolist(), points.depth.tolist()))


def test_ratio_parsing():
    assert parse_ratio("1/8") == 0.125
    assert parse_ratio("0.015625") == 1 / 64
    assert parse_ratio(1) == 1.0
    assert [format_ratio(r) for r in RATIOS] == ["1", "1/2", "1/4", "1/8", "1/16", "1/32", "1/64"]
    for bad in ("1/3", "0", "2", "abc", "1/0"):
        with pytest.raises(InputError):
            parse_ratio(bad)


def test_spec_validation():
    SamplingSpec("uniform", 0.5)
    SamplingSpec("random_n", n_points=0)
    with pytest.raises(InputError):
        SamplingSpec("diagonal", 0.5)
    with pytest.raises(InputError):
        SamplingSpec("uniform", 0.3)
    with pytest.raises(InputError):
        SamplingSpec("uniform", n_points=3)
    with pytest.raises(InputError):
        SamplingSpec("random_n", 0.5)
    with pytest.raises(InputError):
        SamplingSpec("random_n", n_points=-1)
    with pytest.raises(InputError):
        SamplingSpec("horizontal", 0.5, side="middle")


# --- uniform ---------------------------------------------------------------------

def test_uniform_ratio_one_is_identity(rng):
    pts = random_sparse(rng, 30, 20, 50)
    assert sample_uniform(pts, 1.0, seed=9) == pts


def test_uniform_64_points_at_1_64_keeps_one(rng):
    pts = random_sparse(rng, 16, 16, 64)
    out = sample_uniform(pts, 1 / 64, seed=3)
    assert len(out) == 1 and as_set(out) <= as_set(pts)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 300), st.sampled_from(RATIOS), st.integers(0, 2 ** 32 - 1))
def test_uniform_count_subset_and_determinism(n, ratio, seed):
    rng = np.random.default_rng(seed)
    pts = random_sparse(rng, 40, 20, n)
    a = sample_uniform(pts, ratio, seed)
    assert len(a) == math.floor(ratio * n + 0.5)
    assert as_set(a) <= as_set(pts)
    assert sample_uniform(pts, ratio, seed) == a


def test_uniform_seeds_differ(rng):
    pts = random_sparse(rng, 40, 40, 400)
    assert sample_uniform(pts, 0.5, 1) != sample_uniform(pts, 0.5, 2)


def test_uniform_inclusion_is_unbiased(rng):
    pts = random_sparse(rng, 16, 16, 64)
    counts = np.zeros((16, 16))
    trials, p = 1000, 16 / 64
    for seed in range(trials):
        out = sample_uniform(pts, 1 / 4, seed)
        counts[out.v, out.u] += 1
    got = counts[pts.v, pts.u]
    sd = math.sqrt(trials * p * (1 - p))
    assert np.all(np.abs(got - trials * p) <= 5 * sd)
    assert got.sum() == trials * 16


# --- biased --------------------------------------------------------------------

def rows_100_to_300():
    v = np.arange(100, 301)
    return SparsePointSet(np.zeros_like(v), v, np.full(len(v), 5.0), (4, 400))


def test_horizontal_half_high_keeps_bottom_band():
    out = sample_biased(rows_100_to_300(), "horizontal", 0.5, "high")
    assert out.v.min() == 200 and out.v.max() == 300 and len(out) == 101
    low = sample_biased(rows_100_to_300(), "horizontal", 0.5, "low")
    assert low.v.min() == 100 and low.v.max() == 200


def test_default_sides():
    assert default_side("horizontal") == "high"
    assert default_side("vertical") == "low"
    pts = rows_100_to_300()
    assert sample_biased(pts, "horizontal", 0.25) == sample_biased(pts, "horizontal", 0.25, "high")


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 200), st.sampled_from(RATIOS), st.sampled_from(["horizontal", "vertical"]),
       st.sampled_from(["low", "high"]), st.integers(0, 2 ** 32 - 1))
def test_biased_matches_predicate(n, ratio, axis, side, seed):
    rng = np.random.default_rng(seed)
    pts = random_sparse(rng, 30, 25, n)
    out = sample_biased(pts, axis, ratio, side)
    coord = pts.v if axis == "horizontal" else pts.u
    cut = bias_threshold(pts, axis, ratio, side)
    expected = {p for p, c in zip(zip(pts.u.tolist(), pts.v.tolist(), pts.depth.tolist()), coord)
                if (c >= cut if side == "high" else c <= cut)}
    assert as_set(out) == expected
    assert np.array_equal(biased_predicate(pts, axis, ratio, side).sum(), len(out))
    # the extreme coordinate on the kept side always survives
    assert len(out) >= 1
    # halving the ratio never adds points
    if ratio < 1:
        assert as_set(sample_biased(pts, axis, ratio / 2 if ratio > 1 / 64 else ratio, side)) <= as_set(out)


def test_biased_empty_and_errors():
    empty = SparsePointSet.empty((5, 5))
    assert len(sample_biased(empty, "vertical", 0.5)) == 0
    with pytest.raises(InputError):
        sample_biased(rows_100_to_300(), "diagonal", 0.5)
    with pytest.raises(InputError):
        sample_biased(rows_100_to_300(), "vertical", 0.5, "left")


# --- random_n --------------------------------------------------------------------

@pytest.mark.parametrize("n", [0, 7, 14, 20, 42, 50, 200])
def test_random_n_counts(rng, n):
    dm = random_depth_map(rng, 20, 15, invalid_frac=0.3)
    out = sample_random_n(dm, n, seed=4)
    assert len(out) == n
    assert as_set(out) <= as_set(sparse_from_map(dm))
    assert sample_random_n(dm, n, seed=4) == out


def test_random_n_all_and_too_many(rng):
    dm = random_depth_map(rng, 6, 5, invalid_frac=0.3)
    assert as_set(sample_random_n(dm, dm.n_valid, 1)) == as_set(sparse_from_map(dm))
    with pytest.raises(InputError, match="only"):
        sample_random_n(dm, dm.n_valid + 1, 1)
    with pytest.raises(InputError):
        sample_random_n(dm, 2.5, 1)


def test_apply_sampling_dispatch(rng):
    dm = random_depth_map(rng, 20, 15)
    pts = sparse_from_map(dm)
    assert apply_sampling(dm, SamplingSpec("uniform", 0.25, seed=2)) == sample_uniform(pts, 0.25, 2)
    assert apply_sampling(pts, SamplingSpec("vertical", 0.5)) == sample_biased(pts, "vertical", 0.5, "low")
    assert apply_sampling(pts, SamplingSpec("random_n", n_points=9, seed=1)) == sample_random_n(dm, 9, 1)
