import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from harrislab.errors import EmptyWindowError, InvalidArgumentError
from harrislab.harris import (ModelParams, PathQuery, SpaceTimeWindow, derive_seed, from_marks,
                              generate, path_exists, reachable_set, read_fixture, write_fixture)


def test_empty_window_rejected():
    with pytest.raises(EmptyWindowError):
        generate(ModelParams(2, 1), SpaceTimeWindow(0, -1, 10), 1)


def test_negative_horizon_rejected():
    with pytest.raises(InvalidArgumentError):
        SpaceTimeWindow(0, 3, -1.0)


def test_bad_params_rejected():
    with pytest.raises(InvalidArgumentError):
        ModelParams(-1.0, 1)
    with pytest.raises(InvalidArgumentError):
        ModelParams(1.0, 0)


def test_zero_rate_has_no_arrows():
    h = generate(ModelParams(0.0, 3), SpaceTimeWindow(-10, 10, 10.0), 5)
    assert h.n_arrows == 0
    assert h.n_deaths > 0


def test_death_count_mean_is_poisson():
    p, w = ModelParams(1.0, 1), SpaceTimeWindow(0, 0, 10.0)
    counts = np.array([generate(p, w, derive_seed(99, i)).n_deaths for i in range(10_000)])
    assert abs(counts.mean() - 10) <= 3 * math.sqrt(10 / 10_000)


def test_arrow_counts_match_rate():
    p, w = ModelParams(2.5, 2), SpaceTimeWindow(0, 4, 3.0)
    h0 = generate(p, w, 0)
    n_pairs = h0.pair_src.shape[0]
    counts = np.array([generate(p, w, derive_seed(3, i)).n_arrows for i in range(2000)])
    mean = n_pairs * 2.5 * 3.0
    assert abs(counts.mean() - mean) <= 4 * math.sqrt(mean / 2000)


def test_disjoint_interval_counts_uncorrelated():
    p, w = ModelParams(1.0, 1), SpaceTimeWindow(0, 0, 4.0)
    a, b = [], []
    for i in range(4000):
        d = generate(p, w, derive_seed(11, i)).deaths(0)
        a.append(int((d < 2).sum()))
        b.append(int((d >= 2).sum()))
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 4 / math.sqrt(4000)


def test_determinism_and_overlap_consistency():
    p = ModelParams(2.0, 2)
    h1 = generate(p, SpaceTimeWindow(-5, 5, 4.0), 42)
    h2 = generate(p, SpaceTimeWindow(-5, 5, 4.0), 42)
    assert h1.events() == h2.events()
    wide = generate(p, SpaceTimeWindow(-9, 9, 4.0), 42)
    for x in range(-5, 6):
        assert np.array_equal(h1.deaths(x), wide.deaths(x))
    assert np.array_equal(h1.arrows(0, 2), wide.arrows(0, 2))
    assert generate(p, SpaceTimeWindow(-5, 5, 4.0), 43).events() != h1.events()


def test_streams_strictly_increasing_and_in_window():
    h = generate(ModelParams(3.0, 2), SpaceTimeWindow(-4, 4, 5.0), 8)
    for x in range(-4, 5):
        d = h.deaths(x)
        assert np.all(np.diff(d) > 0) and np.all((d >= 0) & (d <= 5))
    assert np.all(h.pair_src >= -4) and np.all(h.pair_dst <= 4)
    assert np.all(np.abs(h.pair_src - h.pair_dst) <= 2)


def test_global_index_is_totally_ordered():
    h = generate(ModelParams(2.0, 2), SpaceTimeWindow(-6, 6, 6.0), 1)
    keys = list(zip(h.times.tolist(), h.kinds.tolist(), h.src.tolist(), h.dst.tolist()))
    assert keys == sorted(keys)
    assert len(keys) == h.n_deaths + h.n_arrows


def test_zero_length_path():
    h = from_marks(ModelParams(1, 1), SpaceTimeWindow(0, 2, 5.0), {1: [2.0]})
    assert path_exists(h, PathQuery((1, 1.0), (1, 1.0)))
    assert not path_exists(h, PathQuery((1, 2.0), (1, 2.0)))


def test_cross_mark_blocks():
    h = from_marks(ModelParams(1, 1), SpaceTimeWindow(0, 2, 5.0), {1: [2.0]})
    assert not path_exists(h, PathQuery((1, 1.0), (1, 3.0)))
    assert path_exists(h, PathQuery((1, 2.5), (1, 3.0)))


def test_two_hop_path_and_region():
    h = from_marks(ModelParams(1, 1), SpaceTimeWindow(0, 3, 5.0), {},
                   {(0, 1): [1.0], (1, 2): [2.0]})
    assert path_exists(h, PathQuery((0, 0.5), (2, 3.0)))
    assert not path_exists(h, PathQuery((0, 0.5), (2, 3.0), region=(0, 1)))
    assert not path_exists(h, PathQuery((0, 1.5), (2, 3.0)))
    assert not path_exists(h, PathQuery((2, 0.5), (0, 3.0)))


def test_tie_rule_deaths_before_arrows():
    # death on the target at the arrow time does not block the fresh arrival,
    # death on the source at the arrow time does
    h = from_marks(ModelParams(1, 1), SpaceTimeWindow(0, 1, 5.0), {1: [1.0]}, {(0, 1): [1.0]})
    assert path_exists(h, PathQuery((0, 0.0), (1, 2.0)))
    assert reachable_set(h, {0}, 0.0, 2.0) == {0, 1}
    h = from_marks(ModelParams(1, 1), SpaceTimeWindow(0, 1, 5.0), {0: [1.0]}, {(0, 1): [1.0]})
    assert not path_exists(h, PathQuery((0, 0.0), (1, 2.0)))
    assert reachable_set(h, {0}, 0.0, 2.0) == frozenset()


def test_out_of_window_query_rejected():
    h = generate(ModelParams(1, 1), SpaceTimeWindow(0, 3, 2.0), 0)
    with pytest.raises(InvalidArgumentError):
        path_exists(h, PathQuery((5, 0.0), (1, 1.0)))
    with pytest.raises(InvalidArgumentError):
        path_exists(h, PathQuery((1, 0.0), (1, 3.0)))


def test_reachable_set_trivial_cases():
    h = generate(ModelParams(2, 2), SpaceTimeWindow(-5, 5, 2.0), 3)
    assert reachable_set(h, set(), 0, 2) == frozenset()
    empty = from_marks(ModelParams(2, 2), SpaceTimeWindow(-5, 5, 2.0))
    assert reachable_set(empty, {-2, 3}, 0.0, 2.0) == {-2, 3}
    with pytest.raises(InvalidArgumentError):
        reachable_set(h, {0}, 1.5, 1.0)


def _brute(h, A, s, t, region=None):
    sites = h.window.sites()
    return {x for x in sites for y in A if path_exists(h, PathQuery((y, s), (x, t), region))}


def test_sweep_matches_oracle_on_spec_instance():
    for seed in range(20):
        h = generate(ModelParams(2.0, 2), SpaceTimeWindow(-5, 5, 2.0), seed)
        for y in range(-5, 6):
            assert reachable_set(h, {y}, 0.0, 2.0) == _brute(h, {y}, 0.0, 2.0)


def test_sweep_matches_oracle_exhaustively_small_windows():
    rng = np.random.default_rng(0)
    for seed in range(100):
        n = int(rng.integers(1, 13))
        lo = int(rng.integers(-6, 1))
        R = int(rng.integers(1, 4))
        lam = float(rng.uniform(0.5, 3.0))
        T = float(rng.uniform(0.5, 3.0))
        h = generate(ModelParams(lam, R), SpaceTimeWindow(lo, lo + n - 1, T), seed)
        s = float(rng.uniform(0, T / 2))
        t = float(rng.uniform(s, T))
        region = None
        if rng.random() < 0.5:
            a = int(rng.integers(lo, lo + n))
            region = (a, int(rng.integers(a, lo + n)))
        for y in h.window.sites():
            assert reachable_set(h, {y}, s, t, region) == _brute(h, {y}, s, t, region), (seed, y)


@given(seed=st.integers(0, 2**32), a=st.integers(-4, 0), b=st.integers(0, 4),
       t=st.floats(0.1, 3.0))
def test_region_monotonicity(seed, a, b, t):
    h = generate(ModelParams(2.0, 2), SpaceTimeWindow(-4, 4, 3.0), seed)
    small = PathQuery((0, 0.0), (b, t), region=(a, b))
    big = PathQuery((0, 0.0), (b, t), region=(a - 1, b + 1))
    if path_exists(h, small):
        assert path_exists(h, big)
        assert path_exists(h, PathQuery((0, 0.0), (b, t)))


@given(seed=st.integers(0, 2**32))
def test_time_reversal_maps_paths(seed):
    p, w = ModelParams(1.5, 2), SpaceTimeWindow(-3, 3, 2.0)
    h = generate(p, w, seed)
    T = w.horizon
    deaths = {x: [T - u for u in h.deaths(x).tolist()] for x in w.sites()}
    arrows = {}
    for (s_, d_) in zip(h.pair_src.tolist(), h.pair_dst.tolist()):
        arrows[(d_, s_)] = [T - u for u in h.arrows(s_, d_).tolist()]
    rev = from_marks(p, w, deaths, arrows)
    for x, y in itertools.product(range(-3, 4), repeat=2):
        fwd = path_exists(h, PathQuery((x, 0.3), (y, 1.7)))
        back = path_exists(rev, PathQuery((y, T - 1.7), (x, T - 0.3)))
        assert fwd == back


def test_fixture_round_trip(tmp_path):
    h = generate(ModelParams(1.75, 2), SpaceTimeWindow(-4, 6, 3.5), 2**63 + 17)
    f = tmp_path / "h.bin"
    write_fixture(h, f)
    g = read_fixture(f)
    assert g.events() == h.events()
    assert g.seed == h.seed and g.window == h.window and g.params == h.params


def test_fixture_rejects_garbage(tmp_path):
    f = tmp_path / "bad.bin"
    f.write_bytes(b"NOPE" + bytes(60))
    with pytest.raises(InvalidArgumentError):
        read_fixture(f)


def test_from_marks_validation():
    w = SpaceTimeWindow(0, 2, 2.0)
    with pytest.raises(InvalidArgumentError):
        from_marks(ModelParams(1, 1), w, {0: [1.0, 1.0]})
    with pytest.raises(InvalidArgumentError):
        from_marks(ModelParams(1, 1), w, {0: [3.0]})
    with pytest.raises(InvalidArgumentError):
        from_marks(ModelParams(1, 1), w, {}, {(0, 2): [1.0]})


def test_mirror_realization():
    h = generate(ModelParams(2.0, 1), SpaceTimeWindow(-3, 4, 2.0), 5)
    m = h.mirrored(0)
    assert m.window == h.window
    for x in range(-3, 5):
        assert np.array_equal(m.deaths(1 - x), h.deaths(x))
    assert np.array_equal(m.arrows(1, 2), h.arrows(0, -1))


def test_derive_seed_injective_in_index():
    seeds = {derive_seed(7, i) for i in range(50_000)}
    assert len(seeds) == 50_000
