import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from harrislab.contact import (Configuration, Survived, WindowPolicy, dual, edge_speed,
                               edge_stats, evolve, extinction_time, lemma1_bound,
                               lemma1_monte_carlo, rightmost, trajectory,
                               write_edge_stats_csv, write_trajectory_csv)
from harrislab._io import read_csv
from harrislab.errors import EstimationImpossibleError, InvalidArgumentError
from harrislab.harris import ModelParams, SpaceTimeWindow, derive_seed, from_marks, generate

W = SpaceTimeWindow(-8, 8, 4.0)
P = ModelParams(2.0, 2)
subsets = st.sets(st.integers(-8, 8), max_size=8)


def test_empty_set_is_absorbing():
    h = generate(P, W, 1)
    for t in (0.0, 1.0, 4.0):
        assert evolve(h, set(), 0.0, t) == Configuration()


def test_mark_free_realization_is_constant():
    h = from_marks(P, W)
    A = {-3, 0, 5}
    for t in (0.0, 2.0, 4.0):
        assert evolve(h, A, 0.0, t).support == A


@given(seed=st.integers(0, 2**40), A=subsets,
       times=st.lists(st.floats(0, 4), min_size=3, max_size=3).map(sorted))
def test_flow_property(seed, A, times):
    s, u, t = times
    h = generate(P, W, seed)
    assert evolve(h, evolve(h, A, s, u), u, t) == evolve(h, A, s, t)


def test_flow_property_brute():
    for seed in range(100):
        h = generate(P, W, seed)
        A = {-2, 0, 3}
        assert evolve(h, evolve(h, A, 0.0, 1.3), 1.3, 4.0) == evolve(h, A, 0.0, 4.0)


@given(seed=st.integers(0, 2**40), A=subsets, extra=subsets, t=st.floats(0, 4))
def test_attractive(seed, A, extra, t):
    h = generate(P, W, seed)
    assert evolve(h, A, 0, t).support <= evolve(h, A | extra, 0, t).support


@given(seed=st.integers(0, 2**40), A=subsets, B=subsets, t=st.floats(0, 4))
def test_additive(seed, A, B, t):
    h = generate(P, W, seed)
    assert evolve(h, A | B, 0, t).support == evolve(h, A, 0, t).support | evolve(h, B, 0, t).support


@given(seed=st.integers(0, 2**40), A=subsets, B=subsets, t=st.floats(0, 4))
def test_duality(seed, A, B, t):
    h = generate(P, W, seed)
    lhs = bool(evolve(h, A, 0, t).support & B)
    rhs = bool(dual(h, B, t, t).support & set(A))
    assert lhs == rhs


@given(seed=st.integers(0, 2**40), B=subsets, s=st.floats(0, 1), t=st.floats(1, 4))
def test_dual_equals_backward_reachability(seed, B, s, t):
    h = generate(P, W, seed)
    d = dual(h, B, t, s * t).support
    for x in W.sites():
        assert (x in d) == bool(evolve(h, {x}, t - s * t, t).support & B)


def test_dual_trivial_cases():
    h = generate(P, W, 4)
    assert dual(h, set(), 3.0, 2.0) == Configuration()
    assert dual(from_marks(P, W), {1, 2}, 3.0, 2.0).support == {1, 2}
    with pytest.raises(InvalidArgumentError):
        dual(h, {0}, 1.0, 2.0)


def test_extinction_time_fixture_and_trivial():
    h = from_marks(ModelParams(1, 1), SpaceTimeWindow(-2, 2, 5.0), {0: [1.5]})
    assert extinction_time(h, {0}) == 1.5
    assert extinction_time(h, set()) == 0.0
    assert extinction_time(from_marks(ModelParams(1, 1), SpaceTimeWindow(-2, 2, 5.0)), {0}) == Survived(5.0)


def test_extinction_time_without_births_is_max_first_death():
    p = ModelParams(0.0, 1)
    for seed in range(50):
        h = generate(p, SpaceTimeWindow(-3, 3, 20.0), seed)
        A = {-2, 0, 1}
        firsts = [h.deaths(x)[0] if h.deaths(x).size else math.inf for x in A]
        want = max(firsts)
        got = extinction_time(h, A)
        assert (got == Survived(20.0)) if want == math.inf else got == want


def test_extinction_matches_evolve():
    for seed in range(30):
        h = generate(ModelParams(1.2, 1), SpaceTimeWindow(-20, 20, 10.0), seed)
        T = extinction_time(h, {0})
        if isinstance(T, Survived):
            assert evolve(h, {0}, 0, 10.0).support
        else:
            assert evolve(h, {0}, 0, T).support == frozenset()
            assert evolve(h, {0}, 0, np.nextafter(T, 0)).support


def test_configuration_tails():
    c = Configuration.half_line(0)
    assert 0 in c and -100 in c and 1 not in c
    assert rightmost(c) == 0
    assert rightmost(Configuration()) == -math.inf
    assert c.restrict(-3, 2) == {-3, -2, -1, 0}
    with pytest.raises(InvalidArgumentError):
        len(c)


def test_half_line_truncation_is_contaminated_near_edge():
    h = generate(ModelParams(2.0, 1), SpaceTimeWindow(-30, 30, 5.0), 3)
    tr = trajectory(h, Configuration.half_line(0), [1.0, 5.0])
    assert -30 in tr.contaminated[0]
    assert all(x < 0 for x in tr.contaminated[-1])


def test_trajectory_consistent_with_evolve():
    h = generate(P, W, 9)
    tr = trajectory(h, {0, 3}, [0.5, 1.0, 4.0])
    for t, c in zip(tr.times, tr.states):
        assert c == evolve(h, {0, 3}, 0.0, t)
    with pytest.raises(InvalidArgumentError):
        trajectory(h, {0}, [2.0, 1.0])


def test_contamination_is_conservative():
    # sites reported clean must match a much wider window exactly
    p = ModelParams(2.0, 1)
    A = Configuration.half_line(0)
    for seed in range(30):
        narrow = generate(p, SpaceTimeWindow(-25, 25, 15.0), seed)
        wide = generate(p, SpaceTimeWindow(-120, 120, 15.0), seed)
        a = trajectory(narrow, A, [5.0, 15.0])
        b = trajectory(wide, A, [5.0, 15.0])
        for sa, ca, sb in zip(a.states, a.contaminated, b.states):
            for x in range(-25, 26):
                if x not in ca:
                    assert (x in sa.support) == (x in sb.support)


def test_edge_speed_single_arrow_fixture():
    h = from_marks(ModelParams(1.0, 1), SpaceTimeWindow(-3, 3, 2.0), {}, {(0, 1): [1.0]})
    tr = trajectory(h, Configuration.half_line(0), [2.0])
    assert rightmost(tr.states[0]) == 1
    assert not any(x >= 1 for x in tr.contaminated[0])


def test_edge_speed_without_births_is_nonpositive():
    st_ = edge_stats(ModelParams(0.0, 1), WindowPolicy(0.0, 30), [0.5, 1.0, 2.0], 50, 3)
    ok = ~st_.tainted.any(axis=1)
    assert ok.sum() > 0
    assert np.all(np.diff(st_.r[ok], axis=1) <= 0)
    est = edge_speed(ModelParams(0.0, 1), WindowPolicy(0.0, 30), 2.0, 50, 3)
    assert est.mean <= 0


def test_edge_speed_self_consistent_across_horizons():
    p, pol = ModelParams(2.0, 1), WindowPolicy(0.7, 15)
    a = edge_speed(p, pol, 40.0, 200, 11)
    b = edge_speed(p, pol, 80.0, 200, 12)
    assert a.mean > 0 and b.mean > 0
    assert abs(a.mean - b.mean) <= 1.96 * math.hypot(a.stderr, b.stderr) + 2.0 / 40


def test_edge_speed_impossible_when_everything_tainted():
    with pytest.raises(EstimationImpossibleError):
        edge_speed(ModelParams(0.0, 1), WindowPolicy(0.0, 1), 50.0, 5, 1)


def test_lemma1_bound_closed_form():
    assert lemma1_bound(2, 0, ModelParams(1.0, 1)) == 1.0
    want = 1 - (1 - math.exp(-1)) * math.exp(-2)
    assert lemma1_bound(1, 1, ModelParams(1.0, 1)) == pytest.approx(want, rel=1e-15)
    # the closed form evaluates to 0.91445178...
    assert round(want, 6) == 0.914452
    vals = [lemma1_bound(3, n, ModelParams(1.5, 2)) for n in range(10)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    with pytest.raises(InvalidArgumentError):
        lemma1_bound(0, 1, ModelParams(1.0, 1))


def test_lemma1_monte_carlo_small():
    r = lemma1_monte_carlo(2, 3, ModelParams(1.5, 1), 1000, 5)
    assert r.holds and r.tainted == 0


def test_dumps_have_schema_rows(tmp_path):
    h = generate(P, W, 2)
    tr = trajectory(h, {0}, [1.0, 2.0], replica=3)
    f = write_trajectory_csv(tmp_path / "t.csv", [tr])
    schema, header, rows = read_csv(f)
    assert schema.startswith("harrislab.contact.trajectory version=1")
    assert header == ["replica", "time", "site", "state"]
    assert all(r[0] == "3" and r[3] == "1" for r in rows)
    st_ = edge_stats(ModelParams(1.0, 1), WindowPolicy(0.2, 5), [1.0], 4, 1)
    schema, header, rows = read_csv(write_edge_stats_csv(tmp_path / "e.csv", st_))
    assert header == ["replica", "T", "r_T", "tainted"] and len(rows) == 4
