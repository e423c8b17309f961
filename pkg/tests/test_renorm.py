import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harrislab.contact import evolve
from harrislab.errors import InvalidArgumentError, UndecidableError
from harrislab.harris import ModelParams, SpaceTimeWindow, from_marks, generate
from harrislab.opercolation import EvenLattice, read_field_text
from harrislab.renorm import (BoxIndex, Censored, RenormSetup, compute_phi_psi,
                              descendancy_barrier_contains, detect_Bk, first_X, is_expanding,
                              k0_for, write_renorm_dump)

P21 = ModelParams(2.0, 1)


def shifted(h, d):
    """The realization translated by d sites."""
    w = h.window
    win = SpaceTimeWindow(w.lo + d, w.hi + d, w.horizon)
    deaths = {x + d: h.deaths(x).tolist() for x in w.sites()}
    arrows = {}
    for p, (s, t) in enumerate(zip(h.pair_src.tolist(), h.pair_dst.tolist())):
        arrows[(s + d, t + d)] = h.arrow_times[h.arrow_ptr[p]:h.arrow_ptr[p + 1]].tolist()
    return from_marks(h.params, win, deaths, arrows, seed=h.seed)


def test_setup_derived_scales():
    s = RenormSetup(ModelParams(3.0, 2), 4, 2, 9.0)
    assert s.v == 72.0 and s.Mprime == 74 * 4 and s.k == 73 and s.slab == 8
    small = RenormSetup(P21, 5, 1, 0.2)
    assert small.v == 3.0 and small.Mprime == 25.0 and small.gap == 2
    with pytest.raises(InvalidArgumentError):
        RenormSetup(P21, 0, 1, 1.0)
    with pytest.raises(InvalidArgumentError):
        RenormSetup(P21, 4, 1, 0.0)


@pytest.mark.parametrize("N", [1, 2, 3, 4, 5, 9])
def test_intervals_cover_each_site_twice(N):
    s = RenormSetup(P21, N, 1, 1.0)
    count = {}
    for m in range(-12, 13):
        lo, hi = BoxIndex(m, m % 2, s).interval(m)
        assert hi - lo + 1 == N
        for x in range(lo, hi + 1):
            count[x] = count.get(x, 0) + 1
    inner = [count[x] for x in range(-2 * N, 2 * N + 1)]
    assert set(inner) == {2}


def test_box_geometry():
    s = RenormSetup(P21, 4, 1, 0.7)
    b = BoxIndex(2, 0, s)
    assert b.base == (3, 6) and b.U == (1, 8) and b.J == (4, 4)
    assert b.envelope == (math.ceil(4 - 5.6), math.floor(4 + 5.6))
    assert b.times == (0.0, 4.0)
    with pytest.raises(InvalidArgumentError):
        BoxIndex(1, 0, s)


def test_all_deaths_gives_phi_zero_then_two():
    s = RenormSetup(ModelParams(0.0, 1), 4, 1, 0.5)
    w = SpaceTimeWindow(-40, 40, 12.0)
    h = from_marks(s.params, w, deaths={x: [0.5] for x in w.sites()})
    f = compute_phi_psi(h, s, EvenLattice(-4, 4, 0, 2))
    assert all(f.phi_at(m, 0) == 0 for m in range(-4, 5, 2))
    assert all(f.phi_at(m, 1) == 2 for m in range(-3, 4, 2))
    assert all(f.phi_at(m, 2) == 2 for m in range(-4, 5, 2))
    psi = f.psi()
    assert psi(0, 0) == 0 and psi(1, 1) == 1
    assert f.reports[(0, 0)].a is False


def test_no_marks_fails_funnel_condition():
    s = RenormSetup(ModelParams(0.0, 1), 4, 1, 0.5)
    h = from_marks(s.params, SpaceTimeWindow(-30, 30, 8.0))
    f = compute_phi_psi(h, s, EvenLattice(-2, 2, 0, 0))
    rep = f.reports[(0, 0)]
    # everything stays occupied, but U \ I_0 does not descend from I_0
    assert rep.phi == 0 and rep.a and rep.d and not rep.b


def test_far_path_breaks_envelope_condition():
    s = RenormSetup(P21, 4, 1, 0.5)
    assert BoxIndex(0, 0, s).envelope == (-4, 4)
    w = SpaceTimeWindow(-20, 20, 8.0)
    h = from_marks(s.params, w, arrows={(-5, -4): [1.0], (-4, -3): [2.0]})
    f = compute_phi_psi(h, s, EvenLattice(-2, 2, 0, 0))
    assert f.reports[(0, 0)].d is False and f.phi_at(0, 0) == 0
    h2 = from_marks(s.params, w, arrows={(-5, -4): [2.0], (-4, -3): [1.0]})
    f2 = compute_phi_psi(h2, s, EvenLattice(-2, 2, 0, 0))
    assert f2.reports[(0, 0)].d is True


@pytest.mark.parametrize("seed", range(12))
def test_flags_match_full_window_evolution(seed):
    s = RenormSetup(P21, 4, 1, 0.7)
    w = SpaceTimeWindow(-40, 40, 4.0)
    h = generate(P21, w, seed)
    f = compute_phi_psi(h, s, EvenLattice(-4, 4, 0, 0))
    for m in range(-4, 5, 2):
        rep = f.reports[(m, 0)]
        if not rep.d:
            continue
        box = BoxIndex(m, 0, s)
        lo, hi = box.base
        ulo, uhi = box.U
        full = evolve(h, set(w.sites()), 0.0, 4.0).restrict(ulo, uhi)
        base = evolve(h, set(range(lo, hi + 1)), 0.0, 4.0).restrict(ulo, uhi)
        assert rep.b == (full <= base)
        row = [x in full for x in range(ulo, uhi + 1)]
        run = best = 0
        for v in row:
            run = 0 if v else run + 1
            best = max(best, run)
        assert rep.a == (best < s.gap)


def test_psi_zero_exactly_where_phi_zero():
    s = RenormSetup(P21, 4, 1, 0.7)
    h = generate(P21, SpaceTimeWindow(-60, 60, 20.0), 3)
    f = compute_phi_psi(h, s, EvenLattice(-6, 6, 0, 4), strict=True)
    psi = f.psi()
    for m, n in f.lattice.points():
        assert (psi(m, n) == 0) == (f.phi_at(m, n) == 0)
    for m, n in f.lattice.points():
        if n > 0 and f.phi_at(m, n) == 2:
            assert 1 not in (f.reports[(m - 1, n - 1)].phi, f.reports[(m + 1, n - 1)].phi)


def test_deterministic_and_translation_covariant():
    s = RenormSetup(P21, 4, 1, 0.7)
    h = generate(P21, SpaceTimeWindow(-60, 60, 16.0), 11)
    reg = EvenLattice(-6, 6, 0, 3)
    a = compute_phi_psi(h, s, reg)
    b = compute_phi_psi(generate(P21, SpaceTimeWindow(-60, 60, 16.0), 11), s, reg)
    assert np.array_equal(a.phi, b.phi)
    c = compute_phi_psi(shifted(h, 4), s, EvenLattice(-4, 8, 0, 3))
    assert np.array_equal(a.phi, c.phi)


def test_narrow_window_is_undecided():
    s = RenormSetup(P21, 4, 1, 0.7)
    h = generate(P21, SpaceTimeWindow(-12, 12, 8.0), 1)
    reg = EvenLattice(-6, 6, 0, 1)
    f = compute_phi_psi(h, s, reg)
    assert f.phi_at(-6, 0) == -1 and f.phi_at(0, 0) != -1
    assert (-6, 0) in f.undecided and not f.complete
    with pytest.raises(UndecidableError):
        compute_phi_psi(h, s, reg, strict=True)
    with pytest.raises(InvalidArgumentError):
        compute_phi_psi(h, s, EvenLattice(-2, 2, 1, 2))


@given(x=st.integers(-50, 50), t=st.floats(0, 20), y=st.integers(-80, 80),
       ds=st.floats(0, 30))
def test_barrier_is_the_cone(x, t, y, ds):
    s = t + ds
    assert descendancy_barrier_contains((x, t), (y, s)) == (abs(y - x) <= s / 2)


def test_barrier_rejects_earlier_time():
    with pytest.raises(InvalidArgumentError):
        descendancy_barrier_contains((0, 3.0), (0, 2.0))


def test_blocking_slab_probability_without_arrows():
    s = RenormSetup(ModelParams(0.0, 1), 1, 2, 0.1)
    assert s.Mprime == 5.0
    w = SpaceTimeWindow(-8, 8, 2.0)
    n = 3000
    hits = sum(detect_Bk(generate(s.params, w, seed), s, 1) for seed in range(n))
    p = (1 - math.exp(-2.0)) ** 11
    assert abs(p - 0.2016) < 1e-3
    assert abs(hits / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_blocking_slab_fixture():
    s = RenormSetup(P21, 1, 1, 0.1)
    w = SpaceTimeWindow(-10, 10, 3.0)
    deaths = {x: [1.5] for x in range(-5, 6)}
    h = from_marks(P21, w, deaths=deaths)
    assert not detect_Bk(h, s, 1) and detect_Bk(h, s, 2)
    assert first_X(h, s) == 2.0
    blocked = from_marks(P21, w, deaths=deaths, arrows={(6, 5): [1.7]})
    assert not detect_Bk(blocked, s, 2)
    assert isinstance(first_X(blocked, s), Censored)
    inner = from_marks(P21, w, deaths=deaths, arrows={(4, 5): [1.7]})
    assert detect_Bk(inner, s, 2)
    with pytest.raises(UndecidableError):
        detect_Bk(from_marks(P21, SpaceTimeWindow(-5, 5, 3.0)), s, 1)


def test_k0_formula():
    s = RenormSetup(P21, 4, 2, 0.7)
    assert k0_for(s, 10) == math.ceil(20 / 4 + 10 / 8)


def test_expanding_point_checks():
    s = RenormSetup(P21, 4, 1, 0.7)
    h = generate(P21, SpaceTimeWindow(-80, 80, 40.0), 5)
    f = compute_phi_psi(h, s, EvenLattice(-14, 14, 0, 8))
    v = is_expanding(h, f, (0, 0.0), "both", horizon=6, verify=True)
    assert v.box == (-1, 1) and v.approximate
    assert v.value == (v.reach and v.right and v.left)
    with pytest.raises(InvalidArgumentError):
        is_expanding(h, f, (0, 0.0), "up")
    with pytest.raises(UndecidableError):
        is_expanding(h, f, (0, 0.0), "right", horizon=20)


def test_reach_fails_without_marks():
    s = RenormSetup(ModelParams(0.0, 1), 4, 1, 0.5)
    h = from_marks(s.params, SpaceTimeWindow(-40, 40, 30.0))
    f = compute_phi_psi(h, s, EvenLattice(-10, 10, 0, 6))
    assert not is_expanding(h, f, (0, 0.0), "right", horizon=4, verify=True).reach


def test_dump_round_trip(tmp_path):
    s = RenormSetup(P21, 4, 1, 0.7, alpha_source="test")
    h = generate(P21, SpaceTimeWindow(-40, 40, 12.0), 2)
    f = compute_phi_psi(h, s, EvenLattice(-6, 6, 0, 2))
    grid, side = write_renorm_dump(tmp_path / "psi.txt", f)
    assert read_field_text(grid) == f.psi(strict=False)
    meta = json.loads(side.read_text())
    assert meta["setup"]["alpha_source"] == "test" and meta["seed"] == 2
    assert len(meta["phi"]) == 3 and set(meta["phi"][0]) <= set("012?.")
