"""Numba kernels shared by the simulation modules.

Everything here works on plain arrays: sites are addressed by offset from the
window's lower bound, events live in four parallel arrays sorted by the total
order (time, kind, source, target) with kind 0 = death and 1 = arrow.  A death
carries its site in both ``src`` and ``dst``.

Forward sweeps use the convention that a sweep started at time ``t0`` applies
death marks sitting exactly at ``t0`` and then every event in ``(t0, t1]``.
"""

import math

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
SITE_OFFSET = 1 << 40
_INV53 = 1.0 / 9007199254740992.0

DEATH = 0
ARROW = 1


# ---------------------------------------------------------------------------
# seeding / RNG
# ---------------------------------------------------------------------------


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_seed(master, kind, a, b):
    h = mix64(np.uint64(master))
    h = mix64(h ^ np.uint64(kind + 1))
    h = mix64(h ^ np.uint64(a + SITE_OFFSET))
    h = mix64(h ^ np.uint64(b + SITE_OFFSET))
    return h


@njit(cache=True)
def _stream(seed, rate, horizon, out, pos, fill):
    """Poisson(rate) points on (0, horizon]; returns the count."""
    if rate <= 0.0 or horizon <= 0.0:
        return 0
    state = seed
    t = 0.0
    n = 0
    while True:
        state = state + GOLDEN
        z = mix64(state)
        u = (float(z >> _S11) + 0.5) * _INV53
        t_new = t - math.log(u) / rate
        if t_new <= t:
            continue
        if t_new > horizon:
            break
        t = t_new
        if fill:
            out[pos + n] = t
        n += 1
    return n


@njit(cache=True)
def generate_streams(master, lo, hi, R, lam, horizon):
    n_sites = hi - lo + 1
    death_ptr = np.zeros(n_sites + 1, np.int64)
    dummy = np.empty(0, np.float64)
    for i in range(n_sites):
        x = lo + i
        c = _stream(stream_seed(master, DEATH, x, x), 1.0, horizon, dummy, 0, False)
        death_ptr[i + 1] = death_ptr[i] + c
    death_times = np.empty(death_ptr[n_sites], np.float64)
    for i in range(n_sites):
        x = lo + i
        _stream(stream_seed(master, DEATH, x, x), 1.0, horizon, death_times,
                death_ptr[i], True)

    n_pairs = 0
    for i in range(n_sites):
        y = lo + i
        for d in range(-R, R + 1):
            if d != 0 and lo <= y + d <= hi:
                n_pairs += 1
    pair_src = np.empty(n_pairs, np.int64)
    pair_dst = np.empty(n_pairs, np.int64)
    p = 0
    for i in range(n_sites):
        y = lo + i
        for d in range(-R, R + 1):
            if d != 0 and lo <= y + d <= hi:
                pair_src[p] = y
                pair_dst[p] = y + d
                p += 1
    arrow_ptr = np.zeros(n_pairs + 1, np.int64)
    for p in range(n_pairs):
        c = _stream(stream_seed(master, ARROW, pair_src[p], pair_dst[p]), lam,
                    horizon, dummy, 0, False)
        arrow_ptr[p + 1] = arrow_ptr[p] + c
    arrow_times = np.empty(arrow_ptr[n_pairs], np.float64)
    for p in range(n_pairs):
        _stream(stream_seed(master, ARROW, pair_src[p], pair_dst[p]), lam,
                horizon, arrow_times, arrow_ptr[p], True)
    return death_ptr, death_times, pair_src, pair_dst, arrow_ptr, arrow_times


@njit(cache=True)
def build_index(lo, death_ptr, death_times, pair_src, pair_dst, arrow_ptr, arrow_times):
    """Merge all streams into one array sorted by (time, kind, src, dst)."""
    nd = death_times.shape[0]
    na = arrow_times.shape[0]
    n = nd + na
    times = np.empty(n, np.float64)
    kinds = np.empty(n, np.int8)
    src = np.empty(n, np.int64)
    dst = np.empty(n, np.int64)
    n_sites = death_ptr.shape[0] - 1
    k = 0
    for i in range(n_sites):
        for j in range(death_ptr[i], death_ptr[i + 1]):
            times[k] = death_times[j]
            kinds[k] = DEATH
            src[k] = lo + i
            dst[k] = lo + i
            k += 1
    for p in range(pair_src.shape[0]):
        for j in range(arrow_ptr[p], arrow_ptr[p + 1]):
            times[k] = arrow_times[j]
            kinds[k] = ARROW
            src[k] = pair_src[p]
            dst[k] = pair_dst[p]
            k += 1
    # the concatenation is already in (kind, src, dst) order, a stable sort on
    # time completes the total order
    order = _stable_time_order(times)
    return times[order], kinds[order], src[order], dst[order]


@njit(cache=True)
def _stable_time_order(times):
    """Stable argsort of nonnegative times: bucket placement + insertion sort."""
    n = times.shape[0]
    order = np.empty(n, np.int64)
    if n == 0:
        return order
    tmax = 0.0
    for k in range(n):
        if times[k] > tmax:
            tmax = times[k]
    if tmax <= 0.0:
        for k in range(n):
            order[k] = k
        return order
    nb = n
    scale = nb / tmax
    start = np.zeros(nb + 1, np.int64)
    bucket = np.empty(n, np.int64)
    for k in range(n):
        b = int(times[k] * scale)
        if b >= nb:
            b = nb - 1
        bucket[k] = b
        start[b + 1] += 1
    for b in range(nb):
        start[b + 1] += start[b]
    fill = start[:nb].copy()
    for k in range(n):
        b = bucket[k]
        order[fill[b]] = k
        fill[b] += 1
    for b in range(nb):
        for a in range(start[b] + 1, start[b + 1]):
            v = order[a]
            tv = times[v]
            c = a - 1
            while c >= start[b] and times[order[c]] > tv:
                order[c + 1] = order[c]
                c -= 1
            order[c + 1] = v
    return order


# ---------------------------------------------------------------------------
# classic forward sweep with contamination tracking
# ---------------------------------------------------------------------------


@njit(cache=True)
def _first_index(times, t0):
    return np.searchsorted(times, t0, side="left")


@njit(cache=True)
def _in_zone(x, lo, hi, R, open_l, open_r):
    if open_l and x < lo + R:
        return True
    if open_r and x > hi - R:
        return True
    return False


@njit(cache=True)
def forward_classic(times, kinds, src, dst, wlo, state, allowed, t0, checks,
                    blo, bhi, R, open_l, open_r, track):
    """Run the classic process; snapshot after all events <= each checkpoint.

    ``state`` (uint8, indexed by site - wlo) is updated in place.  ``blo`` and
    ``bhi`` bound the box used for contamination (sites outside it must not be
    allowed).  Contamination marks every site whose value might differ from the
    process with the unknown outside continued; sides flagged open start
    contaminated in their edge zone, closed sides open as soon as an occupied
    or contaminated site comes within range of the edge.

    Returns (snapshots, contamination snapshots, side flags, events processed).
    """
    n = state.shape[0]
    nc = checks.shape[0]
    snaps = np.zeros((nc, n), np.uint8)
    csnaps = np.zeros((nc, n), np.uint8)
    cont = np.zeros(n, np.uint8)
    sides = np.zeros(2, np.uint8)
    if open_l:
        sides[0] = 1
    if open_r:
        sides[1] = 1
    if track:
        for x in range(blo, bhi + 1):
            ix = x - wlo
            if state[ix] and x < blo + R:
                sides[0] = 1
            if state[ix] and x > bhi - R:
                sides[1] = 1
        for x in range(blo, bhi + 1):
            if _in_zone(x, blo, bhi, R, sides[0] == 1, sides[1] == 1):
                cont[x - wlo] = 1
    m = times.shape[0]
    i = _first_index(times, t0)
    while i < m and times[i] == t0:
        if kinds[i] == DEATH:
            x = src[i] - wlo
            if 0 <= x < n:
                state[x] = 0
                if track and not _in_zone(src[i], blo, bhi, R, sides[0] == 1, sides[1] == 1):
                    cont[x] = 0
        i += 1
    processed = 0
    for c in range(nc):
        tc = checks[c]
        while i < m and times[i] <= tc:
            if kinds[i] == DEATH:
                x = src[i] - wlo
                if 0 <= x < n and allowed[x]:
                    state[x] = 0
                    if track and not _in_zone(src[i], blo, bhi, R, sides[0] == 1, sides[1] == 1):
                        cont[x] = 0
            else:
                y = src[i] - wlo
                x = dst[i] - wlo
                if 0 <= x < n and 0 <= y < n and allowed[x] and allowed[y]:
                    if track:
                        if state[x] == 1 and cont[x] == 0:
                            pass
                        elif cont[y] == 1:
                            cont[x] = 1
                        elif cont[x] == 1 and state[y] == 1:
                            if not _in_zone(dst[i], blo, bhi, R, sides[0] == 1, sides[1] == 1):
                                cont[x] = 0
                    if state[y]:
                        state[x] = 1
                    if track and (state[x] or cont[x]):
                        xs = dst[i]
                        if sides[0] == 0 and xs < blo + R:
                            sides[0] = 1
                            for z in range(blo, min(blo + R, bhi + 1)):
                                cont[z - wlo] = 1
                        if sides[1] == 0 and xs > bhi - R:
                            sides[1] = 1
                            for z in range(max(bhi - R + 1, blo), bhi + 1):
                                cont[z - wlo] = 1
            processed += 1
            i += 1
        snaps[c, :] = state
        csnaps[c, :] = cont
    return snaps, csnaps, sides, processed


@njit(cache=True)
def extinction_classic(times, kinds, src, dst, wlo, state, t0, t1):
    """First event time in (t0, t1] at which the occupied set is empty, else -1."""
    n = state.shape[0]
    count = 0
    for x in range(n):
        count += state[x]
    m = times.shape[0]
    i = _first_index(times, t0)
    while i < m and times[i] == t0:
        if kinds[i] == DEATH:
            x = src[i] - wlo
            if state[x]:
                state[x] = 0
                count -= 1
        i += 1
    if count == 0:
        return t0
    while i < m and times[i] <= t1:
        if kinds[i] == DEATH:
            x = src[i] - wlo
            if state[x]:
                state[x] = 0
                count -= 1
                if count == 0:
                    return times[i]
        else:
            y = src[i] - wlo
            x = dst[i] - wlo
            if state[y] and not state[x]:
                state[x] = 1
                count += 1
        i += 1
    return -1.0


# ---------------------------------------------------------------------------
# backward (dual) sweeps
# ---------------------------------------------------------------------------


@njit(cache=True)
def backward_classic(times, kinds, src, dst, wlo, mark, allowed, t_lo, t_hi):
    """Adjoint of ``forward_classic`` over the same event range.

    On return ``mark`` holds every site x with (x, t_lo) -> B x {t_hi}, where
    B is the input mark.
    """
    n = mark.shape[0]
    m = times.shape[0]
    i_lo = _first_index(times, t_lo)
    j = np.searchsorted(times, t_hi, side="right") - 1
    while j >= i_lo:
        if times[j] == t_lo:
            break
        if kinds[j] == DEATH:
            x = src[j] - wlo
            if 0 <= x < n and allowed[x]:
                mark[x] = 0
        else:
            y = src[j] - wlo
            x = dst[j] - wlo
            if 0 <= x < n and 0 <= y < n and allowed[x] and allowed[y]:
                if mark[x]:
                    mark[y] = 1
        j -= 1
    k = i_lo
    while k < m and times[k] == t_lo:
        if kinds[k] == DEATH:
            x = src[k] - wlo
            if 0 <= x < n:
                mark[x] = 0
        k += 1
    return mark


@njit(cache=True)
def backward_reach_pinned(times, kinds, src, dst, wlo, pinned, t_lo, t_hi, keep_lo, keep_hi):
    """Sites x with (x, s) -> (y, t) for some y pinned and t_lo <= s < t <= t_hi.

    Pinned sites are targets at every time.  Returns (visited mask, escaped)
    where escaped is set as soon as a visited site falls outside
    [keep_lo, keep_hi] (absolute sites); the sweep stops there.
    """
    n = pinned.shape[0]
    cur = pinned.copy()
    visited = pinned.copy()
    i_lo = _first_index(times, t_lo)
    j = np.searchsorted(times, t_hi, side="right") - 1
    while j >= i_lo:
        if times[j] <= t_lo:
            break
        if kinds[j] == DEATH:
            x = src[j] - wlo
            if 0 <= x < n and not pinned[x]:
                cur[x] = 0
        else:
            y = src[j] - wlo
            x = dst[j] - wlo
            if 0 <= x < n and 0 <= y < n and cur[x] and not cur[y]:
                cur[y] = 1
                visited[y] = 1
                if src[j] < keep_lo or src[j] > keep_hi:
                    return visited, True
        j -= 1
    return visited, False


# ---------------------------------------------------------------------------
# funneling check: two coupled classic processes over one slab
# ---------------------------------------------------------------------------


@njit(cache=True)
def funnel_check(times, kinds, src, dst, wlo, full, base, t_lo, t_hi, j_lo, j_hi, e_lo, e_hi):
    """Run ``full`` and ``base`` (base within full) through (t_lo, t_hi].

    Only events with both endpoints in [e_lo, e_hi] are applied.  Returns
    (strip_ok, full_final, base_final); strip_ok is False as soon as a site
    in [j_lo, j_hi] is occupied in ``full`` but not in ``base`` at any time
    in [t_lo, t_hi].
    """
    m = times.shape[0]
    ok = True
    i = _first_index(times, t_lo)
    while i < m and times[i] == t_lo:
        if kinds[i] == DEATH and e_lo <= src[i] <= e_hi:
            x = src[i] - wlo
            full[x] = 0
            base[x] = 0
        i += 1
    for x in range(j_lo, j_hi + 1):
        if full[x - wlo] and not base[x - wlo]:
            ok = False
    while i < m and times[i] <= t_hi:
        if src[i] < e_lo or src[i] > e_hi or dst[i] < e_lo or dst[i] > e_hi:
            i += 1
            continue
        if kinds[i] == DEATH:
            x = src[i] - wlo
            full[x] = 0
            base[x] = 0
        else:
            y = src[i] - wlo
            x = dst[i] - wlo
            if full[y]:
                full[x] = 1
            if base[y]:
                base[x] = 1
            if ok and j_lo <= dst[i] <= j_hi and full[x] and not base[x]:
                ok = False
        i += 1
    return ok, full, base


# ---------------------------------------------------------------------------
# two-type sweep
# ---------------------------------------------------------------------------


@njit(cache=True)
def _prio(x, boundary):
    return 1 if x <= boundary else 2


@njit(cache=True)
def _settle(ix, x, state, cont, may, mopen, blo, bhi, R):
    """Refresh the possible-type bits of site x after an event touched it.

    Clean sites hold exactly their simulated type.  Edge-zone sites also admit
    whatever types the outside may hold, and feed their own bits outward.
    Returns a bitmask of sides that just became open.
    """
    if cont[ix] == 0:
        may[ix] = 0
        if state[ix] == 1:
            may[ix] = 1
        elif state[ix] == 2:
            may[ix] = 2
    opened = 0
    if x < blo + R:
        was = mopen[0]
        may[ix] |= mopen[0]
        mopen[0] |= may[ix]
        if was == 0 and mopen[0] != 0:
            opened |= 1
    if x > bhi - R:
        was = mopen[1]
        may[ix] |= mopen[1]
        mopen[1] |= may[ix]
        if was == 0 and mopen[1] != 0:
            opened |= 2
    return opened


@njit(cache=True)
def _open_side(side, wlo, cont, may, mopen, blo, bhi, R):
    if side == 0:
        a, b = blo, min(blo + R, bhi + 1)
    else:
        a, b = max(bhi - R + 1, blo), bhi + 1
    for z in range(a, b):
        cont[z - wlo] = 1
        may[z - wlo] |= mopen[side]


@njit(cache=True)
def _zone_open(x, blo, bhi, R, mopen):
    return (x < blo + R and mopen[0] != 0) or (x > bhi - R and mopen[1] != 0)


@njit(cache=True)
def forward_two_type(times, kinds, src, dst, wlo, state, allowed, boundary, t0, checks,
                     blo, bhi, R, ltype, rtype, track, log):
    """Two-type priority dynamics; mirrors ``forward_classic``.

    ``ltype``/``rtype`` are bitmasks (1: type 1, 2: type 2) of the types that
    may sit beyond each box edge at time t0; zero means the outside starts
    empty.  Besides contamination, every site carries the bitmask of types it
    might hold in the unbounded process (exact for clean sites).

    With ``log`` set, every change of a site value is recorded as
    (time, site, old, new, source site); source is the site itself for deaths.
    Returns (snaps, contamination snaps, possible-type snaps, outside masks,
    log arrays...).
    """
    n = state.shape[0]
    nc = checks.shape[0]
    snaps = np.zeros((nc, n), np.uint8)
    csnaps = np.zeros((nc, n), np.uint8)
    msnaps = np.zeros((nc, n), np.uint8)
    cont = np.zeros(n, np.uint8)
    may = np.zeros(n, np.uint8)
    mopen = np.zeros(2, np.uint8)
    if track:
        mopen[0] = ltype
        mopen[1] = rtype
        for x in range(blo, bhi + 1):
            ix = x - wlo
            if state[ix] == 1 or state[ix] == 2:
                may[ix] = state[ix]
            if state[ix] and x < blo + R:
                mopen[0] |= state[ix]
            if state[ix] and x > bhi - R:
                mopen[1] |= state[ix]
        for side in range(2):
            if mopen[side] != 0:
                _open_side(side, wlo, cont, may, mopen, blo, bhi, R)
    m = times.shape[0]
    i = _first_index(times, t0)
    cap = 1
    if log:
        cap = m - i + 1
    log_t = np.empty(cap, np.float64)
    log_site = np.empty(cap, np.int64)
    log_old = np.empty(cap, np.uint8)
    log_new = np.empty(cap, np.uint8)
    log_src = np.empty(cap, np.int64)
    nlog = 0
    c = 0
    at_start = True
    while True:
        if at_start:
            if not (i < m and times[i] == t0):
                at_start = False
                continue
        else:
            while c < nc and not (i < m and times[i] <= checks[c]):
                snaps[c, :] = state
                csnaps[c, :] = cont
                msnaps[c, :] = may
                c += 1
            if c >= nc:
                break
        if kinds[i] == DEATH:
            x = src[i] - wlo
            if 0 <= x < n and (at_start or allowed[x]):
                if log and state[x] != 0:
                    log_t[nlog] = times[i]
                    log_site[nlog] = src[i]
                    log_old[nlog] = state[x]
                    log_new[nlog] = 0
                    log_src[nlog] = src[i]
                    nlog += 1
                state[x] = 0
                if track:
                    if not _zone_open(src[i], blo, bhi, R, mopen):
                        cont[x] = 0
                    may[x] = 0
                    _settle(x, src[i], state, cont, may, mopen, blo, bhi, R)
        elif not at_start:
            y = src[i] - wlo
            x = dst[i] - wlo
            if 0 <= x < n and 0 <= y < n and allowed[x] and allowed[y]:
                px = _prio(dst[i], boundary)
                if track:
                    if state[x] == px and cont[x] == 0:
                        pass
                    elif cont[y] == 1:
                        cont[x] = 1
                    elif cont[x] == 1 and state[y] == px:
                        if not _zone_open(dst[i], blo, bhi, R, mopen):
                            cont[x] = 0
                old = state[x]
                if old != 0 and old == px:
                    pass
                elif state[y] != 0:
                    state[x] = state[y]
                if log and state[x] != old:
                    log_t[nlog] = times[i]
                    log_site[nlog] = dst[i]
                    log_old[nlog] = old
                    log_new[nlog] = state[x]
                    log_src[nlog] = src[i]
                    nlog += 1
                if track:
                    if cont[x]:
                        may[x] |= may[y]
                    opened = _settle(x, dst[i], state, cont, may, mopen, blo, bhi, R)
                    if opened & 1:
                        _open_side(0, wlo, cont, may, mopen, blo, bhi, R)
                    if opened & 2:
                        _open_side(1, wlo, cont, may, mopen, blo, bhi, R)
        i += 1
    return (snaps, csnaps, msnaps, mopen,
            log_t[:nlog], log_site[:nlog], log_old[:nlog], log_new[:nlog], log_src[:nlog])
