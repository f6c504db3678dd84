"""Compiled inner loops.

Everything in here is plain numba-jitted numpy code operating on flat arrays.
Locations of arrow events are stored in half-unit steps: on a lattice of L
sites, ``h = 2*i`` is the branching location at site ``i`` and
``h = 2*i + 1`` is the jump location on the bond between ``i`` and ``i + 1``.
Directions are ``+1`` (right) and ``-1`` (left).

Each stochastic kernel reseeds numba's generator from an explicit integer
seed on entry so that a replica is a pure function of its seed.
"""

import numpy as np
from numba import njit

OK = 0
WINDOW_TOUCH = 1


# ---------------------------------------------------------------------------
# arrow rules shared by every engine
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def jump_endpoints(h, d, L):
    i = h >> 1
    j = i + 1
    if j == L:
        j = 0
    if d > 0:
        return i, j
    return j, i


@njit(cache=True, nogil=True)
def branch_sites(h, d, L):
    """Return (parent_a, parent_b, target) for a branching arrow."""
    m = h >> 1
    if d > 0:
        return (m - 1) % L, m, (m + 1) % L
    return m, (m + 1) % L, (m - 1) % L


@njit(cache=True, nogil=True)
def replay_batch(occ, locs, dirs, start, stop, periodic):
    """Apply events ``start:stop`` to every row of ``occ`` in place.

    Returns the index of the event that put a particle on a window edge, or
    -1 if none did.
    """
    B, L = occ.shape
    for e in range(start, stop):
        h = locs[e]
        d = dirs[e]
        if h & 1:
            src, dst = jump_endpoints(h, d, L)
            for b in range(B):
                if occ[b, src]:
                    occ[b, src] = 0
                    occ[b, dst] = 1
                    if not periodic and (dst == 0 or dst == L - 1):
                        return e
        else:
            pa, pb, tgt = branch_sites(h, d, L)
            for b in range(B):
                if occ[b, pa] and occ[b, pb] and not occ[b, tgt]:
                    occ[b, tgt] = 1
                    if not periodic and (tgt == 0 or tgt == L - 1):
                        return e
    return -1


@njit(cache=True, nogil=True)
def forward_states(occ0, locs, dirs, lo, hi):
    """States after each of the events ``lo:hi``; row 0 is ``occ0``."""
    L = occ0.size
    out = np.empty((hi - lo + 1, L), dtype=np.uint8)
    out[0, :] = occ0
    cur = occ0.copy().reshape(1, L)
    for e in range(lo, hi):
        replay_batch(cur, locs, dirs, e, e + 1, True)
        out[e - lo + 1, :] = cur[0]
    return out


@njit(cache=True, nogil=True)
def replay_sampled(occ, times, locs, dirs, sample_times, periodic):
    """Replay a single configuration and snapshot it at each sample time.

    The snapshot at time s includes every event with time <= s.
    """
    L = occ.size
    K = sample_times.size
    out = np.zeros((K, L), dtype=np.uint8)
    view = occ.reshape(1, L)
    e = 0
    n = times.size
    for k in range(K):
        stop = e
        while stop < n and times[stop] <= sample_times[k]:
            stop += 1
        bad = replay_batch(view, locs, dirs, e, stop, periodic)
        if bad >= 0:
            return out, bad
        e = stop
        out[k, :] = occ
    return out, -1


# ---------------------------------------------------------------------------
# direct (Gillespie) engine with incremental particle and pair indices
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _pair_add(k, pairs, pairpos, cnt):
    if pairpos[k] < 0:
        pairs[cnt[1]] = k
        pairpos[k] = cnt[1]
        cnt[1] += 1


@njit(cache=True, nogil=True)
def _pair_remove(k, pairs, pairpos, cnt):
    idx = pairpos[k]
    if idx >= 0:
        last = pairs[cnt[1] - 1]
        pairs[idx] = last
        pairpos[last] = idx
        pairpos[k] = -1
        cnt[1] -= 1


@njit(cache=True, nogil=True)
def _add(s, occ, plist, ppos, pairs, pairpos, cnt, periodic):
    L = occ.size
    occ[s] = 1
    plist[cnt[0]] = s
    ppos[s] = cnt[0]
    cnt[0] += 1
    left = s - 1
    right = s + 1
    if periodic:
        left %= L
        right %= L
    if left >= 0 and occ[left]:
        _pair_add(left, pairs, pairpos, cnt)
    if right < L and occ[right]:
        _pair_add(s, pairs, pairpos, cnt)


@njit(cache=True, nogil=True)
def _remove(s, occ, plist, ppos, pairs, pairpos, cnt, periodic):
    L = occ.size
    occ[s] = 0
    idx = ppos[s]
    last = plist[cnt[0] - 1]
    plist[idx] = last
    ppos[last] = idx
    ppos[s] = -1
    cnt[0] -= 1
    left = s - 1
    if periodic:
        left %= L
    if left >= 0:
        _pair_remove(left, pairs, pairpos, cnt)
    _pair_remove(s, pairs, pairpos, cnt)


@njit(cache=True, nogil=True)
def _init_index(occ, periodic):
    L = occ.size
    work = np.zeros(L, dtype=np.uint8)
    plist = np.empty(L, dtype=np.int64)
    ppos = -np.ones(L, dtype=np.int64)
    pairs = np.empty(L, dtype=np.int64)
    pairpos = -np.ones(L, dtype=np.int64)
    cnt = np.zeros(2, dtype=np.int64)
    for s in range(L):
        if occ[s]:
            _add(s, work, plist, ppos, pairs, pairpos, cnt, periodic)
    return work, plist, ppos, pairs, pairpos, cnt


@njit(cache=True, nogil=True)
def _count_triples(occ, pairs, npairs, periodic):
    L = occ.size
    c = 0
    for q in range(npairs):
        k = pairs[q] + 2
        if periodic:
            k %= L
        if k < L and occ[k]:
            c += 1
    return c


@njit(cache=True, nogil=True)
def _active(n):
    return n if n >= 2 else 0


@njit(cache=True, nogil=True)
def direct_run(occ0, lam, sample_times, periodic, seed, keep_snapshots,
               stop_when_absorbed):
    """Continuous-time simulation of the cooperative branching-coalescent.

    Returns ``(counts, integrals, snaps, absorb_time, status, n_events)``:

    * ``counts[k] = (particles, adjacent pairs, adjacent triples)`` at
      ``sample_times[k]``;
    * ``integrals[k]`` is the time integral of the active mass between
      ``sample_times[k-1]`` (or 0) and ``sample_times[k]``, where the active
      mass is the particle count while it is at least two and zero after
      absorption (a lone walker carries no density in the limit L -> inf);
    * ``absorb_time`` is the first time the particle count is below two
      (``-1`` if that never happened before the last sample time).
    """
    np.random.seed(seed)
    L = occ0.size
    K = sample_times.size
    occ, plist, ppos, pairs, pairpos, cnt = _init_index(occ0, periodic)
    counts = np.zeros((K, 3), dtype=np.int64)
    integrals = np.zeros(K, dtype=np.float64)
    if keep_snapshots:
        snaps = np.zeros((K, L), dtype=np.uint8)
    else:
        snaps = np.zeros((0, L), dtype=np.uint8)
    absorb_time = -1.0
    if cnt[0] < 2:
        absorb_time = 0.0
    status = OK
    n_events = 0
    t = 0.0
    last = 0.0
    k = 0
    while k < K:
        rate = cnt[0] + lam * cnt[1]
        if rate > 0.0:
            tnext = t - np.log(1.0 - np.random.random()) / rate
        else:
            tnext = np.inf
        while k < K and sample_times[k] <= tnext:
            integrals[k] += _active(cnt[0]) * (sample_times[k] - last)
            last = sample_times[k]
            counts[k, 0] = cnt[0]
            counts[k, 1] = cnt[1]
            counts[k, 2] = _count_triples(occ, pairs, cnt[1], periodic)
            if keep_snapshots:
                snaps[k, :] = occ
            k += 1
        if k >= K:
            break
        integrals[k] += _active(cnt[0]) * (tnext - last)
        last = tnext
        t = tnext
        n_events += 1
        if np.random.random() * rate < cnt[0]:
            s = plist[int(np.random.random() * cnt[0])]
            if np.random.random() < 0.5:
                dst = s + 1
            else:
                dst = s - 1
            if periodic:
                dst %= L
            _remove(s, occ, plist, ppos, pairs, pairpos, cnt, periodic)
            if not periodic and (dst <= 0 or dst >= L - 1):
                status = WINDOW_TOUCH
                break
            if not occ[dst]:
                _add(dst, occ, plist, ppos, pairs, pairpos, cnt, periodic)
            if cnt[0] < 2 and absorb_time < 0.0:
                absorb_time = t
                if stop_when_absorbed and not keep_snapshots:
                    # a lone particle never changes the count again
                    while k < K:
                        counts[k, 0] = cnt[0]
                        k += 1
                    break
        else:
            p = pairs[int(np.random.random() * cnt[1])]
            if np.random.random() < 0.5:
                tgt = p + 2
            else:
                tgt = p - 1
            if periodic:
                tgt %= L
            if not periodic and (tgt <= 0 or tgt >= L - 1):
                status = WINDOW_TOUCH
                break
            if not occ[tgt]:
                _add(tgt, occ, plist, ppos, pairs, pairpos, cnt, periodic)
    return counts, integrals, snaps, absorb_time, status, n_events


@njit(cache=True, nogil=True)
def direct_count_batch(occ0, lam, sample_times, periodic, seeds):
    """Run one replica per seed; return stacked counts and integrals."""
    R = seeds.size
    K = sample_times.size
    counts = np.zeros((R, K, 3), dtype=np.int64)
    integrals = np.zeros((R, K), dtype=np.float64)
    absorb = np.zeros(R, dtype=np.float64)
    status = np.zeros(R, dtype=np.int64)
    for r in range(R):
        c, ig, _, a, st, _ = direct_run(occ0, lam, sample_times, periodic,
                                        seeds[r], False, True)
        counts[r] = c
        integrals[r] = ig
        absorb[r] = a
        status[r] = st
    return counts, integrals, absorb, status


# ---------------------------------------------------------------------------
# coalescing walkers (gap processes)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def meeting2(gap0, cap, n, seed):
    """First hitting time of 0 for a +-1 walk with rate 1 per direction.

    Censored samples are reported as ``inf``.
    """
    np.random.seed(seed)
    out = np.empty(n, dtype=np.float64)
    for r in range(n):
        g = gap0
        t = 0.0
        while True:
            t -= 0.5 * np.log(1.0 - np.random.random())
            if t >= cap:
                out[r] = np.inf
                break
            if np.random.random() < 0.5:
                g += 1
            else:
                g -= 1
                if g == 0:
                    out[r] = t
                    break
    return out


@njit(cache=True, nogil=True)
def meeting3(g1_0, g2_0, cap, n, seed):
    """Three independent rate-1 walkers tracked through their two gaps.

    Returns meeting times (``inf`` if censored at ``cap``) and which gap
    closed first (0 for the left pair, 1 for the right pair, -1 censored).
    """
    np.random.seed(seed)
    out = np.empty(n, dtype=np.float64)
    which = np.empty(n, dtype=np.int64)
    for r in range(n):
        g1 = g1_0
        g2 = g2_0
        t = 0.0
        while True:
            t -= np.log(1.0 - np.random.random()) / 3.0
            if t >= cap:
                out[r] = np.inf
                which[r] = -1
                break
            u = np.random.random() * 6.0
            if u < 1.0:
                g1 -= 1
            elif u < 2.0:
                g1 += 1
            elif u < 3.0:
                g1 += 1
                g2 -= 1
            elif u < 4.0:
                g1 -= 1
                g2 += 1
            elif u < 5.0:
                g2 += 1
            else:
                g2 -= 1
            if g1 == 0:
                out[r] = t
                which[r] = 0
                break
            if g2 == 0:
                out[r] = t
                which[r] = 1
                break
    return out, which


# ---------------------------------------------------------------------------
# dual paths
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def dual_trace(pos, locs, dirs, hi, lo, twoL):
    """Move unwrapped dual positions backward through events ``hi-1 .. lo``.

    A dual path sitting on the jump location of a forward arrow moves one
    site against the arrow.
    """
    P = pos.copy()
    for e in range(hi - 1, lo - 1, -1):
        h = locs[e]
        if h & 1:
            d = dirs[e]
            for q in range(P.size):
                if P[q] % twoL == h:
                    P[q] -= 2 * d
    return P


@njit(cache=True, nogil=True)
def dual_trace_path(start, locs, dirs, times, hi, lo, twoL):
    """Full trajectory of one dual path: jump times and positions after."""
    jt = []
    jp = []
    p = start
    for e in range(hi - 1, lo - 1, -1):
        h = locs[e]
        if h & 1 and p % twoL == h:
            p -= 2 * dirs[e]
            jt.append(times[e])
            jp.append(p)
    return jt, jp


@njit(cache=True, nogil=True)
def _norm_triples(T, n, twoL):
    for q in range(n):
        s = (T[q, 0] // twoL) * twoL
        T[q, 0] -= s
        T[q, 1] -= s
        T[q, 2] -= s


@njit(cache=True, nogil=True)
def _dedup(T, n, twoL):
    if n <= 1:
        return n
    big = np.int64(1) << np.int64(21)
    keys = np.empty(n, dtype=np.int64)
    for q in range(n):
        keys[q] = T[q, 0] + twoL * ((T[q, 1] - T[q, 0]) + big * (T[q, 2] - T[q, 1]))
    order = np.argsort(keys)
    tmp = T[:n].copy()
    m = 0
    prev = np.int64(-1)
    for q in range(n):
        kq = keys[order[q]]
        if m == 0 or kq != prev:
            T[m, :] = tmp[order[q], :]
            m += 1
            prev = kq
    return m


@njit(cache=True, nogil=True)
def superdual_step(T, n, h, d, twoL, cap):
    """Apply one arrow (processed backward in time) to a set of triples.

    Jump arrows move the dual paths; triples whose paths meet are dropped.
    Branching arrows optionally renew a triple at the arrow head, so the
    renewed triple is added alongside the original.  Returns the new size,
    or -1 if it would exceed ``cap``.
    """
    if h & 1:
        changed = False
        m = 0
        for q in range(n):
            a = T[q, 0]
            b = T[q, 1]
            c = T[q, 2]
            if a % twoL == h:
                a -= 2 * d
                changed = True
            if b % twoL == h:
                b -= 2 * d
                changed = True
            if c % twoL == h:
                c -= 2 * d
                changed = True
            if a < b and b < c:
                T[m, 0] = a
                T[m, 1] = b
                T[m, 2] = c
                m += 1
        if changed:
            _norm_triples(T, m, twoL)
            m = _dedup(T, m, twoL)
        return m
    m = n
    if d < 0:
        head = (h - 1) % twoL
        for q in range(n):
            for k in (1, 2):
                x = T[q, k]
                if x % twoL == head:
                    if m >= cap:
                        return -1
                    T[m, 0] = x
                    T[m, 1] = x + 2
                    T[m, 2] = x + 4
                    m += 1
    else:
        head = (h + 1) % twoL
        for q in range(n):
            for k in (0, 1):
                x = T[q, k]
                if x % twoL == head:
                    if m >= cap:
                        return -1
                    T[m, 0] = x - 4
                    T[m, 1] = x - 2
                    T[m, 2] = x
                    m += 1
    if m > n:
        _norm_triples(T, m, twoL)
        m = _dedup(T, m, twoL)
    return m


@njit(cache=True, nogil=True)
def _occupied_between(pref, total, L, lo, hi):
    # sites strictly between half-unit positions lo < hi (unwrapped, odd)
    a = (lo + 1) // 2
    b = (hi - 1) // 2 + 1
    fa = (a // L) * total + pref[a % L]
    fb = (b // L) * total + pref[b % L]
    return fb - fa


@njit(cache=True, nogil=True)
def pair_indicator(occ, T, n):
    """1 if some triple's two intervals both meet the occupied set."""
    L = occ.size
    pref = np.zeros(L + 1, dtype=np.int64)
    for s in range(L):
        pref[s + 1] = pref[s] + occ[s]
    total = pref[L]
    if total == 0:
        return 0
    for q in range(n):
        if (_occupied_between(pref, total, L, T[q, 0], T[q, 1]) > 0 and
                _occupied_between(pref, total, L, T[q, 1], T[q, 2]) > 0):
            return 1
    return 0


@njit(cache=True, nogil=True)
def superdual_monotonicity(forward, T0, locs, dirs, hi, lo, twoL, cap):
    """Count increases of s -> psi(eta_{s-}, J_{u-s}) along one realization.

    ``forward[k]`` is the forward state after the first ``k`` events of the
    window ``lo:hi`` (so ``forward[0]`` is the initial state).  The dual set
    is evolved backward from ``T0`` at the top of the window.  Returns
    ``(violations, indicator_top, indicator_bottom, max_size)``; ``max_size``
    is -1 if the cap was hit.
    """
    m = hi - lo
    T = np.empty((cap, 3), dtype=np.int64)
    n = T0.shape[0]
    T[:n, :] = T0
    _norm_triples(T, n, twoL)
    n = _dedup(T, n, twoL)
    vals = np.empty(m + 1, dtype=np.int64)
    vals[m] = pair_indicator(forward[m], T, n)
    biggest = n
    for k in range(m, 0, -1):
        e = lo + k - 1
        n = superdual_step(T, n, locs[e], dirs[e], twoL, cap)
        if n < 0:
            return 0, 0, 0, -1
        if n > biggest:
            biggest = n
        vals[k - 1] = pair_indicator(forward[k - 1], T, n)
    viol = 0
    for k in range(m):
        if vals[k + 1] > vals[k]:
            viol += 1
    return viol, vals[m], vals[0], biggest


# ---------------------------------------------------------------------------
# comparison processes
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def contact_dd_run(occ0, lam, sample_times, periodic, seed):
    """Contact process with double deaths, snapshots at sample times.

    Every infected site proposes infections at total rate ``lam`` and each of
    its two bonds at rate 1; a bond whose other end is also infected is
    accepted with probability 1/2 so that every bond dies at rate 1.
    """
    np.random.seed(seed)
    L = occ0.size
    K = sample_times.size
    occ = occ0.copy()
    plist = np.empty(L, dtype=np.int64)
    ppos = -np.ones(L, dtype=np.int64)
    n = 0
    for s in range(L):
        if occ[s]:
            plist[n] = s
            ppos[s] = n
            n += 1
    snaps = np.zeros((K, L), dtype=np.uint8)
    t = 0.0
    k = 0
    while k < K:
        rate = n * (lam + 2.0)
        if rate > 0.0:
            tnext = t - np.log(1.0 - np.random.random()) / rate
        else:
            tnext = np.inf
        while k < K and sample_times[k] <= tnext:
            snaps[k, :] = occ
            k += 1
        if k >= K:
            break
        t = tnext
        s = plist[int(np.random.random() * n)]
        u = np.random.random() * (lam + 2.0)
        if u < lam:
            if np.random.random() < 0.5:
                tgt = s + 1
            else:
                tgt = s - 1
            if periodic:
                tgt %= L
            if 0 <= tgt < L and not occ[tgt]:
                occ[tgt] = 1
                plist[n] = tgt
                ppos[tgt] = n
                n += 1
        else:
            if np.random.random() < 0.5:
                o = s + 1
            else:
                o = s - 1
            if periodic:
                o %= L
            inside = 0 <= o < L
            if inside and occ[o] and np.random.random() < 0.5:
                continue
            for v in (s, o):
                if 0 <= v < L and occ[v]:
                    occ[v] = 0
                    idx = ppos[v]
                    last = plist[n - 1]
                    plist[idx] = last
                    ppos[last] = idx
                    ppos[v] = -1
                    n -= 1
    return snaps


@njit(cache=True, nogil=True)
def coupled_contact_violations(eta, zeta, locs, dirs, start, stop):
    """Replay eta on the arrows and zeta on the derived streams side by side.

    Returns the number of events after which zeta is not contained in the
    set of adjacent occupied pairs of eta.
    """
    L = eta.size
    viol = 0
    for e in range(start, stop):
        h = locs[e]
        d = dirs[e]
        if h & 1:
            src, dst = jump_endpoints(h, d, L)
            if eta[src]:
                eta[src] = 0
                eta[dst] = 1
            # double death of the two pair indices containing the source
            zeta[(src - 1) % L] = 0
            zeta[src] = 0
        else:
            pa, pb, tgt = branch_sites(h, d, L)
            if eta[pa] and eta[pb]:
                eta[tgt] = 1
            m = h >> 1
            if d > 0:
                if zeta[(m - 1) % L]:
                    zeta[m] = 1
            else:
                if zeta[m]:
                    zeta[(m - 1) % L] = 1
        for i in range(L):
            if zeta[i] and not (eta[i] and eta[(i + 1) % L]):
                viol += 1
                break
    return viol


@njit(cache=True, nogil=True)
def voter_run(L, lam, sample_times, seed):
    """Nearest-neighbour multitype voter model with singleton rebirth.

    Starts with all sites carrying distinct labels on a ring.  Returns the
    interface indicator (label of i differs from label of i+1) at each
    sample time.
    """
    np.random.seed(seed)
    K = sample_times.size
    Y = np.arange(L).astype(np.int64)
    fresh = np.int64(L)
    sing = np.empty(L, dtype=np.int64)
    spos = -np.ones(L, dtype=np.int64)
    ns = 0
    for i in range(L):
        if Y[i] != Y[(i - 1) % L] and Y[i] != Y[(i + 1) % L]:
            sing[ns] = i
            spos[i] = ns
            ns += 1
    out = np.zeros((K, L), dtype=np.uint8)
    t = 0.0
    k = 0
    while k < K:
        rate = L + lam * ns
        tnext = t - np.log(1.0 - np.random.random()) / rate
        while k < K and sample_times[k] <= tnext:
            for i in range(L):
                out[k, i] = 1 if Y[i] != Y[(i + 1) % L] else 0
            k += 1
        if k >= K:
            break
        t = tnext
        if np.random.random() * rate < L:
            i = int(np.random.random() * L)
            if np.random.random() < 0.5:
                Y[i] = Y[(i + 1) % L]
            else:
                Y[i] = Y[(i - 1) % L]
        else:
            s = sing[int(np.random.random() * ns)]
            if np.random.random() < 0.5:
                i = (s + 1) % L
            else:
                i = (s - 1) % L
            Y[i] = fresh
            fresh += 1
        for j in (i - 1, i, i + 1):
            j %= L
            is_s = Y[j] != Y[(j - 1) % L] and Y[j] != Y[(j + 1) % L]
            if is_s and spos[j] < 0:
                sing[ns] = j
                spos[j] = ns
                ns += 1
            elif not is_s and spos[j] >= 0:
                idx = spos[j]
                last = sing[ns - 1]
                sing[idx] = last
                spos[last] = idx
                spos[j] = -1
                ns -= 1
    return out


@njit(cache=True, nogil=True)
def _splitmix(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15))
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def edge_uniform(seed, level, site, side):
    """Counter-based uniform for the edge leaving (site, level) to ``side``."""
    x = _splitmix(np.uint64(seed))
    x = _splitmix(x ^ np.uint64(level))
    x = _splitmix(x ^ np.uint64(site + (1 << 40)))
    x = _splitmix(x ^ np.uint64(side + 1))
    return (x >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def op_levels(W0, p, n_levels, seed, keep):
    """Oriented percolation level sets.  Returns sizes and (optionally) sets."""
    sizes = np.zeros(n_levels + 1, dtype=np.int64)
    cur = np.sort(W0)
    sizes[0] = cur.size
    kept = [cur.copy()]
    for n in range(n_levels):
        nxt = np.empty(2 * cur.size, dtype=np.int64)
        m = 0
        for q in range(cur.size):
            i = cur[q]
            if edge_uniform(seed, n, i, 0) < p:
                nxt[m] = i - 1
                m += 1
            if edge_uniform(seed, n, i, 1) < p:
                nxt[m] = i + 1
                m += 1
        cur = np.unique(nxt[:m])
        sizes[n + 1] = cur.size
        if keep:
            kept.append(cur.copy())
    return sizes, kept


@njit(cache=True, nogil=True)
def superdual_run(T0, locs, dirs, hi, lo, twoL, cap):
    """Evolve a set of triples backward through events ``hi-1 .. lo``.

    Returns ``(triples, largest_size)``; ``largest_size`` is -1 on overflow.
    """
    T = np.empty((cap, 3), dtype=np.int64)
    n = T0.shape[0]
    T[:n, :] = T0
    _norm_triples(T, n, twoL)
    n = _dedup(T, n, twoL)
    biggest = n
    for e in range(hi - 1, lo - 1, -1):
        n = superdual_step(T, n, locs[e], dirs[e], twoL, cap)
        if n < 0:
            return T[:0].copy(), -1
        if n > biggest:
            biggest = n
    return T[:n].copy(), biggest
