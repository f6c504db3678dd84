"""Dual open paths, dual 3-paths and the superdual set-valued process.

All positions are odd half-unit coordinates (bonds).  They are kept
*unwrapped* on periodic lattices: a path that goes once around a ring of
``L`` sites ends up ``2L`` away from where it started, while arrow lookups
use the position modulo ``2L``.  This keeps interval pairs well defined even
when they straddle the seam.

Moves, read backward in time: a forward right jump arrow on bond ``h`` pushes
a dual path sitting on ``h`` to ``h - 2``; a left one pushes it to ``h + 2``.
A branching arrow at ``2m`` may renew a triple of paths:

* left arrow (pair ``m, m+1`` feeds ``m-1``): head bond ``2m - 1``; a triple
  whose second or third path sits on the head at ``x`` may restart as
  ``(x, x + 2, x + 4)``;
* right arrow (pair ``m-1, m`` feeds ``m+1``): head bond ``2m + 1``; a triple
  whose first or second path sits on the head at ``x`` may restart as
  ``(x - 4, x - 2, x)``.

A triple dies when two of its paths meet.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .graphical import GraphicalRep, dual_moves, dual_view, events_in
from .lattice import IntervalPair
from .walks import tau3_survival_exact

DEFAULT_CAP = 10 ** 6


def _forward_encoding(rep: GraphicalRep):
    """(locs, dirs) in forward encoding, derived from the dual arrow family."""
    d = rep if rep.dual else dual_view(rep)
    tail, disp = dual_moves(d)
    # non-jump events get an even placeholder so kernels ignore them
    locs = np.where(tail >= 0, tail, 0).astype(np.int32)
    dirs = (-(disp // 2)).astype(np.int8)
    return locs, dirs


def _window(rep: GraphicalRep, upper: float, lower: float):
    if not (0.0 <= lower <= upper <= rep.T):
        raise ValueError(f"window [{lower}, {upper}] outside the horizon [0, {rep.T}]")
    return events_in(rep, lower, upper)


@dataclass(frozen=True)
class DualPath:
    """A dual open path on ``[end_time, start_time]``.

    ``jump_times`` are decreasing; ``positions[k]`` is the position just
    below ``jump_times[k]``.
    """

    start: int
    start_time: float
    end_time: float
    jump_times: np.ndarray
    positions: np.ndarray

    def at(self, time: float) -> int:
        if not self.end_time <= time <= self.start_time:
            raise ValueError("time outside the path's window")
        k = int(np.count_nonzero(self.jump_times > time))
        return int(self.start if k == 0 else self.positions[k - 1])

    @property
    def end(self) -> int:
        return int(self.positions[-1]) if self.positions.size else self.start


def trace_dual_walk(rep: GraphicalRep, start: int, start_time: float,
                    end_time: float) -> DualPath:
    """Follow the dual open path from bond ``start`` at ``start_time`` down to ``end_time``."""
    if start % 2 != 1:
        raise ValueError("dual paths live on odd half-unit positions")
    if end_time > start_time:
        raise ValueError("a dual path runs backward: end_time must not exceed start_time")
    lo, hi = _window(rep, start_time, end_time)
    locs, dirs = _forward_encoding(rep)
    jt, jp = K.dual_trace_path(int(start), locs, dirs, rep.times, hi, lo, 2 * rep.L)
    return DualPath(int(start), float(start_time), float(end_time),
                    np.asarray(jt, dtype=float), np.asarray(jp, dtype=np.int64))


def dual_positions(rep: GraphicalRep, starts, start_time: float, end_time: float) -> np.ndarray:
    """Endpoints of several dual paths at once (unwrapped)."""
    lo, hi = _window(rep, start_time, end_time)
    locs, dirs = _forward_encoding(rep)
    return K.dual_trace(np.asarray(starts, dtype=np.int64), locs, dirs, hi, lo, 2 * rep.L)


# --- dual 3-paths ------------------------------------------------------------

@dataclass
class DualThreePath:
    """Three ordered dual paths on ``[s, u]`` with explicit renewal instants.

    ``segments`` lists ``(time, triple)`` checkpoints from the top down: the
    triple at ``u`` and the triple right after every jump or renewal.
    """

    u: float
    s: float
    segments: list = field(default_factory=list)
    renewal_times: list = field(default_factory=list)
    alive: bool = True

    def at(self, time: float) -> tuple[int, int, int]:
        if not self.s <= time <= self.u:
            raise ValueError("time outside the window")
        cur = self.segments[0][1]
        for tk, tri in self.segments[1:]:
            if tk > time:
                cur = tri
            else:
                break
        return cur

    def ordered(self) -> bool:
        return all(a < b < c for _, (a, b, c) in self.segments)


def _renewal_target(triple, h: int, d: int, twoL: int):
    a, b, c = triple
    if d < 0:
        head = (h - 1) % twoL
        for x in (b, c):
            if x % twoL == head:
                return (x, x + 2, x + 4)
    else:
        head = (h + 1) % twoL
        for x in (a, b):
            if x % twoL == head:
                return (x - 4, x - 2, x)
    return None


def follow_three_path(rep: GraphicalRep, triple, u: float, s: float,
                      renew_at=()) -> DualThreePath:
    """Follow one dual 3-path from ``triple`` at time ``u`` down to ``s``.

    Renewals are used exactly at the branching events whose times are listed
    in ``renew_at``; asking for a renewal where none is available is an error.
    The path is marked dead (and stops) once two of its members meet.
    """
    a, b, c = (int(v) for v in triple)
    if not (a < b < c) or a % 2 != 1 or b % 2 != 1 or c % 2 != 1:
        raise ValueError("triple must be strictly increasing odd half-unit positions")
    lo, hi = _window(rep, u, s)
    locs, dirs = _forward_encoding(rep)
    branch = ~(rep.dual_jump if rep.dual else (rep.locs & 1) == 1)
    wanted = set(float(x) for x in renew_at)
    twoL = 2 * rep.L
    path = DualThreePath(float(u), float(s), [(float(u), (a, b, c))])
    cur = [a, b, c]
    for e in range(hi - 1, lo - 1, -1):
        te = float(rep.times[e])
        if branch[e]:
            if te in wanted:
                tgt = _renewal_target(cur, int(rep.locs[e]), int(rep.dirs[e]), twoL)
                if tgt is None:
                    raise ValueError(f"no renewal available at time {te}")
                cur = list(tgt)
                path.renewal_times.append(te)
                path.segments.append((te, tuple(cur)))
                wanted.discard(te)
            continue
        h = int(locs[e])
        moved = False
        for q in range(3):
            if cur[q] % twoL == h:
                cur[q] -= 2 * int(dirs[e])
                moved = True
        if moved:
            path.segments.append((te, tuple(cur)))
            if not (cur[0] < cur[1] < cur[2]):
                path.alive = False
                break
    if wanted and path.alive:
        raise ValueError(f"renewal times not on branching events: {sorted(wanted)}")
    return path


# --- superdual ---------------------------------------------------------------

@dataclass
class SuperdualState:
    """A finite set of adjacent interval pairs stored as boundary triples."""

    L: int
    triples: np.ndarray
    dual_time: float = 0.0
    largest: int = 0

    def __len__(self):
        return int(self.triples.shape[0])

    def pairs(self) -> list[IntervalPair]:
        return [IntervalPair(*map(int, t)) for t in self.triples]

    def indicator(self, occ: np.ndarray) -> int:
        """1 if some pair has both intervals meeting the occupied set."""
        return int(K.pair_indicator(np.ascontiguousarray(occ, dtype=np.uint8),
                                    self.triples, len(self)))


def _as_triples(pairs) -> np.ndarray:
    if isinstance(pairs, np.ndarray):
        arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 3)
    else:
        arr = np.array([(p.i, p.j, p.k) if isinstance(p, IntervalPair) else tuple(p)
                        for p in pairs], dtype=np.int64).reshape(-1, 3)
    if arr.size and (np.any(arr % 2 != 1) or np.any(arr[:, 0] >= arr[:, 1])
                     or np.any(arr[:, 1] >= arr[:, 2])):
        raise ValueError("pairs must be increasing odd half-unit triples")
    return np.ascontiguousarray(arr)


def superdual_state(L: int, pairs) -> SuperdualState:
    return SuperdualState(L, _as_triples(pairs))


def unit_pairs(L: int) -> SuperdualState:
    """All pairs of two neighbouring single sites."""
    i = np.arange(L, dtype=np.int64)
    return SuperdualState(L, np.stack([2 * i - 1, 2 * i + 1, 2 * i + 3], axis=1))


def superdual_evolve(rep: GraphicalRep, initial: SuperdualState, u: float, t: float,
                     cap: int = DEFAULT_CAP) -> SuperdualState:
    """All pairs reachable at time ``u - t`` by dual 3-paths started from ``initial``."""
    if initial.L != rep.L:
        raise ValueError("lattice size mismatch")
    if t < 0 or u - t < 0 or u > rep.T:
        raise ValueError("backward window leaves the realization horizon")
    lo, hi = _window(rep, u, u - t)
    locs, dirs = _forward_encoding(rep)
    branch = ~(rep.dual_jump if rep.dual else (rep.locs & 1) == 1)
    # branching arrows keep their own location/direction in the kernel's encoding
    locs = np.where(branch, rep.locs, locs).astype(np.int32)
    dirs = np.where(branch, rep.dirs, dirs).astype(np.int8)
    tri, biggest = K.superdual_run(initial.triples, locs, dirs, hi, lo, 2 * rep.L, int(cap))
    if biggest < 0:
        raise OverflowError(f"superdual state exceeded the cap of {cap} pairs")
    return SuperdualState(rep.L, tri, initial.dual_time + t, int(biggest))


@dataclass(frozen=True)
class SuperdualCheck:
    violations: int
    top: int
    bottom: int
    largest: int


def superdual_pathwise_check(rep: GraphicalRep, occ0: np.ndarray, initial: SuperdualState,
                             cap: int = DEFAULT_CAP) -> SuperdualCheck:
    """Count increases of ``s -> psi(eta_s-, J_{T-s})`` along one realization.

    The forward process starts from ``occ0`` at time 0 and the superdual
    starts from ``initial`` at the horizon ``rep.T``.  ``top`` and ``bottom``
    are the indicator values at the two ends of the window.
    """
    if rep.dual:
        raise ValueError("expected a forward realization")
    occ0 = np.ascontiguousarray(occ0, dtype=np.uint8)
    n = len(rep)
    fwd = K.forward_states(occ0, rep.locs, rep.dirs, 0, n)
    v, top, bottom, biggest = K.superdual_monotonicity(
        fwd, initial.triples, rep.locs, rep.dirs, n, 0, 2 * rep.L, int(cap))
    if biggest < 0:
        raise OverflowError(f"superdual state exceeded the cap of {cap} pairs")
    return SuperdualCheck(int(v), int(top), int(bottom), int(biggest))


# --- counting dual 3-paths -----------------------------------------------------

@dataclass(frozen=True)
class ThreePathCount:
    total: int
    by_renewals: dict
    states: int


def count_3paths(rep: GraphicalRep, u: float, t: float, cap: int = DEFAULT_CAP,
                 anchor: int = 0) -> ThreePathCount:
    """Exact number of dual 3-paths on ``[u - t, u]`` from the unit triple at ``anchor``.

    The unit triple is the pair of single sites ``anchor`` and ``anchor + 1``,
    i.e. boundaries ``(2a - 1, 2a + 1, 2a + 3)``.  Paths that share a
    history are counted through multiplicities, so the work is bounded by
    the number of distinct (triple, renewal count) states; exceeding ``cap``
    such states is an error.
    """
    if t < 0 or u - t < 0 or u > rep.T:
        raise ValueError("window leaves the realization horizon")
    lo, hi = _window(rep, u, u - t)
    locs, dirs = _forward_encoding(rep)
    branch = ~(rep.dual_jump if rep.dual else (rep.locs & 1) == 1)
    twoL = 2 * rep.L
    a0 = 2 * anchor - 1
    states: dict = {(a0, a0 + 2, a0 + 4, 0): 1}
    hot = {a0 % twoL, (a0 + 2) % twoL, (a0 + 4) % twoL}
    for e in range(hi - 1, lo - 1, -1):
        if branch[e]:
            h, d = int(rep.locs[e]), int(rep.dirs[e])
            head = (h - 1) % twoL if d < 0 else (h + 1) % twoL
            if head not in hot:
                continue
            born = defaultdict(int)
            for (a, b, c, r), m in states.items():
                tgt = _renewal_target((a, b, c), h, d, twoL)
                if tgt is not None:
                    born[tgt + (r + 1,)] += m
            for key, m in born.items():
                states[key] = states.get(key, 0) + m
        else:
            h, d = int(locs[e]), int(dirs[e])
            if h not in hot:
                continue
            nxt = defaultdict(int)
            for (a, b, c, r), m in states.items():
                a2 = a - 2 * d if a % twoL == h else a
                b2 = b - 2 * d if b % twoL == h else b
                c2 = c - 2 * d if c % twoL == h else c
                if a2 < b2 < c2:
                    nxt[(a2, b2, c2, r)] += m
            states = dict(nxt)
        if len(states) > cap:
            raise OverflowError(f"more than {cap} distinct path states")
        hot = {x % twoL for key in states for x in key[:3]}
    hist: dict = defaultdict(int)
    for (_, _, _, r), m in states.items():
        hist[r] += m
    return ThreePathCount(int(sum(hist.values())), dict(sorted(hist.items())), len(states))


def renewal_expectations(lam: float, t: float, nmax: int, steps: int = 4000) -> np.ndarray:
    """``E[# dual 3-paths with exactly n renewals]`` for ``n = 0..nmax``.

    Renewal opportunities arrive at total rate ``2*lam`` (four arrow/path
    combinations at ``lam/2`` each) and every segment survives with
    probability ``G(s) = P[s < tau3]``, so the n-th term is
    ``(2 lam)^n`` times the ``(n+1)``-fold convolution of ``G`` at ``t``.
    Convolutions use the trapezoid rule on a uniform grid.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        out = np.zeros(nmax + 1)
        out[0] = 1.0
        return out
    s = np.linspace(0.0, t, steps + 1)
    ds = s[1] - s[0]
    g = tau3_survival_exact(s)
    cur = g.copy()
    out = [cur[-1]]
    for _ in range(nmax):
        nxt = np.empty_like(cur)
        for i in range(s.size):
            w = cur[: i + 1] * g[i::-1]
            nxt[i] = ds * (w.sum() - 0.5 * (w[0] + w[-1])) if i else 0.0
        cur = nxt
        out.append(cur[-1])
    return np.array(out) * (2.0 * lam) ** np.arange(nmax + 1)


def kprime_series(lam: float, K_const: float, include_unrenewed: bool = False,
                  rtol: float = 1e-12) -> float:
    """``K * sum_{n>=1} (2 lam)^n n^{5/2}`` summed with a certified tail bound.

    With ``include_unrenewed`` the sum is ``K * sum_{n>=1} (2 lam)^{n-1} n^{5/2}``,
    which also counts the term without any renewal (see the decisions notes
    on the index convention).  Requires ``0 <= lam < 1/2``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if lam >= 0.5:
        raise ValueError("series divergent for lambda >= 1/2")
    if K_const < 0:
        raise ValueError("K must be nonnegative")
    r = 2.0 * lam
    if r == 0.0:
        return float(K_const) if include_unrenewed else 0.0
    total = 0.0
    n = 1
    while True:
        term = r ** (n - 1 if include_unrenewed else n) * n ** 2.5
        total += term
        q = r * (1.0 + 1.0 / (n + 1)) ** 2.5
        if q < 1.0:
            nxt = term * r * (1.0 + 1.0 / n) ** 2.5
            tail = nxt / (1.0 - q)
            if tail < rtol * total:
                return float(K_const * total)
        n += 1
        if n > 10 ** 7:
            raise RuntimeError("series did not converge")


# --- coalescing-walk duality -----------------------------------------------------------

def all_states(L: int) -> np.ndarray:
    """Every 0/1 configuration on ``L`` sites as a ``[2**L, L]`` array."""
    if L > 20:
        raise ValueError("exhaustive enumeration limited to L <= 20")
    codes = np.arange(2 ** L, dtype=np.int64)
    return ((codes[:, None] >> np.arange(L)) & 1).astype(np.uint8)


def duality_violations(rep: GraphicalRep, states: np.ndarray | None = None) -> int:
    """Check interval duality of the pure coalescing process on one realization.

    For every initial state ``A`` in ``states`` (default: all of them) and
    every interval of ``1 .. L-1`` consecutive sites, the forward process at
    ``rep.T`` meets the interval exactly when ``A`` meets the interval
    spanned by the two dual paths traced from its boundaries down to time 0.
    Requires a realization without branching arrows.  Returns the number of
    (state, interval) pairs where the two sides disagree.
    """
    if rep.dual:
        raise ValueError("expected a forward realization")
    if np.any((rep.locs & 1) == 0):
        raise ValueError("duality of coalescing walks needs a realization without branching")
    L = rep.L
    if states is None:
        states = all_states(L)
    states = np.ascontiguousarray(states, dtype=np.uint8)
    final = states.copy()
    K.replay_batch(final, rep.locs, rep.dirs, 0, len(rep), True)
    lo, hi, sites = [], [], []
    for a in range(L):
        for n in range(1, L):
            lo.append(2 * a - 1)
            hi.append(2 * (a + n) - 1)
            sites.append(np.arange(a, a + n) % L)
    lo = np.asarray(lo, np.int64)
    hi = np.asarray(hi, np.int64)
    ends = dual_positions(rep, np.concatenate([lo, hi]), rep.T, 0.0)
    lo0, hi0 = ends[: lo.size], ends[lo.size:]
    viol = 0
    prefix = np.concatenate([np.zeros((states.shape[0], 1), np.int64),
                             np.cumsum(states, axis=1, dtype=np.int64)], axis=1)
    total = prefix[:, -1]
    for q in range(lo.size):
        fwd = final[:, sites[q]].any(axis=1)
        a = (lo0[q] + 1) // 2
        b = (hi0[q] - 1) // 2 + 1  # exclusive
        if b <= a:
            dual_hit = np.zeros(states.shape[0], bool)
        else:
            fa = (a // L) * total + prefix[:, a % L]
            fb = (b // L) * total + prefix[:, b % L]
            dual_hit = (fb - fa) > 0
        viol += int(np.count_nonzero(fwd != dual_hit))
    return viol
