"""Forward evolution: event application, replay on a realization, direct simulation.

Two engines share the same arrow rules (see :mod:`coopbranch._kernels`):

* :func:`replay` applies the events of a stored realization in time order,
  which is what the pathwise coupling checks need;
* :func:`simulate_direct` is a Gillespie simulation with the total rate
  ``particles + lam * pairs`` maintained incrementally.  It never stores an
  arrow field and is the workhorse of the experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from ._pool import replica_seeds
from .graphical import GraphicalRep, events_in
from .lattice import Boundary, Configuration, WindowTouchError, new_configuration


def _check_location(location: int, L: int, parity: int, what: str) -> int:
    h = int(location)
    if not 0 <= h < 2 * L or h % 2 != parity:
        raise ValueError(f"{h} is not a {what} location on a lattice of {L} sites")
    return h


def _single(config: Configuration, h: int, direction: int) -> Configuration:
    occ = config.occ.copy().reshape(1, config.L)
    locs = np.array([h], dtype=np.int32)
    dirs = np.array([1 if direction > 0 else -1], dtype=np.int8)
    if not config.periodic and _wraps(h, int(dirs[0]), config.L):
        return config
    bad = K.replay_batch(occ, locs, dirs, 0, 1, config.periodic)
    if bad >= 0:
        raise WindowTouchError("particle reached the window edge")
    return config.with_occupancy(occ[0])


def _wraps(h: int, d: int, L: int) -> bool:
    # on a window lattice, arrows that would cross the seam are inert
    if h % 2:
        return h == 2 * L - 1
    m = h // 2
    return m == 0 or m == L - 1


def apply_jump(config: Configuration, location: int, direction: int) -> Configuration:
    """Apply one jump arrow at the odd half-unit ``location``."""
    h = _check_location(location, config.L, 1, "jump")
    return _single(config, h, direction)


def apply_branch(config: Configuration, location: int, direction: int) -> Configuration:
    """Apply one cooperative branching arrow at the even half-unit ``location``."""
    h = _check_location(location, config.L, 0, "branch")
    return _single(config, h, direction)


def _check_rep(config: Configuration, rep: GraphicalRep):
    if rep.dual:
        raise ValueError("replay needs a forward realization")
    if rep.L != config.L:
        raise ValueError("lattice size of configuration and realization differ")


def replay(config0: Configuration, rep: GraphicalRep, t0: float, t1: float) -> Configuration:
    """State at ``t1`` obtained by applying the events in ``(t0, t1]`` to ``config0``."""
    _check_rep(config0, rep)
    if t1 > rep.T or t0 < 0 or t0 > t1:
        raise ValueError(f"interval ({t0}, {t1}] exceeds the realization horizon {rep.T}")
    lo, hi = events_in(rep, t0, t1)
    occ = config0.occ.copy().reshape(1, config0.L)
    _replay_rows(occ, rep, lo, hi, config0.periodic)
    return config0.with_occupancy(occ[0])


def _replay_rows(occ: np.ndarray, rep: GraphicalRep, lo: int, hi: int, periodic: bool):
    locs, dirs = rep.locs, rep.dirs
    if not periodic:
        keep = np.array([not _wraps(int(h), int(d), rep.L)
                         for h, d in zip(locs[lo:hi], dirs[lo:hi])], dtype=bool)
        locs = np.ascontiguousarray(locs[lo:hi][keep])
        dirs = np.ascontiguousarray(dirs[lo:hi][keep])
        lo, hi = 0, locs.size
    if K.replay_batch(occ, locs, dirs, lo, hi, periodic) >= 0:
        raise WindowTouchError("particle reached the window edge")


def replay_many(occ: np.ndarray, rep: GraphicalRep, sample_times,
                periodic: bool = True) -> np.ndarray:
    """Replay a stack of configurations together on one realization.

    Returns an array of shape ``(len(sample_times), B, L)`` with the states
    at each sample time.  Used by the pathwise comparison checks.
    """
    cur = np.array(occ, dtype=np.uint8, copy=True, ndmin=2)
    times = np.asarray(sample_times, dtype=float)
    if times.size and (times[0] < 0 or times[-1] > rep.T or np.any(np.diff(times) < 0)):
        raise ValueError("sample times must be sorted and inside the horizon")
    out = np.empty((times.size,) + cur.shape, dtype=np.uint8)
    last = 0.0
    for k, t in enumerate(times):
        lo, hi = events_in(rep, last, t)
        _replay_rows(cur, rep, lo, hi, periodic)
        out[k] = cur
        last = t
    return out


@dataclass
class Trajectory:
    """Samples of a direct simulation.

    ``counts[k]`` holds (particles, adjacent pairs, adjacent triples) at
    ``times[k]``; ``snapshots`` is ``None`` unless requested.
    """

    times: np.ndarray
    counts: np.ndarray
    snapshots: np.ndarray | None
    absorb_time: float | None
    n_events: int

    def configuration(self, k: int, boundary=Boundary.PERIODIC) -> Configuration:
        if self.snapshots is None:
            raise ValueError("trajectory was run without snapshots")
        return Configuration(self.snapshots.shape[1], self.snapshots[k].copy(), boundary)


def _as_times(t) -> np.ndarray:
    times = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if times.size == 0 or times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("sample times must be nonnegative and sorted")
    return np.ascontiguousarray(times)


def simulate_direct(config0: Configuration, lam: float, t, seed: int,
                    snapshots: bool = True) -> Trajectory:
    """Gillespie simulation sampled at the time(s) ``t``.

    ``seed`` fully determines the run.  In window mode a particle reaching
    either edge site raises :class:`WindowTouchError`.
    """
    if lam < 0:
        raise ValueError("branching rate must be nonnegative")
    times = _as_times(t)
    counts, _, snaps, absorb, status, nev = K.direct_run(
        config0.occ, float(lam), times, config0.periodic, int(seed), snapshots, False)
    if status == K.WINDOW_TOUCH:
        raise WindowTouchError("particle reached the window edge")
    return Trajectory(times, counts, snaps if snapshots else None,
                      None if absorb < 0 else float(absorb), int(nev))


@dataclass(frozen=True)
class SurvivalOutcome:
    survived: bool
    extinction_time: float | None


def adjacent_pair_start(L: int, boundary=Boundary.PERIODIC) -> Configuration:
    """Two particles on neighbouring sites in the middle of the lattice."""
    m = L // 2
    return new_configuration(L, [m - 1, m], boundary)


def survival_run(lam: float, horizon: float, L: int, seed: int,
                 boundary=Boundary.PERIODIC) -> SurvivalOutcome:
    """Run from two adjacent particles until the count drops to one or ``horizon``."""
    if lam < 0:
        raise ValueError("branching rate must be nonnegative")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    c0 = adjacent_pair_start(L, boundary)
    times = np.array([float(horizon)])
    counts, _, _, absorb, status, _ = K.direct_run(
        c0.occ, float(lam), times, c0.periodic, int(seed), False, True)
    if status == K.WINDOW_TOUCH:
        raise WindowTouchError("particle reached the window edge")
    if absorb >= 0:
        return SurvivalOutcome(False, float(absorb))
    return SurvivalOutcome(True, None)


def count_batch(config0: Configuration, lam: float, sample_times, seeds) -> tuple:
    """Counts for many replicas: ``(counts[R, K, 3], active_integrals[R, K], absorb[R])``."""
    times = _as_times(sample_times)
    counts, integ, absorb, status = K.direct_count_batch(
        config0.occ, float(lam), times, config0.periodic,
        np.ascontiguousarray(seeds, dtype=np.int64))
    if np.any(status == K.WINDOW_TOUCH):
        raise WindowTouchError("particle reached the window edge")
    return counts, integ, absorb


def replicate_counts(config0: Configuration, lam: float, sample_times, replicas: int,
                     seed: int, threads: int | None = None, tag: int = 0,
                     chunk: int = 16):
    """Fan :func:`count_batch` out over a thread pool; results are order-stable."""
    from ._pool import chunked, pmap
    seeds = replica_seeds(seed, replicas, tag)
    parts = pmap(lambda ab: count_batch(config0, lam, sample_times, seeds[ab[0]:ab[1]]),
                 chunked(replicas, chunk), threads)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))
