"""Comparison processes: contact process with double deaths, oriented
percolation, and the voter-model interface representation.

Contact process with double deaths
    Every infected site infects each neighbour at rate ``lam/2``; every
    neighbouring pair of sites is hit by a double death at rate 1, which
    clears both sites.

Coupling with the cooperative branching-coalescent
    The state ``zeta`` lives on pair indices (``i`` stands for the pair of
    sites ``i, i+1``).  Built from a forward realization:

    * a right branching arrow at ``2m`` lets pair ``m-1`` infect pair ``m``;
    * a left branching arrow at ``2m`` lets pair ``m`` infect pair ``m-1``;
    * every jump arrow, whatever its direction, clears the two pairs that
      contain its source site.  Each pair is cleared by two rate-1/2 jump
      streams, i.e. at rate 1.

    Starting from ``zeta_0`` inside the set of occupied pairs of ``eta_0``,
    ``zeta_t`` stays inside the occupied pairs of ``eta_t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._pool import pmap, replica_seeds
from .graphical import GraphicalRep
from .lattice import pair_mask


# --- contact process with double deaths ----------------------------------------

def simulate_contact_dd(state0: np.ndarray, lam: float, sample_times, seed: int,
                        periodic: bool = True) -> np.ndarray:
    """Snapshots of the contact process with double deaths at ``sample_times``."""
    if lam < 0:
        raise ValueError("infection rate must be nonnegative")
    times = np.ascontiguousarray(np.atleast_1d(sample_times), dtype=np.float64)
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("sample times must be nonnegative and sorted")
    return K.contact_dd_run(np.ascontiguousarray(state0, dtype=np.uint8), float(lam),
                            times, periodic, int(seed))


@dataclass(frozen=True)
class ContactDDStreams:
    """Arrow streams of the coupled contact process, read off a realization.

    ``infect_right`` / ``infect_left`` hold ``(time, source pair)`` rows;
    ``deaths`` holds ``(time, left pair)`` rows, each clearing the pair and
    its right neighbour.
    """

    L: int
    T: float
    infect_right: np.ndarray
    infect_left: np.ndarray
    deaths: np.ndarray

    def intensities(self) -> tuple[float, float, float]:
        """Empirical per-location intensities of the three streams."""
        s = self.L * self.T
        return (len(self.infect_right) / s, len(self.infect_left) / s, len(self.deaths) / s)


def couple_contact_dd(rep: GraphicalRep) -> ContactDDStreams:
    if rep.dual:
        raise ValueError("expected a forward realization")
    L = rep.L
    locs = rep.locs.astype(np.int64)
    dirs = rep.dirs.astype(np.int64)
    t = rep.times
    jm = (locs & 1) == 1
    m = locs // 2
    br = ~jm & (dirs > 0)
    bl = ~jm & (dirs < 0)
    i = locs // 2
    src = np.where(dirs > 0, i, (i + 1) % L)
    return ContactDDStreams(
        L, rep.T,
        np.column_stack([t[br], (m[br] - 1) % L]),
        np.column_stack([t[bl], m[bl]]),
        np.column_stack([t[jm], (src[jm] - 1) % L]),
    )


def contact_inclusion_violations(rep: GraphicalRep, eta0: np.ndarray,
                                 zeta0: np.ndarray | None = None) -> int:
    """Replay both processes on ``rep``; count events that break the inclusion.

    ``zeta0`` defaults to all occupied pairs of ``eta0``.
    """
    eta = np.array(eta0, dtype=np.uint8, copy=True)
    if zeta0 is None:
        zeta = pair_mask(eta, True).astype(np.uint8)
    else:
        zeta = np.array(zeta0, dtype=np.uint8, copy=True)
        if np.any(zeta.astype(bool) & ~pair_mask(eta, True)):
            raise ValueError("zeta0 must lie inside the occupied pairs of eta0")
    return int(K.coupled_contact_violations(eta, zeta, rep.locs, rep.dirs, 0, len(rep)))


# --- oriented percolation ---------------------------------------------------------

def _check_parity(W0, level: int = 0) -> np.ndarray:
    w = np.unique(np.asarray(list(W0), dtype=np.int64))
    if w.size and np.any((w + level) % 2 != 0):
        raise ValueError("oriented percolation sites must have even parity at level 0")
    return w


def simulate_op(W0, p: float, n_levels: int, seed: int) -> list[np.ndarray]:
    """Level sets ``W_0 .. W_n`` of oriented percolation on the even sublattice.

    The edge leaving ``(i, n)`` to ``side`` is open iff a counter-based
    uniform ``U(seed, n, i, side)`` is below ``p``, so runs with the same seed
    and larger ``p`` open a superset of edges.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n_levels < 0:
        raise ValueError("number of levels must be nonnegative")
    w = _check_parity(W0)
    _, kept = K.op_levels(w, float(p), int(n_levels), np.uint64(seed), True)
    return [np.asarray(x) for x in kept]


def op_survival(W0, p: float, n_levels: int, seeds) -> np.ndarray:
    """Indicator per seed that ``W_n`` is nonempty at the last level."""
    w = _check_parity(W0)
    out = np.empty(len(seeds), dtype=bool)
    for r, s in enumerate(seeds):
        sizes, _ = K.op_levels(w, float(p), int(n_levels), np.uint64(s), False)
        out[r] = sizes[-1] > 0
    return out


def op_monotone_violations(W0, p: float, p_prime: float, n_levels: int, seed: int) -> int:
    """Number of levels where ``W_n(p)`` is not inside ``W_n(p')`` (``p <= p'``)."""
    if p > p_prime:
        raise ValueError("need p <= p'")
    a = simulate_op(W0, p, n_levels, seed)
    b = simulate_op(W0, p_prime, n_levels, seed)
    return sum(int(not np.all(np.isin(x, y))) for x, y in zip(a, b))


# --- block events -------------------------------------------------------------------

def block_event_probability(lam: float, T: float) -> float:
    """Probability that one oriented-percolation edge is good.

    Time is rescaled by ``lam`` so infections have intensity 1/2 and double
    deaths ``1/lam``.  The edge from ``i`` to ``i+1`` in a block of length
    ``T`` is good if at least one infection crosses it and none of the three
    pairs touching ``i`` or ``i+1`` suffers a death.
    """
    if lam <= 0 or T <= 0:
        raise ValueError("lambda and T must be positive")
    return float(-np.expm1(-0.5 * T) * np.exp(-3.0 * T / lam))


@dataclass
class BlockEventResult:
    lam: float
    T: float
    estimate: float
    stderr: float
    exact: float
    metadata: dict = field(default_factory=dict)


def block_event_mc(lam: float, T: float, n_sites: int, n_levels: int, seed: int) -> BlockEventResult:
    """Monte Carlo frequency of good edges over a ring of blocks.

    Stream counts per block are drawn in rescaled time; both edge directions
    of every space-time block are evaluated.  Neighbouring edges share death
    streams, so the standard error is computed from per-level means.
    """
    if lam <= 0 or T <= 0:
        raise ValueError("lambda and T must be positive")
    rng = np.random.default_rng(seed)
    shape = (n_levels, n_sites)
    inf_r = rng.poisson(0.5 * T, shape) > 0
    inf_l = rng.poisson(0.5 * T, shape) > 0
    quiet = rng.poisson(T / lam, shape) == 0  # quiet[b]: no death on bond b

    def sh(a, k):
        return np.roll(a, -k, axis=1)

    # right edge from i: infection on bond i, no death on bonds i-1, i, i+1
    chi_r = inf_r & sh(quiet, -1) & quiet & sh(quiet, 1)
    # left edge from i: infection on bond i-1, no death on bonds i-2, i-1, i
    chi_l = sh(inf_l, -1) & sh(quiet, -2) & sh(quiet, -1) & quiet
    per_level = 0.5 * (chi_r.mean(axis=1) + chi_l.mean(axis=1))
    est = float(per_level.mean())
    se = float(per_level.std(ddof=1) / np.sqrt(n_levels)) if n_levels > 1 else float("nan")
    meta = {"time_rescale": float(lam), "infection_rate": 0.5, "death_rate": 1.0 / lam,
            "n_sites": int(n_sites), "n_levels": int(n_levels), "seed": int(seed)}
    return BlockEventResult(float(lam), float(T), est, se, block_event_probability(lam, T), meta)


# --- voter interfaces -------------------------------------------------------------

@dataclass
class VoterRun:
    times: np.ndarray
    interfaces: np.ndarray
    low_interface_samples: int

    def density(self) -> np.ndarray:
        return self.interfaces.mean(axis=1)


def voter_interface_run(L: int, lam: float, sample_times, seed: int) -> VoterRun:
    """Multitype voter model with singleton rebirth; interface sets at sample times.

    Each site copies a uniformly chosen neighbour at rate 1 and every
    singleton spawns a brand-new type on a random neighbour at rate ``lam``.
    All sites start with distinct types.  Samples with at most two
    interfaces are counted in ``low_interface_samples``: only there can a
    type wrap around the ring and break the correspondence with the particle
    system.
    """
    if L < 3:
        raise ValueError("lattice needs at least 3 sites")
    if lam < 0:
        raise ValueError("rate must be nonnegative")
    times = np.ascontiguousarray(np.atleast_1d(sample_times), dtype=np.float64)
    out = K.voter_run(int(L), float(lam), times, int(seed))
    low = int(np.count_nonzero(out.sum(axis=1) <= 2))
    return VoterRun(times, out, low)


def voter_density_batch(L: int, lam: float, sample_times, replicas: int, seed: int,
                        threads: int | None = None) -> tuple[np.ndarray, int]:
    """Per-replica interface densities ``[R, K]`` and the total low-interface count."""
    seeds = replica_seeds(seed, replicas, tag=7)

    def one(r):
        v = voter_interface_run(L, lam, sample_times, int(seeds[r]))
        return v.density(), v.low_interface_samples

    res = pmap(one, range(replicas), threads)
    return np.stack([r[0] for r in res]), sum(r[1] for r in res)


__all__ = [
    "simulate_contact_dd", "couple_contact_dd", "ContactDDStreams",
    "contact_inclusion_violations", "simulate_op", "op_survival",
    "op_monotone_violations", "block_event_probability", "block_event_mc",
    "voter_interface_run", "voter_density_batch", "VoterRun",
]
