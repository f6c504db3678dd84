"""Coalescing random walks and their meeting times.

Walkers jump to each neighbour at rate 1/2.  Only gaps matter, so two
walkers are simulated through one gap (a +-1 walk with total rate 2) and
three walkers through two gaps whose moves are anticorrelated via the
shared middle walker.

Closed forms used here, for a walk ``X`` with rate 1 in each direction
started at 0 (``P[X_t = n] = exp(-2t) I_n(2t)``):

* ``P[t < tau2] = P[X_t in {0, 1}] = exp(-2t) (I_0(2t) + I_1(2t))``;
* ``P[t < tau3] = exp(-2t) I_1(2t) / t``, which follows from
  ``d/dt P[t < tau2] = -P[t < tau3]`` (at zero branching rate the density
  of the fully occupied process equals ``P[t < tau2]`` and its pair
  density equals ``P[t < tau3]``).

Both are evaluated with exponentially scaled Bessel functions, accurate to
a few ulps for all ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels as K
from ._pool import chunked, pmap, replica_seeds

TAU2_CAP = 1e6
TAU3_CAP = 1e4


@dataclass(frozen=True)
class MeetingTimeSample:
    starts: tuple
    tau: float
    which_pair: tuple[int, int]


@dataclass(frozen=True)
class Censored:
    starts: tuple
    cap: float


def _validate_starts(starts) -> tuple[int, ...]:
    s = tuple(int(v) for v in starts)
    if len(s) not in (2, 3):
        raise ValueError("need two or three walkers")
    if any(b <= a for a, b in zip(s, s[1:])):
        raise ValueError("start positions must be strictly increasing")
    return s


def _gap_run(s, cap, n, seed):
    if len(s) == 2:
        tau = K.meeting2(s[1] - s[0], float(cap), n, int(seed))
        which = np.where(np.isfinite(tau), 0, -1)
        return tau, which
    return K.meeting3(s[1] - s[0], s[2] - s[1], float(cap), n, int(seed))


def simulate_meeting(starts, seed: int, cap: float | None = None):
    """One meeting-time draw, or :class:`Censored` if it exceeds ``cap``."""
    s = _validate_starts(starts)
    if cap is None:
        cap = TAU2_CAP if len(s) == 2 else TAU3_CAP
    if not cap > 0:
        raise ValueError("cap must be positive")
    tau, which = _gap_run(s, cap, 1, seed)
    if not np.isfinite(tau[0]):
        return Censored(s, float(cap))
    w = int(which[0])
    return MeetingTimeSample(s, float(tau[0]), (w, w + 1))


@dataclass
class MeetingBatch:
    """Many meeting times.  ``tau`` is ``inf`` where the run was censored."""

    starts: tuple
    cap: float
    tau: np.ndarray
    which: np.ndarray

    @property
    def censored(self) -> int:
        return int(np.count_nonzero(~np.isfinite(self.tau)))

    def truncated(self) -> np.ndarray:
        """``min(tau, cap)`` for every replica."""
        return np.minimum(self.tau, self.cap)

    def mean_truncated(self) -> tuple[float, float]:
        x = self.truncated()
        return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))

    def survival(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Empirical ``P[t < tau]`` and binomial standard errors."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t > self.cap):
            raise ValueError("survival past the censoring cap is not observed")
        p = (self.tau[None, :] > t[:, None]).mean(axis=1)
        return p, np.sqrt(p * (1 - p) / self.tau.size)


def meeting_times(starts, replicas: int, seed: int, cap: float | None = None,
                  threads: int | None = None, block: int = 20000) -> MeetingBatch:
    """Draw ``replicas`` meeting times in fixed-size seeded blocks."""
    s = _validate_starts(starts)
    if cap is None:
        cap = TAU2_CAP if len(s) == 2 else TAU3_CAP
    blocks = chunked(int(replicas), block)
    seeds = replica_seeds(seed, len(blocks), tag=len(s))
    parts = pmap(lambda i: _gap_run(s, cap, blocks[i][1] - blocks[i][0], seeds[i]),
                 range(len(blocks)), threads)
    tau = np.concatenate([p[0] for p in parts])
    which = np.concatenate([p[1] for p in parts])
    return MeetingBatch(s, float(cap), tau, which)


def mean_meeting_exact(i: int, j: int, k: int) -> float:
    """Expected first meeting time of three walkers started at ``i <= j <= k``."""
    if not (i <= j <= k):
        raise ValueError("positions must be ordered")
    return float((j - i) * (k - j))


def tau2_survival_exact(t):
    """``P[t < tau2]`` for two walkers on neighbouring sites."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    v = special.ive(0, 2 * t) + special.ive(1, 2 * t)
    return float(v) if v.ndim == 0 else v


def tau3_survival_exact(t):
    """``P[t < tau3]`` for three walkers on consecutive sites."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(t > 0, special.ive(1, 2 * t) / np.where(t > 0, t, 1.0), 1.0)
    return float(v) if v.ndim == 0 else v


def tau3_tail_estimate(t: float, replicas: int, seed: int,
                       threads: int | None = None) -> tuple[float, float]:
    """Empirical ``P[t < tau3]`` from consecutive starts, with binomial SE."""
    if not t > 0:
        raise ValueError("t must be positive")
    if replicas < 1:
        raise ValueError("need at least one replica")
    # censoring at t is exactly the event of interest, so no longer run is needed
    b = meeting_times((0, 1, 2), replicas, seed, cap=float(t), threads=threads)
    p = b.censored / replicas
    return p, float(np.sqrt(p * (1 - p) / replicas))


@dataclass(frozen=True)
class PowerFit:
    constant: float
    stderr: float
    conservative: float
    exponent: float


def fit_power_constant(t, p, se, exponent: float) -> PowerFit:
    """Weighted least squares for ``c`` in ``p = c * t**exponent``.

    Weights are ``1/se**2``.  ``conservative`` is ``max p * t**(-exponent)``,
    a data-driven stand-in for an upper constant.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    se = np.asarray(se, dtype=float)
    if t.size < 2 or not (t.size == p.size == se.size):
        raise ValueError("need at least two matching sample points")
    if not exponent < 0:
        raise ValueError("exponent must be negative")
    if np.any(~np.isfinite(se)) or np.any(se <= 0):
        raise ValueError("standard errors must be finite and positive")
    x = t ** exponent
    w = 1.0 / se ** 2
    den = np.sum(w * x * x)
    if not np.isfinite(den) or den <= 0:
        raise ValueError("degenerate weights")
    c = float(np.sum(w * x * p) / den)
    return PowerFit(c, float(1.0 / np.sqrt(den)), float(np.max(p / x)), float(exponent))
