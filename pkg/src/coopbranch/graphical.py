"""Realized Poisson arrow fields (the graphical representation).

Locations are integers in half-unit steps on ``[0, 2L)``:

* odd ``h = 2*i + 1`` is a jump location on the bond between sites ``i`` and
  ``i + 1``.  A right arrow moves a particle from ``i`` to ``i + 1``, a left
  arrow from ``i + 1`` to ``i``.  Each direction has intensity 1/2.
* even ``h = 2*m`` is a branching location at site ``m``.  A right arrow
  lets the pair ``(m - 1, m)`` place a particle on ``m + 1``; a left arrow
  lets ``(m, m + 1)`` place one on ``m - 1``.  Each direction has intensity
  lambda/2.

Every (location, direction, layer) stream draws from its own generator,
derived from the root seed via :class:`numpy.random.SeedSequence` spawn
keys, so augmenting a realization never disturbs the streams it already has.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class Direction(enum.IntEnum):
    LEFT = -1
    RIGHT = 1


class Kind(enum.IntEnum):
    JUMP = 0
    BRANCH = 1


def kind_of(location: int) -> Kind:
    return Kind.JUMP if location % 2 else Kind.BRANCH


@dataclass(frozen=True)
class ArrowEvent:
    time: float
    location: int
    direction: Direction

    @property
    def kind(self) -> Kind:
        return kind_of(self.location)


@dataclass(frozen=True, eq=False)
class GraphicalRep:
    """An eagerly generated arrow field on ``[0, T]``.

    Events are stored as three parallel arrays sorted by time.  ``dual`` marks
    a relabeled (time-reversed) view produced by :func:`dual_view`; ``depth``
    counts how many times the field was augmented.
    """

    L: int
    lam: float
    T: float
    seed: int
    times: np.ndarray
    locs: np.ndarray
    dirs: np.ndarray
    dual: bool = False
    depth: int = 0
    attempts: tuple = field(default=(0,))
    dual_jump: np.ndarray | None = None

    def __len__(self):
        return self.times.size

    def events(self):
        for t, h, d in zip(self.times.tolist(), self.locs.tolist(), self.dirs.tolist()):
            yield ArrowEvent(t, h, Direction(d))

    def stream(self, location: int, direction: int) -> np.ndarray:
        """Sorted times of the events at one location and direction."""
        m = (self.locs == location) & (self.dirs == int(direction))
        return self.times[m]

    def jump_mask(self) -> np.ndarray:
        return (self.locs & 1) == 1

    def same_events(self, other: "GraphicalRep") -> bool:
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.locs, other.locs)
                and np.array_equal(self.dirs, other.dirs))


def _stream_times(seed: int, layer: int, location: int, direction: int,
                  attempt: int, rate: float, T: float) -> np.ndarray:
    key = (layer, location, 0 if direction < 0 else 1, attempt)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
    n = rng.poisson(rate * T)
    return np.sort(rng.uniform(0.0, T, n))


def _draw_layer(L: int, T: float, seed: int, layer: int, attempt: int,
                jump_rate: float, branch_rate: float):
    ts, hs, ds = [], [], []
    for h in range(2 * L):
        rate = jump_rate if h % 2 else branch_rate
        if rate <= 0.0:
            continue
        for d in (-1, 1):
            t = _stream_times(seed, layer, h, d, attempt, rate, T)
            ts.append(t)
            hs.append(np.full(t.size, h, dtype=np.int32))
            ds.append(np.full(t.size, d, dtype=np.int8))
    if not ts:
        return (np.empty(0), np.empty(0, np.int32), np.empty(0, np.int8))
    return np.concatenate(ts), np.concatenate(hs), np.concatenate(ds)


def _merge(parts):
    t = np.concatenate([p[0] for p in parts])
    h = np.concatenate([p[1] for p in parts]).astype(np.int32)
    d = np.concatenate([p[2] for p in parts]).astype(np.int8)
    order = np.argsort(t, kind="stable")
    return t[order], h[order], d[order]


def _has_tie(times: np.ndarray) -> bool:
    if times.size == 0:
        return False
    return bool(times[0] <= 0.0 or np.any(np.diff(times) <= 0.0))


def generate(L: int, lam: float, T: float, seed: int, max_attempts: int = 16) -> GraphicalRep:
    """Draw all jump and branching arrows on a lattice of ``L`` sites up to ``T``."""
    if L < 3:
        raise ValueError("lattice needs at least 3 sites")
    if lam < 0:
        raise ValueError("branching rate must be nonnegative")
    if not T > 0:
        raise ValueError("horizon must be positive")
    for attempt in range(max_attempts):
        t, h, d = _merge([_draw_layer(L, T, seed, 0, attempt, 0.5, 0.5 * lam)])
        if not _has_tie(t):
            return GraphicalRep(L, float(lam), float(T), int(seed), t, h, d,
                                attempts=(attempt,))
    raise RuntimeError("could not draw a tie-free realization")


def augment(rep: GraphicalRep, lam_prime: float, max_attempts: int = 16) -> GraphicalRep:
    """Superimpose extra branching arrows of intensity (lam' - lam)/2 per stream.

    Jump arrows are passed through untouched and every existing branching
    arrow is kept, so the result is a realization for rate ``lam_prime``
    that dominates ``rep``.
    """
    if rep.dual:
        raise ValueError("augment expects a forward realization")
    if lam_prime < rep.lam:
        raise ValueError("augmented rate must be at least the current rate")
    if lam_prime == rep.lam:
        return rep
    layer = rep.depth + 1
    for attempt in range(max_attempts):
        extra = _draw_layer(rep.L, rep.T, rep.seed, layer, attempt, 0.0,
                            0.5 * (lam_prime - rep.lam))
        t, h, d = _merge([(rep.times, rep.locs, rep.dirs), extra])
        if not _has_tie(t):
            return replace(rep, lam=float(lam_prime), times=t, locs=h, dirs=d,
                           depth=layer, attempts=rep.attempts + (attempt,))
    raise RuntimeError("could not draw a tie-free augmentation")


def dual_view(rep: GraphicalRep) -> GraphicalRep:
    """Relabel jump arrows into the dual arrow family.

    A right jump arrow at ``h`` (odd) becomes a dual left arrow at the site
    location ``h - 1``; a left jump arrow at ``h`` becomes a dual right arrow
    at ``h + 1``.  Dual arrows move dual paths, which live on bonds, from the
    arrow's tail bond to its head bond as time runs downward.  Branching
    arrows are carried through unchanged.  Applying the map to a dual view
    undoes it.
    """
    L2 = 2 * rep.L
    locs = rep.locs.astype(np.int64)
    dirs = rep.dirs.astype(np.int64)
    if not rep.dual:
        # dual jump arrows sit on even locations, so remember which ones they are
        jm = (locs & 1) == 1
        new_locs = np.where(jm, (locs - dirs) % L2, locs)
        keep = jm
    else:
        jm = rep.dual_jump
        new_locs = np.where(jm, (locs - dirs) % L2, locs)
        keep = None
    new_dirs = np.where(jm, -dirs, dirs)
    return replace(rep, locs=new_locs.astype(np.int32), dirs=new_dirs.astype(np.int8),
                   dual=not rep.dual, dual_jump=keep)


def rep_kind_mask(rep: GraphicalRep) -> np.ndarray:
    """True for events that are (forward or dual) jump arrows."""
    if rep.dual:
        return rep.dual_jump
    return (rep.locs & 1) == 1


def dual_moves(rep: GraphicalRep) -> tuple[np.ndarray, np.ndarray]:
    """For a dual view: (bond the arrow acts on, signed displacement in half-units)."""
    if not rep.dual:
        raise ValueError("expected a dual view")
    jm = rep_kind_mask(rep)
    d = rep.dirs.astype(np.int64)
    tail = (rep.locs.astype(np.int64) - d) % (2 * rep.L)
    return np.where(jm, tail, -1), np.where(jm, 2 * d, 0)


def events_in(rep: GraphicalRep, t0: float, t1: float) -> tuple[int, int]:
    """Index range ``[lo, hi)`` of the events with time in ``(t0, t1]``."""
    if not (0.0 <= t0 <= t1 <= rep.T):
        raise ValueError(f"time range ({t0}, {t1}] outside [0, {rep.T}]")
    lo = int(np.searchsorted(rep.times, t0, side="right"))
    hi = int(np.searchsorted(rep.times, t1, side="right"))
    return lo, hi


def event_slice(rep: GraphicalRep, t0: float, t1: float):
    lo, hi = events_in(rep, t0, t1)
    return rep.times[lo:hi], rep.locs[lo:hi], rep.dirs[lo:hi]


# --- binary event tables ---------------------------------------------------

_MAGIC = b"CBGR"
_VERSION = 1
_HEADER = struct.Struct("<4sIIddQQBB")
_RECORD = np.dtype([("time", "<f8"), ("location", "<i4"), ("code", "u1")])


def _code(locs, dirs):
    kind = (locs % 2 == 0).astype(np.uint8)
    right = (dirs > 0).astype(np.uint8)
    return kind | (right << 1)


def dump_events(rep: GraphicalRep, path) -> None:
    """Write a little-endian event table.

    The file starts with a fixed header (magic, version, L, lambda, T, seed,
    event count, dual flag, depth) followed by packed 13-byte records: time
    as float64, location as int32 in half-unit steps, and one byte holding
    the kind in bit 0 (1 = branching) and the direction in bit 1 (1 = right).
    """
    if rep.dual:
        raise ValueError("dump the forward realization, not a dual view")
    rec = np.empty(len(rep), dtype=_RECORD)
    rec["time"] = rep.times
    rec["location"] = rep.locs
    rec["code"] = _code(rep.locs, rep.dirs)
    head = _HEADER.pack(_MAGIC, _VERSION, rep.L, rep.lam, rep.T,
                        rep.seed & 0xFFFFFFFFFFFFFFFF, len(rep), 0, rep.depth)
    try:
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(rec.tobytes())
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def load_events(path) -> GraphicalRep:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, ver, L, lam, T, seed, n, _dual, depth = _HEADER.unpack_from(data)
    if magic != _MAGIC or ver != _VERSION:
        raise ValueError(f"{path}: not an event table")
    body = data[_HEADER.size:]
    if len(body) != n * _RECORD.itemsize:
        raise ValueError(f"{path}: record count mismatch")
    rec = np.frombuffer(body, dtype=_RECORD)
    locs = rec["location"].astype(np.int32)
    dirs = np.where(rec["code"] & 2, 1, -1).astype(np.int8)
    if np.any((rec["code"] & 1) != (locs % 2 == 0)):
        raise ValueError(f"{path}: kind bit disagrees with location parity")
    return GraphicalRep(int(L), float(lam), float(T), int(seed),
                        rec["time"].astype(np.float64), locs, dirs, depth=int(depth))
