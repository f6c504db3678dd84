"""Occupancy configurations on a finite one-dimensional lattice.

A configuration is a ``uint8`` array of length ``L`` (1 = particle present)
together with a boundary mode.  Periodic lattices wrap around; window
lattices are finite segments whose edge sites must never be reached by a
particle (engines raise :class:`WindowTouchError` if one is).

Interval boundaries are expressed in half-unit steps: the odd integer
``2*i + 1`` is the point between sites ``i`` and ``i + 1``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class Boundary(enum.Enum):
    PERIODIC = "periodic"
    WINDOW = "window"

    @classmethod
    def parse(cls, value) -> "Boundary":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown boundary {value!r}") from None


class WindowTouchError(RuntimeError):
    """A particle reached the edge of a window lattice."""


@dataclass(frozen=True)
class Configuration:
    L: int
    occ: np.ndarray
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        if self.occ.shape != (self.L,):
            raise ValueError("occupancy must have exactly L entries")

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    def sites(self) -> np.ndarray:
        return np.flatnonzero(self.occ)

    def with_occupancy(self, occ: np.ndarray) -> "Configuration":
        return Configuration(self.L, np.ascontiguousarray(occ, dtype=np.uint8), self.boundary)

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return (self.L == other.L and self.boundary is other.boundary
                and np.array_equal(self.occ, other.occ))

    def __hash__(self):
        return hash((self.L, self.boundary, self.occ.tobytes()))

    def __repr__(self):
        return f"Configuration(L={self.L}, sites={self.sites().tolist()}, {self.boundary.value})"


def new_configuration(L: int, occupied: Iterable[int] = (),
                      boundary: Boundary | str = Boundary.PERIODIC) -> Configuration:
    """Build a configuration with the listed sites occupied (duplicates collapse)."""
    if L < 3:
        raise ValueError("lattice needs at least 3 sites")
    idx = np.asarray(list(occupied), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= L):
        raise ValueError(f"site index out of range for L={L}")
    occ = np.zeros(L, dtype=np.uint8)
    occ[idx] = 1
    return Configuration(L, occ, Boundary.parse(boundary))


def full_configuration(L: int, boundary=Boundary.PERIODIC) -> Configuration:
    return new_configuration(L, range(L), boundary)


def particle_count(config: Configuration) -> int:
    return int(np.count_nonzero(config.occ))


def pair_mask(occ: np.ndarray, periodic: bool = True) -> np.ndarray:
    """Boolean array whose entry i says sites i and i+1 are both occupied.

    Works on a single configuration or on a stack with the site axis last.
    For window lattices the last entry is always False.
    """
    occ = np.asarray(occ).astype(bool)
    m = occ & np.roll(occ, -1, axis=-1)
    if not periodic:
        m[..., -1] = False
    return m


def adjacent_pairs(config: Configuration) -> set[int]:
    """Indices i such that i and its successor are both occupied."""
    return set(np.flatnonzero(pair_mask(config.occ, config.periodic)).tolist())


def _pattern_bits(pattern) -> np.ndarray:
    if isinstance(pattern, str):
        if not pattern or set(pattern) - {"0", "1"}:
            raise ValueError(f"bad pattern {pattern!r}")
        return np.frombuffer(pattern.encode(), dtype=np.uint8) - ord("0")
    bits = np.asarray(pattern, dtype=np.uint8)
    if bits.ndim != 1 or bits.size == 0 or bits.max() > 1:
        raise ValueError(f"bad pattern {pattern!r}")
    return bits


def pattern_density(configs: Sequence[Configuration] | np.ndarray, pattern,
                    periodic: bool | None = None) -> float:
    """Fraction of lattice windows matching ``pattern``, averaged over a sample.

    ``configs`` is a sequence of configurations or a 2-D occupancy array.
    On periodic lattices every one of the L cyclic windows is used; on window
    lattices only the ``L - len(pattern) + 1`` windows that fit.
    """
    bits = _pattern_bits(pattern)
    if isinstance(configs, np.ndarray):
        arr = np.atleast_2d(configs).astype(np.uint8)
        per = True if periodic is None else periodic
    else:
        configs = list(configs)
        if not configs:
            raise ValueError("empty sample")
        arr = np.stack([c.occ for c in configs])
        per = configs[0].periodic if periodic is None else periodic
    if arr.shape[0] == 0:
        raise ValueError("empty sample")
    L = arr.shape[1]
    n = bits.size
    if n > L:
        raise ValueError("pattern longer than lattice")
    match = np.ones_like(arr, dtype=bool)
    for off, b in enumerate(bits):
        match &= np.roll(arr, -off, axis=1) == b
    if not per:
        match = match[:, : L - n + 1]
    return float(match.mean())


@dataclass(frozen=True)
class IntervalPair:
    """Two adjacent discrete intervals with half-unit boundaries ``i < j < k``.

    The first interval holds the sites strictly between ``i`` and ``j``, the
    second those strictly between ``j`` and ``k``.  Boundaries are odd
    integers (half-unit coordinates); values may exceed ``2L`` on a periodic
    lattice, in which case the interval wraps.
    """

    i: int
    j: int
    k: int

    def __post_init__(self):
        for v in (self.i, self.j, self.k):
            if v % 2 != 1:
                raise ValueError("interval boundaries must be odd half-unit values")
        if not (self.i < self.j < self.k):
            raise ValueError("boundaries must satisfy i < j < k")

    @classmethod
    def from_sites(cls, first: tuple[int, int], second: tuple[int, int]) -> "IntervalPair":
        """From inclusive site ranges ``(a, b)`` and ``(b + 1, c)``."""
        a, b = first
        b2, c = second
        if b2 != b + 1:
            raise ValueError("intervals must be adjacent")
        return cls(2 * a - 1, 2 * b + 1, 2 * c + 1)

    def intervals(self) -> tuple[range, range]:
        return (range((self.i + 1) // 2, (self.j + 1) // 2),
                range((self.j + 1) // 2, (self.k + 1) // 2))

    def both_hit(self, occ: np.ndarray) -> bool:
        L = occ.size
        a, b = self.intervals()
        return bool(any(occ[s % L] for s in a) and any(occ[s % L] for s in b))
