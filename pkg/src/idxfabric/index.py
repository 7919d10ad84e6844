"""Hierarchical Z-order address math.

A volume axis of (padded) extent 2^n contributes n bits to a sample address.
A bit pattern is a string of axis labels, most-significant position first,
that fixes how coordinate bits interleave into a single Morton address Z.
Reordering Z addresses by resolution level (trailing-zero count) yields the
hierarchical address hz: all samples of level <= L occupy hz [0, 2^L), so a
prefix read of the hz axis is a strided subsampling of the volume.

Everything in this module is a pure function of its inputs; scalar entry
points operate on Python ints, the *_vec helpers on uint64 numpy arrays.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    AddressOutOfRange,
    CoordOutOfRange,
    EmptyBox,
    LevelOutOfRange,
    PatternTooLong,
)

MAX_PATTERN_BITS = 62

_U1 = np.uint64(1)


def bits_for_extent(extent: int) -> int:
    """Number of address bits for an axis of the given (unpadded) extent."""
    if extent < 1:
        raise CoordOutOfRange(f"extent must be >= 1, got {extent}")
    return (extent - 1).bit_length()


@dataclass(frozen=True)
class BitPattern:
    """Interleaving schedule mapping per-axis coordinate bits to address bits.

    ``axes`` is the axis declaration order; ``pattern`` lists one axis label
    per address bit, most-significant first.  Axes with zero bits (extent 1)
    are legal: they simply never appear in the pattern.
    """

    axes: tuple[str, ...]
    pattern: str
    # axis -> ((axis_bit, z_bit), ...) with axis_bit/z_bit counted from LSB=0
    _bit_map: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.axes:
            raise PatternTooLong("pattern needs at least one axis")
        if len(set(self.axes)) != len(self.axes):
            raise PatternTooLong(f"duplicate axis labels in {self.axes}")
        if len(self.pattern) > MAX_PATTERN_BITS:
            raise PatternTooLong(
                f"{len(self.pattern)} bits exceed the {MAX_PATTERN_BITS}-bit budget"
            )
        counts = Counter(self.pattern)
        unknown = set(counts) - set(self.axes)
        if unknown:
            raise CoordOutOfRange(f"pattern uses undeclared axes {sorted(unknown)}")
        m = len(self.pattern)
        seen: Counter = Counter()
        bit_map: dict[str, list[tuple[int, int]]] = {a: [] for a in self.axes}
        for pos, axis in enumerate(self.pattern):
            axis_bit = counts[axis] - 1 - seen[axis]
            bit_map[axis].append((axis_bit, m - 1 - pos))
            seen[axis] += 1
        object.__setattr__(self, "_bit_map", {a: tuple(v) for a, v in bit_map.items()})

    @property
    def m(self) -> int:
        return len(self.pattern)

    def bits(self, axis: str) -> int:
        return len(self._bit_map[axis])

    def padded_extent(self, axis: str) -> int:
        return 1 << self.bits(axis)

    def padded_extents(self) -> dict[str, int]:
        return {a: self.padded_extent(a) for a in self.axes}

    def strides_at(self, level: int) -> dict[str, int]:
        """Per-axis sample stride of the level-``level`` lattice."""
        if not 0 <= level <= self.m:
            raise LevelOutOfRange(f"level {level} not in [0, {self.m}]")
        low = Counter(self.pattern[level:])
        return {a: 1 << low[a] for a in self.axes}

    def scatter_axis(self, axis: str, coords: np.ndarray) -> np.ndarray:
        """Spread an array of axis coordinates onto their address bit slots."""
        coords = np.asarray(coords, dtype=np.uint64)
        out = np.zeros_like(coords)
        for axis_bit, z_bit in self._bit_map[axis]:
            out |= ((coords >> np.uint64(axis_bit)) & _U1) << np.uint64(z_bit)
        return out

    def gather_axis(self, axis: str, z: np.ndarray) -> np.ndarray:
        """Extract an axis's coordinates from an array of addresses."""
        z = np.asarray(z, dtype=np.uint64)
        out = np.zeros_like(z)
        for axis_bit, z_bit in self._bit_map[axis]:
            out |= ((z >> np.uint64(z_bit)) & _U1) << np.uint64(axis_bit)
        return out


def default_pattern(padded_bits_per_axis: Mapping[str, int]) -> BitPattern:
    """Round-robin interleaving: cycle axes in declaration order, one bit per
    axis with bits remaining, starting at the most significant position."""
    if not padded_bits_per_axis:
        raise PatternTooLong("need at least one axis")
    for axis, n in padded_bits_per_axis.items():
        if n < 0:
            raise CoordOutOfRange(f"axis {axis!r} has negative bit count {n}")
    total = sum(padded_bits_per_axis.values())
    if total == 0:
        raise PatternTooLong("at least one axis must have bits")
    if total > MAX_PATTERN_BITS:
        raise PatternTooLong(f"{total} bits exceed the {MAX_PATTERN_BITS}-bit budget")
    remaining = dict(padded_bits_per_axis)
    out: list[str] = []
    while len(out) < total:
        for axis in padded_bits_per_axis:
            if remaining[axis] > 0:
                out.append(axis)
                remaining[axis] -= 1
    return BitPattern(tuple(padded_bits_per_axis), "".join(out))


def pattern_for_extents(extents: Mapping[str, int]) -> BitPattern:
    """Default pattern for a grid of (unpadded) per-axis extents."""
    return default_pattern({a: bits_for_extent(e) for a, e in extents.items()})


def _coords_tuple(coords, pattern: BitPattern) -> tuple[int, ...]:
    if isinstance(coords, Mapping):
        return tuple(int(coords.get(a, 0)) for a in pattern.axes)
    seq = tuple(int(c) for c in coords)
    if len(seq) != len(pattern.axes):
        raise CoordOutOfRange(
            f"expected {len(pattern.axes)} coordinates, got {len(seq)}"
        )
    return seq


def morton_encode(coords, pattern: BitPattern) -> int:
    """Interleave per-axis sample indices into a Morton address."""
    z = 0
    for axis, c in zip(pattern.axes, _coords_tuple(coords, pattern)):
        if not 0 <= c < pattern.padded_extent(axis):
            raise CoordOutOfRange(
                f"{axis}={c} outside [0, {pattern.padded_extent(axis)})"
            )
        for axis_bit, z_bit in pattern._bit_map[axis]:
            z |= ((c >> axis_bit) & 1) << z_bit
    return z


def morton_decode(z: int, pattern: BitPattern) -> dict[str, int]:
    """Inverse of morton_encode; returns a per-axis coordinate mapping."""
    if not 0 <= z < (1 << pattern.m):
        raise AddressOutOfRange(f"Z={z} outside [0, 2^{pattern.m})")
    out = {}
    for axis in pattern.axes:
        c = 0
        for axis_bit, z_bit in pattern._bit_map[axis]:
            c |= ((z >> z_bit) & 1) << axis_bit
        out[axis] = c
    return out


def hz_of(z: int, m: int) -> tuple[int, int]:
    """Map a Morton address to (resolution level, hierarchical address).

    Level 0 is the single coarsest sample (Z=0); level L>0 holds the samples
    with exactly m-L trailing zero bits.  hz packs levels contiguously:
    level L occupies hz [2^(L-1), 2^L).
    """
    if not 0 <= z < (1 << m):
        raise AddressOutOfRange(f"Z={z} outside [0, 2^{m})")
    if z == 0:
        return 0, 0
    tz = (z & -z).bit_length() - 1
    level = m - tz
    return level, (1 << (level - 1)) + (z >> (tz + 1))


def z_of(hz: int, m: int) -> int:
    """Inverse of hz_of: recover the Morton address of a hierarchical address."""
    if not 0 <= hz < (1 << m):
        raise AddressOutOfRange(f"hz={hz} outside [0, 2^{m})")
    if hz == 0:
        return 0
    level = hz.bit_length()
    offset = hz - (1 << (level - 1))
    return (offset << (m - level + 1)) | (1 << (m - level))


def level_of(z: int, m: int) -> int:
    return hz_of(z, m)[0]


@dataclass(frozen=True)
class LevelGrid:
    """Geometry of the level-``level`` sample lattice over the padded domain.

    Samples with level <= ``level`` sit exactly at coordinates that are
    multiples of the per-axis strides; counts are over the padded extents,
    so the lattice always holds 2^level samples.
    """

    level: int
    strides: dict[str, int]
    counts: dict[str, int]

    def total_samples(self) -> int:
        n = 1
        for c in self.counts.values():
            n *= c
        return n


def level_grid(pattern: BitPattern, level: int) -> LevelGrid:
    strides = pattern.strides_at(level)
    counts = {a: pattern.padded_extent(a) // strides[a] for a in pattern.axes}
    return LevelGrid(level=level, strides=strides, counts=counts)


# --- vectorized address transforms -----------------------------------------

def z_grid(pattern: BitPattern, axis_coords: Mapping[str, np.ndarray]) -> np.ndarray:
    """Morton addresses for the cartesian product of per-axis coordinates.

    Returns an ndarray of shape (len(c_0), ..., len(c_{d-1})) in the
    pattern's axis order; relies on the fact that interleaving is separable
    per axis, so the grid is a broadcast sum of 1-D scatters.
    """
    scattered = []
    ndim = len(pattern.axes)
    for i, axis in enumerate(pattern.axes):
        s = pattern.scatter_axis(axis, axis_coords[axis])
        shape = [1] * ndim
        shape[i] = s.size
        scattered.append(s.reshape(shape))
    out = scattered[0]
    for s in scattered[1:]:
        out = out + s
    return out


def _bit_length_vec(x: np.ndarray) -> np.ndarray:
    """Exact per-element bit length of a uint64 array."""
    x = x.copy()
    for shift in (1, 2, 4, 8, 16, 32):
        x |= x >> np.uint64(shift)
    return np.bitwise_count(x).astype(np.uint64)


def hz_of_vec(z: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized hz_of: returns (levels, hz) uint64 arrays."""
    z = np.asarray(z, dtype=np.uint64)
    um = np.uint64(m)
    lsb = z & (~z + _U1)
    tz = np.bitwise_count(lsb - _U1).astype(np.uint64)
    tz = np.minimum(tz, um)  # z == 0 wraps to popcount 64; clamp to level 0
    level = um - tz
    base = (_U1 << level) >> _U1
    hz = base + (z >> np.minimum(tz + _U1, np.uint64(63)))
    return level, hz


def z_of_vec(hz: np.ndarray, m: int) -> np.ndarray:
    """Vectorized z_of."""
    hz = np.asarray(hz, dtype=np.uint64)
    um = np.uint64(m)
    level = _bit_length_vec(hz)
    offset = hz - ((_U1 << level) >> _U1)
    shift = um - level  # level <= m for valid input
    z = (offset << np.minimum(shift + _U1, np.uint64(63))) | (_U1 << shift)
    return np.where(hz == 0, np.uint64(0), z)


# --- box queries ------------------------------------------------------------

def _check_box(box: Mapping[str, tuple[int, int]], pattern: BitPattern) -> None:
    for axis in pattern.axes:
        if axis not in box:
            raise EmptyBox(f"box missing axis {axis!r}")
        lo, hi = box[axis]
        if lo >= hi:
            raise EmptyBox(f"box empty on axis {axis!r}: [{lo}, {hi})")
        if lo < 0 or hi > pattern.padded_extent(axis):
            raise CoordOutOfRange(
                f"box [{lo}, {hi}) on {axis!r} outside padded extent "
                f"{pattern.padded_extent(axis)}"
            )


def _window_coords(lo: int, hi: int, stride: int) -> np.ndarray:
    """Lattice points at the given stride covering [lo, hi) for
    piecewise-constant refinement: starts at the stride multiple at or below
    lo (the coarse parent of every position in the box) and ends at the last
    multiple below hi."""
    start = (lo // stride) * stride
    last = ((hi - 1) // stride) * stride
    return np.arange(start, last + 1, stride, dtype=np.uint64)


def level_block_sets(
    box: Mapping[str, tuple[int, int]],
    level: int,
    pattern: BitPattern,
    block_bits: int,
) -> list[np.ndarray]:
    """Per-level block index sets whose union is blocks_for_box.

    Element L holds the blocks containing the level-<=L lattice points of the
    box window at level-L strides; fetching set L before emitting refinement
    level L is exactly the progressive read schedule.
    """
    _check_box(box, pattern)
    m = pattern.m
    if not 0 <= level <= m:
        raise LevelOutOfRange(f"level {level} not in [0, {m}]")
    if not 0 <= block_bits <= m:
        raise LevelOutOfRange(f"block_bits {block_bits} not in [0, {m}]")
    kb = np.uint64(block_bits)
    sets: list[np.ndarray] = []
    padded = pattern.padded_extents()
    for lv in range(level + 1):
        strides = pattern.strides_at(lv)
        full = all(
            box[a][0] < strides[a] and box[a][1] > padded[a] - strides[a]
            for a in pattern.axes
        )
        if full:
            # whole lattice: hz occupies [0, 2^lv) so blocks are a prefix
            last_block = ((1 << lv) - 1) >> block_bits
            sets.append(np.arange(last_block + 1, dtype=np.uint64))
            continue
        coords = {a: _window_coords(*box[a], strides[a]) for a in pattern.axes}
        _, hz = hz_of_vec(z_grid(pattern, coords).ravel(), m)
        sets.append(np.unique(hz >> kb))
    return sets


def blocks_for_box(
    box: Mapping[str, tuple[int, int]],
    level: int,
    pattern: BitPattern,
    block_bits: int,
) -> list[int]:
    """Blocks holding every sample a level-``level`` read of ``box`` can touch.

    Covers, for each refinement level L <= level, the level-L lattice window
    that spans the box (including the coarse parents just below its lower
    bound), so the result is monotone in both the box and the level and is a
    superset of what any single-level read needs.  Ascending order, coarse
    blocks first.
    """
    sets = level_block_sets(box, level, pattern, block_bits)
    merged = np.unique(np.concatenate(sets)) if sets else np.empty(0, np.uint64)
    return [int(b) for b in merged]


def lattice_coords_in_box(
    box: Mapping[str, tuple[int, int]], pattern: BitPattern, level: int
) -> dict[str, np.ndarray]:
    """Per-axis level-lattice coordinates strictly inside the box.

    This is the sample set a plain (non-progressive) read returns: the
    level-``level`` stride lattice cropped to [lo, hi).  May be empty along
    an axis when the box falls between stride multiples.
    """
    _check_box(box, pattern)
    strides = pattern.strides_at(level)
    out = {}
    for axis in pattern.axes:
        lo, hi = box[axis]
        s = strides[axis]
        start = ((lo + s - 1) // s) * s
        out[axis] = np.arange(start, hi, s, dtype=np.uint64)
    return out


def box_sample_count(
    box: Mapping[str, tuple[int, int]], pattern: BitPattern, level: int
) -> int:
    """Number of level-lattice samples inside the box (a read's result size)."""
    n = 1
    for arr in lattice_coords_in_box(box, pattern, level).values():
        n *= arr.size
    return n


def full_box(pattern: BitPattern, extents: Mapping[str, int] | None = None):
    """The whole-domain box (unpadded if extents given, else padded)."""
    if extents is None:
        extents = pattern.padded_extents()
    return {a: (0, int(extents[a])) for a in pattern.axes}
