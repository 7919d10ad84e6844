"""Conversion and benchmarking: raw row-major volumes in and out of the
hierarchical block layout.

Ingestion is a permutation: every sample of the padded domain is written to
its hierarchical address exactly once, with padding-only positions holding
the field's fill value so constant regions deflate to almost nothing.  The
default path materializes the whole permuted volume in memory; volumes whose
reorder buffer would exceed ``buffer_cap_bytes`` fall back to batched
gathers bounded by the same cap.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import codec as codec_mod
from . import index
from .codec import CodecSpec, pack_envelope, truncate_precision, unpack_envelope
from .descriptor import DatasetDescriptor
from .errors import (
    CrcMismatch,
    IoFailure,
    LevelOutOfRange,
    NotFound,
    ReplicaExists,
    ShapeMismatch,
)
from .store import BlockKey, BlockStore, MemStore, StoreProfile, copy_blocks

DEFAULT_BUFFER_CAP = 256 << 20
_MIB = float(1 << 20)

RAWV_MAGIC = b"RAWV"
RAWV_VERSION = 1
_RAWV_HEADER = struct.Struct("<4sBBBB4QfI16s")
assert _RAWV_HEADER.size == 64
_DTYPE_F32 = 1


@dataclass
class RawVolume:
    """Row-major float32 volume for one (field, timestep)."""

    data: np.ndarray
    axes: tuple[str, ...]
    field: str = "value"
    timestep: int = 0
    fill: float = 0.0

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != len(self.axes):
            raise ShapeMismatch(
                f"{self.data.ndim}-d payload with {len(self.axes)} axes"
            )

    @property
    def extents(self) -> dict[str, int]:
        return dict(zip(self.axes, self.data.shape))

    @property
    def nbytes(self) -> int:
        return self.data.size * 4


def write_rawv(volume: RawVolume, path: str | Path) -> None:
    """64-byte header + little-endian float32 payload, one (field, timestep)."""
    dims = list(volume.data.shape) + [0] * (4 - volume.data.ndim)
    if volume.data.ndim > 4:
        raise ShapeMismatch("RAWV carries at most 4 axes")
    header = _RAWV_HEADER.pack(
        RAWV_MAGIC,
        RAWV_VERSION,
        _DTYPE_F32,
        volume.data.ndim,
        0,
        *dims,
        volume.fill,
        volume.timestep,
        volume.field.encode()[:16].ljust(16, b"\0"),
    )
    data = volume.data
    if data.dtype.byteorder == ">":
        data = data.astype("<f4")
    Path(path).write_bytes(header + data.tobytes())


def read_rawv(path: str | Path, axes: Sequence[str] | None = None) -> RawVolume:
    blob = Path(path).read_bytes()
    if len(blob) < _RAWV_HEADER.size:
        raise ShapeMismatch(f"{path} shorter than a RAWV header")
    magic, version, dtype, ndim, _, d0, d1, d2, d3, fill, t, fname = (
        _RAWV_HEADER.unpack_from(blob)
    )
    if magic != RAWV_MAGIC:
        raise ShapeMismatch(f"{path} is not a RAWV file")
    if version != RAWV_VERSION or dtype != _DTYPE_F32:
        raise ShapeMismatch(f"unsupported RAWV version/dtype {version}/{dtype}")
    shape = tuple(int(d) for d in (d0, d1, d2, d3)[:ndim])
    expected = 4 * int(np.prod(shape))
    payload = blob[_RAWV_HEADER.size:]
    if len(payload) != expected:
        raise ShapeMismatch(
            f"{path}: payload {len(payload)} bytes, dims require {expected}"
        )
    if axes is None:
        axes = ("x", "y", "z", "w")[:ndim]
    return RawVolume(
        data=np.frombuffer(payload, dtype="<f4").reshape(shape),
        axes=tuple(axes),
        field=fname.rstrip(b"\0").decode() or "value",
        timestep=int(t),
        fill=float(np.float32(fill)),
    )


def synth_volume(
    extents: Mapping[str, int],
    seed: int,
    kind: str = "smooth",
    field: str = "value",
    timestep: int = 0,
    fill: float = 0.0,
) -> RawVolume:
    """Deterministic synthetic field: low-frequency sinusoid mix (smooth),
    the same plus seeded noise (turbulent), or the fill value (constant)."""
    axes = tuple(extents)
    shape = tuple(int(extents[a]) for a in axes)
    for e in shape:
        if e < 1:
            raise ShapeMismatch("extents must be >= 1")
    if kind == "constant":
        data = np.full(shape, fill, dtype=np.float32)
        return RawVolume(data, axes, field, timestep, fill)
    if kind not in ("smooth", "turbulent"):
        raise ShapeMismatch(f"unknown synthesis kind {kind!r}")
    rng = np.random.default_rng([seed, timestep])
    ndim = len(shape)
    nwaves = 4
    freqs = rng.integers(1, 4, size=(nwaves, ndim))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=nwaves)
    amps = rng.uniform(0.5, 1.5, size=nwaves)
    unit = [np.arange(n, dtype=np.float64) / n for n in shape]
    data = np.zeros(shape, dtype=np.float64)
    for w in range(nwaves):
        phase = np.zeros(shape, dtype=np.float64)
        for a in range(ndim):
            view = [1] * ndim
            view[a] = shape[a]
            phase = phase + (freqs[w, a] * unit[a]).reshape(view)
        data += amps[w] * np.sin(2.0 * np.pi * phase + phases[w])
    if kind == "turbulent":
        data += rng.normal(0.0, 0.35 * data.std() + 1e-6, size=shape)
    return RawVolume(data.astype(np.float32), axes, field, timestep, fill)


# --- layout transforms --------------------------------------------------------

def _padded(volume: RawVolume, desc: DatasetDescriptor) -> np.ndarray:
    padded_shape = tuple(desc.padded_extents()[a] for a in desc.axes)
    if volume.data.shape == padded_shape:
        return volume.data
    out = np.full(padded_shape, desc.fill_for(volume.field), dtype=np.float32)
    out[tuple(slice(0, n) for n in volume.data.shape)] = volume.data
    return out


def to_hz_order(padded: np.ndarray, desc: DatasetDescriptor,
                buffer_cap_bytes: int = DEFAULT_BUFFER_CAP) -> np.ndarray:
    """Permute a padded row-major volume into one flat hz-ordered array."""
    m = desc.m
    total = 1 << m
    if 4 * total <= buffer_cap_bytes:
        out = np.empty(total, dtype=np.float32)
        for lo, hi, hz in _hz_slabs(desc, buffer_cap_bytes):
            out[hz] = padded[lo:hi].ravel()
        return out
    # over-cap fallback: gather hz ranges out of the row-major volume
    out = np.empty(total, dtype=np.float32)
    batch = max(desc.block_samples, buffer_cap_bytes // 32)
    for start in range(0, total, batch):
        hz = np.arange(start, min(start + batch, total), dtype=np.uint64)
        out[start:start + hz.size] = _gather_hz(padded, desc, hz)
    return out


def from_hz_order(hz_flat: np.ndarray, desc: DatasetDescriptor,
                  buffer_cap_bytes: int = DEFAULT_BUFFER_CAP) -> np.ndarray:
    """Inverse of to_hz_order: rebuild the padded row-major volume."""
    shape = tuple(desc.padded_extents()[a] for a in desc.axes)
    out = np.empty(shape, dtype=np.float32)
    for lo, hi, hz in _hz_slabs(desc, buffer_cap_bytes):
        out[lo:hi] = hz_flat[hz].reshape(out[lo:hi].shape)
    return out


def _hz_slabs(desc: DatasetDescriptor, buffer_cap_bytes: int):
    """Yield (row_lo, row_hi, hz_indices) slabs along the first axis, sized so
    uint64 temporaries stay within the reorder buffer cap."""
    pattern = desc.pattern
    padded = desc.padded_extents()
    axes = desc.axes
    rest = 1
    for a in axes[1:]:
        rest *= padded[a]
    rows = max(1, min(padded[axes[0]], buffer_cap_bytes // max(1, 16 * rest)))
    coords = {a: np.arange(padded[a], dtype=np.uint64) for a in axes}
    for lo in range(0, padded[axes[0]], rows):
        hi = min(lo + rows, padded[axes[0]])
        slab = dict(coords)
        slab[axes[0]] = coords[axes[0]][lo:hi]
        z = index.z_grid(pattern, slab)
        _, hz = index.hz_of_vec(z.ravel(), desc.m)
        yield lo, hi, hz


def _gather_hz(padded: np.ndarray, desc: DatasetDescriptor,
               hz: np.ndarray) -> np.ndarray:
    z = index.z_of_vec(hz, desc.m)
    coords = tuple(desc.pattern.gather_axis(a, z) for a in desc.axes)
    return padded[coords]


def replica_name_for(spec: CodecSpec) -> str:
    if spec.kind == codec_mod.KIND_RAW:
        return "raw"
    if spec.kind == codec_mod.KIND_DEFLATE:
        return "lossless"
    return f"truncate{spec.precision}"


@dataclass
class IngestReport:
    samples_written: int
    blocks_written: int
    wall_seconds: float
    throughput_mib_s: float
    padded_fraction: float
    raw_bytes: int
    encoded_bytes: int
    replica: str


def ingest(
    raw: RawVolume,
    desc: DatasetDescriptor,
    store: BlockStore,
    codec: CodecSpec = codec_mod.LOSSLESS,
    replica: str | None = None,
    buffer_cap_bytes: int = DEFAULT_BUFFER_CAP,
    register: bool = True,
) -> IngestReport:
    """Scatter one raw volume into its hz blocks under the given codec."""
    if raw.field not in desc.fields:
        raise ShapeMismatch(f"field {raw.field!r} not declared in descriptor")
    if raw.extents != desc.extents:
        raise ShapeMismatch(
            f"raw extents {raw.extents} != descriptor extents {desc.extents}"
        )
    if not 0 <= raw.timestep < desc.timesteps:
        raise ShapeMismatch(
            f"timestep {raw.timestep} outside [0, {desc.timesteps})"
        )
    replica = replica or replica_name_for(codec)
    started = time.perf_counter()
    hz_flat = to_hz_order(_padded(raw, desc), desc, buffer_cap_bytes)
    bs = desc.block_samples
    encoded = 0
    for b in range(desc.block_count):
        blob = pack_envelope(codec, hz_flat[b * bs:(b + 1) * bs].tobytes())
        store.put_block(BlockKey(desc.id, raw.field, raw.timestep, replica, b), blob)
        encoded += len(blob)
    if register and replica not in desc.replicas:
        desc.replicas[replica] = codec
        store.put_descriptor(desc)
    elapsed = max(time.perf_counter() - started, 1e-9)
    return IngestReport(
        samples_written=desc.total_padded_samples,
        blocks_written=desc.block_count,
        wall_seconds=elapsed,
        throughput_mib_s=raw.nbytes / _MIB / elapsed,
        padded_fraction=desc.padded_fraction(),
        raw_bytes=raw.nbytes,
        encoded_bytes=encoded,
        replica=replica,
    )


@dataclass
class ReplicaStats:
    replica: str
    source: str
    blocks: int
    raw_bytes: int
    encoded_bytes: int
    compression_factor: float


def _best_source_replica(desc: DatasetDescriptor) -> str:
    def rank(item):
        name, spec = item
        precision = 32 if spec.kind != codec_mod.KIND_TRUNCATE else spec.precision
        lossless = spec.kind != codec_mod.KIND_TRUNCATE
        return (-precision, 0 if lossless else 1, name)

    if not desc.replicas:
        raise NotFound("dataset has no replicas to derive from")
    return sorted(desc.replicas.items(), key=rank)[0][0]


def make_replica(
    desc: DatasetDescriptor,
    store: BlockStore,
    codec: CodecSpec,
    name: str | None = None,
    source: str | None = None,
) -> ReplicaStats:
    """Re-encode an existing replica under a new codec and register it."""
    name = name or replica_name_for(codec)
    if name in desc.replicas:
        raise ReplicaExists(f"replica {name!r} already registered")
    source = source or _best_source_replica(desc)
    if source not in desc.replicas:
        raise NotFound(f"source replica {source!r} not registered")
    blocks = raw_bytes = encoded_bytes = 0
    for field in desc.fields:
        for t in range(desc.timesteps):
            for b in store.list_blocks(field, t, source):
                _, raw = unpack_envelope(
                    store.get_block(BlockKey(desc.id, field, t, source, b))
                )
                blob = pack_envelope(codec, raw)
                store.put_block(BlockKey(desc.id, field, t, name, b), blob)
                blocks += 1
                raw_bytes += len(raw)
                encoded_bytes += len(blob)
    desc.replicas[name] = codec
    store.put_descriptor(desc)
    factor = codec_mod.compression_factor(raw_bytes, encoded_bytes) if blocks else 0.0
    return ReplicaStats(name, source, blocks, raw_bytes, encoded_bytes, factor)


@dataclass
class VerifyReport:
    passed: bool
    max_abs_error: float
    bad_block: int | None = None
    error: str | None = None


def read_full_hz(desc: DatasetDescriptor, store: BlockStore, field: str,
                 timestep: int, replica: str) -> np.ndarray:
    """Fetch and decode every block of one (field, timestep, replica)."""
    bs = desc.block_samples
    out = np.empty(desc.total_padded_samples, dtype=np.float32)
    for b in range(desc.block_count):
        _, raw = unpack_envelope(
            store.get_block(BlockKey(desc.id, field, timestep, replica, b))
        )
        if len(raw) != 4 * bs:
            raise CrcMismatch(f"block {b} decodes to {len(raw)} bytes, want {4 * bs}")
        out[b * bs:(b + 1) * bs] = np.frombuffer(raw, dtype=np.float32)
    return out


def verify_roundtrip(
    raw: RawVolume,
    desc: DatasetDescriptor,
    store: BlockStore,
    replica: str,
) -> VerifyReport:
    """Full-resolution readback check against the (possibly masked) source."""
    spec = desc.replicas[replica]
    expected = raw.data
    if spec.kind == codec_mod.KIND_TRUNCATE:
        expected = truncate_precision(expected, spec.precision)
    bs = desc.block_samples
    hz_flat = np.empty(desc.total_padded_samples, dtype=np.float32)
    for b in range(desc.block_count):
        try:
            _, blob = unpack_envelope(
                store.get_block(BlockKey(desc.id, raw.field, raw.timestep, replica, b))
            )
        except (CrcMismatch, NotFound) as exc:
            return VerifyReport(False, math.inf, bad_block=b,
                                error=type(exc).__name__)
        hz_flat[b * bs:(b + 1) * bs] = np.frombuffer(blob, dtype=np.float32)
    padded = from_hz_order(hz_flat, desc)
    got = padded[tuple(slice(0, n) for n in raw.data.shape)]
    exact = np.array_equal(got.view(np.uint32), expected.view(np.uint32))
    diff = np.abs(got.astype(np.float64) - expected.astype(np.float64))
    max_err = float(diff.max()) if diff.size else 0.0
    return VerifyReport(passed=exact, max_abs_error=0.0 if exact else max_err)


# --- benchmarks ----------------------------------------------------------------

@dataclass
class BlockSizeRow:
    block_bits: int
    block_bytes: int
    object_count: int
    ingest_seconds: float
    encoded_bytes: int
    simulated_read_seconds: float


def bench_blocksize(
    raw: RawVolume,
    k_list: Iterable[int],
    profile: StoreProfile,
    codec: CodecSpec = codec_mod.RAW,
) -> list[BlockSizeRow]:
    """Re-ingest the same volume at each block size and cost a full read.

    The simulated read charges the profile's per-request latency once per
    object plus wire bytes over bandwidth, which is where large blocks win:
    halving the object count halves the latency term while the byte term
    stays flat.
    """
    from .descriptor import make_descriptor

    rows = []
    m = index.pattern_for_extents(raw.extents).m
    for k in sorted(set(int(k) for k in k_list)):
        if k > m:
            raise LevelOutOfRange(f"block_bits {k} exceeds address bits {m}")
        desc = make_descriptor(
            "bench", raw.extents, block_bits=k,
            fields={raw.field: raw.fill}, timesteps=raw.timestep + 1,
        )
        store = MemStore()
        store.put_descriptor(desc)
        report = ingest(raw, desc, store, codec)
        wire = sum(store.block_sizes(raw.field, raw.timestep, report.replica).values())
        sim = desc.block_count * profile.latency_ms / 1000.0
        if profile.bandwidth_bytes_per_s:
            sim += wire / profile.bandwidth_bytes_per_s
        rows.append(BlockSizeRow(
            block_bits=k,
            block_bytes=4 * desc.block_samples,
            object_count=desc.block_count,
            ingest_seconds=report.wall_seconds,
            encoded_bytes=wire,
            simulated_read_seconds=sim,
        ))
    return rows


@dataclass
class LocationRow:
    level: int
    local_cold_s: float
    local_warm_s: float
    remote_cold_s: float
    remote_warm_s: float
    cached_cold_s: float
    cached_warm_s: float


def bench_locations(
    desc: DatasetDescriptor,
    local_store: BlockStore,
    remote_profile: StoreProfile,
    cache_dir: str | Path,
    field: str | None = None,
    timestep: int = 0,
    replica: str | None = None,
) -> list[LocationRow]:
    """Per-level full-box read timings: local store, simulated remote store,
    and the same remote behind a fresh local cache (cold then warm)."""
    from .fabric import BlockCache, Dataset

    field = field or next(iter(desc.fields))
    replica = replica or _best_source_replica(desc)
    remote = MemStore(profile=remote_profile)
    remote.put_descriptor(desc)
    copy_blocks(local_store, remote, desc.id, [field], [timestep], [replica])

    cache_root = Path(cache_dir)
    rows = []
    for level in range(desc.m + 1):
        timings = []
        for tag, store, cache in (
            ("local", local_store, None),
            ("remote", remote, None),
            ("cached", remote, BlockCache(cache_root / f"L{level}", 1 << 30)),
        ):
            ds = Dataset(desc, store, cache=cache, uri=f"bench://{tag}")
            query = ds.query(field=field, timestep=timestep, level=level)
            for _ in range(2):
                t0 = time.perf_counter()
                ds.read(query)
                timings.append(time.perf_counter() - t0)
        rows.append(LocationRow(level, *timings))
    return rows
