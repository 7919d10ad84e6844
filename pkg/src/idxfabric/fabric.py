"""The data-fabric layer: constrained queries against block-stored volumes.

A query names what the caller wants (field, timestep, region, resolution
level, precision); constraints bound what the answer may spend (result
bytes, requests, egress cost, estimated latency).  The planner picks the
finest level and cheapest adequate replica that fit, or returns a Refusal
that says which limits failed and what values would succeed, so callers can
relax and retry instead of guessing.

Byte accounting is two-sided on purpose: ``est_bytes`` is the decoded result
payload (what lands in the caller's memory, the max_bytes knob), while
``est_wire_bytes`` sums the exact stored envelope sizes of every block the
plan may touch and prices the egress cost.  Executing a plan never exceeds
either estimate.
"""

from __future__ import annotations

import os
import re
import threading
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
import requests

from . import codec as codec_mod
from . import index
from .codec import envelope_info, unpack_envelope
from .descriptor import DatasetDescriptor
from .errors import (
    BadDescriptor,
    BadQuery,
    BadUri,
    CrcMismatch,
    EmptySelection,
    NotFound,
    RefusedByPlan,
    UnreachableStore,
)
from .store import GIB, BlockKey, BlockStore, DirStore, HttpStore, StoreProfile

CACHE_DIR_ENV = "IDXFABRIC_CACHE_DIR"
DEFAULT_CACHE_BYTES = 512 << 20
BYTES_PER_SAMPLE = 4

OPERATIONS = ("read", "read_progressive", "fraction_in_range", "plan")


@dataclass(frozen=True)
class Query:
    field: str
    timestep: int = 0
    box: Mapping[str, tuple[int, int]] | None = None  # None = full domain
    level: int | str = "max"
    precision: int = 32


@dataclass(frozen=True)
class Constraints:
    max_bytes: int | None = None
    max_requests: int | None = None
    max_cost_units: float | None = None
    max_latency_ms: float | None = None
    min_level: int = 0


@dataclass(frozen=True)
class Plan:
    level: int
    replica: str
    precision: int
    downgraded: bool
    blocks: tuple[int, ...]
    est_bytes: int
    est_wire_bytes: int
    est_requests: int
    est_cost_units: float
    est_latency_ms: float

    def estimates(self) -> dict:
        return {
            "max_bytes": self.est_bytes,
            "max_requests": self.est_requests,
            "max_cost_units": self.est_cost_units,
            "max_latency_ms": self.est_latency_ms,
        }


@dataclass(frozen=True)
class Refusal:
    violated: tuple[str, ...]
    feasible_level: int | None  # finest level below the floor that would fit
    hint: dict
    message: str

    def __str__(self):
        return self.message


@dataclass(frozen=True)
class FDORecord:
    identifier: str
    metadata: dict
    operations: tuple[str, ...]
    locator: dict

    def to_json(self) -> dict:
        return {
            "identifier": self.identifier,
            "metadata": self.metadata,
            "operations": list(self.operations),
            "locator": self.locator,
        }


@dataclass
class ReadResult:
    level: int
    precision: int
    data: np.ndarray
    downgraded: bool
    plan: Plan


@dataclass
class Emission:
    level: int
    data: np.ndarray


class BlockCache:
    """Disk LRU of block envelopes, keyed by the store path layout.

    A hit must never fabricate data: cached envelopes are CRC-checked on
    every read and silently refetched when corrupt.  Mutations are
    serialized behind one lock; eviction keeps resident bytes <= capacity.
    """

    def __init__(self, root: str | Path, capacity_bytes: int = DEFAULT_CACHE_BYTES):
        self.root = Path(root)
        self.capacity_bytes = capacity_bytes
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()
        self._lru: OrderedDict[str, int] = OrderedDict()
        self._resident = 0
        self.root.mkdir(parents=True, exist_ok=True)
        entries = []
        for path in self.root.rglob("b*.bin"):
            stat = path.stat()
            entries.append((stat.st_mtime, str(path.relative_to(self.root)), stat.st_size))
        for _, rel, size in sorted(entries):
            self._lru[rel] = size
            self._resident += size

    @property
    def resident_bytes(self) -> int:
        return self._resident

    @staticmethod
    def _rel(key: BlockKey) -> str:
        return (
            f"{key.dataset}/{key.field}/t{key.timestep:08d}/{key.replica}/"
            f"b{key.index:012x}.bin"
        )

    @staticmethod
    def _valid(blob: bytes) -> bool:
        try:
            info = envelope_info(blob)
        except Exception:
            return False
        if len(blob) != 30 + info["encoded_len"]:
            return False
        return zlib.crc32(blob[30:]) == info["crc32"]

    def _evict_locked(self) -> None:
        while self._resident > self.capacity_bytes and self._lru:
            rel, size = self._lru.popitem(last=False)
            self._resident -= size
            try:
                (self.root / rel).unlink()
            except OSError:
                pass

    def get_or_fetch(self, key: BlockKey, store: BlockStore) -> bytes:
        rel = self._rel(key)
        path = self.root / rel
        with self._lock:
            if rel in self._lru:
                try:
                    blob = path.read_bytes()
                except OSError:
                    blob = b""
                if self._valid(blob):
                    self._lru.move_to_end(rel)
                    self.hits += 1
                    return blob
                # corrupt or vanished: drop and refetch below
                self._resident -= self._lru.pop(rel)
                try:
                    path.unlink()
                except OSError:
                    pass
        blob = store.get_block(key)
        with self._lock:
            self.misses += 1
            if rel not in self._lru:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(f".tmp{threading.get_ident()}")
                tmp.write_bytes(blob)
                os.replace(tmp, path)
                self._lru[rel] = len(blob)
                self._resident += len(blob)
                self._evict_locked()
        return blob

    def state(self) -> dict:
        with self._lock:
            return {
                "root": str(self.root),
                "capacity_bytes": self.capacity_bytes,
                "resident_bytes": self._resident,
                "blocks": len(self._lru),
                "hits": self.hits,
                "misses": self.misses,
            }


def cache_get_or_fetch(cache: BlockCache, key: BlockKey, store: BlockStore) -> bytes:
    return cache.get_or_fetch(key, store)


_KIND_RANK = {codec_mod.KIND_DEFLATE: 0, codec_mod.KIND_TRUNCATE: 1, codec_mod.KIND_RAW: 2}


def _effective_precision(spec) -> int:
    return spec.precision if spec.kind == codec_mod.KIND_TRUNCATE else 32


class Dataset:
    """Shareable handle over one dataset: descriptor + store (+ cache)."""

    def __init__(self, descriptor: DatasetDescriptor, store: BlockStore,
                 cache: BlockCache | None = None, uri: str = ""):
        self.descriptor = descriptor
        self.store = store
        self.cache = cache
        self.uri = uri
        self._sizes: dict[tuple, dict[int, int]] = {}
        self._sizes_lock = threading.Lock()

    # -- query construction / validation --

    def query(self, field: str | None = None, timestep: int = 0,
              box: Mapping[str, tuple[int, int]] | None = None,
              level: int | str = "max", precision: int = 32) -> Query:
        if field is None:
            field = next(iter(self.descriptor.fields))
        return Query(field=field, timestep=timestep, box=box,
                     level=level, precision=precision)

    def _normalize(self, q: Query) -> Query:
        d = self.descriptor
        if q.field not in d.fields:
            raise BadQuery(f"unknown field {q.field!r}")
        if not 0 <= q.timestep < d.timesteps:
            raise BadQuery(f"timestep {q.timestep} outside [0, {d.timesteps})")
        level = d.m if q.level == "max" else q.level
        if not isinstance(level, int) or not 0 <= level <= d.m:
            raise BadQuery(f"level {q.level!r} not in [0, {d.m}]")
        if not 1 <= q.precision <= 32:
            raise BadQuery(f"precision {q.precision} not in [1, 32]")
        box = dict(q.box) if q.box is not None else d.full_box()
        for a in d.axes:
            if a not in box:
                box[a] = (0, d.extents[a])
            lo, hi = box[a]
            if not (isinstance(lo, (int, np.integer)) and isinstance(hi, (int, np.integer))):
                raise BadQuery(f"box bounds on {a!r} must be integers")
            if not 0 <= lo < hi <= d.extents[a]:
                raise BadQuery(
                    f"box [{lo}, {hi}) on {a!r} outside extent {d.extents[a]}"
                )
        extra = set(box) - set(d.axes)
        if extra:
            raise BadQuery(f"box names unknown axes {sorted(extra)}")
        return Query(q.field, q.timestep, box, level, q.precision)

    # -- replica choice --

    def _choose_replica(self, precision: int) -> tuple[str, int, bool]:
        replicas = self.descriptor.replicas
        if not replicas:
            raise BadDescriptor("dataset has no replicas")
        ranked = [
            (name, spec, _effective_precision(spec)) for name, spec in replicas.items()
        ]
        adequate = [r for r in ranked if r[2] >= precision]
        if adequate:
            name, spec, eff = min(
                adequate, key=lambda r: (r[2], _KIND_RANK[r[1].kind], r[0])
            )
            return name, eff, False
        name, spec, eff = min(
            ranked, key=lambda r: (-r[2], _KIND_RANK[r[1].kind], r[0])
        )
        return name, eff, True

    # -- planning --

    def _block_sizes(self, field: str, timestep: int, replica: str) -> dict[int, int]:
        key = (field, timestep, replica)
        with self._sizes_lock:
            cached = self._sizes.get(key)
        if cached is not None:
            return cached
        sizes = self.store.block_sizes(field, timestep, replica)
        with self._sizes_lock:
            self._sizes[key] = sizes
        return sizes

    def _estimate(self, q: Query, level: int, blocks: np.ndarray,
                  sizes: dict[int, int]) -> dict:
        samples = index.box_sample_count(q.box, self.descriptor.pattern, level)
        wire = int(sum(sizes.get(int(b), 0) for b in blocks))
        requests_n = int(blocks.size)
        profile = self.store.profile
        latency = requests_n * profile.latency_ms
        if profile.bandwidth_bytes_per_s:
            latency += wire / profile.bandwidth_bytes_per_s * 1000.0
        return {
            "max_bytes": samples * BYTES_PER_SAMPLE,
            "max_requests": requests_n,
            "max_cost_units": wire / GIB * profile.price_per_gib,
            "max_latency_ms": latency,
            "wire_bytes": wire,
        }

    @staticmethod
    def _violations(est: dict, c: Constraints) -> list[str]:
        out = []
        for name in ("max_bytes", "max_requests", "max_cost_units", "max_latency_ms"):
            limit = getattr(c, name)
            if limit is not None and est[name] > limit:
                out.append(name)
        return out

    def _cumulative_blocks(self, q: Query, top_level: int) -> list[np.ndarray]:
        sets = index.level_block_sets(
            q.box, top_level, self.descriptor.pattern, self.descriptor.block_bits
        )
        out = []
        acc = np.empty(0, dtype=np.uint64)
        for s in sets:
            acc = np.union1d(acc, s)
            out.append(acc)
        return out

    def plan(self, query: Query, constraints: Constraints | None = None):
        """Resolve a query to a Plan, or a Refusal with a relaxation hint."""
        q = self._normalize(query)
        c = constraints or Constraints()
        for name in ("max_bytes", "max_requests", "max_cost_units", "max_latency_ms"):
            v = getattr(c, name)
            if v is not None and v < 0:
                raise BadQuery(f"{name} must be non-negative")
        if not 0 <= c.min_level <= q.level:
            raise BadQuery(
                f"min_level {c.min_level} outside [0, requested level {q.level}]"
            )
        replica, precision, downgraded = self._choose_replica(q.precision)
        sizes = self._block_sizes(q.field, q.timestep, replica)
        cumulative = self._cumulative_blocks(q, q.level)

        def build(level: int) -> tuple[dict, np.ndarray]:
            blocks = cumulative[level]
            return self._estimate(q, level, blocks, sizes), blocks

        for level in range(q.level, c.min_level - 1, -1):
            est, blocks = build(level)
            if not self._violations(est, c):
                return Plan(
                    level=level,
                    replica=replica,
                    precision=precision,
                    downgraded=downgraded,
                    blocks=tuple(int(b) for b in blocks),
                    est_bytes=est["max_bytes"],
                    est_wire_bytes=est["wire_bytes"],
                    est_requests=est["max_requests"],
                    est_cost_units=est["max_cost_units"],
                    est_latency_ms=est["max_latency_ms"],
                )
        floor_est, _ = build(c.min_level)
        violated = tuple(self._violations(floor_est, c))
        feasible = None
        for level in range(c.min_level - 1, -1, -1):
            est, _ = build(level)
            if not self._violations(est, c):
                feasible = level
                break
        hint = {name: floor_est[name] for name in violated}
        message = (
            f"no level in [{c.min_level}, {q.level}] fits; "
            + "; ".join(
                f"{n}={floor_est[n]:g} > {getattr(c, n):g}" for n in violated
            )
            + f"; relax to {hint} for level {c.min_level}"
        )
        return Refusal(violated=violated, feasible_level=feasible,
                       hint=hint, message=message)

    def estimate_level(self, query: Query, level: int,
                       replica: str | None = None) -> dict:
        """Re-cost a query at an explicit level (planner introspection)."""
        q = self._normalize(query)
        if replica is None:
            replica, _, _ = self._choose_replica(q.precision)
        sizes = self._block_sizes(q.field, q.timestep, replica)
        blocks = self._cumulative_blocks(q, level)[level]
        return self._estimate(q, level, blocks, sizes)

    # -- execution --

    def _fetch(self, key: BlockKey) -> bytes:
        if self.cache is not None:
            return self.cache.get_or_fetch(key, self.store)
        return self.store.get_block(key)

    def _decode_block(self, field: str, timestep: int, replica: str,
                      b: int) -> np.ndarray:
        blob = self._fetch(BlockKey(self.descriptor.id, field, timestep, replica, b))
        _, raw = unpack_envelope(blob)
        arr = np.frombuffer(raw, dtype=np.float32)
        if arr.size != self.descriptor.block_samples:
            raise CrcMismatch(
                f"block {b} holds {arr.size} samples, expected "
                f"{self.descriptor.block_samples}"
            )
        return arr

    def _gather(self, q: Query, level: int, replica: str,
                axis_coords: dict[str, np.ndarray],
                decoded: dict[int, np.ndarray]) -> np.ndarray:
        d = self.descriptor
        shape = tuple(axis_coords[a].size for a in d.axes)
        out = np.empty(shape, dtype=np.float32)
        if out.size == 0:
            return out
        z = index.z_grid(d.pattern, axis_coords)
        _, hz = index.hz_of_vec(z.ravel(), d.m)
        hz = hz.reshape(shape)
        blocks = hz >> np.uint64(d.block_bits)
        offsets = hz & np.uint64(d.block_samples - 1)
        for b in np.unique(blocks):
            bi = int(b)
            if bi not in decoded:
                decoded[bi] = self._decode_block(q.field, q.timestep, replica, bi)
            sel = blocks == b
            out[sel] = decoded[bi][offsets[sel]]
        return out

    def read(self, query: Query, constraints: Constraints | None = None,
             replica: str | None = None) -> ReadResult:
        """Dense array on the plan-level lattice intersected with the box.

        ``replica`` overrides planner replica choice (verification paths);
        planning still runs so constraints keep their meaning.
        """
        q = self._normalize(query)
        outcome = self.plan(q, constraints)
        if isinstance(outcome, Refusal):
            raise RefusedByPlan(outcome)
        plan = outcome
        if replica is not None:
            if replica not in self.descriptor.replicas:
                raise BadQuery(f"unknown replica {replica!r}")
            spec = self.descriptor.replicas[replica]
            plan = replace(plan, replica=replica,
                           precision=_effective_precision(spec), downgraded=False)
        lattice = index.lattice_coords_in_box(q.box, self.descriptor.pattern, plan.level)
        data = self._gather(q, plan.level, plan.replica, lattice, {})
        return ReadResult(level=plan.level, precision=plan.precision,
                          data=data, downgraded=plan.downgraded, plan=plan)

    def read_progressive(self, query: Query,
                         constraints: Constraints | None = None
                         ) -> Iterator[Emission]:
        """Coarse-to-fine emissions over the final lattice: one per level in
        [0, plan level], each filling unknown positions from their nearest
        coarser parent, so values at already-exact positions never change."""
        q = self._normalize(query)
        outcome = self.plan(q, constraints)
        if isinstance(outcome, Refusal):
            raise RefusedByPlan(outcome)
        plan = outcome
        d = self.descriptor
        final = index.lattice_coords_in_box(q.box, d.pattern, plan.level)
        shape = tuple(final[a].size for a in d.axes)

        def emissions():
            decoded: dict[int, np.ndarray] = {}
            for level in range(plan.level + 1):
                if 0 in shape:
                    yield Emission(level, np.empty(shape, dtype=np.float32))
                    continue
                strides = d.pattern.strides_at(level)
                parents = {
                    a: (final[a] // np.uint64(strides[a])) * np.uint64(strides[a])
                    for a in d.axes
                }
                yield Emission(level, self._gather(q, level, plan.replica,
                                                   parents, decoded))

        return emissions()

    # -- analytics --

    def range_stats(self, query: Query, lo: float, hi: float,
                    constraints: Constraints | None = None) -> dict:
        if lo > hi:
            raise BadQuery(f"range lo {lo} > hi {hi}")
        q = self._normalize(query)
        result = self.read(q, constraints)
        arr = result.data
        fill = self.descriptor.fill_for(q.field)
        fill_mask = np.isnan(arr) if np.isnan(fill) else arr == np.float32(fill)
        valid = int(arr.size - fill_mask.sum())
        if valid == 0:
            raise EmptySelection("every voxel in the selection is fill")
        in_range = int(((arr >= lo) & (arr <= hi) & ~fill_mask).sum())
        return {
            "percent": 100.0 * in_range / valid,
            "counted": in_range,
            "excluded_fill": int(fill_mask.sum()),
        }

    def fraction_in_range(self, query: Query, lo: float, hi: float) -> float:
        """Percentage of non-fill voxels in [lo, hi] over the read result."""
        return self.range_stats(query, lo, hi)["percent"]

    # -- metadata --

    def fdo(self) -> FDORecord:
        d = self.descriptor
        if isinstance(self.store, HttpStore):
            root = self.store.base_url
        elif isinstance(self.store, DirStore):
            root = str(self.store.root)
        else:
            root = "mem://"
        return FDORecord(
            identifier=self.uri or root,
            metadata={
                "descriptor": d.to_json(),
                "provenance": d.provenance,
                "created": d.created,
            },
            operations=OPERATIONS,
            locator={"store": root, "replicas": sorted(d.replicas)},
        )

    def egress(self):
        return self.store.egress()


# --- URI opening -----------------------------------------------------------------

_HTTP_DATASET_PATH = re.compile(r"^/v1/datasets/([^/]+)/?$")


def _single_params(query: str) -> dict[str, str]:
    from urllib.parse import parse_qsl

    out = {}
    for k, v in parse_qsl(query, keep_blank_values=True):
        if k in out:
            raise BadUri(f"duplicate URI parameter {k!r}")
        out[k] = v
    return out


def _resolve_cache(params: dict[str, str]) -> BlockCache | None:
    if params.get("cached", "none") not in ("none", "arco"):
        raise BadUri(f"cached must be none|arco, got {params['cached']!r}")
    if params.get("cached", "none") != "arco":
        return None
    root = (
        params.get("cache_dir")
        or os.environ.get(CACHE_DIR_ENV)
        or str(Path.home() / ".cache" / "idxfabric")
    )
    try:
        capacity = int(params.get("cache_bytes", DEFAULT_CACHE_BYTES))
    except ValueError as exc:
        raise BadUri(f"cache_bytes must be an integer: {exc}") from exc
    return BlockCache(root, capacity)


def open_dataset(uri: str) -> Dataset:
    """Open a dataset handle from a local path or a service URL.

    Grammar: ``scheme://host-or-path/dataset-descriptor[?params]`` with
    params cached=none|arco, cache_dir=..., cache_bytes=..., plus accepted
    and ignored access_key/secret_key placeholders.
    """
    from urllib.parse import urlsplit

    if not uri or not isinstance(uri, str):
        raise BadUri("empty URI")
    parts = urlsplit(uri)
    params = _single_params(parts.query)
    for k in params:
        if k not in ("cached", "cache_dir", "cache_bytes", "access_key",
                     "secret_key", "endpoint_url"):
            raise BadUri(f"unknown URI parameter {k!r}")
    cache = _resolve_cache(params)

    if parts.scheme in ("http", "https"):
        match = _HTTP_DATASET_PATH.match(parts.path)
        if not match:
            raise BadUri(
                f"remote path must look like /v1/datasets/<id>, got {parts.path!r}"
            )
        dataset_id = match.group(1)
        base = f"{parts.scheme}://{parts.netloc}"
        try:
            resp = requests.get(f"{base}/v1/datasets/{dataset_id}", timeout=30)
        except requests.RequestException as exc:
            raise UnreachableStore(f"cannot reach {base}: {exc}") from exc
        if resp.status_code == 404:
            raise BadDescriptor(f"dataset {dataset_id!r} not served at {base}")
        if resp.status_code != 200:
            raise UnreachableStore(f"{base} answered {resp.status_code}")
        try:
            doc = resp.json()
            descriptor = DatasetDescriptor.from_json(doc["descriptor"])
            profile = StoreProfile.from_json(doc.get("profile", {}))
        except (KeyError, ValueError, TypeError) as exc:
            raise BadDescriptor(f"malformed dataset document: {exc}") from exc
        store: BlockStore = HttpStore(base, dataset_id, profile=profile)
        return Dataset(descriptor, store, cache=cache, uri=uri)

    if parts.scheme in ("", "file"):
        root = Path(parts.netloc + parts.path if parts.scheme == "file" else parts.path)
        if not root.is_dir():
            raise UnreachableStore(f"no store directory at {root}")
        store = DirStore(root)
        try:
            descriptor = store.get_descriptor()
        except NotFound as exc:
            raise BadDescriptor(str(exc)) from exc
        return Dataset(descriptor, store, cache=cache, uri=uri)

    raise BadUri(f"unsupported scheme {parts.scheme!r}")
