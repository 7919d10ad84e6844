"""Block storage backends behind one contract.

A store holds opaque block envelopes addressed by (field, timestep, replica,
block index) plus the dataset descriptor document.  Three backends:

* DirStore   -- one file per block under a local root; the durable format.
* MemStore   -- in-process dict with injected latency/bandwidth/failures;
                the networking simulator used by benchmarks and tests.
* HttpStore  -- client for the service module's block endpoints.

Every get is metered: a session accumulates bytes fetched, request count and
egress cost (wire bytes x price per GiB), which the planner's estimates are
checked against.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import requests

from .descriptor import DatasetDescriptor
from .errors import IoFailure, NotFound, Timeout

GIB = 1 << 30


@dataclass(frozen=True)
class BlockKey:
    dataset: str
    field: str
    timestep: int
    replica: str
    index: int


@dataclass(frozen=True)
class StoreProfile:
    """Synthetic network shape: per-request latency, bandwidth, egress price.

    bandwidth=None means unlimited; a local directory store is all zeros.
    """

    latency_ms: float = 0.0
    bandwidth_bytes_per_s: float | None = None
    price_per_gib: float = 0.0

    def __post_init__(self):
        if self.latency_ms < 0:
            raise IoFailure("latency_ms must be non-negative")
        if self.bandwidth_bytes_per_s is not None and self.bandwidth_bytes_per_s <= 0:
            raise IoFailure("bandwidth must be positive or None")
        if self.price_per_gib < 0:
            raise IoFailure("price_per_gib must be non-negative")

    def transfer_seconds(self, nbytes: int) -> float:
        t = self.latency_ms / 1000.0
        if self.bandwidth_bytes_per_s:
            t += nbytes / self.bandwidth_bytes_per_s
        return t

    def to_json(self) -> dict:
        return {
            "latency_ms": self.latency_ms,
            "bandwidth_bytes_per_s": self.bandwidth_bytes_per_s,
            "price_per_gib": self.price_per_gib,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StoreProfile":
        return cls(
            latency_ms=float(obj.get("latency_ms", 0.0)),
            bandwidth_bytes_per_s=obj.get("bandwidth_bytes_per_s"),
            price_per_gib=float(obj.get("price_per_gib", 0.0)),
        )


@dataclass
class EgressReport:
    bytes_fetched: int = 0
    requests: int = 0
    cost_units: float = 0.0


class BlockStore:
    """Common metering plus the abstract block operations."""

    profile: StoreProfile

    def __init__(self, profile: StoreProfile | None = None):
        self.profile = profile or StoreProfile()
        self._meter_lock = threading.Lock()
        self._bytes = 0
        self._requests = 0

    # -- metering --

    def _count_request(self) -> None:
        with self._meter_lock:
            self._requests += 1

    def _count_bytes(self, n: int) -> None:
        with self._meter_lock:
            self._bytes += n

    def egress(self) -> EgressReport:
        with self._meter_lock:
            return EgressReport(
                bytes_fetched=self._bytes,
                requests=self._requests,
                cost_units=self._bytes / GIB * self.profile.price_per_gib,
            )

    # -- contract --

    def put_block(self, key: BlockKey, envelope: bytes) -> None:
        raise NotImplementedError

    def get_block(self, key: BlockKey) -> bytes:
        raise NotImplementedError

    def list_blocks(self, field: str, timestep: int, replica: str) -> list[int]:
        raise NotImplementedError

    def block_sizes(self, field: str, timestep: int, replica: str) -> dict[int, int]:
        """Stored envelope byte size per block index (the planner's wire truth)."""
        raise NotImplementedError

    def get_descriptor(self) -> DatasetDescriptor:
        raise NotImplementedError

    def put_descriptor(self, desc: DatasetDescriptor) -> None:
        raise NotImplementedError


def _block_relpath(key: BlockKey) -> str:
    return f"{key.field}/t{key.timestep:08d}/{key.replica}/b{key.index:012x}.bin"


class DirStore(BlockStore):
    """One file per block under ``root``; zero-padded hex names keep the
    lexical directory order equal to numeric block order."""

    def __init__(self, root: str | Path, read_only: bool = False,
                 profile: StoreProfile | None = None):
        super().__init__(profile)
        self.root = Path(root)
        self.read_only = read_only
        if not read_only:
            self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: BlockKey) -> Path:
        return self.root / _block_relpath(key)

    def put_block(self, key: BlockKey, envelope: bytes) -> None:
        if self.read_only:
            raise IoFailure(f"store at {self.root} is read-only")
        path = self._path(key)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".tmp.{os.getpid()}.{threading.get_ident()}")
            tmp.write_bytes(envelope)
            os.replace(tmp, path)  # atomic: readers never see a torn envelope
        except OSError as exc:
            raise IoFailure(f"write failed for {path}: {exc}") from exc

    def get_block(self, key: BlockKey) -> bytes:
        self._count_request()
        path = self._path(key)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise NotFound(f"no block at {path}") from None
        except OSError as exc:
            raise IoFailure(f"read failed for {path}: {exc}") from exc
        self._count_bytes(len(data))
        return data

    def _replica_dir(self, field: str, timestep: int, replica: str) -> Path:
        return self.root / field / f"t{timestep:08d}" / replica

    def list_blocks(self, field: str, timestep: int, replica: str) -> list[int]:
        d = self._replica_dir(field, timestep, replica)
        if not d.is_dir():
            return []
        out = []
        for name in os.listdir(d):
            if name.startswith("b") and name.endswith(".bin"):
                out.append(int(name[1:-4], 16))
        return sorted(out)

    def block_sizes(self, field: str, timestep: int, replica: str) -> dict[int, int]:
        d = self._replica_dir(field, timestep, replica)
        if not d.is_dir():
            return {}
        out = {}
        with os.scandir(d) as it:
            for entry in it:
                name = entry.name
                if name.startswith("b") and name.endswith(".bin"):
                    out[int(name[1:-4], 16)] = entry.stat().st_size
        return dict(sorted(out.items()))

    def get_descriptor(self) -> DatasetDescriptor:
        path = self.root / "dataset.json"
        try:
            return DatasetDescriptor.loads(path.read_text())
        except FileNotFoundError:
            raise NotFound(f"no dataset.json under {self.root}") from None

    def put_descriptor(self, desc: DatasetDescriptor) -> None:
        if self.read_only:
            raise IoFailure(f"store at {self.root} is read-only")
        path = self.root / "dataset.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(desc.dumps())
        os.replace(tmp, path)


class MemStore(BlockStore):
    """Dict-backed store with a synthetic network in front of gets.

    Each get sleeps latency + size/bandwidth; optional seeded failure
    injection turns a fraction of gets into IoFailure/Timeout for retry and
    planner tests.  Writes are not delayed so tests can stage data quickly.
    """

    def __init__(self, profile: StoreProfile | None = None, read_only: bool = False,
                 drop_probability: float = 0.0, timeout_probability: float = 0.0,
                 seed: int = 0):
        super().__init__(profile)
        self.read_only = read_only
        self.drop_probability = drop_probability
        self.timeout_probability = timeout_probability
        self._blocks: dict[tuple, bytes] = {}
        self._descriptor: DatasetDescriptor | None = None
        self._lock = threading.Lock()
        import random

        self._rng = random.Random(seed)

    @staticmethod
    def _k(key: BlockKey) -> tuple:
        return (key.field, key.timestep, key.replica, key.index)

    def put_block(self, key: BlockKey, envelope: bytes) -> None:
        if self.read_only:
            raise IoFailure("mem store is read-only")
        with self._lock:
            self._blocks[self._k(key)] = bytes(envelope)

    def get_block(self, key: BlockKey) -> bytes:
        self._count_request()
        with self._lock:
            roll = self._rng.random()
            data = self._blocks.get(self._k(key))
        if roll < self.timeout_probability:
            raise Timeout("injected timeout")
        if roll < self.timeout_probability + self.drop_probability:
            raise IoFailure("injected drop")
        if data is None:
            raise NotFound(f"no block for {key}")
        delay = self.profile.transfer_seconds(len(data))
        if delay > 0:
            time.sleep(delay)
        self._count_bytes(len(data))
        return data

    def list_blocks(self, field: str, timestep: int, replica: str) -> list[int]:
        with self._lock:
            return sorted(
                k[3] for k in self._blocks
                if k[0] == field and k[1] == timestep and k[2] == replica
            )

    def block_sizes(self, field: str, timestep: int, replica: str) -> dict[int, int]:
        with self._lock:
            items = [
                (k[3], len(v)) for k, v in self._blocks.items()
                if k[0] == field and k[1] == timestep and k[2] == replica
            ]
        return dict(sorted(items))

    def get_descriptor(self) -> DatasetDescriptor:
        if self._descriptor is None:
            raise NotFound("mem store holds no descriptor")
        return self._descriptor

    def put_descriptor(self, desc: DatasetDescriptor) -> None:
        if self.read_only:
            raise IoFailure("mem store is read-only")
        self._descriptor = desc


class HttpStore(BlockStore):
    """Client for the service's block endpoints; one instance per dataset."""

    def __init__(self, base_url: str, dataset_id: str,
                 profile: StoreProfile | None = None,
                 timeout_s: float = 30.0):
        super().__init__(profile)
        self.base_url = base_url.rstrip("/")
        self.dataset_id = dataset_id
        self.timeout_s = timeout_s
        self._session = requests.Session()

    def _dataset_url(self) -> str:
        return f"{self.base_url}/v1/datasets/{self.dataset_id}"

    def put_block(self, key: BlockKey, envelope: bytes) -> None:
        try:
            resp = self._session.put(
                f"{self._dataset_url()}/block",
                params={
                    "field": key.field, "t": key.timestep,
                    "replica": key.replica, "b": key.index,
                },
                data=envelope,
                timeout=self.timeout_s,
            )
        except requests.Timeout as exc:
            raise Timeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise IoFailure(str(exc)) from exc
        if resp.status_code != 200:
            raise IoFailure(f"PUT block -> {resp.status_code}: {resp.text[:200]}")

    def get_block(self, key: BlockKey) -> bytes:
        self._count_request()
        try:
            resp = self._session.get(
                f"{self._dataset_url()}/block",
                params={
                    "field": key.field, "t": key.timestep,
                    "replica": key.replica, "b": key.index,
                },
                timeout=self.timeout_s,
            )
        except requests.Timeout as exc:
            raise Timeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise IoFailure(str(exc)) from exc
        if resp.status_code == 404:
            raise NotFound(f"no block for {key}")
        if resp.status_code != 200:
            raise IoFailure(f"GET block -> {resp.status_code}: {resp.text[:200]}")
        self._count_bytes(len(resp.content))
        return resp.content

    def _blocks_doc(self, field: str, timestep: int, replica: str) -> list:
        try:
            resp = self._session.get(
                f"{self._dataset_url()}/blocks",
                params={"field": field, "t": timestep, "replica": replica},
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise IoFailure(str(exc)) from exc
        if resp.status_code != 200:
            raise IoFailure(f"GET blocks -> {resp.status_code}")
        return resp.json()["blocks"]

    def list_blocks(self, field: str, timestep: int, replica: str) -> list[int]:
        return sorted(b for b, _ in self._blocks_doc(field, timestep, replica))

    def block_sizes(self, field: str, timestep: int, replica: str) -> dict[int, int]:
        return dict(sorted((b, s) for b, s in self._blocks_doc(field, timestep, replica)))

    def get_descriptor(self) -> DatasetDescriptor:
        try:
            resp = self._session.get(self._dataset_url(), timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise IoFailure(str(exc)) from exc
        if resp.status_code == 404:
            raise NotFound(f"dataset {self.dataset_id} not served")
        if resp.status_code != 200:
            raise IoFailure(f"GET dataset -> {resp.status_code}")
        return DatasetDescriptor.from_json(resp.json()["descriptor"])

    def put_descriptor(self, desc: DatasetDescriptor) -> None:
        raise IoFailure("remote descriptors are read-only; write locally and re-serve")


def copy_blocks(src: BlockStore, dst: BlockStore, dataset_id: str,
                fields: Iterable[str], timesteps: Iterable[int],
                replicas: Iterable[str]) -> int:
    """Mirror every block of the given slices from src to dst; returns count."""
    n = 0
    for f in fields:
        for t in timesteps:
            for r in replicas:
                for b in src.list_blocks(f, t, r):
                    key = BlockKey(dataset_id, f, t, r, b)
                    dst.put_block(key, src.get_block(key))
                    n += 1
    return n
