"""HTTP service exposing datasets, blocks, constrained reads, and analytics.

The block endpoint makes any served dataset usable as a remote store for
fabric clients; the data/slice/stats endpoints run the same fabric reads
in-process and stream a binary DataResponse (64-byte header + little-endian
float32 payload).  A planner refusal maps to 409 with the machine-readable
relaxation hint so clients can distinguish "relax and retry" from a
malformed request.
"""

from __future__ import annotations

import socket
import struct
import threading
import time
from dataclasses import dataclass

import numpy as np
import uvicorn
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import index
from .descriptor import DatasetDescriptor
from .errors import (
    BadQuery,
    CoordOutOfRange,
    EmptyBox,
    EmptySelection,
    IdxFabricError,
    IoFailure,
    NotFound,
    RefusedByPlan,
)
from .fabric import Constraints, Dataset, Refusal
from .store import BlockKey, BlockStore, DirStore, StoreProfile

DATA_MAGIC = b"IDXD"
DATA_VERSION = 1
_DATA_HEADER = struct.Struct("<4s6B2x4Q20x")
DATA_HEADER_BYTES = _DATA_HEADER.size
assert DATA_HEADER_BYTES == 64

FLAG_DOWNGRADED = 1


def pack_data_response(level: int, precision: int, downgraded: bool,
                       counts: tuple[int, ...], payload: np.ndarray) -> bytes:
    if len(counts) > 4:
        raise BadQuery("DataResponse carries at most 4 axes")
    dims = list(counts) + [0] * (4 - len(counts))
    header = _DATA_HEADER.pack(
        DATA_MAGIC,
        DATA_VERSION,
        level,
        precision,
        1,  # dtype: float32
        FLAG_DOWNGRADED if downgraded else 0,
        len(counts),
        *dims,
    )
    return header + np.ascontiguousarray(payload, dtype="<f4").tobytes()


def unpack_data_response(blob: bytes) -> dict:
    if len(blob) < DATA_HEADER_BYTES:
        raise BadQuery("DataResponse shorter than its header")
    magic, version, level, precision, dtype, flags, ndim, *dims = (
        _DATA_HEADER.unpack_from(blob)
    )
    if magic != DATA_MAGIC or version != DATA_VERSION or dtype != 1:
        raise BadQuery("not a DataResponse")
    counts = tuple(int(d) for d in dims[:ndim])
    data = np.frombuffer(blob[DATA_HEADER_BYTES:], dtype="<f4").reshape(counts)
    return {
        "level": level,
        "precision": precision,
        "downgraded": bool(flags & FLAG_DOWNGRADED),
        "counts": counts,
        "data": data,
    }


@dataclass
class ServedDataset:
    dataset: Dataset

    @property
    def descriptor(self) -> DatasetDescriptor:
        return self.dataset.descriptor

    @property
    def store(self) -> BlockStore:
        return self.dataset.store


def _refusal_json(refusal: Refusal) -> dict:
    return {
        "error": "refused",
        "violated": list(refusal.violated),
        "feasible_level": refusal.feasible_level,
        "hint": refusal.hint,
        "message": refusal.message,
    }


def _parse_box(desc: DatasetDescriptor, params) -> dict | None:
    box = {}
    for axis in desc.axes:
        raw = params.get(axis)
        if raw is None:
            continue
        pieces = raw.split(",")
        if len(pieces) != 2:
            raise BadQuery(f"{axis} must be 'lo,hi', got {raw!r}")
        try:
            box[axis] = (int(pieces[0]), int(pieces[1]))
        except ValueError as exc:
            raise BadQuery(f"{axis} bounds must be integers: {raw!r}") from exc
    return box or None


def _parse_level(raw: str | None) -> int | str:
    if raw is None or raw == "max":
        return "max"
    try:
        return int(raw)
    except ValueError as exc:
        raise BadQuery(f"level must be an integer or 'max', got {raw!r}") from exc


def _parse_constraints(params) -> Constraints:
    def _int(name):
        raw = params.get(name)
        if raw is None:
            return None
        try:
            return int(raw)
        except ValueError as exc:
            raise BadQuery(f"{name} must be an integer, got {raw!r}") from exc

    def _float(name):
        raw = params.get(name)
        if raw is None:
            return None
        try:
            return float(raw)
        except ValueError as exc:
            raise BadQuery(f"{name} must be a number, got {raw!r}") from exc

    return Constraints(
        max_bytes=_int("max_bytes"),
        max_requests=_int("max_requests"),
        max_cost_units=_float("max_cost"),
        max_latency_ms=_float("max_latency_ms"),
        min_level=_int("min_level") or 0,
    )


def create_app(served: dict[str, ServedDataset], writable: bool = False) -> FastAPI:
    app = FastAPI(title="idxfabric", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def _validation_400(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors())})

    @app.exception_handler(IdxFabricError)
    async def _fabric_500(request: Request, exc: IdxFabricError):
        return JSONResponse(
            status_code=500, content={"error": type(exc).__name__, "message": str(exc)}
        )

    def _served(dataset_id: str) -> ServedDataset:
        sd = served.get(dataset_id)
        if sd is None:
            raise NotFound(dataset_id)
        return sd

    @app.get("/v1/datasets")
    def list_datasets():
        return sorted(served)

    @app.get("/v1/datasets/{dataset_id}")
    def dataset_doc(dataset_id: str, request: Request):
        try:
            sd = _served(dataset_id)
        except NotFound:
            return JSONResponse(status_code=404, content={"error": "unknown dataset"})
        desc = sd.descriptor
        fdo = sd.dataset.fdo().to_json()
        fdo["identifier"] = str(request.url)
        levels = [
            {"level": lv, "strides": index.level_grid(desc.pattern, lv).strides}
            for lv in range(desc.m + 1)
        ]
        return {
            "id": dataset_id,
            "descriptor": desc.to_json(),
            "fdo": fdo,
            "profile": sd.store.profile.to_json(),
            "levels": levels,
        }

    @app.get("/v1/datasets/{dataset_id}/blocks")
    def block_manifest(dataset_id: str, field: str, t: int, replica: str):
        try:
            sd = _served(dataset_id)
        except NotFound:
            return JSONResponse(status_code=404, content={"error": "unknown dataset"})
        sizes = sd.store.block_sizes(field, t, replica)
        return {"blocks": [[b, s] for b, s in sizes.items()]}

    @app.get("/v1/datasets/{dataset_id}/block")
    def get_block(dataset_id: str, field: str, t: int, replica: str, b: int):
        try:
            sd = _served(dataset_id)
        except NotFound:
            return JSONResponse(status_code=404, content={"error": "unknown dataset"})
        if b < 0 or t < 0:
            return JSONResponse(status_code=400, content={"error": "negative index"})
        if b >= sd.descriptor.block_count:
            return JSONResponse(status_code=404, content={"error": "block out of range"})
        try:
            blob = sd.store.get_block(BlockKey(dataset_id, field, t, replica, b))
        except NotFound:
            return JSONResponse(status_code=404, content={"error": "no such block"})
        return Response(content=blob, media_type="application/octet-stream")

    @app.put("/v1/datasets/{dataset_id}/block")
    async def put_block(dataset_id: str, field: str, t: int, replica: str, b: int,
                        request: Request):
        try:
            sd = _served(dataset_id)
        except NotFound:
            return JSONResponse(status_code=404, content={"error": "unknown dataset"})
        if not writable:
            return JSONResponse(status_code=403, content={"error": "read-only server"})
        if b < 0 or b >= sd.descriptor.block_count:
            return JSONResponse(status_code=400, content={"error": "block out of range"})
        blob = await request.body()
        sd.store.put_block(BlockKey(dataset_id, field, t, replica, b), blob)
        return {"stored": len(blob)}

    def _read_response(sd: ServedDataset, request: Request,
                       pinned_axis: str | None = None):
        desc = sd.descriptor
        params = request.query_params
        field = params.get("field")
        if field is None:
            raise BadQuery("field parameter is required")
        try:
            t = int(params.get("t", "0"))
        except ValueError as exc:
            raise BadQuery(f"t must be an integer: {exc}") from exc
        box = _parse_box(desc, params)
        if pinned_axis is not None:
            axis = pinned_axis
            try:
                idx = int(params["index"])
            except (KeyError, ValueError) as exc:
                raise BadQuery(f"index must be an integer: {exc}") from exc
            if axis not in desc.axes:
                raise BadQuery(f"unknown axis {axis!r}")
            if not 0 <= idx < desc.extents[axis]:
                raise BadQuery(f"index {idx} outside extent {desc.extents[axis]}")
            box = dict(box or {})
            box[axis] = (idx, idx + 1)
        try:
            precision = int(params.get("precision", "32"))
        except ValueError as exc:
            raise BadQuery(f"precision must be an integer: {exc}") from exc
        query = sd.dataset.query(
            field=field, timestep=t, box=box,
            level=_parse_level(params.get("level")), precision=precision,
        )
        result = sd.dataset.read(query, _parse_constraints(params))
        counts = list(result.data.shape)
        payload = result.data
        if pinned_axis is not None:
            drop = desc.axes.index(pinned_axis)
            counts = [c for i, c in enumerate(counts) if i != drop]
        return pack_data_response(
            result.level, result.precision, result.downgraded,
            tuple(counts), payload,
        )

    def _data_endpoint(dataset_id: str, request: Request,
                       pinned_axis: str | None = None):
        try:
            sd = _served(dataset_id)
        except NotFound:
            return JSONResponse(status_code=404, content={"error": "unknown dataset"})
        try:
            blob = _read_response(sd, request, pinned_axis)
        except RefusedByPlan as exc:
            return JSONResponse(status_code=409, content=_refusal_json(exc.refusal))
        except (BadQuery, EmptyBox, CoordOutOfRange) as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        except (NotFound, IoFailure) as exc:
            return JSONResponse(
                status_code=500,
                content={"error": type(exc).__name__, "message": str(exc)},
            )
        return Response(content=blob, media_type="application/octet-stream")

    @app.get("/v1/datasets/{dataset_id}/data")
    def get_data(dataset_id: str, request: Request):
        return _data_endpoint(dataset_id, request)

    @app.get("/v1/datasets/{dataset_id}/slice")
    def get_slice(dataset_id: str, axis: str, request: Request):
        return _data_endpoint(dataset_id, request, pinned_axis=axis)

    @app.get("/v1/datasets/{dataset_id}/stats/in_range")
    def stats_in_range(dataset_id: str, lo: float, hi: float, request: Request):
        try:
            sd = _served(dataset_id)
        except NotFound:
            return JSONResponse(status_code=404, content={"error": "unknown dataset"})
        params = request.query_params
        field = params.get("field")
        if field is None:
            return JSONResponse(status_code=400, content={"error": "field is required"})
        try:
            query = sd.dataset.query(
                field=field,
                timestep=int(params.get("t", "0")),
                box=_parse_box(sd.descriptor, params),
                level=_parse_level(params.get("level")),
            )
            return sd.dataset.range_stats(query, lo, hi, _parse_constraints(params))
        except RefusedByPlan as exc:
            return JSONResponse(status_code=409, content=_refusal_json(exc.refusal))
        except EmptySelection as exc:
            return JSONResponse(
                status_code=400, content={"error": "EmptySelection", "message": str(exc)}
            )
        except (BadQuery, ValueError) as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/v1/egress")
    def egress():
        out = {}
        for dataset_id, sd in served.items():
            rep = sd.store.egress()
            out[dataset_id] = {
                "bytes_fetched": rep.bytes_fetched,
                "requests": rep.requests,
                "cost_units": rep.cost_units,
            }
        return out

    return app


def served_from_roots(roots: list[str], price_per_gib: float = 0.0,
                      read_only: bool = True) -> dict[str, ServedDataset]:
    """Load one served dataset per DirStore root."""
    served = {}
    for root in roots:
        store = DirStore(root, read_only=read_only)
        desc = store.get_descriptor()
        profile = StoreProfile(
            latency_ms=store.profile.latency_ms,
            bandwidth_bytes_per_s=store.profile.bandwidth_bytes_per_s,
            price_per_gib=price_per_gib,
        )
        store.profile = profile
        served[desc.id] = ServedDataset(Dataset(desc, store, uri=f"served:{root}"))
    return served


class BackgroundServer:
    """uvicorn in a daemon thread; port=0 binds an ephemeral port."""

    def __init__(self, app: FastAPI, host: str = "127.0.0.1", port: int = 0):
        self._config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self.host = host
        self.port = port

    def start(self, timeout_s: float = 10.0) -> "BackgroundServer":
        self._thread.start()
        deadline = time.time() + timeout_s
        while not self._server.started:
            if time.time() > deadline:
                raise IoFailure("server failed to start")
            if not self._thread.is_alive():
                raise IoFailure("server thread died during startup")
            time.sleep(0.01)
        sock: socket.socket = self._server.servers[0].sockets[0]
        self.port = sock.getsockname()[1]
        return self

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10)
