"""Acceptance suite: one test per release criterion, one printed line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the PASS lines.
Oracles are independent re-derivations: subsample-and-crop uses plain numpy
slicing on the in-memory source, bit masks come straight from IEEE-754
layout, and egress truth is read off the store meters.
"""

import dataclasses
import math
import time

import numpy as np
import pytest
import requests

from idxfabric import codec, index, pipeline
from idxfabric.codec import truncate_precision
from idxfabric.descriptor import make_descriptor
from idxfabric.fabric import Constraints, Dataset, Plan, Refusal, open_dataset
from idxfabric.service import (
    BackgroundServer,
    ServedDataset,
    create_app,
    unpack_data_response,
)
from idxfabric.store import BlockKey, DirStore, HttpStore, MemStore, StoreProfile

from conftest import build_dataset
from test_fabric import oracle_read


def ok(name: str, detail: str = ""):
    suffix = f" ({detail})" if detail else ""
    print(f"[PASS] {name}{suffix}")


@pytest.fixture(scope="module")
def volume32(tmp_path_factory):
    """32^3 seeded volume with lossless/truncate16/truncate24 replicas."""
    root = tmp_path_factory.mktemp("acc32")
    extents = {"x": 32, "y": 32, "z": 32}
    desc = make_descriptor("acc32", extents, block_bits=6, fields={"value": 0.0})
    store = DirStore(root / "store")
    store.put_descriptor(desc)
    raw = pipeline.synth_volume(extents, seed=2024, kind="smooth")
    pipeline.ingest(raw, desc, store, codec.LOSSLESS)
    pipeline.make_replica(desc, store, codec.truncate(16))
    pipeline.make_replica(desc, store, codec.truncate(24))
    return desc, store, raw


@pytest.fixture(scope="module")
def volume64(tmp_path_factory):
    """Smooth 64^3 volume with the full precision ladder."""
    root = tmp_path_factory.mktemp("acc64")
    extents = {"x": 64, "y": 64, "z": 64}
    desc = make_descriptor("acc64", extents, block_bits=9, fields={"value": 0.0})
    store = DirStore(root / "store")
    store.put_descriptor(desc)
    raw = pipeline.synth_volume(extents, seed=99, kind="smooth")
    pipeline.ingest(raw, desc, store, codec.RAW, replica="raw")
    pipeline.make_replica(desc, store, codec.LOSSLESS)
    for p in (16, 24, 30, 32):
        pipeline.make_replica(desc, store, codec.truncate(p))
    return desc, store, raw


def test_hz_bijectivity_exhaustive():
    """coords <-> Z <-> hz round-trips exactly over domains up to 2^20."""
    started = time.monotonic()
    cases = [
        {"x": 20},
        {"x": 10, "y": 10},
        {"x": 7, "y": 7, "z": 6},
        {"x": 18, "y": 2},
        {"x": 5, "y": 5, "z": 5, "w": 5},
        {"x": 1, "y": 19},
    ]
    patterns = [index.default_pattern(c) for c in cases]
    patterns.append(index.BitPattern(("x", "y", "z"), "xxyyzzxyzxyzxxyyzz"))
    for pattern in patterns:
        m = pattern.m
        z = np.arange(1 << m, dtype=np.uint64)
        coords = {a: pattern.gather_axis(a, z) for a in pattern.axes}
        re_encoded = np.zeros_like(z)
        for a in pattern.axes:
            re_encoded |= pattern.scatter_axis(a, coords[a])
        assert np.array_equal(re_encoded, z)
        levels, hz = index.hz_of_vec(z, m)
        assert np.array_equal(np.sort(hz), z)  # hz is a bijection
        assert np.array_equal(index.z_of_vec(hz, m), z)
        # hz ascending visits levels in non-decreasing order
        by_hz = np.empty(1 << m, dtype=np.uint64)
        by_hz[hz] = levels
        assert np.all(np.diff(by_hz.astype(np.int64)) >= 0)
    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    ok("hz-bijectivity", f"{len(patterns)} patterns, {elapsed:.1f}s")


def test_oracle_equivalence_200_reads(volume32):
    """200 randomized (box, level, precision) reads match subsample-crop."""
    started = time.monotonic()
    desc, store, raw = volume32
    ds = Dataset(desc, store)
    rng = np.random.default_rng(7)
    for i in range(200):
        lo = [int(rng.integers(0, 31)) for _ in range(3)]
        hi = [int(rng.integers(l + 1, 33)) for l in lo]
        box = {"x": (lo[0], hi[0]), "y": (lo[1], hi[1]), "z": (lo[2], hi[2])}
        level = int(rng.integers(0, desc.m + 1))
        precision = int(rng.choice([16, 24, 32]))
        result = ds.read(ds.query(box=box, level=level, precision=precision))
        expect = oracle_read(raw.data, desc, box, level, precision)
        assert result.data.shape == expect.shape
        assert np.array_equal(result.data.view(np.uint32), expect.view(np.uint32))
    elapsed = time.monotonic() - started
    assert elapsed < 30.0
    ok("oracle-equivalence", f"200 reads, {elapsed:.1f}s")


def test_lossless_end_to_end_64cubed(tmp_path):
    """ingest -> verify_roundtrip is exact on smooth and turbulent volumes."""
    for kind in ("smooth", "turbulent"):
        extents = {"x": 64, "y": 64, "z": 64}
        desc = make_descriptor(f"e2e-{kind}", extents, block_bits=9,
                               fields={"value": 0.0})
        store = DirStore(tmp_path / kind)
        store.put_descriptor(desc)
        raw = pipeline.synth_volume(extents, seed=5, kind=kind)
        pipeline.ingest(raw, desc, store, codec.LOSSLESS)
        report = pipeline.verify_roundtrip(raw, desc, store, "lossless")
        assert report.passed, f"{kind}: {report.error}"
        assert report.max_abs_error == 0.0
    ok("lossless-end-to-end", "smooth + turbulent 64^3, max abs error 0")


def test_psnr_trend_across_precision_and_levels(volume64):
    """PSNR is non-decreasing in precision and stable (<3 dB) across levels."""
    desc, store, raw = volume64
    ds = Dataset(desc, store)
    levels = [desc.m, desc.m - 2, desc.m - 4]
    precisions = [16, 24, 30, 32]
    table = {}
    for level in levels:
        ref = oracle_read(raw.data, desc, desc.full_box(), level)
        for p in precisions:
            got = ds.read(ds.query(level=level), replica=f"truncate{p}")
            table[(level, p)] = codec.psnr(ref, got.data)
    for level in levels:
        series = [table[(level, p)] for p in precisions]
        assert all(b >= a for a, b in zip(series, series[1:])), series
        assert math.isinf(table[(level, 32)])
        assert math.isfinite(table[(level, 16)])
    for p in precisions:
        finite = [table[(lv, p)] for lv in levels if math.isfinite(table[(lv, p)])]
        if finite:
            assert max(finite) - min(finite) < 3.0
    ok("psnr-trend", ", ".join(
        f"p={p}: {table[(desc.m, p)]:.1f} dB" if math.isfinite(table[(desc.m, p)])
        else f"p={p}: inf" for p in precisions
    ))


def test_compression_trade(volume64):
    """encoded(truncate-16) < encoded(lossless) < raw; factors reported."""
    desc, store, raw = volume64
    sizes = {
        r: sum(store.block_sizes("value", 0, r).values())
        for r in ("truncate16", "lossless")
    }
    raw_bytes = desc.total_padded_samples * 4
    assert sizes["truncate16"] < sizes["lossless"] < raw_bytes
    factors = {r: codec.compression_factor(raw_bytes, s) for r, s in sizes.items()}
    ok("compression-trade",
       f"raw={raw_bytes}B lossless={sizes['lossless']}B (x{factors['lossless']}) "
       f"truncate16={sizes['truncate16']}B (x{factors['truncate16']})")


def test_planner_soundness_maximality_500(tmp_path):
    """Estimates bound execution, never exceed constraints; levels maximal;
    refusal hints re-plan."""
    extents = {"x": 16, "y": 16, "z": 16}
    desc = make_descriptor("plan", extents, block_bits=6, fields={"value": 0.0})
    store = MemStore(profile=StoreProfile(
        latency_ms=0.0, bandwidth_bytes_per_s=500 * (1 << 20), price_per_gib=1e6,
    ))
    store.put_descriptor(desc)
    raw = pipeline.synth_volume(extents, seed=31, kind="smooth")
    pipeline.ingest(raw, desc, store, codec.LOSSLESS)
    pipeline.make_replica(desc, store, codec.truncate(16))
    ds = Dataset(desc, store)
    rng = np.random.default_rng(17)
    plans = refusals = 0
    names = ("max_bytes", "max_requests", "max_cost_units", "max_latency_ms")
    for i in range(500):
        lo = [int(rng.integers(0, 15)) for _ in range(3)]
        hi = [int(rng.integers(l + 1, 17)) for l in lo]
        level = int(rng.integers(0, desc.m + 1))
        q = ds.query(
            box={"x": (lo[0], hi[0]), "y": (lo[1], hi[1]), "z": (lo[2], hi[2])},
            level=level, precision=int(rng.choice([16, 32])),
        )
        c = Constraints(
            max_bytes=int(rng.integers(0, 4000)) if rng.random() < 0.6 else None,
            max_requests=int(rng.integers(0, 50)) if rng.random() < 0.4 else None,
            max_cost_units=float(rng.uniform(0, 0.1)) if rng.random() < 0.4 else None,
            max_latency_ms=float(rng.uniform(0, 2.0)) if rng.random() < 0.3 else None,
            min_level=int(rng.integers(0, level + 1)) if rng.random() < 0.4 else 0,
        )
        outcome = ds.plan(q, c)
        if isinstance(outcome, Refusal):
            refusals += 1
            assert outcome.violated
            relaxed = dataclasses.replace(c, **outcome.hint)
            assert isinstance(ds.plan(q, relaxed), Plan)
            continue
        plans += 1
        est = outcome.estimates()
        for name in names:
            limit = getattr(c, name)
            if limit is not None:
                assert est[name] <= limit, (name, est[name], limit)
        if outcome.level < level:
            recost = ds.estimate_level(q, outcome.level + 1)
            assert any(
                getattr(c, n) is not None and recost[n] > getattr(c, n)
                for n in names
            ), "level was not maximal"
        before = ds.egress()
        if i % 10 == 0:
            for _ in ds.read_progressive(q, c):
                pass
        else:
            result = ds.read(q, c)
            assert result.data.size * 4 == outcome.est_bytes
        after = ds.egress()
        assert after.requests - before.requests <= outcome.est_requests
        assert after.bytes_fetched - before.bytes_fetched <= outcome.est_wire_bytes
        assert after.cost_units - before.cost_units <= outcome.est_cost_units + 1e-12
    assert plans and refusals  # both paths exercised
    ok("planner-soundness-maximality", f"{plans} plans, {refusals} refusals")


def test_blocksize_study_2e24(tmp_path):
    """Object counts are exactly 2^(m-k); latency amortization shows through."""
    started = time.monotonic()
    raw = pipeline.synth_volume({"x": 256, "y": 256, "z": 256}, seed=12,
                                kind="smooth")
    profile = StoreProfile(latency_ms=20.0, bandwidth_bytes_per_s=100 * (1 << 20))
    k_list = list(range(11, 23))  # 8 KiB .. 16 MiB blocks of float32
    rows = pipeline.bench_blocksize(raw, k_list, profile, codec.RAW)
    assert rows[0].block_bytes == 8 << 10
    assert rows[-1].block_bytes == 16 << 20
    for row in rows:
        assert row.object_count == 2 ** (24 - row.block_bits)
    through_1mib = [r for r in rows if r.block_bytes <= (1 << 20)]
    for a, b in zip(through_1mib, through_1mib[1:]):
        assert b.simulated_read_seconds < a.simulated_read_seconds
    elapsed = time.monotonic() - started
    assert elapsed < 60.0
    ok("blocksize-study",
       f"k 11..22 on 2^24 samples in {elapsed:.1f}s; "
       f"read {rows[0].simulated_read_seconds:.2f}s@8KiB -> "
       f"{through_1mib[-1].simulated_read_seconds:.2f}s@1MiB")


def test_cache_effect_5x(tmp_path):
    """Second cached=arco read: >= 5x faster, zero remote block requests."""
    extents = {"x": 16, "y": 16, "z": 16}
    desc = make_descriptor("cacheme", extents, block_bits=6, fields={"value": 0.0})
    remote = MemStore(profile=StoreProfile(latency_ms=20.0))
    remote.put_descriptor(desc)
    raw = pipeline.synth_volume(extents, seed=3, kind="smooth")
    pipeline.ingest(raw, desc, remote, codec.LOSSLESS)
    app = create_app({desc.id: ServedDataset(Dataset(desc, remote))})
    server = BackgroundServer(app).start()
    try:
        uri = (f"{server.base_url}/v1/datasets/{desc.id}"
               f"?cached=arco&cache_dir={tmp_path}/arco")
        ds = open_dataset(uri)
        assert ds.cache is not None
        t0 = time.perf_counter()
        first = ds.read(ds.query())
        cold = time.perf_counter() - t0
        requests_after_first = ds.store.egress().requests
        t0 = time.perf_counter()
        second = ds.read(ds.query())
        warm = time.perf_counter() - t0
        assert ds.store.egress().requests == requests_after_first  # 0 remote
        assert np.array_equal(first.data, second.data)
        assert cold >= 5 * warm, (cold, warm)
    finally:
        server.stop()
    ok("cache-effect", f"cold {cold:.2f}s vs warm {warm:.3f}s "
                       f"({cold / warm:.0f}x), 0 remote requests")


def test_remote_equivalence_100_queries(volume32):
    """HTTP /data payloads byte-equal in-process reads; HttpStore honors the
    store contract."""
    desc, store, raw = volume32
    local = Dataset(desc, store)
    app = create_app({desc.id: ServedDataset(Dataset(desc, store))}, writable=True)
    server = BackgroundServer(app).start()
    rng = np.random.default_rng(23)
    try:
        base = f"{server.base_url}/v1/datasets/{desc.id}"
        for _ in range(100):
            lo = [int(rng.integers(0, 31)) for _ in range(3)]
            hi = [int(rng.integers(l + 1, 33)) for l in lo]
            box = {"x": (lo[0], hi[0]), "y": (lo[1], hi[1]), "z": (lo[2], hi[2])}
            level = int(rng.integers(0, desc.m + 1))
            precision = int(rng.choice([16, 32]))
            resp = requests.get(f"{base}/data", params={
                "field": "value", "t": 0, "level": level, "precision": precision,
                **{a: f"{box[a][0]},{box[a][1]}" for a in ("x", "y", "z")},
            })
            assert resp.status_code == 200
            parsed = unpack_data_response(resp.content)
            mine = local.read(local.query(box=box, level=level,
                                          precision=precision))
            assert parsed["level"] == mine.level
            assert parsed["counts"] == mine.data.shape
            assert resp.content[64:] == mine.data.astype("<f4").tobytes()

        # store contract over HTTP: put/get/list/sizes/NotFound
        http = HttpStore(server.base_url, desc.id)
        blob = codec.pack_envelope(codec.RAW, b"contract-block")
        key = BlockKey(desc.id, "value", 0, "scratch", 3)
        http.put_block(key, blob)
        assert http.get_block(key) == blob
        assert http.list_blocks("value", 0, "scratch") == [3]
        assert http.block_sizes("value", 0, "scratch") == {3: len(blob)}
        from idxfabric.errors import NotFound

        with pytest.raises(NotFound):
            http.get_block(BlockKey(desc.id, "value", 0, "scratch", 9))
        remote_ds = open_dataset(f"{server.base_url}/v1/datasets/{desc.id}")
        got = remote_ds.read(remote_ds.query(level=9))
        assert np.array_equal(got.data, local.read(local.query(level=9)).data)
    finally:
        server.stop()
    ok("remote-equivalence", "100 queries byte-equal; HttpStore passes contract")


def test_progressive_contract_20_queries(volume32):
    """Emissions: one per level, known samples immutable, final == read()."""
    desc, store, raw = volume32
    ds = Dataset(desc, store)
    rng = np.random.default_rng(5)
    for _ in range(20):
        lo = [int(rng.integers(0, 31)) for _ in range(3)]
        hi = [int(rng.integers(l + 1, 33)) for l in lo]
        box = {"x": (lo[0], hi[0]), "y": (lo[1], hi[1]), "z": (lo[2], hi[2])}
        level = int(rng.integers(0, desc.m + 1))
        q = ds.query(box=box, level=level)
        final = ds.read(q)
        emissions = list(ds.read_progressive(q))
        assert len(emissions) == final.level + 1
        assert [e.level for e in emissions] == list(range(final.level + 1))
        assert np.array_equal(emissions[-1].data, final.data)
        pts = index.lattice_coords_in_box(box, desc.pattern, final.level)
        for e in emissions:
            strides = desc.pattern.strides_at(e.level)
            exact = [np.nonzero(pts[a] % np.uint64(strides[a]) == 0)[0]
                     for a in desc.axes]
            sel = np.ix_(*exact)
            assert np.array_equal(e.data[sel], final.data[sel])
    ok("progressive-contract", "20 randomized queries")
