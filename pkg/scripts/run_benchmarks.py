#!/usr/bin/env python3
"""Run the block-size and read-location experiments, CSVs into ./bench_out.

The block-size sweep re-ingests one 2^24-sample volume at block sizes from
8 KiB to 16 MiB and costs a simulated full read against a 20 ms/request
profile; the location sweep times per-level reads against a local store, a
simulated remote store, and the same remote behind a local cache.
"""

import argparse
import csv
import tempfile
from dataclasses import asdict
from pathlib import Path

from idxfabric import codec, pipeline
from idxfabric.descriptor import make_descriptor
from idxfabric.store import DirStore, StoreProfile


def write_csv(path: Path, rows, columns):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            d = asdict(row)
            writer.writerow([d[c] for c in columns])
    print(f"wrote {path} ({len(rows)} rows)")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="bench_out")
    ap.add_argument("--latency-ms", type=float, default=20.0)
    ap.add_argument("--bandwidth-mibs", type=float, default=100.0)
    ap.add_argument("--blocksize-extents", default="256,256,256")
    ap.add_argument("--locations-extents", default="32,32,32")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    profile = StoreProfile(latency_ms=args.latency_ms,
                           bandwidth_bytes_per_s=args.bandwidth_mibs * (1 << 20))

    sizes = [int(v) for v in args.blocksize_extents.split(",")]
    volume = pipeline.synth_volume(dict(zip("xyz", sizes)), seed=12, kind="smooth")
    rows = pipeline.bench_blocksize(volume, range(11, 23), profile)
    write_csv(out / "blocksize.csv", rows,
              ["block_bits", "block_bytes", "object_count", "ingest_seconds",
               "encoded_bytes", "simulated_read_seconds"])

    sizes = [int(v) for v in args.locations_extents.split(",")]
    extents = dict(zip("xyz", sizes))
    desc = make_descriptor("bench-locations", extents, block_bits=9,
                           fields={"value": 0.0})
    with tempfile.TemporaryDirectory(prefix="idxfabric-bench-") as tmp:
        store = DirStore(Path(tmp) / "store")
        store.put_descriptor(desc)
        raw = pipeline.synth_volume(extents, seed=9, kind="smooth")
        pipeline.ingest(raw, desc, store, codec.LOSSLESS)
        rows = pipeline.bench_locations(desc, store, profile,
                                        Path(tmp) / "cache")
    write_csv(out / "locations.csv", rows,
              ["level", "local_cold_s", "local_warm_s", "remote_cold_s",
               "remote_warm_s", "cached_cold_s", "cached_warm_s"])


if __name__ == "__main__":
    main()
