#!/usr/bin/env python3
"""Build a small demo dataset with several timesteps and replicas.

Creates ./demo/store (DirStore layout) holding a 64x64x32 smooth volume over
8 timesteps with lossless and truncate-16 replicas, then prints the serve
command and example fetch/read URIs.
"""

import argparse
from pathlib import Path

from idxfabric import codec, pipeline
from idxfabric.descriptor import make_descriptor
from idxfabric.store import DirStore


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default="demo/store", help="store directory")
    ap.add_argument("--extents", default="64,64,32")
    ap.add_argument("--timesteps", type=int, default=8)
    ap.add_argument("--block-bits", type=int, default=9)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--kind", default="smooth",
                    choices=["smooth", "turbulent", "constant"])
    args = ap.parse_args()

    sizes = [int(v) for v in args.extents.split(",")]
    extents = dict(zip(("x", "y", "z"), sizes))
    desc = make_descriptor(
        "demo", extents, block_bits=args.block_bits,
        fields={"value": 0.0}, timesteps=args.timesteps,
        provenance=f"synthetic {args.kind} field, seed {args.seed}",
    )
    root = Path(args.root)
    store = DirStore(root)
    store.put_descriptor(desc)
    for t in range(args.timesteps):
        raw = pipeline.synth_volume(extents, args.seed, args.kind,
                                    field="value", timestep=t)
        report = pipeline.ingest(raw, desc, store, codec.LOSSLESS)
        print(f"t={t}: {report.blocks_written} blocks, "
              f"{report.encoded_bytes} bytes ({report.throughput_mib_s:.0f} MiB/s)")
    for t in range(args.timesteps):
        raw = pipeline.synth_volume(extents, args.seed, args.kind,
                                    field="value", timestep=t)
        pipeline.ingest(raw, desc, store, codec.truncate(16),
                        replica="truncate16")
    print(f"\nstore ready at {root}")
    print(f"  serve:  idxfabric serve {root} --addr 127.0.0.1:8471")
    print(f"  open:   http://127.0.0.1:8471/v1/datasets/demo?cached=arco")
    print(f"  fetch:  idxfabric fetch {root} --level 12 --out demo/crop.rawv")


if __name__ == "__main__":
    main()
