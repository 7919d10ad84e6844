"""Operator command line: convert, replicate, serve, fetch, inspect, bench.

Exit codes: 0 success, 2 planner refusal, 1 any other error, 64 usage.
"""

from __future__ import annotations

import csv
import json
import math
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import click

from . import codec as codec_mod
from . import index, pipeline
from .descriptor import DatasetDescriptor, FieldInfo, make_descriptor
from .errors import IdxFabricError, RefusedByPlan
from .fabric import Constraints, open_dataset
from .store import DirStore, StoreProfile

_CODEC_CHOICES = {
    "lossless": lambda p: codec_mod.LOSSLESS,
    "raw": lambda p: codec_mod.RAW,
    "truncate": lambda p: codec_mod.truncate(p),
}


def _parse_extents(text: str) -> dict[str, int]:
    axes = ("x", "y", "z", "w")
    values = [int(v) for v in text.split(",") if v]
    if not 1 <= len(values) <= 4:
        raise click.UsageError("--extents wants 1-4 comma-separated sizes")
    return dict(zip(axes, values))


def _parse_box(text: str | None, axes) -> dict | None:
    if not text:
        return None
    spans = text.split(",")
    if len(spans) != len(axes):
        raise click.UsageError(
            f"--box wants {len(axes)} lo:hi spans for axes {','.join(axes)}"
        )
    box = {}
    for axis, span in zip(axes, spans):
        try:
            lo, hi = span.split(":")
            box[axis] = (int(lo), int(hi))
        except ValueError:
            raise click.UsageError(f"bad span {span!r}; want lo:hi") from None
    return box


def _parse_k_list(text: str) -> list[int]:
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi)))
    return [int(v) for v in text.split(",") if v]


def _csv_out(rows, columns):
    writer = csv.writer(sys.stdout)
    writer.writerow(columns)
    for row in rows:
        d = asdict(row)
        writer.writerow([d[c] for c in columns])


@click.group()
def cli():
    """Progressive multiresolution volume fabric."""


@cli.command()
@click.argument("raw_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("descriptor_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("store_root", type=click.Path(file_okay=False))
@click.option("--codec", "codec_kind", type=click.Choice(sorted(_CODEC_CHOICES)),
              default="lossless", show_default=True)
@click.option("-p", "--precision", type=int, default=16, show_default=True,
              help="bits kept by the truncate codec")
@click.option("--replica", "replica_name", default=None,
              help="replica name (defaults to one derived from the codec)")
def convert(raw_path, descriptor_path, store_root, codec_kind, precision,
            replica_name):
    """Ingest a RAWV volume into a block store.

    DESCRIPTOR_PATH is either a full dataset.json or a template with at
    least {"id": ...}; geometry defaults are derived from the raw volume.
    """
    volume = pipeline.read_rawv(raw_path)
    template = json.loads(Path(descriptor_path).read_text())
    store = DirStore(store_root)
    try:
        desc = store.get_descriptor()
    except IdxFabricError:
        desc = _descriptor_from_template(template, volume)
    if volume.field not in desc.fields:
        desc.fields[volume.field] = FieldInfo(fill=volume.fill)
    if volume.timestep >= desc.timesteps:
        desc.timesteps = volume.timestep + 1
    store.put_descriptor(desc)
    spec = _CODEC_CHOICES[codec_kind](precision)
    report = pipeline.ingest(volume, desc, store, spec, replica=replica_name)
    click.echo(
        f"ingested {report.samples_written} samples into {report.blocks_written} "
        f"blocks ({report.replica}) in {report.wall_seconds:.2f}s "
        f"({report.throughput_mib_s:.1f} MiB/s, padded {report.padded_fraction:.1%}, "
        f"encoded {report.encoded_bytes} bytes)"
    )


def _descriptor_from_template(template: dict,
                              volume: pipeline.RawVolume) -> DatasetDescriptor:
    if "pattern" in template and "extents" in template:
        return DatasetDescriptor.from_json(template)
    if "id" not in template:
        raise click.UsageError("descriptor template needs an \"id\"")
    extents = template.get("extents") or volume.extents
    m = index.pattern_for_extents(extents).m
    fields = {
        name: float(info.get("fill", 0.0))
        for name, info in template.get("fields", {}).items()
    } or {volume.field: volume.fill}
    return make_descriptor(
        template["id"],
        extents,
        block_bits=int(template.get("block_bits", min(12, m))),
        fields=fields,
        timesteps=int(template.get("timesteps", volume.timestep + 1)),
        pattern=template.get("pattern"),
        provenance=template.get("provenance", ""),
    )


@cli.command("replica")
@click.argument("store_root", type=click.Path(exists=True, file_okay=False))
@click.argument("codec_kind", type=click.Choice(sorted(_CODEC_CHOICES)))
@click.option("-p", "--precision", type=int, default=16, show_default=True)
@click.option("--name", default=None)
@click.option("--source", default=None, help="source replica (default: best)")
def replica_cmd(store_root, codec_kind, precision, name, source):
    """Re-encode an existing replica under another codec."""
    store = DirStore(store_root)
    desc = store.get_descriptor()
    stats = pipeline.make_replica(
        desc, store, _CODEC_CHOICES[codec_kind](precision), name=name, source=source
    )
    click.echo(
        f"replica {stats.replica} from {stats.source}: {stats.blocks} blocks, "
        f"{stats.encoded_bytes} bytes, factor {stats.compression_factor:.2f}"
    )


@cli.command()
@click.argument("store_roots", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--addr", default="127.0.0.1:8471", show_default=True)
@click.option("--price-per-gib", type=float, default=0.0, show_default=True)
@click.option("--writable", is_flag=True, help="accept PUT /block")
def serve(store_roots, addr, price_per_gib, writable):
    """Serve one or more block store roots over HTTP."""
    import uvicorn

    from .service import create_app, served_from_roots

    served = served_from_roots(list(store_roots), price_per_gib,
                               read_only=not writable)
    app = create_app(served, writable=writable)
    host, _, port = addr.rpartition(":")
    if not host:
        raise click.UsageError("--addr wants host:port")
    click.echo(f"serving {sorted(served)} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=int(port), log_level="info")


@cli.command()
@click.argument("uri")
@click.option("--field", default=None)
@click.option("--t", type=int, default=0, show_default=True)
@click.option("--box", default=None, help="per-axis lo:hi spans, axis order")
@click.option("--level", default="max", show_default=True)
@click.option("--precision", type=int, default=32, show_default=True)
@click.option("--max-bytes", type=int, default=None)
@click.option("--max-requests", type=int, default=None)
@click.option("--max-cost", type=float, default=None)
@click.option("--max-latency-ms", type=float, default=None)
@click.option("--min-level", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def fetch(uri, field, t, box, level, precision, max_bytes, max_requests,
          max_cost, max_latency_ms, min_level, out):
    """Read a region and write it as a RAWV file."""
    ds = open_dataset(uri)
    field = field or next(iter(ds.descriptor.fields))
    query = ds.query(
        field=field, timestep=t, box=_parse_box(box, ds.descriptor.axes),
        level=level if level == "max" else int(level), precision=precision,
    )
    constraints = Constraints(
        max_bytes=max_bytes, max_requests=max_requests,
        max_cost_units=max_cost, max_latency_ms=max_latency_ms,
        min_level=min_level,
    )
    result = ds.read(query, constraints)
    pipeline.write_rawv(
        pipeline.RawVolume(
            result.data, ds.descriptor.axes, field=field, timestep=t,
            fill=ds.descriptor.fill_for(field),
        ),
        out,
    )
    click.echo(
        f"level={result.level} precision={result.precision} "
        f"shape={'x'.join(str(n) for n in result.data.shape)} "
        f"bytes={result.data.size * 4} downgraded={result.downgraded} -> {out}"
    )


@cli.command()
@click.argument("uri")
def info(uri):
    """Print the dataset's digital-object record."""
    ds = open_dataset(uri)
    click.echo(json.dumps(ds.fdo().to_json(), indent=2, sort_keys=True))


@cli.command("psnr")
@click.argument("raw_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("uri")
@click.option("--replica", required=True)
def psnr_cmd(raw_path, uri, replica):
    """Reconstruction quality of a replica against the original RAWV."""
    volume = pipeline.read_rawv(raw_path)
    ds = open_dataset(uri)
    result = ds.read(
        ds.query(field=volume.field, timestep=volume.timestep), replica=replica
    )
    value = codec_mod.psnr(volume.data, result.data)
    click.echo(f"psnr_db={'inf' if math.isinf(value) else f'{value:.2f}'}")


@cli.group()
def bench():
    """Benchmarks (CSV on stdout)."""


@bench.command("blocksize")
@click.option("--extents", default="256,256,256", show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--kind", type=click.Choice(["smooth", "turbulent", "constant"]),
              default="smooth", show_default=True)
@click.option("--k", "k_text", default="11:23", show_default=True,
              help="block bits: lo:hi range or comma list")
@click.option("--latency-ms", type=float, default=20.0, show_default=True)
@click.option("--bandwidth-mibs", type=float, default=100.0, show_default=True)
@click.option("--codec", "codec_kind", type=click.Choice(sorted(_CODEC_CHOICES)),
              default="raw", show_default=True)
@click.option("-p", "--precision", type=int, default=16)
def bench_blocksize_cmd(extents, seed, kind, k_text, latency_ms, bandwidth_mibs,
                        codec_kind, precision):
    """Object count and simulated full-read time across block sizes."""
    volume = pipeline.synth_volume(_parse_extents(extents), seed, kind)
    profile = StoreProfile(
        latency_ms=latency_ms,
        bandwidth_bytes_per_s=bandwidth_mibs * (1 << 20),
        price_per_gib=0.0,
    )
    rows = pipeline.bench_blocksize(
        volume, _parse_k_list(k_text), profile, _CODEC_CHOICES[codec_kind](precision)
    )
    _csv_out(rows, ["block_bits", "block_bytes", "object_count",
                    "ingest_seconds", "encoded_bytes", "simulated_read_seconds"])


@bench.command("locations")
@click.option("--extents", default="32,32,32", show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--kind", type=click.Choice(["smooth", "turbulent", "constant"]),
              default="smooth", show_default=True)
@click.option("--block-bits", type=int, default=9, show_default=True)
@click.option("--latency-ms", type=float, default=20.0, show_default=True)
@click.option("--bandwidth-mibs", type=float, default=100.0, show_default=True)
def bench_locations_cmd(extents, seed, kind, block_bits, latency_ms,
                        bandwidth_mibs):
    """Per-level read times: local store vs remote vs remote+cache."""
    ext = _parse_extents(extents)
    volume = pipeline.synth_volume(ext, seed, kind)
    with tempfile.TemporaryDirectory(prefix="idxfabric-bench-") as tmp:
        desc = make_descriptor("bench-locations", ext, block_bits=block_bits,
                               fields={volume.field: volume.fill})
        store = DirStore(Path(tmp) / "store")
        store.put_descriptor(desc)
        pipeline.ingest(volume, desc, store, codec_mod.LOSSLESS)
        rows = pipeline.bench_locations(
            desc, store,
            StoreProfile(latency_ms=latency_ms,
                         bandwidth_bytes_per_s=bandwidth_mibs * (1 << 20)),
            cache_dir=Path(tmp) / "cache",
        )
    _csv_out(rows, ["level", "local_cold_s", "local_warm_s", "remote_cold_s",
                    "remote_warm_s", "cached_cold_s", "cached_warm_s"])


def main(argv=None) -> None:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(64)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except RefusedByPlan as exc:
        refusal = exc.refusal
        click.echo(f"refused: {refusal.message}", err=True)
        click.echo(f"hint: {json.dumps(refusal.hint)}", err=True)
        sys.exit(2)
    except IdxFabricError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
