import json

import numpy as np
import pytest
import requests

from idxfabric import codec, pipeline
from idxfabric.cli import main as cli_main
from idxfabric.fabric import Dataset, open_dataset
from idxfabric.service import unpack_data_response
from idxfabric.store import DirStore

from conftest import build_dataset
from test_fabric import oracle_read


def test_list_and_descriptor(live_server):
    server, desc, _ = live_server
    resp = requests.get(f"{server.base_url}/v1/datasets")
    assert resp.json() == [desc.id]
    url = f"{server.base_url}/v1/datasets/{desc.id}"
    doc = requests.get(url).json()
    assert doc["descriptor"]["id"] == desc.id
    assert doc["fdo"]["identifier"] == url
    assert doc["levels"][0]["strides"] == {"x": 16, "y": 16, "z": 16}
    assert doc["levels"][-1]["strides"] == {"x": 1, "y": 1, "z": 1}
    assert requests.get(f"{server.base_url}/v1/datasets/ghost").status_code == 404


def test_block_endpoint_byte_identical(live_server, small_dataset):
    server, desc, _ = live_server
    _, store, _ = small_dataset
    resp = requests.get(
        f"{server.base_url}/v1/datasets/{desc.id}/block",
        params={"field": "value", "t": 0, "replica": "lossless", "b": 0},
    )
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "application/octet-stream"
    on_disk = (store.root / "value" / "t00000000" / "lossless"
               / "b000000000000.bin").read_bytes()
    assert resp.content == on_disk


def test_block_endpoint_errors(live_server):
    server, desc, _ = live_server
    base = f"{server.base_url}/v1/datasets/{desc.id}/block"
    assert requests.get(base, params={"field": "value", "t": 0,
                                      "replica": "lossless",
                                      "b": desc.block_count}).status_code == 404
    assert requests.get(base, params={"t": 0, "replica": "lossless",
                                      "b": 0}).status_code == 400
    assert requests.get(base, params={"field": "value", "t": 0,
                                      "replica": "lossless",
                                      "b": "wat"}).status_code == 400


def test_data_endpoint_matches_in_process(live_server):
    server, desc, raw = live_server
    resp = requests.get(
        f"{server.base_url}/v1/datasets/{desc.id}/data",
        params={"field": "value", "t": 0},
    )
    assert resp.status_code == 200
    parsed = unpack_data_response(resp.content)
    assert parsed["level"] == desc.m
    assert parsed["counts"] == (16, 16, 16)
    assert np.array_equal(parsed["data"], raw.data)


def test_data_endpoint_level0(live_server):
    server, desc, raw = live_server
    resp = requests.get(
        f"{server.base_url}/v1/datasets/{desc.id}/data",
        params={"field": "value", "level": 0},
    )
    parsed = unpack_data_response(resp.content)
    assert parsed["counts"] == (1, 1, 1)
    assert parsed["data"][0, 0, 0] == raw.data[0, 0, 0]


def test_data_endpoint_refusal_409(live_server):
    server, desc, _ = live_server
    resp = requests.get(
        f"{server.base_url}/v1/datasets/{desc.id}/data",
        params={"field": "value", "max_bytes": 8, "min_level": 5},
    )
    assert resp.status_code == 409
    body = resp.json()
    assert body["error"] == "refused"
    assert "max_bytes" in body["violated"]
    assert body["hint"]["max_bytes"] == 4 * 2 ** 5


def test_data_endpoint_bad_params(live_server):
    server, desc, _ = live_server
    base = f"{server.base_url}/v1/datasets/{desc.id}/data"
    assert requests.get(base, params={"field": "value",
                                      "x": "5"}).status_code == 400
    assert requests.get(base, params={"field": "value",
                                      "x": "0,99"}).status_code == 400
    assert requests.get(base, params={"field": "nope"}).status_code == 400
    assert requests.get(base, params={"field": "value",
                                      "level": "fine"}).status_code == 400


def test_slice_endpoint(live_server):
    server, desc, raw = live_server
    resp = requests.get(
        f"{server.base_url}/v1/datasets/{desc.id}/slice",
        params={"axis": "z", "index": 5, "field": "value"},
    )
    parsed = unpack_data_response(resp.content)
    assert parsed["counts"] == (16, 16)
    expect = oracle_read(raw.data, desc, {"x": (0, 16), "y": (0, 16), "z": (5, 6)},
                         desc.m)[:, :, 0]
    assert np.array_equal(parsed["data"], expect)
    # index == extent -> 400
    resp = requests.get(
        f"{server.base_url}/v1/datasets/{desc.id}/slice",
        params={"axis": "z", "index": 16, "field": "value"},
    )
    assert resp.status_code == 400
    resp = requests.get(
        f"{server.base_url}/v1/datasets/{desc.id}/slice",
        params={"axis": "q", "index": 0, "field": "value"},
    )
    assert resp.status_code == 400


def test_stats_endpoint(live_server):
    server, desc, raw = live_server
    resp = requests.get(
        f"{server.base_url}/v1/datasets/{desc.id}/stats/in_range",
        params={"field": "value", "lo": 0.0, "hi": 10.0},
    )
    body = resp.json()
    assert resp.status_code == 200
    finite = raw.data[raw.data != 0.0]
    expect = 100.0 * ((finite >= 0) & (finite <= 10)).sum() / finite.size
    assert body["percent"] == pytest.approx(expect)
    assert body["counted"] == int(((finite >= 0) & (finite <= 10)).sum())


def test_remote_fabric_equivalence(live_server):
    server, desc, raw = live_server
    remote = open_dataset(f"{server.base_url}/v1/datasets/{desc.id}")
    got = remote.read(remote.query(box={"x": (2, 9), "y": (0, 16), "z": (4, 12)},
                                   level=9))
    expect = oracle_read(raw.data, desc, {"x": (2, 9), "y": (0, 16), "z": (4, 12)}, 9)
    assert np.array_equal(got.data, expect)


def test_cors_headers_for_browser_clients(live_server):
    server, desc, _ = live_server
    resp = requests.get(f"{server.base_url}/v1/datasets",
                        headers={"Origin": "http://localhost:8600"})
    assert resp.headers.get("access-control-allow-origin") == "*"


def test_egress_endpoint(live_server):
    server, desc, _ = live_server
    requests.get(
        f"{server.base_url}/v1/datasets/{desc.id}/block",
        params={"field": "value", "t": 0, "replica": "lossless", "b": 0},
    )
    doc = requests.get(f"{server.base_url}/v1/egress").json()
    assert doc[desc.id]["requests"] >= 1


# --- CLI ------------------------------------------------------------------------

def run_cli(argv):
    try:
        cli_main(argv)
    except SystemExit as exc:
        return exc.code or 0
    return 0


def test_cli_convert_fetch_info_psnr(tmp_path, capsys):
    vol = pipeline.synth_volume({"x": 16, "y": 16, "z": 8}, seed=5, kind="smooth",
                                field="temp")
    raw_path = tmp_path / "vol.rawv"
    pipeline.write_rawv(vol, raw_path)
    template = tmp_path / "template.json"
    template.write_text(json.dumps({"id": "clidemo", "block_bits": 6}))
    store_root = tmp_path / "store"

    assert run_cli(["convert", str(raw_path), str(template), str(store_root)]) == 0
    out = capsys.readouterr().out
    assert "ingested" in out

    fetched = tmp_path / "fetched.rawv"
    assert run_cli(["fetch", str(store_root), "--field", "temp",
                    "--out", str(fetched)]) == 0
    back = pipeline.read_rawv(fetched)
    assert np.array_equal(back.data, vol.data)
    capsys.readouterr()

    assert run_cli(["info", str(store_root)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["metadata"]["descriptor"]["id"] == "clidemo"
    assert "read_progressive" in doc["operations"]

    assert run_cli(["psnr", str(raw_path), str(store_root),
                    "--replica", "lossless"]) == 0
    assert "psnr_db=inf" in capsys.readouterr().out


def test_cli_fetch_box_and_level(tmp_path, capsys):
    desc, store, raws = build_dataset(tmp_path / "store", extents={"x": 16, "y": 16,
                                                                   "z": 16})
    out = tmp_path / "crop.rawv"
    assert run_cli(["fetch", str(tmp_path / "store"), "--box", "0:8,0:16,4:12",
                    "--level", "9", "--out", str(out)]) == 0
    got = pipeline.read_rawv(out)
    expect = oracle_read(raws[0].data, desc,
                         {"x": (0, 8), "y": (0, 16), "z": (4, 12)}, 9)
    assert np.array_equal(got.data, expect)


def test_cli_refusal_exit_code(tmp_path):
    build_dataset(tmp_path / "store")
    code = run_cli(["fetch", str(tmp_path / "store"), "--max-bytes", "0",
                    "--out", str(tmp_path / "x.rawv")])
    assert code == 2


def test_cli_usage_error_exit_64(tmp_path):
    assert run_cli(["fetch"]) == 64
    assert run_cli(["convert", "nope.rawv"]) == 64


def test_cli_replica_and_psnr_truncate(tmp_path, capsys):
    vol = pipeline.synth_volume({"x": 16, "y": 16}, seed=5, kind="smooth")
    raw_path = tmp_path / "v.rawv"
    pipeline.write_rawv(vol, raw_path)
    template = tmp_path / "t.json"
    template.write_text(json.dumps({"id": "rep", "block_bits": 4}))
    store_root = tmp_path / "store"
    run_cli(["convert", str(raw_path), str(template), str(store_root)])
    assert run_cli(["replica", str(store_root), "truncate", "-p", "16"]) == 0
    out = capsys.readouterr().out
    assert "truncate16" in out
    assert run_cli(["psnr", str(raw_path), str(store_root),
                    "--replica", "truncate16"]) == 0
    printed = capsys.readouterr().out
    assert printed.startswith("psnr_db=")
    assert "inf" not in printed


def test_cli_bench_blocksize_csv(capsys):
    assert run_cli(["bench", "blocksize", "--extents", "16,16,16",
                    "--k", "4:9", "--latency-ms", "20"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split(",")[:3] == ["block_bits", "block_bytes", "object_count"]
    counts = [int(line.split(",")[2]) for line in lines[1:]]
    assert counts == [2 ** (12 - k) for k in range(4, 9)]
    times = [float(line.split(",")[5]) for line in lines[1:]]
    assert times == sorted(times, reverse=True)


def test_cli_bench_locations_csv(capsys):
    assert run_cli(["bench", "locations", "--extents", "8,8,8",
                    "--block-bits", "6", "--latency-ms", "20"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("level,local_cold_s")
    assert len(lines) == 1 + 9 + 1  # header + levels 0..9


def test_cli_error_exit_code(tmp_path):
    assert run_cli(["info", str(tmp_path / "no-such-store")]) == 1
