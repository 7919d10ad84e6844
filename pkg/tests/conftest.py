import pytest

from idxfabric import codec, pipeline
from idxfabric.descriptor import make_descriptor
from idxfabric.fabric import Dataset
from idxfabric.store import DirStore


def build_dataset(root, dataset_id="demo", extents=None, block_bits=6,
                  seed=7, kind="smooth", timesteps=1, replicas=("lossless",),
                  fill=0.0):
    """Synth + ingest a small dataset into a DirStore; returns (desc, store, raws).

    raws maps timestep -> RawVolume for oracle comparisons.
    """
    extents = extents or {"x": 16, "y": 16, "z": 16}
    desc = make_descriptor(dataset_id, extents, block_bits=block_bits,
                           fields={"value": fill}, timesteps=timesteps)
    store = DirStore(root)
    store.put_descriptor(desc)
    raws = {}
    for t in range(timesteps):
        raw = pipeline.synth_volume(extents, seed, kind, field="value",
                                    timestep=t, fill=fill)
        raws[t] = raw
        for name in replicas:
            spec = {
                "lossless": codec.LOSSLESS,
                "raw": codec.RAW,
            }.get(name) or codec.truncate(int(name.removeprefix("truncate")))
            pipeline.ingest(raw, desc, store, spec, replica=name)
    return desc, store, raws


@pytest.fixture
def small_dataset(tmp_path):
    """16^3 smooth volume, 64-sample blocks, lossless + truncate16 replicas."""
    desc, store, raws = build_dataset(
        tmp_path / "store", extents={"x": 16, "y": 16, "z": 16}, block_bits=6,
        replicas=("lossless", "truncate16"),
    )
    return desc, store, raws[0]


@pytest.fixture
def dataset_handle(small_dataset, tmp_path):
    desc, store, raw = small_dataset
    return Dataset(desc, store, uri=str(tmp_path / "store")), raw


@pytest.fixture
def live_server(small_dataset):
    """The small dataset served over HTTP (writable, for the store contract)."""
    from idxfabric.service import BackgroundServer, ServedDataset, create_app

    desc, store, raw = small_dataset
    app = create_app({desc.id: ServedDataset(Dataset(desc, store))}, writable=True)
    server = BackgroundServer(app).start()
    yield server, desc, raw
    server.stop()
