"""idxfabric: progressive multiresolution data fabric for gridded volumes."""

from . import codec, errors, fabric, index, pipeline, store
from .fabric import Constraints, Dataset, Plan, Query, Refusal, open_dataset

__all__ = [
    "codec",
    "errors",
    "fabric",
    "index",
    "pipeline",
    "store",
    "open_dataset",
    "Constraints",
    "Dataset",
    "Plan",
    "Query",
    "Refusal",
]

__version__ = "0.1.0"
