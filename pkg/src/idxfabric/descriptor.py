"""Dataset descriptor: the self-describing metadata document for one dataset.

The descriptor pins grid geometry (axes, unpadded extents, bit pattern),
block size, the field table with fill values, the timestep count, and the
replica table (replica name -> codec).  It is stored as ``dataset.json`` at
a store root and served verbatim by the HTTP service.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import index
from .codec import CodecSpec
from .errors import BadDescriptor
from .index import BitPattern


@dataclass
class FieldInfo:
    fill: float = 0.0


@dataclass
class DatasetDescriptor:
    id: str
    axes: tuple[str, ...]
    extents: dict[str, int]
    pattern: BitPattern
    block_bits: int
    fields: dict[str, FieldInfo]
    timesteps: int
    replicas: dict[str, CodecSpec] = field(default_factory=dict)
    created: str = ""
    provenance: str = ""

    def __post_init__(self):
        if not self.created:
            self.created = datetime.now(timezone.utc).isoformat()
        self.validate()

    def validate(self) -> None:
        if not self.id:
            raise BadDescriptor("dataset id must be non-empty")
        if tuple(self.pattern.axes) != tuple(self.axes):
            raise BadDescriptor(
                f"pattern axes {self.pattern.axes} != descriptor axes {self.axes}"
            )
        for a in self.axes:
            e = self.extents.get(a)
            if e is None or e < 1:
                raise BadDescriptor(f"axis {a!r} needs extent >= 1")
            if index.bits_for_extent(e) != self.pattern.bits(a):
                raise BadDescriptor(
                    f"axis {a!r}: extent {e} needs {index.bits_for_extent(e)} bits, "
                    f"pattern carries {self.pattern.bits(a)}"
                )
        if not 0 <= self.block_bits <= self.pattern.m:
            raise BadDescriptor(
                f"block_bits {self.block_bits} not in [0, {self.pattern.m}]"
            )
        if not self.fields:
            raise BadDescriptor("descriptor needs at least one field")
        if self.timesteps < 1:
            raise BadDescriptor("timesteps must be >= 1")

    # -- derived geometry --

    @property
    def m(self) -> int:
        return self.pattern.m

    @property
    def block_samples(self) -> int:
        return 1 << self.block_bits

    @property
    def block_count(self) -> int:
        return 1 << (self.m - self.block_bits)

    @property
    def total_padded_samples(self) -> int:
        return 1 << self.m

    def padded_extents(self) -> dict[str, int]:
        return self.pattern.padded_extents()

    def padded_fraction(self) -> float:
        real = 1
        for a in self.axes:
            real *= self.extents[a]
        return 1.0 - real / self.total_padded_samples

    def full_box(self) -> dict[str, tuple[int, int]]:
        return {a: (0, self.extents[a]) for a in self.axes}

    def fill_for(self, field_name: str) -> float:
        return self.fields[field_name].fill

    # -- serialization --

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "axes": list(self.axes),
            "extents": {a: self.extents[a] for a in self.axes},
            "pattern": self.pattern.pattern,
            "block_bits": self.block_bits,
            "fields": {n: {"fill": f.fill} for n, f in self.fields.items()},
            "timesteps": self.timesteps,
            "replicas": {n: c.to_json() for n, c in self.replicas.items()},
            "created": self.created,
            "provenance": self.provenance,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetDescriptor":
        try:
            axes = tuple(obj["axes"])
            pattern = BitPattern(axes, obj["pattern"])
            return cls(
                id=obj["id"],
                axes=axes,
                extents={a: int(obj["extents"][a]) for a in axes},
                pattern=pattern,
                block_bits=int(obj["block_bits"]),
                fields={
                    n: FieldInfo(fill=float(f.get("fill", 0.0)))
                    for n, f in obj["fields"].items()
                },
                timesteps=int(obj["timesteps"]),
                replicas={
                    n: CodecSpec.from_json(c) for n, c in obj.get("replicas", {}).items()
                },
                created=obj.get("created", ""),
                provenance=obj.get("provenance", ""),
            )
        except BadDescriptor:
            raise
        except Exception as exc:
            raise BadDescriptor(f"malformed descriptor: {exc}") from exc

    @classmethod
    def loads(cls, text: str) -> "DatasetDescriptor":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BadDescriptor(f"descriptor is not valid JSON: {exc}") from exc
        return cls.from_json(obj)


def make_descriptor(
    dataset_id: str,
    extents: dict[str, int],
    block_bits: int,
    fields: dict[str, float] | None = None,
    timesteps: int = 1,
    pattern: str | None = None,
    provenance: str = "",
) -> DatasetDescriptor:
    """Convenience constructor deriving the pattern from extents when omitted."""
    axes = tuple(extents)
    if pattern is None:
        bp = index.pattern_for_extents(extents)
    else:
        bp = BitPattern(axes, pattern)
    fields = fields or {"value": 0.0}
    return DatasetDescriptor(
        id=dataset_id,
        axes=axes,
        extents=dict(extents),
        pattern=bp,
        block_bits=block_bits,
        fields={n: FieldInfo(fill=f) for n, f in fields.items()},
        timesteps=timesteps,
        provenance=provenance,
    )
