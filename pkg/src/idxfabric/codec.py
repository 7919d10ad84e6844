"""Block payload codecs, envelope framing, and quality metrics.

Three codecs cover the replica space: raw (no transform), lossless deflate,
and fixed-precision truncation (keep the top p bits of each float32 bit
pattern, then deflate the result).  Truncation trades mantissa bits for
compressibility, which is the precision/quality axis the planner exposes.

Every block travels inside a small self-describing envelope with a CRC so a
flipped bit anywhere in storage or transit is caught at unpack time.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    BadVersion,
    CorruptStream,
    CrcMismatch,
    DegenerateRange,
    LengthMismatch,
    PrecisionOutOfRange,
    ZeroSize,
)

KIND_RAW = "raw"
KIND_DEFLATE = "lossless-deflate"
KIND_TRUNCATE = "truncate"

_CODEC_IDS = {KIND_RAW: 0, KIND_DEFLATE: 1, KIND_TRUNCATE: 2}
_CODEC_NAMES = {v: k for k, v in _CODEC_IDS.items()}

ENVELOPE_MAGIC = b"IDXB"
ENVELOPE_VERSION = 1
# magic, version, codec id, precision, 3 reserved bytes, raw_len, encoded_len, crc32
_HEADER = struct.Struct("<4sBBB3xQQI")
HEADER_BYTES = _HEADER.size
assert HEADER_BYTES == 30


@dataclass(frozen=True)
class CodecSpec:
    """Replica encoding: ``kind`` plus the kept precision bits.

    ``precision`` only shapes the transform for truncate replicas; raw and
    deflate replicas always carry full 32-bit samples.
    """

    kind: str
    precision: int = 32

    def __post_init__(self):
        if self.kind not in _CODEC_IDS:
            raise CorruptStream(f"unknown codec kind {self.kind!r}")
        if not 1 <= self.precision <= 32:
            raise PrecisionOutOfRange(f"precision {self.precision} not in [1, 32]")

    @property
    def lossless(self) -> bool:
        return self.kind != KIND_TRUNCATE or self.precision == 32

    def to_json(self) -> dict:
        if self.kind == KIND_TRUNCATE:
            return {"kind": self.kind, "precision": self.precision}
        return {"kind": self.kind}

    @classmethod
    def from_json(cls, obj: dict) -> "CodecSpec":
        return cls(obj["kind"], int(obj.get("precision", 32)))


RAW = CodecSpec(KIND_RAW)
LOSSLESS = CodecSpec(KIND_DEFLATE)


def truncate(precision: int) -> CodecSpec:
    return CodecSpec(KIND_TRUNCATE, precision)


def deflate_encode(data: bytes) -> bytes:
    """Default-level DEFLATE; rejects empty input (an empty block is a bug)."""
    if len(data) == 0:
        raise ZeroSize("refusing to encode an empty block")
    return zlib.compress(data)


def deflate_decode(data: bytes) -> bytes:
    try:
        return zlib.decompress(data)
    except zlib.error as exc:
        raise CorruptStream(f"deflate stream corrupt: {exc}") from exc


def truncate_precision(samples: np.ndarray, precision: int) -> np.ndarray:
    """Zero all but the top ``precision`` bits of each float32 bit pattern.

    Idempotent, magnitude never grows, and NaN/Inf pass through the mask
    unchecked (NaN payload bits may be cleared).
    """
    if not 1 <= precision <= 32:
        raise PrecisionOutOfRange(f"precision {precision} not in [1, 32]")
    samples = np.asarray(samples, dtype=np.float32)
    if precision == 32:
        return samples.copy()
    mask = np.uint32(0xFFFFFFFF << (32 - precision) & 0xFFFFFFFF)
    bits = samples.view(np.uint32) & mask
    return bits.view(np.float32)


def psnr(original: np.ndarray, reconstructed: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB: 20*log10(range/rmse).

    Range is max-min of the original; exact reconstruction reports inf.
    """
    original = np.asarray(original)
    reconstructed = np.asarray(reconstructed)
    if original.size != reconstructed.size:
        raise LengthMismatch(
            f"original has {original.size} samples, reconstructed {reconstructed.size}"
        )
    if original.size < 2:
        raise LengthMismatch("need at least 2 samples")
    o = original.astype(np.float64).ravel()
    r = reconstructed.astype(np.float64).ravel()
    value_range = float(o.max() - o.min())
    if value_range <= 0:
        raise DegenerateRange("original has zero value range")
    rmse = math.sqrt(float(np.mean((o - r) ** 2)))
    if rmse == 0:
        return math.inf
    return 20.0 * math.log10(value_range / rmse)


def compression_factor(raw_bytes: float, encoded_bytes: float) -> float:
    """raw/encoded size ratio, reported to 2 decimals."""
    if raw_bytes <= 0 or encoded_bytes <= 0:
        raise ZeroSize("sizes must be positive")
    return round(raw_bytes / encoded_bytes, 2)


def encode_payload(spec: CodecSpec, raw: bytes) -> bytes:
    """Transform raw block bytes into the stored/wire payload."""
    if len(raw) == 0:
        raise ZeroSize("refusing to encode an empty block")
    if spec.kind == KIND_RAW:
        return raw
    if spec.kind == KIND_DEFLATE:
        return deflate_encode(raw)
    samples = np.frombuffer(raw, dtype=np.float32)
    return deflate_encode(truncate_precision(samples, spec.precision).tobytes())


def decode_payload(spec: CodecSpec, payload: bytes, raw_len: int) -> bytes:
    if spec.kind == KIND_RAW:
        out = payload
    else:
        out = deflate_decode(payload)
    if len(out) != raw_len:
        raise CorruptStream(
            f"decoded {len(out)} bytes where header promised {raw_len}"
        )
    return out


def pack_envelope(spec: CodecSpec, raw: bytes) -> bytes:
    """Frame a raw block: 30-byte little-endian header + encoded payload."""
    payload = encode_payload(spec, raw)
    header = _HEADER.pack(
        ENVELOPE_MAGIC,
        ENVELOPE_VERSION,
        _CODEC_IDS[spec.kind],
        spec.precision if spec.kind == KIND_TRUNCATE else 32,
        len(raw),
        len(payload),
        zlib.crc32(payload),
    )
    return header + payload


def unpack_envelope(blob: bytes) -> tuple[CodecSpec, bytes]:
    """Validate and decode an envelope back to raw block bytes."""
    if len(blob) < HEADER_BYTES:
        raise CorruptStream(f"envelope shorter than header ({len(blob)} bytes)")
    magic, version, codec_id, precision, raw_len, encoded_len, crc = _HEADER.unpack(
        blob[:HEADER_BYTES]
    )
    if magic != ENVELOPE_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != ENVELOPE_VERSION:
        raise BadVersion(f"unsupported envelope version {version}")
    if codec_id not in _CODEC_NAMES:
        raise CorruptStream(f"unknown codec id {codec_id}")
    payload = blob[HEADER_BYTES:]
    if len(payload) != encoded_len:
        raise CorruptStream(
            f"payload is {len(payload)} bytes, header promised {encoded_len}"
        )
    if zlib.crc32(payload) != crc:
        raise CrcMismatch("payload checksum mismatch")
    spec = CodecSpec(_CODEC_NAMES[codec_id], precision)
    return spec, decode_payload(spec, payload, raw_len)


def envelope_info(blob: bytes) -> dict:
    """Header fields without decoding the payload (no CRC verification)."""
    if len(blob) < HEADER_BYTES:
        raise CorruptStream("envelope shorter than header")
    magic, version, codec_id, precision, raw_len, encoded_len, crc = _HEADER.unpack(
        blob[:HEADER_BYTES]
    )
    return {
        "magic": magic,
        "version": version,
        "codec_id": codec_id,
        "precision": precision,
        "raw_len": raw_len,
        "encoded_len": encoded_len,
        "crc32": crc,
    }
