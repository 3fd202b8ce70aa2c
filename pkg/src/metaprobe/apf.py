"""APF1: bit-exact binary container for per-layer span representations.

One file holds N records. Each record carries the representation tensor
of a single labeled span: all L layer rows (embedding layer included)
for each of its T span tokens, stored layer-major as float32.

Layout (all integers little-endian):

    offset 0   magic            4 bytes  b"APF1"
           4   version          u32
           8   num_layers  L    u32
          12   hidden_dim  H    u32
          16   num_classes K    u32
          20   num_examples N   u64
          28   dtype_code       u32      (0 = IEEE float32)
          32   metadata_len     u32
          36   metadata         UTF-8 JSON object
               offset table     N x u64  (absolute record offsets)
               records          example_id u64, label u32, span_len u32,
                                tensor T*L*H float32, [layer][token][dim]

The writer is single-owner; after close, the reader supports concurrent
read-only access from multiple threads (mmap-backed random access).
"""

import io
import json
import mmap
import struct
import threading
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import CorruptionError, DimensionMismatchError, FormatError
from .seeding import rng_for

MAGIC = b"APF1"
VERSION = 1
DTYPE_FLOAT32 = 0

_HEADER_STRUCT = struct.Struct("<IIIIQII")  # version L H K N dtype meta_len
_HEADER_SIZE = 4 + _HEADER_STRUCT.size
_RECORD_PREFIX = struct.Struct("<QII")  # example_id label span_len


@dataclass
class ActivationHeader:
    num_layers: int
    hidden_dim: int
    num_classes: int
    num_examples: int
    dtype_code: int = DTYPE_FLOAT32
    version: int = VERSION
    metadata: dict = field(default_factory=dict)

    def validate(self):
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise FormatError(
                f"invalid dimensions L={self.num_layers} H={self.hidden_dim}")
        if self.num_classes < 2:
            raise FormatError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.num_examples < 1:
            raise FormatError(f"num_examples must be >= 1, got {self.num_examples}")
        if self.dtype_code != DTYPE_FLOAT32:
            raise FormatError(f"unsupported dtype_code {self.dtype_code}")
        if not isinstance(self.metadata, dict):
            raise FormatError("metadata must be a key-value document")


@dataclass(eq=False)
class ActivationRecord:
    example_id: int
    label: int
    tensor: np.ndarray  # (L, T, H) float32, layer-major

    @property
    def span_len(self) -> int:
        return self.tensor.shape[1]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ActivationRecord)
            and self.example_id == other.example_id
            and self.label == other.label
            and self.tensor.shape == other.tensor.shape
            and np.array_equal(self.tensor, other.tensor)
        )


def _check_record(header: ActivationHeader, rec: ActivationRecord, index: int):
    t = rec.tensor
    if t.ndim != 3 or t.shape[0] != header.num_layers or t.shape[2] != header.hidden_dim:
        raise DimensionMismatchError(
            f"record {index}: tensor shape {t.shape} does not match "
            f"header (L={header.num_layers}, H={header.hidden_dim})")
    if t.shape[1] < 1:
        raise DimensionMismatchError(f"record {index}: span_len must be >= 1")
    if not (0 <= rec.label < header.num_classes):
        raise DimensionMismatchError(
            f"record {index}: label {rec.label} out of range "
            f"[0, {header.num_classes})")
    if not np.all(np.isfinite(t)):
        raise DimensionMismatchError(f"record {index}: non-finite value in tensor")


def write_activation_set(header: ActivationHeader,
                         records: Iterable[ActivationRecord],
                         path) -> None:
    """Write a complete activation set. Byte-identical for identical input."""
    header.validate()
    meta_bytes = json.dumps(header.metadata, sort_keys=True,
                            separators=(",", ":")).encode("utf-8")
    n = header.num_examples
    try:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(_HEADER_STRUCT.pack(header.version, header.num_layers,
                                        header.hidden_dim, header.num_classes,
                                        n, header.dtype_code, len(meta_bytes)))
            f.write(meta_bytes)
            table_pos = f.tell()
            f.write(b"\x00" * (8 * n))  # placeholder offset table
            offsets = []
            count = 0
            for i, rec in enumerate(records):
                if i >= n:
                    raise DimensionMismatchError(
                        f"more than {n} records for header num_examples={n}")
                _check_record(header, rec, i)
                offsets.append(f.tell())
                f.write(_RECORD_PREFIX.pack(rec.example_id, rec.label,
                                            rec.span_len))
                f.write(np.ascontiguousarray(rec.tensor,
                                             dtype="<f4").tobytes())
                count += 1
            if count != n:
                raise DimensionMismatchError(
                    f"header declares num_examples={n} but got {count} records")
            f.seek(table_pos)
            f.write(struct.pack(f"<{n}Q", *offsets))
    except OSError as e:
        raise OSError(f"failed writing activation set to {path}: {e}") from e


class ActivationSetReader:
    """Random-access, read-only view of an APF1 file.

    Safe to share across threads: record reads slice an mmap without
    mutating reader state.
    """

    def __init__(self, path):
        self._path = path
        self._file = open(path, "rb")
        try:
            self._mm = mmap.mmap(self._file.fileno(), 0, access=mmap.ACCESS_READ)
        except ValueError as e:
            self._file.close()
            raise CorruptionError(f"{path}: cannot map empty file", 0) from e
        try:
            self.header, self._offsets = self._parse_header()
        except Exception:
            self.close()
            raise

    def _parse_header(self):
        mm = self._mm
        if len(mm) < _HEADER_SIZE:
            raise CorruptionError(f"{self._path}: truncated header", len(mm))
        if mm[:4] != MAGIC:
            raise FormatError(f"{self._path}: bad magic {bytes(mm[:4])!r}")
        version, L, H, K, n, dtype_code, meta_len = _HEADER_STRUCT.unpack(
            mm[4:_HEADER_SIZE])
        if version != VERSION:
            raise FormatError(f"{self._path}: unsupported version {version}")
        meta_end = _HEADER_SIZE + meta_len
        if len(mm) < meta_end:
            raise CorruptionError(f"{self._path}: truncated metadata", len(mm))
        try:
            metadata = json.loads(mm[_HEADER_SIZE:meta_end].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{self._path}: metadata is not JSON: {e}") from e
        header = ActivationHeader(num_layers=L, hidden_dim=H, num_classes=K,
                                  num_examples=n, dtype_code=dtype_code,
                                  version=version, metadata=metadata)
        header.validate()
        table_end = meta_end + 8 * n
        if len(mm) < table_end:
            raise CorruptionError(f"{self._path}: truncated offset table", len(mm))
        # copy out of the mmap so close() never sees exported buffers
        offsets = np.frombuffer(mm, dtype="<u8", count=n,
                                offset=meta_end).astype(np.int64)
        if n > 1 and not np.all(np.diff(offsets) > 0):
            raise CorruptionError(
                f"{self._path}: offset table not strictly increasing", meta_end)
        if offsets[0] != table_end:
            raise CorruptionError(
                f"{self._path}: first record offset {offsets[0]} != {table_end}",
                meta_end)
        return header, offsets

    def __len__(self) -> int:
        return self.header.num_examples

    def __getitem__(self, index: int) -> ActivationRecord:
        n = len(self)
        if not (0 <= index < n):
            raise IndexError(f"record index {index} out of range [0, {n})")
        off = int(self._offsets[index])
        mm = self._mm
        if len(mm) < off + _RECORD_PREFIX.size:
            raise CorruptionError(f"{self._path}: truncated record {index}", len(mm))
        example_id, label, span_len = _RECORD_PREFIX.unpack(
            mm[off:off + _RECORD_PREFIX.size])
        L, H = self.header.num_layers, self.header.hidden_dim
        nvals = span_len * L * H
        data_off = off + _RECORD_PREFIX.size
        if len(mm) < data_off + 4 * nvals:
            raise CorruptionError(
                f"{self._path}: truncated tensor of record {index}", len(mm))
        tensor = np.array(np.frombuffer(mm, dtype="<f4", count=nvals,
                                        offset=data_off))
        return ActivationRecord(example_id=example_id, label=label,
                                tensor=tensor.reshape(L, span_len, H))

    def __iter__(self) -> Iterator[ActivationRecord]:
        return (self[i] for i in range(len(self)))

    def example_ids(self) -> np.ndarray:
        return np.array([_RECORD_PREFIX.unpack(
            self._mm[int(o):int(o) + _RECORD_PREFIX.size])[0]
            for o in self._offsets], dtype=np.int64)

    def labels(self) -> np.ndarray:
        return np.array([_RECORD_PREFIX.unpack(
            self._mm[int(o):int(o) + _RECORD_PREFIX.size])[1]
            for o in self._offsets], dtype=np.int64)

    def close(self):
        self._mm.close()
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_activation_set(path) -> ActivationSetReader:
    return ActivationSetReader(path)


class ActivationSet:
    """In-memory activation set with the same access surface as the reader."""

    def __init__(self, header: ActivationHeader, records: list):
        header.validate()
        if len(records) != header.num_examples:
            raise DimensionMismatchError(
                f"header declares num_examples={header.num_examples} "
                f"but got {len(records)} records")
        for i, rec in enumerate(records):
            _check_record(header, rec, i)
        self.header = header
        self._records = records

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, index: int) -> ActivationRecord:
        n = len(self._records)
        if not (0 <= index < n):
            raise IndexError(f"record index {index} out of range [0, {n})")
        return self._records[index]

    def __iter__(self) -> Iterator[ActivationRecord]:
        return iter(self._records)

    def example_ids(self) -> np.ndarray:
        return np.array([r.example_id for r in self._records], dtype=np.int64)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self._records], dtype=np.int64)


@dataclass
class SynthSpec:
    """Synthetic activation-set generator spec.

    When ``signal_layer`` is set, a per-class offset of L2 magnitude
    ``signal_strength`` is added to every span token at that layer only,
    so the label is linearly decodable from that layer alone.
    """
    num_examples: int
    num_layers: int
    hidden_dim: int
    num_classes: int
    seed: int
    signal_layer: Optional[int] = None
    signal_strength: float = 0.0
    max_span_len: int = 3

    def validate(self):
        if self.num_examples < 1 or self.num_layers < 1 or self.hidden_dim < 1:
            raise ValueError("N, L, H must all be >= 1")
        if self.num_classes < 2:
            raise ValueError("K must be >= 2")
        if self.signal_layer is not None and not (
                0 <= self.signal_layer < self.num_layers):
            raise ValueError(
                f"signal_layer {self.signal_layer} out of range "
                f"[0, {self.num_layers})")
        if self.signal_strength < 0:
            raise ValueError("signal_strength must be >= 0")
        if self.max_span_len < 1:
            raise ValueError("max_span_len must be >= 1")


def synth_activations(spec: SynthSpec) -> ActivationSet:
    """Generate a seeded synthetic activation set.

    Labels are uniform over K; tensors are standard-normal noise plus an
    optional planted class offset at one layer. Same seed, same set.
    """
    spec.validate()
    rng = rng_for(spec.seed, "synth")
    n, L, H, K = (spec.num_examples, spec.num_layers, spec.hidden_dim,
                  spec.num_classes)
    labels = rng.integers(0, K, size=n)
    offsets = None
    if spec.signal_layer is not None and spec.signal_strength > 0:
        dirs = rng.standard_normal((K, H))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        offsets = spec.signal_strength * dirs
    span_lens = rng.integers(1, spec.max_span_len + 1, size=n)
    records = []
    for i in range(n):
        t = int(span_lens[i])
        tensor = rng.standard_normal((L, t, H))
        if offsets is not None:
            tensor[spec.signal_layer] += offsets[labels[i]]
        records.append(ActivationRecord(example_id=i, label=int(labels[i]),
                                        tensor=tensor.astype(np.float32)))
    header = ActivationHeader(
        num_layers=L, hidden_dim=H, num_classes=K, num_examples=n,
        metadata={
            "encoder": "synth",
            "dataset": "synth",
            "lang": "none",
            "weights_mode": "synthetic",
            "seed": spec.seed,
            "signal_layer": spec.signal_layer,
            "signal_strength": spec.signal_strength,
        })
    return ActivationSet(header, records)
