"""The HOPS on-disk dataset format.

Little-endian layout:

    magic   4 bytes  b"HOPS"
    version u32      1
    n, d, C u32 each
    flags   u32      bit0 labels, bit1 candidates, bit2 anchors, bit3 names
    features  f32[n*d]          row-major
    labels    u32[n]            if bit0
    candidates n rows of ceil(C/8) bytes, LSB-first bitset   if bit1
    anchors   f32[C*d]          row-major, if bit2
    names     u32 byte count + UTF-8 newline-separated       if bit3
    checksum  u64 FNV-1a over all preceding bytes

save/load round-trips every field bit-exactly.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from . import _kernels
from .data import CandidateMatrix, DatasetBundle, EmbeddingSet
from .errors import (
    BadMagic,
    ChecksumMismatch,
    InvalidParam,
    TruncatedFile,
    VersionUnsupported,
)

MAGIC = b"HOPS"
VERSION = 1
FLAG_LABELS = 1
FLAG_CANDIDATES = 2
FLAG_ANCHORS = 4
FLAG_NAMES = 8

_HEADER = struct.Struct("<4sIIIII")


def bundle_to_bytes(bundle: DatasetBundle) -> bytes:
    n, d, c = bundle.n, bundle.d, bundle.num_classes
    flags = 0
    parts = []
    parts.append(np.ascontiguousarray(bundle.embeddings.data).tobytes())
    if bundle.labels is not None:
        flags |= FLAG_LABELS
        parts.append(bundle.labels.astype("<u4").tobytes())
    if bundle.candidates is not None:
        flags |= FLAG_CANDIDATES
        packed = np.packbits(bundle.candidates.rows, axis=1, bitorder="little")
        parts.append(packed.tobytes())
    if bundle.class_anchors is not None:
        flags |= FLAG_ANCHORS
        parts.append(np.ascontiguousarray(bundle.class_anchors).tobytes())
    if bundle.class_names is not None:
        if any("\n" in name for name in bundle.class_names):
            raise InvalidParam("class names must not contain newlines")
        blob = "\n".join(bundle.class_names).encode("utf-8")
        flags |= FLAG_NAMES
        parts.append(struct.pack("<I", len(blob)) + blob)
    payload = _HEADER.pack(MAGIC, VERSION, n, d, c, flags) + b"".join(parts)
    checksum = _kernels.fnv1a64(payload)
    return payload + struct.pack("<Q", checksum)


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, nbytes: int) -> bytes:
        if self.pos + nbytes > len(self.buf):
            raise TruncatedFile(
                f"needed {nbytes} bytes at offset {self.pos}, "
                f"file has {len(self.buf)}"
            )
        out = self.buf[self.pos : self.pos + nbytes]
        self.pos += nbytes
        return out


def bundle_from_bytes(buf: bytes) -> DatasetBundle:
    # Raw bytes are sliced out first and the checksum verified before any
    # content is decoded, so corruption surfaces as ChecksumMismatch rather
    # than as a downstream validation error.
    cur = _Cursor(buf)
    head = cur.take(_HEADER.size)
    magic, version, n, d, c, flags = _HEADER.unpack(head)
    if magic != MAGIC:
        raise BadMagic(f"magic {magic!r} != {MAGIC!r}")
    if version != VERSION:
        raise VersionUnsupported(f"version {version}, supported: {VERSION}")

    feats_b = cur.take(4 * n * d)
    labels_b = cur.take(4 * n) if flags & FLAG_LABELS else None
    cands_b = None
    if flags & FLAG_CANDIDATES:
        cands_b = cur.take(((c + 7) // 8) * n)
    anchors_b = cur.take(4 * c * d) if flags & FLAG_ANCHORS else None
    names_b = None
    if flags & FLAG_NAMES:
        (blob_len,) = struct.unpack("<I", cur.take(4))
        names_b = cur.take(blob_len)

    (stored,) = struct.unpack("<Q", cur.take(8))
    if cur.pos != len(buf):
        raise TruncatedFile(f"{len(buf) - cur.pos} unexpected trailing bytes")
    computed = _kernels.fnv1a64(buf[: cur.pos - 8])
    if stored != computed:
        raise ChecksumMismatch(f"stored {stored:#018x} != computed {computed:#018x}")

    feats = np.frombuffer(feats_b, dtype="<f4").reshape(n, d)
    labels = None
    if labels_b is not None:
        labels = np.frombuffer(labels_b, dtype="<u4").astype(np.int64)
    candidates = None
    if cands_b is not None:
        packed = np.frombuffer(cands_b, dtype=np.uint8)
        rows = np.unpackbits(
            packed.reshape(n, (c + 7) // 8), axis=1, count=c, bitorder="little"
        )
        candidates = CandidateMatrix(rows)
    anchors = None
    if anchors_b is not None:
        anchors = np.frombuffer(anchors_b, dtype="<f4").reshape(c, d)
    names = None
    if names_b is not None:
        names = tuple(names_b.decode("utf-8").split("\n"))
        if len(names) != c:
            raise TruncatedFile(f"expected {c} class names, found {len(names)}")

    return DatasetBundle(
        embeddings=EmbeddingSet(feats),
        num_classes=c,
        labels=labels,
        candidates=candidates,
        class_anchors=anchors,
        class_names=names,
    )


def save_bundle(bundle: DatasetBundle, path: Union[str, Path]) -> None:
    Path(path).write_bytes(bundle_to_bytes(bundle))


def load_bundle(path: Union[str, Path]) -> DatasetBundle:
    return bundle_from_bytes(Path(path).read_bytes())
