"""Binary patch-pair archive: versioned header plus fixed-width records.

Layout (all integers little-endian, documented in the README):

    magic  b"VSRD"
    u32    format version (1)
    u32    header length in bytes
    bytes  header JSON (sorted keys, compact separators)
    then one record per pair:
        u32  scale factor
        u32  source index (into the header's "sources" list)
        f8 * patch_size^2  ILR patch, row-major
        f8 * patch_size^2  residual target, row-major

The byte stream is a pure function of the pairs, so rebuilding an archive
from identical inputs reproduces it exactly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DegenerateInput, InvalidParameter
from .trainer import PatchPair

FORMAT_MAGIC = b"VSRD"
FORMAT_VERSION = 1


def write_archive(path, pairs, patch_size: int) -> None:
    pairs = list(pairs)
    if not pairs:
        raise DegenerateInput("refusing to write an empty archive")
    sources = []
    source_index = {}
    for p in pairs:
        if p.source not in source_index:
            source_index[p.source] = len(sources)
            sources.append(p.source)
    header = {
        "format_version": FORMAT_VERSION,
        "patch_size": patch_size,
        "records": len(pairs),
        "scales": sorted({p.scale for p in pairs}),
        "sources": sources,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(FORMAT_MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for p in pairs:
            if p.ilr_patch.shape != (patch_size, patch_size):
                raise InvalidParameter(
                    f"pair patch shape {p.ilr_patch.shape} != {(patch_size, patch_size)}"
                )
            f.write(struct.pack("<II", p.scale, source_index[p.source]))
            f.write(np.ascontiguousarray(p.ilr_patch, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(p.residual_target, dtype="<f8").tobytes())


def read_archive(path) -> tuple[list[PatchPair], dict]:
    """Load (pairs, header) from an archive file."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != FORMAT_MAGIC:
            raise InvalidParameter(f"not a dataset archive (bad magic {magic!r})")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise InvalidParameter(f"unsupported archive format version {version}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        p = header["patch_size"]
        plane_bytes = p * p * 8
        pairs = []
        for _ in range(header["records"]):
            scale, src_idx = struct.unpack("<II", f.read(8))
            ilr = np.frombuffer(f.read(plane_bytes), dtype="<f8").reshape(p, p)
            res = np.frombuffer(f.read(plane_bytes), dtype="<f8").reshape(p, p)
            pairs.append(
                PatchPair(
                    ilr_patch=ilr.copy(),
                    residual_target=res.copy(),
                    scale=scale,
                    source=header["sources"][src_idx],
                )
            )
    return pairs, header
