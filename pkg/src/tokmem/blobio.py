"""Manifest+blob file pairs.

Every on-disk artifact (dataset, checkpoint, memory snapshot) is a JSON
manifest next to a raw binary blob. All multi-byte values in blobs are
little-endian float32 / int32; the manifest records the expected blob
byte length so readers can detect truncation or corruption.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataFormatError

FORMAT_VERSION = 1

F32 = np.dtype("<f4")
I32 = np.dtype("<i4")


def pair_paths(prefix: str | Path, blob_suffix: str = ".f32") -> tuple[Path, Path]:
    """Suffixes are appended, not substituted, so dotted prefixes stay intact."""
    return Path(str(prefix) + ".json"), Path(str(prefix) + blob_suffix)


def write_pair(prefix: str | Path, manifest: dict, blob: bytes,
               blob_suffix: str = ".f32") -> tuple[Path, Path]:
    """Write ``<prefix>.json`` and ``<prefix><blob_suffix>``; returns both paths."""
    manifest = dict(manifest)
    manifest["format_version"] = FORMAT_VERSION
    manifest["blob_bytes"] = len(blob)
    manifest_path, blob_path = pair_paths(prefix, blob_suffix)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    blob_path.write_bytes(blob)
    return manifest_path, blob_path


def read_pair(prefix: str | Path, blob_suffix: str = ".f32") -> tuple[dict, bytes]:
    """Read a manifest+blob pair, validating version and blob length."""
    manifest_path, blob_path = pair_paths(prefix, blob_suffix)
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing manifest {manifest_path}")
    if not blob_path.exists():
        raise FileNotFoundError(f"missing blob {blob_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(
            f"{manifest_path}: unsupported format_version {manifest.get('format_version')!r}")
    blob = blob_path.read_bytes()
    expected = manifest.get("blob_bytes")
    if expected != len(blob):
        raise DataFormatError(
            f"{blob_path}: manifest declares {expected} blob bytes but file has {len(blob)}")
    return manifest, blob


def floats_to_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype=F32).tobytes()


def ints_to_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype=I32).tobytes()


def floats_from_bytes(buf: bytes, count: int, offset: int = 0) -> np.ndarray:
    """Decode ``count`` float32 values starting at ``offset`` bytes, as float64."""
    arr = np.frombuffer(buf, dtype=F32, count=count, offset=offset)
    return arr.astype(np.float64)


def ints_from_bytes(buf: bytes, count: int, offset: int = 0) -> np.ndarray:
    arr = np.frombuffer(buf, dtype=I32, count=count, offset=offset)
    return arr.astype(np.int64)
