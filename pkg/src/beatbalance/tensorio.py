"""Binary persistence helpers: PGM images and flat tensor blobs.

Two on-disk formats are used throughout the package:

* PGM (P5, maxval 255) for beat images and sample grids. Binary images are
  stored with 0 for background and 255 for trace pixels so any image viewer
  renders them directly.
* A "tensor blob": every array of a checkpoint concatenated into one ``.bin``
  file (C order, little-endian) next to a ``.json`` manifest listing name,
  dtype, shape and byte offset of each tensor. Readable from any language
  without a deserialization library.
"""

import json
import os
from pathlib import Path

import numpy as np

from .errors import IntegrityError, ParseError

BLOB_SUFFIX = ".bin"
MANIFEST_SUFFIX = ".json"


def write_pgm(path, image):
    """Write a 2-D uint8 array as a binary PGM (P5, maxval 255)."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"PGM image must be 2-D, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise ValueError(f"PGM image must be uint8, got {image.dtype}")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path):
    """Read a binary PGM written by :func:`write_pgm`."""
    with open(path, "rb") as fh:
        data = fh.read()
    # Header is three whitespace-separated tokens after the magic: w, h, maxval.
    if not data.startswith(b"P5"):
        raise ParseError(path, 1, "not a binary PGM (missing P5 magic)")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(path, 1, "truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ParseError(path, 1, f"unsupported PGM maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=h * w, offset=pos)
    if pixels.size != h * w:
        raise ParseError(path, 1, f"PGM payload has {pixels.size} bytes, expected {h * w}")
    return pixels.reshape(h, w).copy()


def save_tensors(stem, tensors):
    """Persist a name->array mapping as ``<stem>.bin`` + ``<stem>.json``.

    Iteration order of ``tensors`` fixes the blob layout, so passing the same
    mapping twice produces byte-identical files.
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(stem.with_suffix(BLOB_SUFFIX), "wb") as fh:
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr)
            raw = arr.tobytes()
            fh.write(raw)
            entries.append(
                {
                    "name": name,
                    "dtype": arr.dtype.str,
                    "shape": list(arr.shape),
                    "offset": offset,
                    "nbytes": len(raw),
                }
            )
            offset += len(raw)
    manifest = {"format": "beatbalance-tensor-blob", "version": 1, "tensors": entries}
    write_json(stem.with_suffix(MANIFEST_SUFFIX), manifest)


def load_tensors(stem):
    """Load a tensor blob written by :func:`save_tensors`."""
    stem = Path(stem)
    manifest = read_json(stem.with_suffix(MANIFEST_SUFFIX))
    if manifest.get("format") != "beatbalance-tensor-blob":
        raise IntegrityError(f"{stem}: not a tensor blob manifest")
    with open(stem.with_suffix(BLOB_SUFFIX), "rb") as fh:
        blob = fh.read()
    out = {}
    for entry in manifest["tensors"]:
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(blob):
            raise IntegrityError(f"{stem}: tensor {entry['name']!r} overruns blob")
        arr = np.frombuffer(blob, dtype=np.dtype(entry["dtype"]), count=n // np.dtype(entry["dtype"]).itemsize, offset=start)
        out[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return out


def write_json(path, obj):
    """Write JSON deterministically (sorted keys, LF, trailing newline)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def file_sha256(path):
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def ensure_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def relpath_inside(base, path):
    """Relative path of ``path`` under ``base``; refuses to escape ``base``."""
    rel = os.path.relpath(path, base)
    if rel.startswith(".."):
        raise ValueError(f"{path} is outside {base}")
    return rel
