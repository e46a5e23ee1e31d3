"""Binary model file.

Layout (little-endian)::

    magic        4 bytes  b"OODF"
    version      u16
    header_len   u32
    header       header_len bytes of UTF-8 JSON (integers and strings only)
    offsets      i64[n_trees + 1]   node index where each tree starts
    nodes        node-major records: feature i4, left i4, right i4,
                 threshold f8, n_neg i8, n_pos i8, value f8
    checksum     32 bytes, SHA-256 of everything before it

Child indices are local to their tree. Reals are stored as raw IEEE-754
doubles so a round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from oodgate.errors import (
    ChecksumMismatchError,
    MissingModelError,
    ModelFormatError,
    SchemaMismatchError,
    VersionUnsupportedError,
)
from oodgate.features import FEATURE_NAMES, SCHEMA_VERSION
from oodgate.forest import ExtraTreesModel, Hyperparameters, Tree

MAGIC = b"OODF"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<4sHI")
_DIGEST = 32

NODE_DTYPE = np.dtype([
    ("feature", "<i4"),
    ("left", "<i4"),
    ("right", "<i4"),
    ("threshold", "<f8"),
    ("n_neg", "<i8"),
    ("n_pos", "<i8"),
    ("value", "<f8"),
])


def serialize_model(model: ExtraTreesModel) -> bytes:
    header = {
        "hyperparameters": model.hyperparameters.as_dict(),
        "feature_names": list(model.feature_names),
        "schema_version": model.schema_version,
        "n_trees": len(model.trees),
        "training_seed": model.training_seed,
        "classes": list(model.classes),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    sizes = [t.n_nodes for t in model.trees]
    offsets = np.zeros(len(sizes) + 1, dtype="<i8")
    np.cumsum(sizes, out=offsets[1:])
    nodes = np.empty(int(offsets[-1]), dtype=NODE_DTYPE)
    for t, start in zip(model.trees, offsets[:-1]):
        rec = nodes[start : start + t.n_nodes]
        rec["feature"] = t.feature
        rec["left"] = t.left
        rec["right"] = t.right
        rec["threshold"] = t.threshold
        rec["n_neg"] = t.counts[:, 0]
        rec["n_pos"] = t.counts[:, 1]
        rec["value"] = t.value
    body = b"".join([
        _PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header_bytes)),
        header_bytes,
        offsets.tobytes(),
        nodes.tobytes(),
    ])
    return body + hashlib.sha256(body).digest()


def deserialize_model(
    data: bytes,
    expected_feature_names: tuple[str, ...] | None = FEATURE_NAMES,
    expected_schema_version: int | None = SCHEMA_VERSION,
) -> ExtraTreesModel:
    """Parse a model file and check it against the extractor's feature schema.

    Pass ``None`` for either expectation to skip that check.

    Raises
    ------
    ChecksumMismatchError, VersionUnsupportedError, SchemaMismatchError, ModelFormatError
    """
    data = bytes(data)
    if len(data) < _PREAMBLE.size + _DIGEST:
        raise ModelFormatError("model file is truncated")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    magic, version, header_len = _PREAMBLE.unpack_from(body)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}")
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumMismatchError("model checksum does not match its contents")
    if version != FORMAT_VERSION:
        raise VersionUnsupportedError(f"model format version {version} is not supported (expected {FORMAT_VERSION})")

    pos = _PREAMBLE.size
    try:
        header = json.loads(body[pos : pos + header_len].decode())
        pos += header_len
        n_trees = int(header["n_trees"])
        names = tuple(header["feature_names"])
        schema_version = int(header["schema_version"])
        hp = Hyperparameters(**header["hyperparameters"])
        seed = int(header["training_seed"])
        classes = tuple(header["classes"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed model header: {exc}") from None

    if expected_schema_version is not None and schema_version != expected_schema_version:
        raise SchemaMismatchError(f"model schema v{schema_version}, extractor schema v{expected_schema_version}")
    if expected_feature_names is not None and names != tuple(expected_feature_names):
        diff = [(a, b) for a, b in zip(names, expected_feature_names) if a != b]
        detail = f"first difference {diff[0]}" if diff else f"{len(names)} vs {len(expected_feature_names)} features"
        raise SchemaMismatchError(f"model feature schema does not match the extractor: {detail}")

    offsets_size = 8 * (n_trees + 1)
    if len(body) < pos + offsets_size:
        raise ModelFormatError("model file is truncated")
    offsets = np.frombuffer(body, dtype="<i8", count=n_trees + 1, offset=pos)
    pos += offsets_size
    n_nodes = int(offsets[-1])
    if len(body) != pos + n_nodes * NODE_DTYPE.itemsize or offsets[0] != 0 or np.any(np.diff(offsets) <= 0):
        raise ModelFormatError("node table size does not match tree offsets")
    nodes = np.frombuffer(body, dtype=NODE_DTYPE, count=n_nodes, offset=pos)

    trees = []
    for start, stop in zip(offsets[:-1], offsets[1:]):
        rec = nodes[start:stop]
        size = stop - start
        if rec["left"].min() < 0 or rec["right"].min() < 0 or rec["left"].max() >= size or rec["right"].max() >= size:
            raise ModelFormatError("child index out of range")
        if rec["feature"].max() >= len(names):
            raise ModelFormatError("split feature index out of range")
        counts = np.column_stack([rec["n_neg"], rec["n_pos"]]).astype(np.int64)
        trees.append(Tree(
            rec["feature"].astype(np.int32),
            rec["threshold"].astype(np.float64),
            rec["left"].astype(np.int32),
            rec["right"].astype(np.int32),
            counts,
            rec["value"].astype(np.float64),
        ))
    return ExtraTreesModel(trees, hp, seed, names, schema_version, classes)


def save_model(model: ExtraTreesModel, path) -> None:
    Path(path).write_bytes(serialize_model(model))


def load_model(path, **expectations) -> ExtraTreesModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise MissingModelError(f"no model file at {path}") from None
    return deserialize_model(data, **expectations)
