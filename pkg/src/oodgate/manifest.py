"""Dataset manifests (CSV ``path,label,split``) and the per-(image, factor) feature cache."""

from __future__ import annotations

import csv
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from oodgate.errors import (
    BadLabelError,
    BadSplitError,
    DuplicatePathError,
    EmptyManifestError,
    MissingFileError,
    ValidationError,
)
from oodgate.features import FeatureParams, FeatureVector, extract_feature_vector
from oodgate.imaging import decode_image

SPLITS = ("internal", "external")
THREADS_ENV = "OODGATE_THREADS"


def worker_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: int
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def counts(self) -> dict[tuple[str, int], int]:
        """Number of entries per ``(split, label)``."""
        return dict(Counter((e.split, e.label) for e in self.entries))


def _parse_label(raw: str, lineno: int) -> int:
    raw = raw.strip()
    if raw not in ("0", "1"):
        raise BadLabelError(f"line {lineno}: label must be 0 or 1, got {raw!r}")
    return int(raw)


def load_manifest(path, check_files: bool = False) -> DatasetManifest:
    """Read and validate a manifest; relative image paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    entries = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["path", "label", "split"]:
            raise ValidationError(f"{path}: header must be 'path,label,split'")
        for lineno, row in enumerate(reader, start=2):
            raw_path = (row["path"] or "").strip()
            if not raw_path:
                raise ValidationError(f"line {lineno}: empty path")
            image = Path(raw_path)
            if not image.is_absolute():
                image = base / image
            key = os.path.normpath(image)
            if key in seen:
                raise DuplicatePathError(f"line {lineno}: duplicate path {raw_path!r}")
            seen.add(key)
            split = (row["split"] or "").strip()
            if split not in SPLITS:
                raise BadSplitError(f"line {lineno}: split must be one of {SPLITS}, got {split!r}")
            label = _parse_label(row["label"] or "", lineno)
            if check_files and not image.is_file():
                raise MissingFileError(f"line {lineno}: no such file {image}")
            entries.append(ManifestEntry(image, label, split))
    if not entries:
        raise EmptyManifestError(f"{path}: manifest has no entries")
    return DatasetManifest(tuple(entries))


def write_manifest(path, entries, relative_to=None) -> None:
    path = Path(path)
    root = Path(relative_to) if relative_to is not None else path.parent
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label", "split"])
        for e in entries:
            p = Path(e.path)
            try:
                p = p.relative_to(root)
            except ValueError:
                pass
            writer.writerow([p.as_posix(), e.label, e.split])


def load_image(path):
    with open(path, "rb") as fh:
        return decode_image(fh.read())


class FeatureCache:
    """Extracts each (image, factor) pair once; later requests hit the cache."""

    def __init__(self, params: FeatureParams | None = None, threads: int | None = None):
        self.params = params or FeatureParams()
        self.threads = threads if threads is not None else worker_threads()
        self._cache: dict[tuple[str, int], FeatureVector] = {}

    def __len__(self) -> int:
        return len(self._cache)

    def _compute(self, path: str, factor: int) -> FeatureVector:
        return extract_feature_vector(load_image(path), factor, self.params)

    def get(self, path, factor: int) -> FeatureVector:
        key = (os.fspath(path), factor)
        if key not in self._cache:
            self._cache[key] = self._compute(*key)
        return self._cache[key]

    def _compute_many(self, path: str, factors) -> list[FeatureVector]:
        img = load_image(path)
        return [extract_feature_vector(img, f, self.params) for f in factors]

    def prefetch(self, paths, factors) -> None:
        """Fill the cache for every (path, factor) pair, decoding each image once."""
        factors = tuple(factors)
        todo = [os.fspath(p) for p in dict.fromkeys(paths)]
        todo = [p for p in todo if any((p, f) not in self._cache for f in factors)]
        if not todo:
            return
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                results = list(pool.map(lambda p: self._compute_many(p, factors), todo))
        else:
            results = [self._compute_many(p, factors) for p in todo]
        for p, vecs in zip(todo, results):
            for f, v in zip(factors, vecs):
                self._cache[(p, f)] = v

    def vectors(self, paths, factor: int) -> list[FeatureVector]:
        keys = [(os.fspath(p), factor) for p in paths]
        missing = list(dict.fromkeys(k for k in keys if k not in self._cache))
        if missing:
            if self.threads > 1 and len(missing) > 1:
                with ThreadPoolExecutor(self.threads) as pool:
                    results = list(pool.map(lambda k: self._compute(*k), missing))
            else:
                results = [self._compute(*k) for k in missing]
            self._cache.update(zip(missing, results))
        return [self._cache[k] for k in keys]

    def matrix(self, paths, factor: int) -> np.ndarray:
        vecs = self.vectors(paths, factor)
        if not vecs:
            return np.zeros((0, 0))
        return np.stack([v.values for v in vecs])
