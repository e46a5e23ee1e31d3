"""Per-image cold-start latency of the feature + forest pipeline.

Every sampled image is measured in isolation: the model file is read and
deserialized again (stage L, together with the image decode), features are
extracted at the requested factor (stage F) and the forest is evaluated
(stage C). Overall is timed with its own pair of clock reads around all three
stages, so it includes the dispatch overhead between them.
"""

from __future__ import annotations

import csv
import gc
import io
import os
import platform
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from oodgate.errors import EmptyManifestError, MissingModelError, ValidationError
from oodgate.features import FeatureParams, clear_caches, extract_feature_vector
from oodgate.forest import predict_probability
from oodgate.imaging import FACTORS
from oodgate.manifest import DatasetManifest, load_image, load_manifest
from oodgate.persistence import load_model

STAGES = ("L", "F", "C", "Overall")
CSV_COLUMNS = ["factor", "stage", "mean_ms", "median_ms", "p95_ms", "n"]
REFERENCE_NOTE = (
    "Reference hardware figures (not comparable to this host): "
    "x1 F 378 ms, Overall 396 ms; x1/8 F 13 ms, Overall 31 ms."
)


@dataclass(frozen=True)
class StageStats:
    mean_ms: float
    median_ms: float
    p95_ms: float

    @classmethod
    def from_samples(cls, ms: np.ndarray) -> StageStats:
        return cls(
            round(float(np.mean(ms)), 3),
            round(float(np.median(ms)), 3),
            round(float(np.percentile(ms, 95)), 3),
        )


@dataclass
class LatencyReport:
    factor: int
    stages: dict[str, StageStats]
    n_images: int
    single_thread: bool
    host: str = ""
    seed: int = 0
    with_replacement: bool = False
    per_image_ms: np.ndarray | None = field(default=None, repr=False)  # (n_images, 4) in STAGES order

    def stage_sum_gap(self) -> np.ndarray:
        """Per image ``|L + F + C - Overall| / Overall``."""
        t = self.per_image_ms
        return np.abs(t[:, :3].sum(axis=1) - t[:, 3]) / t[:, 3]


def host_descriptor() -> str:
    return (
        f"{platform.system()} {platform.release()}; {platform.machine()}; "
        f"{platform.processor() or 'unknown cpu'}; {os.cpu_count()} logical cpus; "
        f"python {platform.python_version()}; numpy {np.__version__}"
    )


def _entries(manifest):
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    entries = manifest.split("external") or list(manifest.entries)
    if not entries:
        raise EmptyManifestError("manifest has no images to benchmark")
    return entries


def run_latency_benchmark(
    manifest,
    model_path,
    factor: int = 1,
    n: int = 1000,
    seed: int = 0,
    params: FeatureParams | None = None,
) -> LatencyReport:
    """Time ``n`` randomly drawn images, one at a time, on a single thread.

    Images come from the manifest's external split (or every entry when the
    split is empty). With fewer than ``n`` candidates the draw is made with
    replacement and ``with_replacement`` is set on the report.
    """
    if factor not in FACTORS:
        raise ValidationError(f"factor must be one of {FACTORS}, got {factor}")
    if n < 1:
        raise ValidationError("n must be positive")
    model_path = Path(model_path)
    if not model_path.is_file():
        raise MissingModelError(f"no model file at {model_path}")
    entries = _entries(manifest)
    rng = np.random.default_rng(seed)
    replace = len(entries) < n
    picks = rng.choice(len(entries), size=n, replace=replace)
    paths = [entries[i].path for i in picks]
    params = params or FeatureParams()

    times = np.empty((n, 4), dtype=np.int64)
    clock = time.perf_counter_ns
    with threadpool_limits(limits=1):
        single = threading.active_count() == 1
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            for i, path in enumerate(paths):
                clear_caches()
                gc.collect()
                start = clock()
                t0 = clock()
                model = load_model(model_path)
                img = load_image(path)
                t1 = clock()
                fv = extract_feature_vector(img, factor, params)
                t2 = clock()
                predict_probability(model, fv)
                t3 = clock()
                end = clock()
                times[i] = (t1 - t0, t2 - t1, t3 - t2, end - start)
        finally:
            if gc_was_enabled:
                gc.enable()
        single = single and threading.active_count() == 1

    ms = times / 1e6
    stages = {name: StageStats.from_samples(ms[:, k]) for k, name in enumerate(STAGES)}
    return LatencyReport(factor, stages, n, single, host_descriptor(), seed, replace, ms)


def factor_label(factor: int) -> str:
    return "1" if factor == 1 else f"1/{factor}"


def _ordered(reports) -> list[LatencyReport]:
    if isinstance(reports, LatencyReport):
        reports = [reports]
    return sorted(reports, key=lambda r: r.factor)


def write_latency_report(reports, fmt: str = "text") -> str:
    """Serialize one or more reports as a text table or CSV, rows ordered by factor."""
    reports = _ordered(reports)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            for stage in STAGES:
                s = r.stages[stage]
                writer.writerow([r.factor, stage, f"{s.mean_ms:.3f}", f"{s.median_ms:.3f}", f"{s.p95_ms:.3f}", r.n_images])
        return buf.getvalue()
    if fmt != "text":
        raise ValidationError(f"format must be 'text' or 'csv', got {fmt!r}")
    header = f"{'factor':>6} | {'L':>6} | {'F':>6} | {'C':>6} | {'Overall':>7}"
    lines = [header, "-" * len(header)]
    for r in reports:
        m = [round(r.stages[s].mean_ms) for s in STAGES]
        lines.append(f"{factor_label(r.factor):>6} | {m[0]:>6d} | {m[1]:>6d} | {m[2]:>6d} | {m[3]:>7d}")
    lines.append("")
    lines.append("Mean milliseconds per image, batch size 1, model reloaded per image.")
    for r in reports:
        flags = []
        if not r.single_thread:
            flags.append("NOT single-threaded")
        if r.with_replacement:
            flags.append("sampled with replacement")
        extra = f" ({', '.join(flags)})" if flags else ""
        lines.append(f"factor {factor_label(r.factor)}: n={r.n_images}, seed={r.seed}{extra}")
    if reports:
        lines.append(f"host: {reports[0].host}")
    lines.append(REFERENCE_NOTE)
    return "\n".join(lines) + "\n"


def read_latency_csv(text: str) -> dict[int, dict[str, tuple[StageStats, int]]]:
    """Parse :func:`write_latency_report` CSV output into ``{factor: {stage: (stats, n)}}``."""
    out: dict[int, dict[str, tuple[StageStats, int]]] = {}
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_COLUMNS:
        raise ValidationError(f"latency CSV header must be {','.join(CSV_COLUMNS)}")
    for row in reader:
        stats = StageStats(float(row["mean_ms"]), float(row["median_ms"]), float(row["p95_ms"]))
        out.setdefault(int(row["factor"]), {})[row["stage"]] = (stats, int(row["n"]))
    return out
