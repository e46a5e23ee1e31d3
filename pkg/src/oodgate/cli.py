"""``oodgate`` command line.

Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from oodgate.config import PipelineConfig, load_config
from oodgate.errors import ValidationError

log = logging.getLogger("oodgate")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_INTERNAL = 4


def _params(cfg: PipelineConfig):
    from oodgate.features import FeatureParams

    return FeatureParams(cfg.dark_threshold, cfg.black_threshold)


def _hyperparameters(cfg: PipelineConfig):
    from oodgate.forest import Hyperparameters

    return Hyperparameters(class_weight=cfg.class_weight)


def _manifest_path(args, cfg: PipelineConfig) -> str:
    path = args.manifest or cfg.manifest
    if not path:
        raise ValidationError("--manifest is required (or set 'manifest' in the config file)")
    return path


def _write(path, text: str) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    path.write_text(text)


def cmd_gen_corpus(args, cfg):
    from oodgate.corpus import generate_synthetic_corpus

    m = generate_synthetic_corpus(args.out, args.n, seed=cfg.seed, internal_fraction=args.internal_fraction, image_format=args.format)
    counts = m.counts()
    print(f"wrote {len(m)} images and manifest.csv to {args.out}")
    for key in sorted(counts):
        print(f"  {key[0]} label={key[1]}: {counts[key]}")


def cmd_extract(args, cfg):
    from oodgate.features import write_feature_csv
    from oodgate.manifest import FeatureCache, load_manifest

    manifest = load_manifest(_manifest_path(args, cfg), check_files=True)
    entries = list(manifest.entries) if args.split == "all" else manifest.split(args.split)
    cache = FeatureCache(_params(cfg))
    vectors = cache.vectors([e.path for e in entries], cfg.factor)
    write_feature_csv(args.out, [(e.path.as_posix(), e.label, v) for e, v in zip(entries, vectors)])
    print(f"wrote {len(entries)} feature rows to {args.out}")


def cmd_train(args, cfg):
    import numpy as np

    from oodgate.forest import train
    from oodgate.manifest import FeatureCache, load_manifest
    from oodgate.persistence import save_model

    manifest = load_manifest(_manifest_path(args, cfg), check_files=True)
    entries = list(manifest.entries) if args.split == "all" else manifest.split(args.split)
    X = FeatureCache(_params(cfg)).matrix([e.path for e in entries], cfg.factor)
    y = np.array([e.label for e in entries])
    model = train(X, y, seed=cfg.seed, hyperparameters=_hyperparameters(cfg))
    out = args.out or cfg.model
    if not out:
        raise ValidationError("--out is required (or set 'model' in the config file)")
    save_model(model, out)
    print(f"trained {len(model.trees)} trees on {len(y)} images; model written to {out}")


def cmd_evaluate(args, cfg):
    from oodgate.evaluation import reports_to_csv, run_external_validation, run_internal_validation
    from oodgate.manifest import FeatureCache, load_manifest
    from oodgate.persistence import save_model

    manifest = load_manifest(_manifest_path(args, cfg), check_files=True)
    cache = FeatureCache(_params(cfg))
    internal = run_internal_validation(manifest, cfg.factor, cfg.seed, cache, _hyperparameters(cfg))
    reports = [internal.report]
    model_dir = Path(args.model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    for i, m in enumerate(internal.models):
        save_model(m, model_dir / f"fold_{i}.bin")
    if manifest.split("external"):
        reports.append(run_external_validation(manifest, internal.models, cfg.factor, cache))
    out = Path(args.out or Path(cfg.output_dir) / "report.csv")
    _write(out, reports_to_csv(reports))
    text = "\n".join(r.to_text() for r in reports)
    _write(out.with_suffix(".txt"), text)
    sys.stdout.write(text)


def cmd_predict(args, cfg):
    from oodgate.attribution import attribution_csv, tree_shap
    from oodgate.evaluation import THRESHOLD
    from oodgate.features import extract_feature_vector
    from oodgate.forest import predict_probability
    from oodgate.manifest import load_image
    from oodgate.persistence import load_model

    model_path = args.model or cfg.model
    if not model_path:
        raise ValidationError("--model is required (or set 'model' in the config file)")
    model = load_model(model_path)
    fv = extract_feature_vector(load_image(args.image), cfg.factor, _params(cfg))
    p = predict_probability(model, fv)
    print(f"p_fundus: {p!r}")
    print(f"decision: {'fundus' if p >= THRESHOLD else 'non-fundus'} (threshold {THRESHOLD})")
    if args.explain:
        csv_text = attribution_csv(tree_shap(model, fv))
        if args.explain_out:
            _write(args.explain_out, csv_text)
            print(f"attribution written to {args.explain_out}")
        else:
            sys.stdout.write(csv_text)


def cmd_benchmark(args, cfg):
    from oodgate.benchmark import run_latency_benchmark, write_latency_report

    model_path = args.model or cfg.model
    if not model_path:
        raise ValidationError("--model is required (or set 'model' in the config file)")
    factors = args.factor or [cfg.factor]
    reports = [
        run_latency_benchmark(_manifest_path(args, cfg), model_path, f, n=args.n, seed=cfg.seed, params=_params(cfg))
        for f in factors
    ]
    if args.out:
        _write(args.out, write_latency_report(reports, "csv"))
    sys.stdout.write(write_latency_report(reports, "text"))


def _factor(raw: str) -> int:
    from oodgate.imaging import FACTORS

    try:
        f = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"factor must be an integer, got {raw!r}") from None
    if f not in FACTORS:
        raise argparse.ArgumentTypeError(f"factor must be one of {FACTORS}")
    return f


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oodgate", description="Fundus vs non-fundus screening with hand-crafted features.")
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, factor=True, seed=True, manifest=True):
        if manifest:
            p.add_argument("--manifest")
        if factor:
            p.add_argument("--factor", type=_factor)
        if seed:
            p.add_argument("--seed", type=int)

    p = sub.add_parser("gen-corpus", help="write the seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True, help="images per class")
    p.add_argument("--internal-fraction", type=float, default=0.7)
    p.add_argument("--format", choices=("png", "pnm"), default="png")
    common(p, factor=False, manifest=False)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("extract", help="write the 39-feature CSV for a manifest")
    common(p, seed=False)
    p.add_argument("--split", choices=("all", "internal", "external"), default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train one forest and save it")
    common(p)
    p.add_argument("--split", choices=("all", "internal", "external"), default="internal")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="5-fold internal CV plus external consensus")
    common(p)
    p.add_argument("--model-dir", required=True, help="directory receiving the fold models")
    p.add_argument("--out", help="report CSV path (a .txt twin is written alongside)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="score one image")
    common(p, seed=False, manifest=False)
    p.add_argument("--model")
    p.add_argument("--image", required=True)
    p.add_argument("--explain", action="store_true", help="also emit per-feature attributions")
    p.add_argument("--explain-out", help="write the attribution CSV here instead of stdout")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="per-image cold-start latency, single thread")
    p.add_argument("--manifest")
    p.add_argument("--model")
    p.add_argument("--factor", type=_factor, nargs="+")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="latency CSV path")
    p.set_defaults(func=cmd_benchmark)
    return parser


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    factor = getattr(args, "factor", None)
    if isinstance(factor, list):
        factor = None
    return cfg.with_overrides(factor=factor, seed=getattr(args, "seed", None))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args, _config(args))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
