"""Command-line interface. Exit codes: 0 success, 2 configuration error, 3 runtime failure."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .attribution import load_map, overlay, save_map, save_png
from .baselines import GRADCAM, OCCLUSION, gradcam, occlusion_map
from .checkpoint import ChecksumError, checkpoint_hash, load_classifier, load_pair, save_classifier, save_pair
from .classifier import build_classifier, train_classifier
from .config import ConfigError, RunConfig
from .data import InvalidInputError, load_dataset, load_sample, manifest_hash, sample_from_raster, stack_images
from .evalio import evaluate_maps, format_table, parse_csv, report_table
from .ganx import pair_from_config, pretrain_cyclegan, train_cyclegan
from .pipeline import (PhaseError, RunState, compute_maps, deterministic_torch, evaluation_samples, run_pipeline,
                       run_synth, write_maps)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

logger = logging.getLogger("naturex")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    return cfg.with_overrides(seed=getattr(args, "seed", None), out=getattr(args, "out", None))


def cmd_synth_data(args) -> int:
    cfg = _config(args)
    state = RunState(cfg, Path(cfg.out))
    split = run_synth(state)
    print(f"wrote {sum(len(p) for _, p in split.items())} samples to {state.out / 'data'} "
          f"(manifest sha256 {manifest_hash(state.out / 'data')})")
    return EXIT_OK


def cmd_train_classifier(args) -> int:
    cfg = _config(args)
    split = load_dataset(args.data)
    with deterministic_torch():
        model = build_classifier(cfg.classifier)
        report = train_classifier(model, split, cfg.classifier)
    model.freeze()
    save_classifier(model, cfg.classifier, args.out, seed=cfg.seed, data_hash=manifest_hash(args.data),
                    report=report.to_dict())
    val = report.val_accuracy[-1] if report.val_accuracy else float("nan")
    print(f"classifier saved to {args.out}: validation accuracy {val:.4f}, test accuracy {report.test_accuracy}")
    return EXIT_OK


def cmd_train_gan(args) -> int:
    cfg = _config(args)
    gcfg = cfg.gan
    split = load_dataset(args.data)
    classifier, _ = load_classifier(args.classifier)
    X = stack_images(split.train)
    traces = {}
    with deterministic_torch():
        pair = pair_from_config(gcfg, X.shape[1])
        if not args.skip_pretrain:
            pair, pre = pretrain_cyclegan(pair, X, gcfg, val_images=stack_images(split.validation))
            traces["pretrain"] = {"epochs": pre.epoch_means(), "reconstruction": pre.reconstruction}
            print(f"pretraining reconstruction error: {pre.reconstruction}")
        pair, main = train_cyclegan(pair, classifier, X, gcfg, pretrained=not args.skip_pretrain)
    traces["main"] = {"epochs": main.epoch_means(), "classifier_checksum": main.classifier_checksum}
    save_pair(pair, gcfg, args.out, seed=cfg.seed, classifier_hash=checkpoint_hash(args.classifier), traces=traces)
    print(f"generator pair saved to {args.out}")
    return EXIT_OK


def cmd_attribute(args) -> int:
    cfg = _config(args)
    split = load_dataset(args.data)
    classifier, _ = load_classifier(args.classifier)
    pair, _, _ = load_pair(args.gan)
    samples = evaluation_samples(split, cfg.evaluation.max_images)
    if not samples:
        raise InvalidInputError("the test split has no natural-class samples to attribute")
    with deterministic_torch():
        maps = compute_maps(classifier, pair, samples, cfg)
    out = Path(args.out)
    write_maps(maps, samples, out, cfg.evaluation.percentile, cfg.attribution.save_overlays, cfg.attribution.mode)
    print(f"wrote {len(samples)} maps per method ({', '.join(maps)}) to {out / 'maps'}")
    return EXIT_OK


def _load_image(path):
    path = Path(path)
    if path.suffix == ".npz":
        return load_sample(path)
    return sample_from_raster(path)


def cmd_baseline(args) -> int:
    cfg = _config(args)
    classifier, _ = load_classifier(args.classifier)
    sample = _load_image(args.image)
    if args.method == OCCLUSION:
        amap = occlusion_map(classifier, sample.image, cfg.occlusion)
    else:
        amap = gradcam(classifier, sample.image)
    out = Path(args.out)
    path = save_map(amap, out / f"{sample.sample_id}_{args.method}", cfg.evaluation.percentile,
                    sample_id=sample.sample_id, method=args.method)
    save_png(overlay(sample.image, amap), out / f"{sample.sample_id}_{args.method}.png")
    print(f"wrote {path}")
    return EXIT_OK


def _method_dirs(maps_dir: Path) -> list[Path]:
    if any(maps_dir.glob("*.tif")):
        return [maps_dir]
    nested = maps_dir / "maps"
    root = nested if nested.is_dir() else maps_dir
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and any(p.glob("*.tif")))
    if not dirs:
        raise InvalidInputError(f"no attribution maps found under {maps_dir}")
    return dirs


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    split = load_dataset(args.data)
    by_id = {s.sample_id: s for _, part in split.items() for s in part}
    results = []
    for method_dir in _method_dirs(Path(args.maps)):
        maps, samples = [], []
        for tif in sorted(method_dir.glob("*.tif")):
            amap, meta = load_map(tif)
            sid = meta.get("sample_id", tif.stem)
            if sid not in by_id:
                raise InvalidInputError(f"map {tif} refers to unknown sample {sid!r}")
            maps.append(amap)
            samples.append(by_id[sid])
        results.append(evaluate_maps(method_dir.name, maps, samples, cfg.evaluation.classes,
                                     cfg.evaluation.percentile))
    text, csv_text = report_table(results, published_row=True)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(csv_text)
    print(text, end="")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise FileNotFoundError(f"report file not found: {path}")
    print(format_table(parse_csv(path.read_text()), published_row=not args.no_published_row), end="")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    resume = args.resume
    if resume == "auto":
        resume = Path(cfg.out) / "classifier"
        if not (resume / "manifest.json").exists():
            raise ConfigError(f"--resume given but no classifier checkpoint at {resume}")
    state = run_pipeline(cfg, resume_from=resume, skip_pretrain=args.skip_pretrain)
    print((state.out / "report.txt").read_text(), end="")
    print(f"run directory: {state.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="naturex", description="Naturalness pattern attribution pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, out_required=False, out_help="output location"):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="global seed (overrides the config)")
        p.add_argument("--out", required=out_required, help=out_help)
        p.set_defaults(func=func)
        return p

    add("synth-data", cmd_synth_data, "generate the synthetic dataset", out_help="run directory")
    p = add("train-classifier", cmd_train_classifier, "train the naturalness classifier", True,
            "checkpoint directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p = add("train-gan", cmd_train_gan, "train the maximizer/minimizer generator pair", True, "checkpoint directory")
    p.add_argument("--classifier", required=True, help="classifier checkpoint directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--skip-pretrain", action="store_true", help="skip the reconstruction pre-training")
    p = add("attribute", cmd_attribute, "write attribution maps for the natural test images", True,
            "output directory")
    p.add_argument("--classifier", required=True, help="classifier checkpoint directory")
    p.add_argument("--gan", required=True, help="generator pair checkpoint directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p = add("baseline", cmd_baseline, "occlusion or GradCAM map for one image", True, "output directory")
    p.add_argument("--method", choices=(OCCLUSION, GRADCAM), required=True)
    p.add_argument("--classifier", required=True, help="classifier checkpoint directory")
    p.add_argument("--image", required=True, help="raster (.tif/.npy) or dataset sample (.npz)")
    p = add("evaluate", cmd_evaluate, "IoU of saved maps against reference masks", True, "report CSV path")
    p.add_argument("--maps", required=True, help="maps directory (one subdirectory per method)")
    p.add_argument("--data", required=True, help="dataset directory")
    p = sub.add_parser("report", help="print a report CSV as a table")
    p.add_argument("--in", dest="input", required=True, help="report CSV")
    p.add_argument("--no-published-row", action="store_true", help="omit the published reference row")
    p.set_defaults(func=cmd_report)
    p = add("pipeline", cmd_pipeline, "run every phase end to end", out_help="run directory")
    p.add_argument("--resume", nargs="?", const="auto", default=None,
                   help="reuse a classifier checkpoint (default: <out>/classifier)")
    p.add_argument("--skip-pretrain", action="store_true", help="skip the reconstruction pre-training")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidInputError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ChecksumError, PhaseError, RuntimeError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
