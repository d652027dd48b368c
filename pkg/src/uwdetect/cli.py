"""``uwdetect`` command line: enhance, augment, anchors, eval, calibrate,
degrade.

Exit codes: 0 success, 1 runtime failure (including any per-file error),
2 configuration or input-schema error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .anchors import anchors_from_boxes, format_anchor_file
from .augment import AugmentConfig, GeometricConfig, PhotometricConfig, augment_pipeline
from .config import ConfigError, config_hash, load_config, require
from .dataset_io import LabelParseError, Sample, load_dataset_dir, load_detections, load_samples, \
    parse_yolo_labels, write_samples
from .degrade import DefocusParams, JitterParams, TemplateMatchDetector, accuracy_grid, null_detector, \
    oracle_detector, synthetic_shape_scene
from .enhance import EnhanceParams, enhance_pipeline, mean_luma
from .evaluation import EvaluationError, build_report, calibrate_threshold, report_json
from .image import read_png, write_png

COMMANDS = ("enhance", "augment", "anchors", "eval", "calibrate", "degrade")


def _err(msg: str) -> None:
    print(f"uwdetect: {msg}", file=sys.stderr)


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_enhance(config: dict) -> int:
    opts = require(config, "enhance")
    try:
        params = EnhanceParams(opts["target_luma"], opts["dark_threshold"], opts["bright_threshold"],
                               opts["sharpen_strength"])
    except ValueError as exc:
        raise ConfigError(f"[enhance] {exc}") from None
    src, dst = Path(opts["input_dir"]), Path(opts["output_dir"])
    files = sorted(src.glob("*.png"))

    def work(path):
        try:
            image = read_png(path)
        except Exception as exc:
            return path, None, None, str(exc)
        out = enhance_pipeline(image, params)
        write_png(out, dst / path.name)
        return path, mean_luma(image), mean_luma(out), None

    jobs = max(config["run"]["jobs"], 1)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(work, files))
    failed = 0
    for path, before, after, error in results:
        if error:
            failed += 1
            _err(f"{path.name}: {error}")
        else:
            print(f"{path.name}: mean luma {before:.2f} -> {after:.2f}")
    print(f"enhanced {len(files) - failed} of {len(files)} image(s)")
    return 1 if failed else 0


def cmd_augment(config: dict) -> int:
    opts = require(config, "augment")
    try:
        aug = AugmentConfig(
            photometric=PhotometricConfig(opts["hue_delta"], opts["saturation_range"], opts["value_range"],
                                          opts["contrast_range"]),
            geometric=GeometricConfig(opts["max_rotate_deg"], opts["max_translate_frac"], opts["scale_range"],
                                      opts["flip_prob"], opts["max_perspective"], opts["min_area_frac"]),
            mixup_lambda_alpha=opts["mixup_lambda_alpha"],
            mosaic_center_jitter=opts["mosaic_center_jitter"],
            p_mosaic=opts["p_mosaic"],
            p_mixup=opts["p_mixup"],
            seed=config["run"]["seed"],
        )
    except ValueError as exc:
        raise ConfigError(f"[augment] {exc}") from None
    samples, class_names = load_samples(opts["dataset"], clip=opts["clip"])
    out = augment_pipeline(samples, aug, jobs=config["run"]["jobs"])
    write_samples(opts["output_dir"], out, class_names, {"config_hash": config_hash(config, "augment")})
    n_boxes = sum(len(s.boxes) for s in out)
    print(f"wrote {len(out)} image(s) with {n_boxes} box(es) to {opts['output_dir']}")
    return 0


def cmd_anchors(config: dict) -> int:
    opts = require(config, "anchors")
    manifest = load_dataset_dir(opts["dataset"], clip=opts["clip"])
    boxes = [b for img in manifest.images for b in img.boxes]
    try:
        anchor_set = anchors_from_boxes(boxes, k=opts["k"], seed=config["run"]["seed"],
                                        max_iter=opts["max_iter"], input_size=opts["input_size"],
                                        key=opts["sort_key"])
    except ValueError as exc:
        _err(str(exc))
        return 1
    text = format_anchor_file(anchor_set)
    _write_text(opts["output"], text)
    sys.stdout.write(text)
    return 0


def _eval_inputs(opts: dict):
    manifest = load_dataset_dir(opts["dataset"], clip=opts["clip"])
    dets = load_detections(Path(opts["detections"]).read_text())
    return manifest, dets


def cmd_eval(config: dict) -> int:
    opts = require(config, "eval")
    manifest, dets = _eval_inputs(opts)
    report = build_report(dets, manifest.ground_truth(), manifest.class_names, opts["beta"],
                          opts["iou_threshold"], opts["grid_step"], config_hash(config, "eval"))
    _write_text(opts["output"], report_json(report))
    print(f"mAP0.5 {report['map50']:.4f}  mAP0.5:0.95 {report['map5095']:.4f}  "
          f"best F{opts['beta']:g} {report['best']['fbeta']:.4f} at {report['best']['threshold']:.4f}")
    return 0


def cmd_calibrate(config: dict) -> int:
    opts = require(config, "calibrate")
    manifest, dets = _eval_inputs(opts)
    result = calibrate_threshold(dets, manifest.ground_truth(), opts["beta"], opts["iou_threshold"],
                                 opts["grid_step"])
    print(f"best threshold {result.best_threshold!r}  F{opts['beta']:g} {result.best_fbeta!r}")
    if opts["output"]:
        body = {
            "schema_version": 1,
            "config_hash": config_hash(config, "calibrate"),
            "beta": opts["beta"],
            "iou_threshold": opts["iou_threshold"],
            "best": {"threshold": result.best_threshold, "fbeta": result.best_fbeta,
                     "precision": result.best_precision, "recall": result.best_recall},
            "sweep": [{k: row[k] for k in ("threshold", "precision", "recall", "fbeta")} for row in result.sweep],
        }
        _write_text(opts["output"], json.dumps(body, indent=1, sort_keys=True) + "\n")
    return 0


def _load_scene(opts: dict, seed: int) -> Sample:
    if opts["scene"] == "synthetic":
        return synthetic_shape_scene(size=opts["scene_size"], seed=seed)
    path = Path(opts["scene"])
    if not path.is_file():
        raise ConfigError(f"[degrade] scene: no such PNG file: {path}")
    label_path = path.with_suffix(".txt")
    if not label_path.is_file():
        raise ConfigError(f"[degrade] scene: missing label file {label_path}")
    image = read_png(path)
    boxes = parse_yolo_labels(label_path.read_text(), path.stem, image.width, image.height)
    return Sample(path.stem, image, tuple(boxes))


def cmd_degrade(config: dict) -> int:
    opts = require(config, "degrade")
    seed = config["run"]["seed"]
    scene = _load_scene(opts, seed)
    if opts["detector"] == "template":
        detector = TemplateMatchDetector.from_scene(scene, threshold=opts["detector_threshold"])
    elif opts["detector"] == "oracle":
        detector = oracle_detector(scene)
    else:
        detector = null_detector
    try:
        defocus = DefocusParams(opts["focus_distance"], opts["blur_gain"])
        jitter = JitterParams(noise_sigma=opts["noise_sigma"])
    except ValueError as exc:
        raise ConfigError(f"[degrade] {exc}") from None
    grid = accuracy_grid(scene, detector, opts["betas"], opts["distances"], opts["frames_per_cell"],
                         opts["iou_threshold"], seed, defocus, opts["airlight"], jitter,
                         jobs=config["run"]["jobs"])
    text = grid.to_csv()
    _write_text(opts["output"], text)
    sys.stdout.write(text)
    return 0


HANDLERS = {
    "enhance": cmd_enhance,
    "augment": cmd_augment,
    "anchors": cmd_anchors,
    "eval": cmd_eval,
    "calibrate": cmd_calibrate,
    "degrade": cmd_degrade,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uwdetect", description="Underwater detection tooling: enhancement, augmentation, anchors, evaluation, degradation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="overrides [run] seed")
        p.add_argument("--jobs", type=int, help="worker threads, overrides [run] jobs")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.jobs is not None:
        overrides.append(f"run.jobs={args.jobs}")
    try:
        config = load_config(args.config, overrides)
        if config["run"]["jobs"] < 1:
            raise ConfigError("[run] jobs must be >= 1")
        return HANDLERS[args.command](config)
    except (ConfigError, LabelParseError) as exc:
        _err(str(exc))
        return 2
    except (EvaluationError, ValueError, OSError) as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
