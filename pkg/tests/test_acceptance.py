"""Acceptance checks, one test per criterion.

Each check records a PASS/FAIL line; the lines are printed in the pytest
terminal summary, and running this file directly prints them as well::

    python tests/test_acceptance.py
"""

import json
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import (  # noqa: E402
    ANCHOR_TABLE,
    PLANTED,
    dark_textured,
    edge_image,
    five_three_fixture,
    planted_boxes,
    random_samples,
    tree_bytes,
    write_config,
)
from oracles import brute_ap, brute_calibrate, brute_pr, raster_iou_giou  # noqa: E402
from uwdetect.anchors import assign_to_levels, iou_wh, kmeans_anchors  # noqa: E402
from uwdetect.augment import AugmentConfig, augment_pipeline, mixup, mosaic  # noqa: E402
from uwdetect.boxgeom import giou, iou  # noqa: E402
from uwdetect.cli import main as cli_main  # noqa: E402
from uwdetect.dataset_io import (  # noqa: E402
    BoundingBox,
    Detection,
    Sample,
    box_problem,
    dump_detections,
    load_dataset_dir,
    load_detections,
    write_samples,
)
from uwdetect.degrade import (  # noqa: E402
    DefocusParams,
    TemplateMatchDetector,
    TurbidityParams,
    accuracy_grid,
    apply_turbidity,
    null_detector,
    oracle_detector,
    synthetic_shape_scene,
)
from uwdetect.enhance import auto_brightness, laplace_sharpen, mean_luma  # noqa: E402
from uwdetect.evaluation import average_precision, calibrate_threshold, fbeta, map_scores, pr_curve  # noqa: E402
from uwdetect.headmath import ecsam_forward, pyramid_map_size, self_attention_forward, spp_forward  # noqa: E402
from uwdetect.image import ImageBuffer, write_png  # noqa: E402

FIXTURE = Path(__file__).parent / "fixtures" / "calibration"
RESULTS = {}


def record(number, title, failures, detail=""):
    """Store the verdict for one criterion and fail the test if needed."""
    ok = not failures
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {title}"
    if detail:
        line += f" ({detail})"
    if failures:
        line += " -- " + "; ".join(failures)
    RESULTS[number] = line
    print(line)
    assert ok, line


def test_criterion_01_giou_oracle():
    rng = np.random.default_rng(20240601)
    failures = []
    worst = 0.0
    start = time.perf_counter()
    for _ in range(1000):
        pair = []
        for _ in range(2):
            w, h = rng.uniform(0.15, 0.7, 2)
            x, y = rng.uniform(0, 1 - w), rng.uniform(0, 1 - h)
            pair.append((x, y, x + w, y + h))
        g, v = giou(*pair), iou(*pair)
        _, ref = raster_iou_giou(*pair)
        worst = max(worst, abs(g - ref))
        if not (g <= v and -1 < g <= 1):
            failures.append(f"bounds violated for {pair}")
    elapsed = time.perf_counter() - start
    if worst >= 1e-2:
        failures.append(f"max |giou - oracle| = {worst:.4g}")
    if elapsed >= 10:
        failures.append(f"runtime {elapsed:.1f} s")
    record(1, "GIoU agrees with raster oracle on 1000 pairs", failures,
           f"max err {worst:.2e}, {elapsed:.1f} s")


def test_criterion_02_fbeta():
    failures = []
    grid = np.linspace(0, 1, 100)
    worst = 0.0
    for p in grid:
        for r in grid:
            harmonic = 2 * p * r / (p + r) if p + r else 0.0
            worst = max(worst, abs(fbeta(p, r, 1) - harmonic))
            if r > p and fbeta(p, r, 2) < fbeta(p, r, 1):
                failures.append(f"F2 < F1 at P={p}, R={r}")
    if worst > 1e-12:
        failures.append(f"F1 differs from harmonic mean by {worst:.3g}")
    value = fbeta(0.5, 1.0, 2)
    if abs(value - 0.8333) > 1e-4:
        failures.append(f"fbeta(0.5, 1, 2) = {value}")
    record(2, "F-beta formula, harmonic-mean case and recall weighting", failures[:3],
           f"fbeta(0.5,1,2)={value:.6f}")


def test_criterion_03_calibration_oracle():
    gts = load_dataset_dir(FIXTURE).ground_truth()
    dets = load_detections((FIXTURE / "detections.json").read_text())
    expected = json.loads((FIXTURE / "expected.json").read_text())
    got = calibrate_threshold(dets, gts, b=2.0)
    brute = brute_calibrate(dets, gts, b=2.0)
    failures = []
    if len(dets) != 200:
        failures.append(f"fixture has {len(dets)} detections")
    if (got.best_threshold, got.best_fbeta) != brute:
        failures.append(f"sweep {got.best_threshold, got.best_fbeta} != brute force {brute}")
    if brute != (expected["threshold"], expected["fbeta"]):
        failures.append("brute force disagrees with the committed answer")
    record(3, "calibration equals exhaustive cut search on 200-detection fixture", failures,
           f"threshold {got.best_threshold}, F2 {got.best_fbeta:.6f}")


def test_criterion_04_map():
    failures = []
    dets, gts = five_three_fixture()
    ap = average_precision(pr_curve(dets, gts, 0.5, 0))
    ref = brute_ap(*brute_pr(dets, gts, 0.5, 0))
    if ap != ref:
        failures.append(f"AP {ap!r} != oracle {ref!r}")
    perfect = map_scores([Detection(b, 1.0, "im") for b in gts["im"]], gts)
    if not perfect.map50 == perfect.map5095 == 1.0:
        failures.append(f"perfect detections give {perfect.map50}, {perfect.map5095}")
    record(4, "101-point AP matches oracle; perfect detections give mAP 1.0", failures, f"AP {ap:.6f}")


def test_criterion_05_anchors():
    failures = []
    centroids, trace = kmeans_anchors(planted_boxes(), 3, seed=0, return_trace=True)
    ious = iou_wh(centroids, PLANTED).diagonal()
    if np.any(ious < 0.95):
        failures.append(f"centroid IoUs {np.round(ious, 4).tolist()}")
    if any(b > a for a, b in zip(trace, trace[1:])):
        failures.append("cost trace increased")
    flat = [a for level in ANCHOR_TABLE.values() for a in level]
    shuffled = [flat[i] for i in np.random.default_rng(8).permutation(len(flat))]
    levels = {name: [tuple(int(v) for v in a) for a in anchors]
              for name, anchors in assign_to_levels(shuffled).levels}
    if levels != ANCHOR_TABLE:
        failures.append(f"regrouped levels {levels}")
    record(5, "anchor recovery, monotone cost, anchor table regrouping", failures,
           f"min IoU {ious.min():.4f}, {len(trace)} iterations")


def test_criterion_06_pyramid():
    got = {s: pyramid_map_size(640, s) for s in (4, 8, 16, 32)}
    want = {4: (160, 160), 8: (80, 80), 16: (40, 40), 32: (20, 20)}
    record(6, "pyramid map sizes at 640 input", [] if got == want else [f"got {got}"],
           ", ".join(f"/{s}->{h}x{w}" for s, (h, w) in got.items()))


def test_criterion_07_head_math():
    rng = np.random.default_rng(77)
    failures = []
    start = time.perf_counter()
    for i in range(500):
        c, h, w = rng.integers(1, 17), rng.integers(1, 21), rng.integers(1, 21)
        x = rng.normal(0, rng.uniform(0.1, 5), (c, h, w))
        out = spp_forward(x)
        if not all(np.all(out[k * c:(k + 1) * c] >= x) for k in (1, 2, 3)):
            failures.append(f"SPP dominance, tensor {i}")
        if not np.all(np.abs(ecsam_forward(x)) <= np.abs(x)):
            failures.append(f"ECSAM magnitude, tensor {i}")
        n, d = rng.integers(1, 17), rng.integers(1, 9)
        tokens = rng.normal(size=(n, d))
        wq, wk, wv = rng.normal(size=(3, d, d))
        y, attn = self_attention_forward(tokens, wq, wk, wv, return_weights=True)
        if np.abs(attn.sum(axis=1) - 1).max() > 1e-6:
            failures.append(f"attention rows, tensor {i}")
        v = tokens @ wv
        tol = 1e-9 * (1 + np.abs(v).max())
        if np.any(y < v.min(axis=0) - tol) or np.any(y > v.max(axis=0) + tol):
            failures.append(f"attention envelope, tensor {i}")
    elapsed = time.perf_counter() - start
    if elapsed >= 30:
        failures.append(f"runtime {elapsed:.1f} s")
    record(7, "SPP, ECSAM and self-attention invariants on 500 tensors", failures[:3], f"{elapsed:.1f} s")


def test_criterion_08_enhancement():
    failures = []
    dark = dark_textured()
    before, after = mean_luma(dark), mean_luma(auto_brightness(dark))
    if abs(before - 40) > 0.5:
        failures.append(f"fixture mean luma {before:.2f}")
    if abs(after - 128) > 2:
        failures.append(f"corrected mean luma {after:.2f}")
    rng = np.random.default_rng(8)
    img = ImageBuffer(rng.integers(0, 256, (17, 23, 3), dtype=np.uint8))
    if laplace_sharpen(img, 0.0) != img:
        failures.append("zero-strength sharpening changed pixels")
    for value in (0, 37, 128, 255):
        for lam in (0.3, 1.0, 4.0):
            uni = ImageBuffer.uniform(9, 7, value)
            if laplace_sharpen(uni, lam) != uni:
                failures.append(f"uniform {value} moved under strength {lam}")
    for lam in (0.1, 0.5, 2.0):
        edge = edge_image(low=40, high=200)
        if laplace_sharpen(edge, lam).data.astype(float).var() < edge.data.astype(float).var():
            failures.append(f"edge variance dropped at strength {lam}")
    record(8, "brightness target, sharpening identities and edge variance", failures,
           f"mean luma {before:.2f} -> {after:.2f}")


def test_criterion_09_augmentation():
    failures = []
    samples = random_samples(16, seed=9)
    cfg = AugmentConfig(p_mosaic=0.5, p_mixup=0.5, seed=123)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        trees = []
        for name, jobs in (("a", 1), ("b", 1), ("c", 8)):
            write_samples(tmp / name, augment_pipeline(samples, cfg, jobs=jobs), ["x", "y", "z"])
            trees.append(tree_bytes(tmp / name))
    if not trees[0] == trees[1] == trees[2]:
        failures.append("outputs differ between runs or worker counts")

    n_boxes = seed = 0
    while n_boxes < 10_000:
        batch = random_samples(32, max_boxes=12, seed=1000 + seed)
        out = augment_pipeline(batch, AugmentConfig(p_mosaic=0.5, p_mixup=0.3, seed=seed), jobs=4)
        for s in out:
            for b in s.boxes:
                n_boxes += 1
                problem = box_problem(b.cx, b.cy, b.w, b.h, b.class_id)
                if problem:
                    failures.append(f"{s.image_id}: {problem}")
        seed += 1

    a = Sample("a", ImageBuffer.uniform(8, 8, 90), (BoundingBox(0.5, 0.5, 0.2, 0.2, 0),))
    b = Sample("b", ImageBuffer.uniform(8, 8, 210), (BoundingBox(0.3, 0.3, 0.2, 0.2, 1),))
    m = mixup(a, b, 1.0)
    if m.image != a.image or m.boxes != a.boxes + b.boxes:
        failures.append("mixup at lambda 1")
    tiles = [Sample("t0", ImageBuffer.uniform(16, 16, 50), (BoundingBox(0.5, 0.5, 1.0, 1.0, 3),))]
    tiles += [Sample(f"t{i}", ImageBuffer.uniform(16, 16, 50)) for i in (1, 2, 3)]
    mos = mosaic(tiles, 32, AugmentConfig.identity(), np.random.default_rng(0), center=(16, 16))
    if mos.boxes != (BoundingBox(0.25, 0.25, 0.5, 0.5, 3),):
        failures.append(f"mosaic quadrant gave {mos.boxes}")
    record(9, "augmentation determinism, box validity, mixup and mosaic endpoints", failures[:3],
           f"{n_boxes} boxes checked")


def test_criterion_10_degradation():
    failures = []
    scene = synthetic_shape_scene()
    axes = dict(betas=[0.0, 0.2, 0.5], distances=[0.0, 1.0, 2.0, 4.0], frames_per_cell=10)
    if not np.all(accuracy_grid(scene, oracle_detector(scene), **axes).cells == 1.0):
        failures.append("oracle grid not all 1.0")
    if not np.all(accuracy_grid(scene, null_detector, **axes).cells == 0.0):
        failures.append("null grid not all 0.0")

    rng = np.random.default_rng(10)
    worst = 0
    for _ in range(100):
        img = ImageBuffer(rng.integers(0, 256, (24, 24, 3), dtype=np.uint8))
        beta, d1, d2 = rng.uniform(0, 1.5), rng.uniform(0, 3), rng.uniform(0, 3)
        whole = apply_turbidity(img, TurbidityParams(beta, distance=d1 + d2)).data.astype(int)
        steps = apply_turbidity(apply_turbidity(img, TurbidityParams(beta, distance=d1)),
                                TurbidityParams(beta, distance=d2)).data.astype(int)
        worst = max(worst, int(np.abs(whole - steps).max()))
    if worst > 1:
        failures.append(f"composition off by {worst} levels")

    detector = TemplateMatchDetector.from_scene(scene)
    distances = [0.0, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0]
    grid = accuracy_grid(scene, detector, [0.0, 0.2], distances, frames_per_cell=100,
                         defocus=DefocusParams(0.0, 1.0))
    for beta, row in zip(grid.betas, grid.cells):
        if np.any(np.diff(row) > 0):
            failures.append(f"accuracy rises along blur axis at beta {beta}: {row.tolist()}")
    rows = "; ".join(" ".join(f"{v:.2f}" for v in row) for row in grid.cells)
    record(10, "oracle/null grids, turbidity composition, accuracy falls with blur", failures,
           f"template rows {rows}")


def test_criterion_11_cli():
    failures = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        write_samples(tmp / "data", random_samples(6, seed=11), ["a", "b", "c"])
        gts = load_dataset_dir(tmp / "data").ground_truth()
        rng = np.random.default_rng(11)
        dets = [Detection(b, float(rng.uniform(0.05, 1)), k) for k, v in gts.items() for b in v]
        (tmp / "dets.json").write_text(dump_detections(dets))
        for i in range(2):
            write_png(dark_textured(seed=i), tmp / "imgs" / f"x{i}.png")

        def sections(out):
            return {
                "enhance": {"input_dir": "imgs", "output_dir": f"{out}/enhanced"},
                "augment": {"dataset": "data", "output_dir": f"{out}/augmented"},
                "anchors": {"dataset": "data", "output": f"{out}/anchors.txt", "k": 12},
                "eval": {"dataset": "data", "detections": "dets.json", "output": f"{out}/report.json"},
                "calibrate": {"dataset": "data", "detections": "dets.json", "output": f"{out}/calib.json"},
                "degrade": {"output": f"{out}/grid.csv", "frames_per_cell": 3, "blur_gain": 1.0},
            }

        for command in sections("x"):
            trees = []
            for run in ("r1", "r2"):
                cfg = write_config(tmp / f"{command}_{run}.ini",
                                   {"run": {"seed": 5}, command: sections(f"{command}_{run}")[command]})
                code = cli_main([command, "--config", str(cfg)])
                if code != 0:
                    failures.append(f"{command} exited {code}")
                trees.append(tree_bytes(tmp / f"{command}_{run}"))
            if not trees[0] or trees[0] != trees[1]:
                failures.append(f"{command} output differs between runs")

        bad = write_config(tmp / "bad.ini", {"eval": {"dataset": "data", "detections": "dets.json",
                                                      "output": "r.json", "bogus_key": "1"}})
        code = cli_main(["eval", "--config", str(bad)])
        if code != 2:
            failures.append(f"schema violation exited {code}")
    record(11, "CLI outputs byte-identical on rerun; schema violation exits 2", failures)


def pytest_terminal_summary_lines():
    return [RESULTS[k] for k in sorted(RESULTS)]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
