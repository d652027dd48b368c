"""Small deterministic fixtures shared by several test modules."""

import numpy as np

from uwdetect.image import ImageBuffer


def dark_textured(size=64, seed=3):
    """RGB image with mean luma close to 40 and visible texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    base = 40.8 + 18 * np.sin(xx / 3.0) * np.cos(yy / 5.0)
    noise = rng.normal(0, 6, (size, size, 3))
    tint = np.array([0.8, 1.05, 1.1])
    data = np.clip(np.rint(base[:, :, None] * tint + noise), 0, 255).astype(np.uint8)
    return ImageBuffer(data)


def edge_image(width=16, height=8, low=0, high=255):
    data = np.full((height, width, 1), low, dtype=np.uint8)
    data[:, width // 2:] = high
    return ImageBuffer(data, "gray")


def random_samples(n=8, size=48, max_boxes=6, seed=0, n_classes=3):
    """Labeled RGB samples with blocky content and a few boxes each."""
    from uwdetect.dataset_io import BoundingBox, Sample

    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        data = rng.integers(0, 256, (size // 8, size // 8, 3), dtype=np.uint8)
        data = np.kron(data, np.ones((8, 8, 1), dtype=np.uint8))
        boxes = []
        for _ in range(rng.integers(1, max_boxes + 1)):
            w, h = rng.uniform(0.1, 0.5, 2)
            cx, cy = rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2)
            boxes.append(BoundingBox(cx, cy, w, h, int(rng.integers(0, n_classes))))
        out.append(Sample(f"img{i:03d}", ImageBuffer(data), tuple(boxes)))
    return out


ANCHOR_TABLE = {
    "P2/4": [(82, 96), (134, 183), (164, 418)],
    "P3/8": [(203, 256), (277, 528), (286, 160)],
    "P4/16": [(291, 336), (378, 448), (454, 578)],
    "P5/32": [(463, 307), (529, 473), (623, 636)],
}

PLANTED = np.array([[20.0, 30.0], [80.0, 60.0], [200.0, 260.0]])


def planted_boxes(n_per=100, spread=0.04, seed=0):
    """(w, h) samples scattered multiplicatively around PLANTED centers."""
    rng = np.random.default_rng(seed)
    groups = [c * np.exp(rng.normal(0, spread, (n_per, 2))) for c in PLANTED]
    return np.concatenate(groups)


def five_three_fixture():
    """Five detections over three ground-truth boxes in one image, ranked
    TP, FP, TP, FP (duplicate), TP."""
    from uwdetect.dataset_io import BoundingBox, Detection

    g = [BoundingBox(0.2, 0.2, 0.2, 0.2, 0), BoundingBox(0.7, 0.3, 0.2, 0.2, 0), BoundingBox(0.5, 0.8, 0.2, 0.2, 0)]
    dets = [
        Detection(BoundingBox(0.21, 0.2, 0.2, 0.2, 0), 0.9, "im"),
        Detection(BoundingBox(0.5, 0.5, 0.1, 0.1, 0), 0.8, "im"),
        Detection(BoundingBox(0.7, 0.31, 0.2, 0.2, 0), 0.7, "im"),
        Detection(BoundingBox(0.2, 0.21, 0.2, 0.2, 0), 0.6, "im"),
        Detection(BoundingBox(0.5, 0.8, 0.2, 0.22, 0), 0.5, "im"),
    ]
    return dets, {"im": g}


def write_config(path, sections):
    """Write an INI file from {section: {key: value}}."""
    lines = []
    for name, values in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in values.items())
        lines.append("")
    path.write_text("\n".join(lines))
    return path


def tree_bytes(root):
    """{relative path: bytes} for every file under root."""
    from pathlib import Path

    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
