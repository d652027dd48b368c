"""YOLO label files, detection JSON, and on-disk dataset directories.

A dataset directory follows the usual YOLO layout::

    root/
      classes.txt        one class name per line
      images/<id>.png
      labels/<id>.txt    ``class_id cx cy w h`` per line, normalized

Coordinates stay normalized everywhere in the library; pixels only show up
at raster boundaries.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional

from PIL import Image

from .image import ImageBuffer, read_png, write_png

EPS = 1e-6


class LabelParseError(ValueError):
    """Raised for malformed label files or detection records."""


@dataclass(frozen=True)
class BoundingBox:
    """Normalized center-format box with a class label."""

    cx: float
    cy: float
    w: float
    h: float
    class_id: int = 0

    def __post_init__(self):
        problem = box_problem(self.cx, self.cy, self.w, self.h, self.class_id)
        if problem:
            raise ValueError(problem)

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self):
        """(x1, y1, x2, y2) in normalized units."""
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)

    @classmethod
    def from_corners(cls, x1, y1, x2, y2, class_id=0) -> "BoundingBox":
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1, class_id)


def box_problem(cx, cy, w, h, class_id) -> Optional[str]:
    """Describe why the values do not form a valid box, or None."""
    if not all(math.isfinite(v) for v in (cx, cy, w, h)):
        return "non-finite coordinate"
    if int(class_id) != class_id or class_id < 0:
        return f"class_id must be a non-negative integer, got {class_id}"
    if w <= 0 or h <= 0:
        return f"width and height must be positive, got w={w}, h={h}"
    if w > 1 + EPS or h > 1 + EPS:
        return f"width and height must be <= 1, got w={w}, h={h}"
    if cx - w / 2 < -EPS or cx + w / 2 > 1 + EPS:
        return f"box leaves the unit square in x (cx={cx}, w={w})"
    if cy - h / 2 < -EPS or cy + h / 2 > 1 + EPS:
        return f"box leaves the unit square in y (cy={cy}, h={h})"
    return None


def clip_box(cx, cy, w, h, class_id) -> Optional[BoundingBox]:
    """Clamp a box into the unit square; None if nothing is left."""
    cx, cy, w, h = float(cx), float(cy), float(w), float(h)
    x1, y1 = max(cx - w / 2, 0.0), max(cy - h / 2, 0.0)
    x2, y2 = min(cx + w / 2, 1.0), min(cy + h / 2, 1.0)
    if x2 <= x1 or y2 <= y1:
        return None
    return BoundingBox.from_corners(x1, y1, x2, y2, int(class_id))


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    confidence: float
    image_id: str

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")

    @property
    def class_id(self) -> int:
        return self.box.class_id


@dataclass
class LabeledImage:
    image_id: str
    path: str
    width: int
    height: int
    boxes: List[BoundingBox] = field(default_factory=list)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"{self.image_id}: image size must be at least 1x1")


@dataclass
class DatasetManifest:
    images: List[LabeledImage]
    class_names: List[str]

    def __post_init__(self):
        seen = set()
        for img in self.images:
            if img.image_id in seen:
                raise ValueError(f"duplicate image_id {img.image_id!r}")
            seen.add(img.image_id)
            for box in img.boxes:
                if box.class_id >= len(self.class_names):
                    raise ValueError(
                        f"{img.image_id}: class_id {box.class_id} outside "
                        f"{len(self.class_names)} class names"
                    )

    def ground_truth(self) -> dict:
        """image_id -> list of boxes, the shape the evaluator consumes."""
        return {img.image_id: list(img.boxes) for img in self.images}

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "images": [
                {
                    "image_id": img.image_id,
                    "path": img.path,
                    "width": img.width,
                    "height": img.height,
                    "boxes": [[b.class_id, _fmt(b.cx), _fmt(b.cy), _fmt(b.w), _fmt(b.h)] for b in img.boxes],
                }
                for img in self.images
            ],
        }


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def parse_yolo_labels(text: str, image_id: str = "", width: int = 1, height: int = 1,
                      clip: bool = False) -> List[BoundingBox]:
    """Parse ``class cx cy w h`` lines into boxes, in file order.

    Blank lines are skipped. With ``clip=True`` out-of-range boxes are
    clamped into the unit square instead of raising.
    """
    where = f"{image_id}: " if image_id else ""
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise LabelParseError(f"{where}line {lineno}: expected 5 fields, got {len(fields)}")
        try:
            cls_f = float(fields[0])
            cx, cy, w, h = (float(v) for v in fields[1:])
        except ValueError:
            raise LabelParseError(f"{where}line {lineno}: non-numeric field in {line.strip()!r}") from None
        if not (math.isfinite(cls_f) and cls_f.is_integer()):
            raise LabelParseError(f"{where}line {lineno}: class id {fields[0]!r} is not an integer")
        class_id = int(cls_f)
        if clip and w > 0 and h > 0 and class_id >= 0:
            box = clip_box(cx, cy, w, h, class_id)
            if box is None:
                raise LabelParseError(f"{where}line {lineno}: box lies entirely outside the image")
            boxes.append(box)
            continue
        problem = box_problem(cx, cy, w, h, class_id)
        if problem:
            raise LabelParseError(f"{where}line {lineno}: {problem}")
        boxes.append(BoundingBox(cx, cy, w, h, class_id))
    return boxes


def write_yolo_labels(boxes: Iterable[BoundingBox]) -> str:
    lines = [f"{b.class_id} {_fmt(b.cx)} {_fmt(b.cy)} {_fmt(b.w)} {_fmt(b.h)}" for b in boxes]
    return "".join(line + "\n" for line in lines)


_DET_FIELDS = ("image_id", "class_id", "cx", "cy", "w", "h", "confidence")


def load_detections(text: str) -> List[Detection]:
    """Parse the detection interchange JSON (an array of flat records)."""
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LabelParseError(f"$: invalid JSON ({exc})") from None
    if not isinstance(records, list):
        raise LabelParseError("$: expected an array of detections")
    dets = []
    for i, rec in enumerate(records):
        path = f"$[{i}]"
        if not isinstance(rec, dict):
            raise LabelParseError(f"{path}: expected an object")
        for key in _DET_FIELDS:
            if key not in rec:
                raise LabelParseError(f"{path}.{key}: missing")
        if not isinstance(rec["image_id"], str):
            raise LabelParseError(f"{path}.image_id: expected a string")
        for key in _DET_FIELDS[1:]:
            v = rec[key]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise LabelParseError(f"{path}.{key}: expected a number")
        if isinstance(rec["class_id"], float) and not rec["class_id"].is_integer():
            raise LabelParseError(f"{path}.class_id: expected an integer")
        conf = float(rec["confidence"])
        if not (0.0 <= conf <= 1.0):
            raise LabelParseError(f"{path}.confidence: {conf} outside [0, 1]")
        problem = box_problem(rec["cx"], rec["cy"], rec["w"], rec["h"], rec["class_id"])
        if problem:
            raise LabelParseError(f"{path}: {problem}")
        box = BoundingBox(float(rec["cx"]), float(rec["cy"]), float(rec["w"]), float(rec["h"]), int(rec["class_id"]))
        dets.append(Detection(box, conf, rec["image_id"]))
    return dets


def dump_detections(dets: Iterable[Detection]) -> str:
    records = [
        {
            "image_id": d.image_id,
            "class_id": d.box.class_id,
            "cx": d.box.cx,
            "cy": d.box.cy,
            "w": d.box.w,
            "h": d.box.h,
            "confidence": d.confidence,
        }
        for d in dets
    ]
    return json.dumps(records, indent=1)


def png_size(path) -> tuple:
    with Image.open(path) as im:
        return im.size


def load_dataset_dir(root, clip: bool = False) -> DatasetManifest:
    """Read a YOLO-layout dataset directory into a manifest.

    Images are visited in sorted filename order; an image without a label
    file has no boxes.
    """
    root = Path(root)
    classes_file = root / "classes.txt"
    if classes_file.exists():
        class_names = [ln.strip() for ln in classes_file.read_text().splitlines() if ln.strip()]
    else:
        class_names = []
    images = []
    for img_path in sorted((root / "images").glob("*.png")):
        image_id = img_path.stem
        width, height = png_size(img_path)
        label_path = root / "labels" / f"{image_id}.txt"
        text = label_path.read_text() if label_path.exists() else ""
        boxes = parse_yolo_labels(text, image_id, width, height, clip=clip)
        images.append(LabeledImage(image_id, str(img_path.relative_to(root)), width, height, boxes))
    if not classes_file.exists():
        n = 1 + max((b.class_id for img in images for b in img.boxes), default=-1)
        class_names = [str(i) for i in range(n)]
    return DatasetManifest(images, class_names)


def write_class_names(root, class_names: List[str]) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "classes.txt").write_text("".join(f"{n}\n" for n in class_names))


def manifest_json(manifest: DatasetManifest, extra: Optional[dict] = None) -> str:
    body = manifest.to_dict()
    if extra:
        body.update(extra)
    return json.dumps(body, indent=1, sort_keys=True) + "\n"


@dataclass(frozen=True)
class Sample:
    """A labeled image together with its pixels.

    ``sources`` records which original image ids contributed pixels or
    boxes, so composite augmentations stay traceable.
    """

    image_id: str
    image: ImageBuffer
    boxes: tuple = ()
    sources: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not self.sources:
            object.__setattr__(self, "sources", (self.image_id,))

    def labeled_image(self, path: str = "") -> LabeledImage:
        return LabeledImage(self.image_id, path, self.image.width, self.image.height, list(self.boxes))


def pixel_digest(image: ImageBuffer) -> str:
    h = hashlib.sha256()
    h.update(f"{image.width}x{image.height}x{image.channels}:{image.color_space}".encode())
    h.update(image.data.tobytes())
    return h.hexdigest()


def load_samples(root, clip: bool = False):
    """Load a dataset directory with pixels. Returns ``(samples, class_names)``."""
    root = Path(root)
    manifest = load_dataset_dir(root, clip=clip)
    samples = [
        Sample(img.image_id, read_png(root / img.path), tuple(img.boxes))
        for img in manifest.images
    ]
    return samples, manifest.class_names


def write_samples(root, samples: List[Sample], class_names: List[str], extra: Optional[dict] = None) -> str:
    """Write samples as a dataset directory plus ``manifest.json``.

    Returns the manifest text. The manifest carries a pixel digest per
    image so two runs can be compared from the manifest alone.
    """
    root = Path(root)
    write_class_names(root, class_names)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    images = []
    digests = {}
    for s in samples:
        rel = f"images/{s.image_id}.png"
        write_png(s.image, root / rel)
        (root / "labels" / f"{s.image_id}.txt").write_text(write_yolo_labels(s.boxes))
        images.append(s.labeled_image(rel))
        digests[s.image_id] = {"sha256": pixel_digest(s.image), "sources": list(s.sources)}
    manifest = DatasetManifest(images, list(class_names))
    body = {"schema_version": 1, "pixels": digests}
    if extra:
        body.update(extra)
    text = manifest_json(manifest, body)
    (root / "manifest.json").write_text(text)
    return text
