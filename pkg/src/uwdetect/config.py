"""INI run configuration: one section per subcommand plus ``[run]``.

Every key is declared in ``SCHEMA`` with a parser and a default; unknown
keys, unparsable values and missing required paths raise ``ConfigError``.
Lists are comma separated, e.g. ``scale_range = 0.75, 1.25``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Tuple


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(n: Optional[int] = None) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        values = tuple(float(v) for v in text.split(",") if v.strip())
        if n is not None and len(values) != n:
            raise ValueError(f"expected {n} comma-separated numbers, got {len(values)}")
        if not values:
            raise ValueError("expected at least one number")
        return values
    return parse


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        text = text.strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _str(text: str) -> str:
    return text.strip()


# Marks a path that must exist when the config is loaded.
IN_PATH = "in"
OUT_PATH = "out"

# section -> key -> (parser, default, path role or None)
SCHEMA: Dict[str, Dict[str, Tuple[Callable, object, Optional[str]]]] = {
    "run": {
        "seed": (int, 0, None),
        "jobs": (int, 1, None),
    },
    "enhance": {
        "input_dir": (_str, None, IN_PATH),
        "output_dir": (_str, None, OUT_PATH),
        "target_luma": (float, 128.0, None),
        "dark_threshold": (float, 80.0, None),
        "bright_threshold": (float, 180.0, None),
        "sharpen_strength": (float, 0.5, None),
    },
    "augment": {
        "dataset": (_str, None, IN_PATH),
        "output_dir": (_str, None, OUT_PATH),
        "clip": (_bool, False, None),
        "hue_delta": (float, 0.015, None),
        "saturation_range": (_floats(2), (0.7, 1.3), None),
        "value_range": (_floats(2), (0.6, 1.4), None),
        "contrast_range": (_floats(2), (0.8, 1.2), None),
        "max_rotate_deg": (float, 10.0, None),
        "max_translate_frac": (float, 0.1, None),
        "scale_range": (_floats(2), (0.75, 1.25), None),
        "flip_prob": (float, 0.5, None),
        "max_perspective": (float, 0.0, None),
        "min_area_frac": (float, 0.1, None),
        "mixup_lambda_alpha": (float, 8.0, None),
        "mosaic_center_jitter": (float, 0.25, None),
        "p_mosaic": (float, 0.5, None),
        "p_mixup": (float, 0.15, None),
    },
    "anchors": {
        "dataset": (_str, None, IN_PATH),
        "output": (_str, None, OUT_PATH),
        "clip": (_bool, False, None),
        "k": (int, 12, None),
        "max_iter": (int, 300, None),
        "input_size": (int, 640, None),
        "sort_key": (_choice("width", "area"), "width", None),
    },
    "eval": {
        "dataset": (_str, None, IN_PATH),
        "detections": (_str, None, IN_PATH),
        "output": (_str, None, OUT_PATH),
        "clip": (_bool, False, None),
        "beta": (float, 2.0, None),
        "iou_threshold": (float, 0.5, None),
        "grid_step": (float, 0.01, None),
    },
    "calibrate": {
        "dataset": (_str, None, IN_PATH),
        "detections": (_str, None, IN_PATH),
        "output": (_str, "", OUT_PATH),
        "clip": (_bool, False, None),
        "beta": (float, 2.0, None),
        "iou_threshold": (float, 0.5, None),
        "grid_step": (float, 0.01, None),
    },
    "degrade": {
        "scene": (_str, "synthetic", None),
        "output": (_str, None, OUT_PATH),
        "scene_size": (int, 96, None),
        "detector": (_choice("template", "oracle", "null"), "template", None),
        "detector_threshold": (float, 0.8, None),
        "betas": (_floats(), (0.0, 0.2, 0.5), None),
        "distances": (_floats(), (0.0, 1.0, 2.0, 3.0), None),
        "frames_per_cell": (int, 100, None),
        "iou_threshold": (float, 0.5, None),
        "focus_distance": (float, 0.0, None),
        "blur_gain": (float, 1.0, None),
        "airlight": (_floats(3), (40.0, 110.0, 120.0), None),
        "noise_sigma": (float, 3.0, None),
    },
}


def load_config(path=None, overrides: Iterable[str] = (), base_dir=None) -> Dict[str, dict]:
    """Parse and validate a config file with ``section.key=value`` overrides
    applied on top. Relative paths resolve against the config file's
    directory (or ``base_dir``)."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base_dir = base_dir or path.parent
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

    raw: Dict[str, Dict[str, str]] = {s: dict(parser[s]) for s in parser.sections()}
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        raw.setdefault(section.strip(), {})[name.strip()] = value

    for section in raw:
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")

    resolved: Dict[str, dict] = {}
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        for key in given:
            if key not in keys:
                raise ConfigError(f"[{section}] unknown key {key!r}")
        values = {}
        for key, (parse, default, role) in keys.items():
            if key in given:
                try:
                    values[key] = parse(given[key])
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from None
            else:
                values[key] = default
            if role and values[key]:
                p = Path(values[key])
                values[key] = str(p if p.is_absolute() else base_dir / p)
        resolved[section] = values
    return resolved


def require(config: Dict[str, dict], section: str) -> dict:
    """The section's values, after checking required and input paths."""
    values = config[section]
    for key, (_, default, role) in SCHEMA[section].items():
        if role is None:
            continue
        if values[key] is None:
            raise ConfigError(f"[{section}] {key} is required")
        if role == IN_PATH and not Path(values[key]).exists():
            raise ConfigError(f"[{section}] {key}: path does not exist: {values[key]}")
    return values


def config_hash(config: Dict[str, dict], section: str) -> str:
    """Digest of the settings that influence a command's output. Paths and
    the worker count are left out, so reruns into another directory compare
    equal."""
    body = {k: v for k, v in config[section].items() if SCHEMA[section][k][2] is None}
    body["seed"] = config["run"]["seed"]
    text = json.dumps({section: body}, sort_keys=True, default=list)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
