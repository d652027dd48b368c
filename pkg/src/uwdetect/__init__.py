"""Non-neural tooling for underwater object detection: image enhancement,
augmentation, anchors, detection-head numerics, evaluation and a
degradation simulator."""

__version__ = "0.1.0"
