"""Contrastive proposal extension for weakly supervised detection."""

from ._core import (
    CheckpointError,
    ConfigError,
    InvalidInput,
    InvalidParameter,
    config_keys,
    evaluate,
    extend_box,
    generate,
    gradcheck,
    iou,
    nms,
    train,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "InvalidInput",
    "InvalidParameter",
    "config_keys",
    "evaluate",
    "extend_box",
    "generate",
    "gradcheck",
    "iou",
    "nms",
    "train",
]
