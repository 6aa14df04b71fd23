"""Cascade growth prediction from sampled random-walk paths."""

import json as _json
import os as _os

from . import _core
from ._core import (
    ConfigError,
    DomainError,
    GenerationError,
    NumericalError,
    ParseError,
    ShapeError,
    StateError,
    attention_mass,
    count_triads,
    fit_ridge,
    sample_paths,
    scale_label,
    size_bucket,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "GenerationError",
    "NumericalError",
    "ParseError",
    "ShapeError",
    "StateError",
    "attention_mass",
    "count_triads",
    "evaluate",
    "features_baseline",
    "fit_ridge",
    "generate_dataset",
    "sample_paths",
    "scale_label",
    "size_bucket",
    "train",
]


def _config(config):
    return _json.dumps(config or {})


def generate_dataset(out_dir, config=None):
    """Write a synthetic dataset directory; returns the summary dict."""
    return _json.loads(_core.generate_dataset(_config(config), _os.fspath(out_dir)))


def train(data_dir, config=None, out_dir=None):
    """Train on a dataset directory; returns the report dict."""
    out = None if out_dir is None else _os.fspath(out_dir)
    return _json.loads(_core.train(_config(config), _os.fspath(data_dir), out))


def evaluate(ckpt, data_dir, split="test", threads=1):
    return _json.loads(_core.evaluate(_os.fspath(ckpt), _os.fspath(data_dir), split, threads))


def features_baseline(data_dir, config=None, l2_grid=()):
    return _json.loads(_core.features_baseline(_config(config), _os.fspath(data_dir), list(l2_grid)))
