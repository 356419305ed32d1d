"""Continuous latent chain-of-thought training lab.

Thin convenience layer over the C++ core: configs may be passed as dicts or
JSON strings; paths are plain strings.
"""

import json as _json

from codilab._core import (
    __version__,
    compression_ratio,
)
from codilab import _core


def _as_json(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def synth(config, out_dir):
    """Generate a synthetic multilingual corpus under out_dir."""
    return _core.synth(_as_json(config), str(out_dir))


def train(config, corpus_path, vocab_path, ckpt_out, objective="", log_out="",
          train_languages=()):
    """Train on a corpus and write a checkpoint."""
    return _core.train(_as_json(config), str(corpus_path), str(vocab_path), str(ckpt_out),
                       objective, str(log_out) if log_out else "", list(train_languages))


def evaluate(ckpt_path, corpus_path, vocab_path, mode, train_languages=(), setup_tag="eval"):
    """Evaluate a checkpoint on a corpus test split."""
    return _core.evaluate(str(ckpt_path), str(corpus_path), str(vocab_path), mode,
                          list(train_languages), setup_tag)


def run_matrix(out_dir, config=None):
    """Run the setups x objectives experiment matrix."""
    return _core.run_matrix(str(out_dir), _as_json(config))


__all__ = [
    "__version__",
    "compression_ratio",
    "synth",
    "train",
    "evaluate",
    "run_matrix",
]
