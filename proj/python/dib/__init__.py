"""Distributed information bottleneck for tabular data.

Thin wrappers over the C++ core. Paths may be str or os.PathLike; configs and
joint specs may be dicts, JSON strings, or file paths.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

from . import _core
from ._core import ConfigError, ContractError, Error, IngestionError, TrainingError

__all__ = [
    "ConfigError",
    "ContractError",
    "Error",
    "IngestionError",
    "TrainingError",
    "acceptance_joint",
    "analyze",
    "beta_schedule",
    "bhattacharyya_coefficient",
    "checkpoint_metadata",
    "entropy_bits",
    "evaluate_checkpoint",
    "ground_truth",
    "kl_to_standard_normal",
    "read_trajectory",
    "roc_auc",
    "selfcheck",
    "synth",
    "train",
]

PathLike = Union[str, os.PathLike]
JsonLike = Union[dict, str, os.PathLike]


def _json_text(value: Optional[JsonLike]) -> str:
    if value is None:
        return ""
    if isinstance(value, dict):
        return json.dumps(value)
    if isinstance(value, os.PathLike) or (isinstance(value, str) and not value.lstrip().startswith("{")):
        return Path(value).read_text()
    return value


def beta_schedule(step: int, config: Optional[JsonLike] = None) -> float:
    return _core.beta_schedule(step, _json_text(config))


def kl_to_standard_normal(mean: Sequence[float], log_variance: Sequence[float]) -> float:
    """KL(N(mean, exp(log_variance)) || N(0, I)) in nats."""
    return _core.kl_to_standard_normal(list(mean), list(log_variance))


def bhattacharyya_coefficient(mean_a, log_variance_a, mean_b, log_variance_b) -> float:
    return _core.bhattacharyya_coefficient(list(mean_a), list(log_variance_a), list(mean_b), list(log_variance_b))


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> Optional[float]:
    return _core.roc_auc(list(scores), [int(v) for v in labels])


def entropy_bits(distribution: Sequence[float]) -> float:
    return _core.entropy_bits(list(distribution))


def ground_truth(spec: JsonLike) -> dict:
    """Exact entropies and mutual informations of a discrete joint spec."""
    return json.loads(_core.ground_truth(_json_text(spec)))


def acceptance_joint() -> dict:
    return json.loads(_core.acceptance_joint())


def synth(spec: JsonLike, out: PathLike, n: int = 10000, seed: int = 0) -> Path:
    """Sample a joint spec to out/{data.csv, schema.json, ground_truth.json}."""
    out = Path(out)
    if isinstance(spec, dict):
        out.mkdir(parents=True, exist_ok=True)
        spec_path = out / "joint.json"
        spec_path.write_text(json.dumps(spec))
        spec = spec_path
    _core.synth(os.fspath(spec), os.fspath(out), n, seed)
    return out


def train(
    data: PathLike,
    schema: PathLike,
    out: PathLike,
    config: Optional[JsonLike] = None,
    seed: Optional[int] = None,
) -> Path:
    """Train a run into `out` (must be empty or absent); returns the run directory."""
    config_path = None
    if isinstance(config, dict):
        out_parent = Path(out).resolve().parent
        out_parent.mkdir(parents=True, exist_ok=True)
        config_path = out_parent / (Path(out).name + ".config.json")
        config_path.write_text(json.dumps(config))
    elif config is not None:
        config_path = Path(config)
    root = _core.train(os.fspath(data), os.fspath(schema), os.fspath(out),
                       None if config_path is None else os.fspath(config_path), seed)
    return Path(root)


def analyze(
    run: PathLike,
    budgets: Iterable[float] = (),
    features: Iterable[str] = (),
    at_budget: Iterable[float] = (),
    threshold_bits: float = 0.05,
) -> dict[str, Any]:
    """Write confusion, importance and information-plane exports; returns the JSON exports."""
    run = Path(run)
    _core.analyze(os.fspath(run), list(budgets), list(features), list(at_budget), threshold_bits)
    return {
        "importance": json.loads((run / "importance" / "importance.json").read_text()),
        "infoplane": json.loads((run / "infoplane" / "infoplane.json").read_text()),
    }


def read_trajectory(path: PathLike) -> dict[str, Any]:
    path = Path(path)
    if path.is_dir():
        path = path / "trajectory.csv"
    return json.loads(_core.read_trajectory(os.fspath(path)))


def checkpoint_metadata(path: PathLike) -> dict[str, Any]:
    return json.loads(_core.checkpoint_metadata(os.fspath(path)))


def evaluate_checkpoint(run: PathLike, checkpoint: str, split: str = "validation") -> dict[str, Any]:
    return json.loads(_core.evaluate_checkpoint(os.fspath(run), checkpoint, split))


def selfcheck() -> list[tuple[str, bool, str]]:
    return _core.selfcheck()
