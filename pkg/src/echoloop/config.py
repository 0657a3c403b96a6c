"""Run configuration read from a TOML document.

Relative paths are resolved against the directory holding the config
file. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .diagnostics.report import DiagnosticsConfig
from .errors import ConfigError
from .loop import PipelineConfig
from .recommenders import RecommenderConfig
from .riskgen import GeneratorConfig
from .timeline import SplitConfig

_TOP = {"seed", "output_dir", "data", "split", "recommender", "pipeline", "augmenter", "representer", "decision", "diagnostics"}
_DATA = {"interactions", "user_attributes", "item_attributes"}
_SPLIT = {"cutoff_fraction", "num_periods", "mode"}
_RECOMMENDER = set(RecommenderConfig.__dataclass_fields__)
_GENERATOR = set(GeneratorConfig.__dataclass_fields__)
_PIPELINE = {
    "decision_mode", "augment_each_period", "exclude_seen", "candidate_pool_size",
    "pairs_per_user", "profile_attributes", "warm_start",
}
_DIAGNOSTICS = {"phases", "popularity_index", "polarization_k"}


@dataclass(frozen=True)
class RunConfig:
    interactions: Path
    user_attributes: Path | None
    item_attributes: Path | None
    split: SplitConfig
    pipeline: PipelineConfig
    diagnostics: DiagnosticsConfig
    output_dir: Path
    seed: int = 0
    source: dict = field(default_factory=dict, compare=False)

    def data_paths(self):
        return {
            "interactions": str(self.interactions),
            "user_attributes": str(self.user_attributes) if self.user_attributes else None,
            "item_attributes": str(self.item_attributes) if self.item_attributes else None,
        }


def _section(doc, name, allowed, required=False):
    if name not in doc:
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    sec = doc[name]
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = sorted(set(sec) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    return dict(sec)


def _generator(doc, name, seed):
    if name not in doc:
        return None
    sec = _section(doc, name, _GENERATOR)
    sec.setdefault("seed", seed)
    return GeneratorConfig(**sec)


def _path(base, value, key, required=False):
    if value is None:
        if required:
            raise ConfigError(f"[data] {key} is required")
        return None
    if not isinstance(value, str):
        raise ConfigError(f"[data] {key} must be a path string")
    path = (base / value).resolve()
    if not path.is_file():
        raise ConfigError(f"[data] {key}: file not found: {path}")
    return path


def parse_run_config(text: str, base_dir=".") -> RunConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    unknown = sorted(set(doc) - _TOP)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    base = Path(base_dir)
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    data = _section(doc, "data", _DATA, required=True)
    split = _section(doc, "split", _SPLIT, required=True)
    rec = _section(doc, "recommender", _RECOMMENDER)
    rec.setdefault("seed", seed)
    pipe = _section(doc, "pipeline", _PIPELINE)
    if pipe.get("profile_attributes") is not None:
        pipe["profile_attributes"] = tuple(pipe["profile_attributes"])
    diag = _section(doc, "diagnostics", _DIAGNOSTICS)
    if "phases" in diag:
        diag["phases"] = tuple(diag["phases"])
    try:
        return RunConfig(
            interactions=_path(base, data.get("interactions"), "interactions", required=True),
            user_attributes=_path(base, data.get("user_attributes"), "user_attributes"),
            item_attributes=_path(base, data.get("item_attributes"), "item_attributes"),
            split=SplitConfig(**split),
            pipeline=PipelineConfig(
                recommender=RecommenderConfig(**rec),
                augmenter=_generator(doc, "augmenter", seed),
                representer=_generator(doc, "representer", seed),
                decision=_generator(doc, "decision", seed),
                seed=seed,
                **pipe,
            ),
            diagnostics=DiagnosticsConfig(seed=seed, **diag),
            output_dir=(base / doc.get("output_dir", "out")).resolve(),
            seed=seed,
            source=doc,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_run_config(text, path.parent)
