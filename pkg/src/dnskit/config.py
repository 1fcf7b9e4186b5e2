"""Pipeline configuration: one JSON document with a section per subcommand.

Unknown keys, wrong types and inverted ranges are rejected up front so a bad
config never produces partial output.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .activity import DEFAULT_FRAME_MS, DEFAULT_THRESHOLD_DBFS, MaskParams
from .audio import DEFAULT_CEILING
from .curation import (CLASS_FLOOR, DEFAULT_SPEECH_LABELS, MOS_THRESHOLD, SEGMENT_S,
                       SPEAKER_MIN_MINUTES)
from .evaluation.ratings import GOLD_TOLERANCE, MAX_FAIL_FRACTION, TRAP_EXPECTED
from .evaluation.stats import SIGNIFICANCE
from .rt import WARMUP_FRAMES
from .synthesis import SynthesisConfig
from .testset import PRIORITY_CLASSES, TestSetPlan

CONFIG_ENV = "DNSKIT_CONFIG"


class ConfigError(ValueError):
    pass


def _range(value, name):
    if not isinstance(value, (list, tuple)) or len(value) != 2 or \
            not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"{name}: expected [lo, hi] numbers, got {value!r}")
    lo, hi = float(value[0]), float(value[1])
    if lo > hi:
        raise ConfigError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
    return (lo, hi)


@dataclass(frozen=True)
class CorpusSection:
    root: Optional[str] = None
    speech_manifest: Optional[str] = None
    noise_manifest: Optional[str] = None
    rir_manifest: Optional[str] = None
    chapter_manifest: Optional[str] = None


@dataclass(frozen=True)
class SynthSection:
    snr_range: tuple = (0.0, 40.0)
    level_range: tuple = (-35.0, -15.0)
    duration_s: float = 30.0
    ceiling: float = DEFAULT_CEILING
    activity_threshold_dbfs: float = DEFAULT_THRESHOLD_DBFS
    frame_ms: float = DEFAULT_FRAME_MS
    joint_activity: bool = False
    rir_probability: float = 0.0
    clean_target: str = "reverberant"
    set_name: str = "train"

    def to_synthesis_config(self) -> SynthesisConfig:
        return SynthesisConfig(
            snr_range=self.snr_range, level_range=self.level_range, duration_s=self.duration_s,
            ceiling=self.ceiling,
            mask=MaskParams(self.activity_threshold_dbfs, self.frame_ms, self.joint_activity),
            rir_probability=self.rir_probability, clean_target=self.clean_target,
            set_name=self.set_name)


@dataclass(frozen=True)
class CurateSection:
    mos_policy: str = "quartile"
    mos_threshold: float = MOS_THRESHOLD
    speaker_min_minutes: float = SPEAKER_MIN_MINUTES
    segment_s: float = SEGMENT_S
    class_floor: int = CLASS_FLOOR
    speech_labels: tuple = tuple(sorted(DEFAULT_SPEECH_LABELS))
    excerpts_per_chapter: int = 10


@dataclass(frozen=True)
class TestsetSection:
    __test__ = False

    quota: int = 300
    priority_classes: tuple = PRIORITY_CLASSES
    clips_per_priority: int = 15
    random_fill: int = 120
    snr_range: tuple = (0.0, 25.0)
    rt60_range: tuple = (300.0, 1300.0)
    level_range: tuple = (-35.0, -15.0)
    duration_s: float = 10.0
    disjoint: bool = True
    dev_fraction: float = 0.5

    def to_plan(self) -> TestSetPlan:
        return TestSetPlan(self.quota, self.priority_classes, self.clips_per_priority,
                           self.random_fill, self.snr_range, self.rt60_range, self.level_range,
                           self.duration_s)


@dataclass(frozen=True)
class EvalSection:
    group_size: int = 10
    raters_per_clip: int = 10
    gold_tolerance: float = GOLD_TOLERANCE
    max_fail_fraction: float = MAX_FAIL_FRACTION
    trap_expected: int = TRAP_EXPECTED
    significance: float = SIGNIFICANCE
    # plan metadata only; not enforced by the batch analyzer
    max_groups_per_rater: Optional[int] = None
    gold_pool: tuple = ()
    trap_pool: tuple = ()


@dataclass(frozen=True)
class RtSection:
    frame_ms: float = 20.0
    lookahead_ms: float = 0.0
    warmup_frames: int = WARMUP_FRAMES
    policy: str = "mean"
    backend: str = "passthrough"


@dataclass(frozen=True)
class PipelineConfig:
    master_seed: int
    corpus: CorpusSection = field(default_factory=CorpusSection)
    synth: SynthSection = field(default_factory=SynthSection)
    curate: CurateSection = field(default_factory=CurateSection)
    testset: TestsetSection = field(default_factory=TestsetSection)
    eval: EvalSection = field(default_factory=EvalSection)
    rt: RtSection = field(default_factory=RtSection)
    base_dir: Optional[str] = None

    def path(self, p: Optional[str]) -> Optional[Path]:
        """Resolve a config-relative path."""
        if p is None:
            return None
        q = Path(p)
        if not q.is_absolute() and self.base_dir is not None:
            q = Path(self.base_dir) / q
        return q


_SECTIONS = {"corpus": CorpusSection, "synth": SynthSection, "curate": CurateSection,
             "testset": TestsetSection, "eval": EvalSection, "rt": RtSection}


def _coerce(section: str, f: dataclasses.Field, value):
    name = f"{section}.{f.name}"
    default = f.default if f.default is not dataclasses.MISSING else None
    if f.name.endswith("_range"):
        return _range(value, name)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    optional_int = f.type in ("Optional[int]", Optional[int])
    if optional_int and value is None:
        return None
    if isinstance(default, int) or optional_int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{name}: expected a list of strings, got {value!r}")
        return tuple(value)
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def _build_section(name, cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"section {name!r}: unknown keys {sorted(unknown)}")
    return cls(**{k: _coerce(name, known[k], v) for k, v in data.items()})


def config_from_dict(data: dict, base_dir=None) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - set(_SECTIONS) - {"master_seed"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    seed = data.get("master_seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("master_seed must be present as a non-negative integer")
    sections = {name: _build_section(name, cls, data.get(name, {}))
                for name, cls in _SECTIONS.items()}
    cfg = PipelineConfig(master_seed=seed, base_dir=str(base_dir) if base_dir else None,
                         **sections)
    validate(cfg)
    return cfg


def validate(cfg: PipelineConfig) -> None:
    """Cross-field checks; delegates to the domain constructors where they exist."""
    try:
        cfg.synth.to_synthesis_config()
        cfg.testset.to_plan()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.curate.mos_policy not in ("quartile", "threshold"):
        raise ConfigError("curate.mos_policy must be 'quartile' or 'threshold'")
    if cfg.curate.class_floor < 1 or cfg.curate.segment_s <= 0:
        raise ConfigError("curate.class_floor must be >= 1 and curate.segment_s > 0")
    if cfg.eval.group_size < 3 or cfg.eval.raters_per_clip < 1:
        raise ConfigError("eval.group_size must be >= 3 and eval.raters_per_clip >= 1")
    if not 0.0 <= cfg.eval.max_fail_fraction <= 1.0:
        raise ConfigError("eval.max_fail_fraction must be in [0, 1]")
    if not 0.0 < cfg.eval.significance < 1.0:
        raise ConfigError("eval.significance must be in (0, 1)")
    if cfg.rt.policy not in ("mean", "p99", "max"):
        raise ConfigError("rt.policy must be mean, p99 or max")
    if cfg.rt.frame_ms <= 0 or cfg.rt.lookahead_ms < 0:
        raise ConfigError("rt.frame_ms must be > 0 and rt.lookahead_ms >= 0")
    if not 0.0 < cfg.testset.dev_fraction < 1.0:
        raise ConfigError("testset.dev_fraction must be in (0, 1)")


def load_config(path=None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Read the config at ``path`` (or ``$DNSKIT_CONFIG``). ``overrides`` are
    merged as ``{"section": {"key": value}}`` or top-level ``master_seed``."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        raise ConfigError(f"no config given (use --config or set {CONFIG_ENV})")
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FileNotFoundError(f"config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    for key, value in (overrides or {}).items():
        if isinstance(value, dict):
            data.setdefault(key, {}).update(value)
        else:
            data[key] = value
    return config_from_dict(data, base_dir=path.parent)
