"""Challenge test-set construction: synthetic (dry and reverberant) categories
with priority-class noise quotas, real-recording ingestion, and dev/blind
source partitioning.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence


from . import seeding
from .audio import read_wav
from .manifest import ClipManifestEntry, Corpus
from .synthesis import (MixRecipe, MixRecord, SynthesisConfig, _SpeakerPool, render_mix,
                        synthesize)

logger = logging.getLogger(__name__)

PRIORITY_CLASSES = (
    "fan", "air conditioner", "typing", "door shutting", "clatter", "car", "munching",
    "creaking chair", "breathing", "copy machine", "baby crying", "barking",
)

CATEGORY_SYNTHETIC = "synthetic_no_reverb"
CATEGORY_REVERB = "synthetic_reverb"
CATEGORY_REAL = "real"
RANDOM_FILL = "random"


class QuotaError(ValueError):
    pass


@dataclass(frozen=True)
class TestSetPlan:
    __test__ = False  # not a pytest class

    quota: int = 300
    priority_classes: tuple = PRIORITY_CLASSES
    clips_per_priority: int = 15
    random_fill: int = 120
    snr_range: tuple = (0.0, 25.0)
    rt60_range: tuple = (300.0, 1300.0)
    level_range: tuple = (-35.0, -15.0)
    duration_s: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "priority_classes", tuple(self.priority_classes))
        if self.clips_per_priority * len(self.priority_classes) + self.random_fill != self.quota:
            raise ValueError(
                f"plan does not add up: {self.clips_per_priority} x {len(self.priority_classes)} "
                f"+ {self.random_fill} != {self.quota}")
        for name in ("snr_range", "rt60_range", "level_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound exceeds upper bound")
            object.__setattr__(self, name, (float(lo), float(hi)))


@dataclass(frozen=True)
class TestSetEntry:
    __test__ = False

    category: str
    clip_path: Optional[str]
    clean_path: Optional[str] = None
    noise_class: Optional[str] = None
    mix_record: Optional[MixRecord] = None

    def to_dict(self) -> dict:
        return {"category": self.category, "clip_path": self.clip_path,
                "clean_path": self.clean_path, "noise_class": self.noise_class,
                "mix_record": self.mix_record.to_dict() if self.mix_record else None}

    @classmethod
    def from_dict(cls, d) -> "TestSetEntry":
        d = dict(d)
        if d.get("mix_record") is not None:
            d["mix_record"] = MixRecord.from_dict(d["mix_record"])
        return cls(**d)


@dataclass
class Corpora:
    speech: Corpus
    noise: Corpus
    rirs: Optional[Corpus] = None


def eligible_rirs(rirs: Optional[Corpus], rt60_range) -> list[str]:
    if rirs is None:
        return []
    lo, hi = rt60_range
    return sorted(e.clip_id for e in rirs.entries
                  if e.rt60_ms is not None and lo <= e.rt60_ms <= hi)


def _noise_fill(entries: Sequence[ClipManifestEntry], first: ClipManifestEntry, rng,
                duration_s: float) -> tuple:
    """``first`` plus further clips from ``entries`` until ``duration_s`` is covered."""
    chosen, total = [first.clip_id], first.duration_s
    if total >= duration_s:
        return tuple(chosen)
    for i in rng.permutation(len(entries)):
        e = entries[i]
        if e.clip_id == first.clip_id:
            continue
        chosen.append(e.clip_id)
        total += e.duration_s
        if total >= duration_s:
            return tuple(chosen)
    raise QuotaError(f"not enough noise to fill {duration_s} s starting from {first.clip_id}")


def plan_category(plan: TestSetPlan, with_reverb: bool, corpora: Corpora, master_seed: int,
                  set_name: str = "dev") -> list[tuple[str, MixRecipe]]:
    """Draw the (noise class, recipe) list for one synthetic category without rendering."""
    category = CATEGORY_REVERB if with_reverb else CATEGORY_SYNTHETIC
    stream_name = f"testset:{set_name}:{category}"
    rng = seeding.stream(master_seed, stream_name)
    priority = set(plan.priority_classes)

    by_class: dict[str, list[ClipManifestEntry]] = {c: [] for c in plan.priority_classes}
    rest = []
    for e in sorted(corpora.noise.entries, key=lambda e: e.clip_id):
        hits = [lab for lab in e.labels if lab in priority]
        for lab in hits:
            by_class[lab].append(e)
        if not hits:
            rest.append(e)
    for c in plan.priority_classes:
        if len(by_class[c]) < plan.clips_per_priority:
            raise QuotaError(f"priority class {c!r} has {len(by_class[c])} clips, "
                             f"needs {plan.clips_per_priority}")

    rir_ids = eligible_rirs(corpora.rirs, plan.rt60_range) if with_reverb else []
    if with_reverb and not rir_ids:
        raise QuotaError(f"no RIR with RT60 inside {plan.rt60_range} ms")

    used: set[str] = set()
    picks: list[tuple[str, ClipManifestEntry, list]] = []
    for c in plan.priority_classes:
        pool = [e for e in by_class[c] if e.clip_id not in used]
        if len(pool) < plan.clips_per_priority:
            raise QuotaError(f"priority class {c!r} runs out of unused clips "
                             f"(multi-label overlap with earlier classes)")
        for i in rng.choice(len(pool), size=plan.clips_per_priority, replace=False):
            used.add(pool[i].clip_id)
            picks.append((c, pool[i], by_class[c]))
    fill_pool = [e for e in rest if e.clip_id not in used]
    if len(fill_pool) < plan.random_fill:
        raise QuotaError(f"only {len(fill_pool)} non-priority noise clips for a random fill "
                         f"of {plan.random_fill}")
    for i in rng.choice(len(fill_pool), size=plan.random_fill, replace=False):
        used.add(fill_pool[i].clip_id)
        picks.append((RANDOM_FILL, fill_pool[i], rest))

    speakers = _SpeakerPool(corpora.speech, plan.duration_s)
    out = []
    for index, (cls, first, pool) in enumerate(picks):
        clip_rng = seeding.stream(master_seed, stream_name, index)
        recipe = MixRecipe(
            index=index,
            speech_clip_ids=speakers.draw(clip_rng, plan.duration_s),
            noise_clip_ids=_noise_fill(pool, first, clip_rng, plan.duration_s),
            snr_db=float(clip_rng.uniform(*plan.snr_range)),
            target_level_dbfs=float(clip_rng.uniform(*plan.level_range)),
            rir_id=rir_ids[int(clip_rng.integers(len(rir_ids)))] if rir_ids else None,
            duration_s=plan.duration_s,
            seed=seeding.derive_seed(master_seed, stream_name + ":render", index),
            set_name=f"{set_name}_{category}")
        out.append((cls, recipe))
    return out


def build_synthetic_category(plan: TestSetPlan, with_reverb: bool, corpora: Corpora,
                             master_seed: int, set_name: str = "dev", out_dir=None,
                             config: SynthesisConfig = SynthesisConfig()) -> list[TestSetEntry]:
    """Render one synthetic category. With ``out_dir=None`` nothing is written and
    entries carry records without paths."""
    category = CATEGORY_REVERB if with_reverb else CATEGORY_SYNTHETIC
    entries = []
    for cls, recipe in plan_category(plan, with_reverb, corpora, master_seed, set_name):
        if out_dir is None:
            record, _ = render_mix(recipe, corpora.speech, corpora.noise, corpora.rirs, config)
        else:
            record = synthesize(recipe, corpora.speech, corpora.noise, corpora.rirs, config,
                                Path(out_dir) / set_name / category)
        prefix = f"{set_name}/{category}/"
        entries.append(TestSetEntry(
            category=category,
            clip_path=prefix + record.output_path if record.output_path else None,
            clean_path=prefix + record.clean_path if record.clean_path else None,
            noise_class=cls, mix_record=record))
    return entries


def register_real_recordings(category: str, paths: Sequence) -> list[TestSetEntry]:
    """Manifest entries for real recordings; undecodable files are skipped with a warning."""
    entries = []
    for p in paths:
        try:
            read_wav(p)
        except Exception as exc:
            logger.warning("skipping %s: %s", p, exc)
            continue
        entries.append(TestSetEntry(category=category, clip_path=str(p)))
    return entries


def _split(keys: Sequence[str], rng, fraction: float) -> tuple[set, set]:
    keys = sorted(set(keys))
    order = rng.permutation(len(keys))
    n_first = int(round(fraction * len(keys)))
    first = {keys[i] for i in order[:n_first]}
    return first, set(keys) - first


def partition_corpora(corpora: Corpora, master_seed: int, dev_fraction: float = 0.5,
                      priority_classes: Sequence[str] = PRIORITY_CLASSES) -> tuple[Corpora, Corpora]:
    """Split sources into disjoint dev and blind corpora.

    Speech splits by speaker; noise splits per priority class (the rest as one
    group) so each side keeps every class; RIRs split by id.
    """
    rng = seeding.stream(master_seed, "testset:partition")
    spk = {e.clip_id: e.speaker_id or e.clip_id for e in corpora.speech.entries}
    dev_spk, _ = _split(spk.values(), rng, dev_fraction)
    dev_speech = [cid for cid, s in spk.items() if s in dev_spk]

    groups: dict[str, list[str]] = {}
    priority = list(priority_classes)
    for e in sorted(corpora.noise.entries, key=lambda e: e.clip_id):
        key = next((c for c in priority if c in e.labels), RANDOM_FILL)
        groups.setdefault(key, []).append(e.clip_id)
    dev_noise = set()
    for key in sorted(groups):
        first, _ = _split(groups[key], rng, dev_fraction)
        dev_noise |= first

    dev_rir: set = set()
    if corpora.rirs is not None:
        dev_rir, _ = _split([e.clip_id for e in corpora.rirs.entries], rng, dev_fraction)

    def side(speech_ids, noise_ids, rir_ids):
        return Corpora(corpora.speech.subset(speech_ids), corpora.noise.subset(noise_ids),
                       corpora.rirs.subset(rir_ids) if corpora.rirs is not None else None)

    all_speech = set(spk)
    all_noise = {e.clip_id for e in corpora.noise.entries}
    all_rir = {e.clip_id for e in corpora.rirs.entries} if corpora.rirs is not None else set()
    return (side(dev_speech, dev_noise, dev_rir),
            side(all_speech - set(dev_speech), all_noise - dev_noise, all_rir - dev_rir))


def source_ids(entries: Sequence[TestSetEntry]) -> set[str]:
    """Every speech, noise and RIR id used by the synthetic entries."""
    ids = set()
    for e in entries:
        if e.mix_record is None:
            continue
        r = e.mix_record.recipe
        ids.update(r.speech_clip_ids)
        ids.update(r.noise_clip_ids)
        if r.rir_id:
            ids.add(r.rir_id)
    return ids


def build_test_sets(plan: TestSetPlan, corpora: Corpora, master_seed: int, out_dir=None,
                    disjoint: bool = True, dev_fraction: float = 0.5,
                    config: SynthesisConfig = SynthesisConfig()) -> dict[str, list[TestSetEntry]]:
    """Dev and blind synthetic sets (both categories each)."""
    if disjoint:
        dev, blind = partition_corpora(corpora, master_seed, dev_fraction, plan.priority_classes)
    else:
        dev = blind = corpora
    out = {}
    for name, side in (("dev", dev), ("blind", blind)):
        entries = []
        for reverb in (False, True):
            entries += build_synthetic_category(plan, reverb, side, master_seed, name,
                                                out_dir, config)
        out[name] = entries
    return out


def category_counts(entries: Sequence[TestSetEntry]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for e in entries:
        counts[e.category] = counts.get(e.category, 0) + 1
    return counts
