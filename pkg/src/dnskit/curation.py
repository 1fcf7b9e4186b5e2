"""Source-corpus preparation: chapter quality selection, speaker filtering,
fixed-length segmentation, speech removal and multi-label class balancing.
"""
from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .audio import AudioClip
from .manifest import ClipManifestEntry

logger = logging.getLogger(__name__)

SEGMENTS_PER_CHAPTER = 10
SEGMENT_S = 10.0
MOS_THRESHOLD = 4.3
SPEAKER_MIN_MINUTES = 15.0
CLASS_FLOOR = 500

DEFAULT_SPEECH_LABELS = frozenset({
    "speech", "male speech", "female speech", "child speech", "conversation",
    "narration", "monologue", "babbling", "speech synthesizer", "whispering",
    "singing", "chant", "shout", "yell", "laughter",
})

_EPS = 1e-9


@dataclass(frozen=True)
class ChapterQuality:
    chapter_id: str
    segment_ratings: tuple

    def __post_init__(self):
        ratings = tuple((str(seg), int(score)) for seg, score in self.segment_ratings)
        for seg, score in ratings:
            if not 1 <= score <= 5:
                raise ValueError(f"{self.chapter_id}/{seg}: score {score} outside 1..5")
        object.__setattr__(self, "segment_ratings", ratings)

    @property
    def chapter_mos(self) -> float:
        if not self.segment_ratings:
            raise ValueError(f"chapter {self.chapter_id} has no ratings")
        return math.fsum(s for _, s in self.segment_ratings) / len(self.segment_ratings)


@dataclass(frozen=True, eq=False)
class ChapterExcerpt:
    chapter_id: str
    index: int
    offset_s: float
    clip: AudioClip

    @property
    def segment_id(self) -> str:
        return f"{self.chapter_id}#{self.index}"


def excerpt_offsets(n_samples: int, segment_samples: int, rng: np.random.Generator,
                    count: int = SEGMENTS_PER_CHAPTER) -> np.ndarray:
    """Distinct, sorted sample offsets for up to ``count`` excerpts."""
    n_starts = n_samples - segment_samples + 1
    if n_starts < 1:
        raise ValueError("chapter shorter than one segment")
    k = min(count, n_starts)
    return np.sort(rng.choice(n_starts, size=k, replace=False))


def sample_chapter_segments(chapter: AudioClip, rng: np.random.Generator, chapter_id: str = "",
                            count: int = SEGMENTS_PER_CHAPTER,
                            segment_s: float = SEGMENT_S) -> list[ChapterExcerpt]:
    """Cut up to ``count`` rating excerpts of ``segment_s`` seconds at random offsets.

    Excerpts of short chapters may overlap; their start offsets never coincide.
    """
    seg = int(round(segment_s * chapter.sample_rate_hz))
    if len(chapter) < seg:
        raise ValueError(f"chapter {chapter_id!r} is {chapter.duration_s:.2f} s, "
                         f"shorter than one {segment_s} s segment")
    offsets = excerpt_offsets(len(chapter), seg, rng, count)
    if len(offsets) < count:
        logger.warning("chapter %r yields only %d of %d excerpts", chapter_id, len(offsets), count)
    return [ChapterExcerpt(chapter_id, i, int(o) / chapter.sample_rate_hz,
                           chapter.with_samples(chapter.samples[o:o + seg]))
            for i, o in enumerate(offsets)]


def select_clean_chapters(qualities: Sequence[ChapterQuality], policy: str = "quartile",
                          threshold: float = MOS_THRESHOLD) -> list[str]:
    """Chapter ids kept as clean speech.

    ``quartile`` keeps the top 25 % by chapter MOS, all ties at the cut included;
    ``threshold`` keeps chapters with MOS >= ``threshold``. Ids come back in input order.
    """
    if not qualities:
        raise ValueError("no chapters to select from")
    mos = [q.chapter_mos for q in qualities]
    if policy == "quartile":
        k = math.ceil(0.25 * len(mos))
        cut = sorted(mos, reverse=True)[k - 1]
    elif policy == "threshold":
        cut = threshold
    else:
        raise ValueError(f"unknown selection policy {policy!r}")
    return [q.chapter_id for q, m in zip(qualities, mos) if m >= cut - _EPS]


def filter_speakers_by_duration(entries: Sequence[ClipManifestEntry],
                                min_minutes: float = SPEAKER_MIN_MINUTES) -> list[ClipManifestEntry]:
    totals: dict[str, list[float]] = defaultdict(list)
    for e in entries:
        if e.speaker_id is None:
            raise ValueError(f"{e.clip_id}: missing speaker_id")
        totals[e.speaker_id].append(e.duration_s)
    keep = {spk for spk, d in totals.items() if math.fsum(d) >= min_minutes * 60.0 - _EPS}
    return [e for e in entries if e.speaker_id in keep]


def segment_clips(entries: Iterable[ClipManifestEntry],
                  segment_s: float = SEGMENT_S) -> list[ClipManifestEntry]:
    """Split each entry into whole ``segment_s`` pieces; the remainder is dropped."""
    if segment_s <= 0:
        raise ValueError("segment_s must be positive")
    out = []
    for e in entries:
        n = int(math.floor(e.duration_s / segment_s + _EPS))
        for k in range(n):
            out.append(replace(e, clip_id=f"{e.clip_id}_seg{k:04d}", duration_s=segment_s,
                               offset_s=e.offset_s + k * segment_s,
                               source_id=e.source_id or e.clip_id))
    return out


def remove_speech_clips(entries: Iterable[ClipManifestEntry],
                        speech_labels: Iterable[str] = DEFAULT_SPEECH_LABELS,
                        detector: Optional[Callable[[ClipManifestEntry], bool]] = None
                        ) -> list[ClipManifestEntry]:
    """Drop entries labelled with any speech class or flagged by ``detector``.

    Label matching is case-insensitive. A detector error keeps the clip and logs
    a warning.
    """
    speech = {s.lower() for s in speech_labels}
    kept = []
    for e in entries:
        if any(lab.lower() in speech for lab in e.labels):
            continue
        if detector is not None:
            try:
                if detector(e):
                    continue
            except Exception as exc:
                logger.warning("speech detector failed on %s (%s); keeping clip", e.clip_id, exc)
        kept.append(e)
    return kept


@dataclass
class BalanceReport:
    floor: int
    available: dict = field(default_factory=dict)
    selected_counts: dict = field(default_factory=dict)
    # classes whose availability is below the floor: class -> available count
    deficient: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"floor": self.floor, "available": dict(sorted(self.available.items())),
                "selected_counts": dict(sorted(self.selected_counts.items())),
                "deficient": dict(sorted(self.deficient.items()))}


def balance_classes(entries: Sequence[ClipManifestEntry],
                    floor_per_class: int = CLASS_FLOOR) -> tuple[list[ClipManifestEntry], BalanceReport]:
    """Greedy multi-cover selection giving every class ``min(floor, available)`` clips.

    At each step the class furthest below its target picks, among its unselected
    clips, the one carrying the most still-deficient classes (ties by clip id).
    Multi-label clips count toward every label they carry.
    """
    if floor_per_class < 1:
        raise ValueError("floor_per_class must be >= 1")
    ordered = sorted(entries, key=lambda e: e.clip_id)
    by_class: dict[str, list[int]] = defaultdict(list)
    for i, e in enumerate(ordered):
        for lab in e.labels:
            by_class[lab].append(i)
    available = {c: len(ix) for c, ix in by_class.items()}
    target = {c: min(floor_per_class, n) for c, n in available.items()}
    count = Counter({c: 0 for c in by_class})
    selected = [False] * len(ordered)
    cursor = {c: 0 for c in by_class}

    def deficit(c):
        return target[c] - count[c]

    open_classes = {c for c in by_class if deficit(c) > 0}
    while open_classes:
        c_star = min(open_classes, key=lambda c: (-deficit(c), c))
        best, best_score = None, -1
        for i in by_class[c_star][cursor[c_star]:]:
            if selected[i]:
                continue
            score = sum(1 for lab in ordered[i].labels if lab in open_classes)
            if score > best_score:
                best, best_score = i, score
                if score == len(open_classes):
                    break
        selected[best] = True
        for lab in ordered[best].labels:
            count[lab] += 1
            if lab in open_classes and deficit(lab) <= 0:
                open_classes.discard(lab)
        # skip the already-selected prefix next time this class is scanned
        ix = by_class[c_star]
        while cursor[c_star] < len(ix) and selected[ix[cursor[c_star]]]:
            cursor[c_star] += 1

    chosen = [e for e, s in zip(ordered, selected) if s]
    report = BalanceReport(
        floor=floor_per_class, available=available, selected_counts=dict(count),
        deficient={c: n for c, n in available.items() if n < floor_per_class})
    for c, n in report.deficient.items():
        logger.info("class %r has only %d clips (< floor %d); all taken", c, n, floor_per_class)
    return chosen, report
