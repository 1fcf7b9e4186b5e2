"""ACR rating records, the shared ratings CSV format and spam-rater filtering."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

CSV_FIELDS = ("rater_id", "clip_id", "group_id", "score", "timestamp", "trap_answer",
              "gold_delta")

GOLD_TOLERANCE = 1.0
MAX_FAIL_FRACTION = 0.5
TRAP_EXPECTED = 2


@dataclass(frozen=True)
class RatingRecord:
    rater_id: str
    clip_id: str
    group_id: str
    score: int
    timestamp: str = ""
    trap_answer: Optional[int] = None
    gold_delta: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.score, float) and not self.score.is_integer():
            raise ValueError(f"score must be an integer 1..5, got {self.score}")
        score = int(self.score)
        if score not in (1, 2, 3, 4, 5):
            raise ValueError(f"score must be an integer 1..5, got {self.score}")
        object.__setattr__(self, "score", score)


def _opt(value, cast):
    if value is None or value == "":
        return None
    return cast(value)


def read_ratings(path) -> list[RatingRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: ratings CSV lacks columns {sorted(missing)}")
        out = []
        for lineno, row in enumerate(reader, 2):
            try:
                out.append(RatingRecord(
                    rater_id=row["rater_id"], clip_id=row["clip_id"], group_id=row["group_id"],
                    score=int(row["score"]), timestamp=row["timestamp"] or "",
                    trap_answer=_opt(row["trap_answer"], int),
                    gold_delta=_opt(row["gold_delta"], float)))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_ratings(ratings: Iterable[RatingRecord], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in ratings:
            w.writerow([r.rater_id, r.clip_id, r.group_id, r.score, r.timestamp,
                        "" if r.trap_answer is None else r.trap_answer,
                        "" if r.gold_delta is None else repr(r.gold_delta)])


@dataclass
class RaterVerdict:
    rater_id: str
    submissions: int
    invalid_submissions: int
    discarded: bool
    # group ids of invalid submissions with the rule that fired
    reasons: dict = field(default_factory=dict)

    @property
    def fail_fraction(self) -> float:
        return self.invalid_submissions / self.submissions if self.submissions else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fail_fraction"] = self.fail_fraction
        return d


@dataclass
class SpamReport:
    gold_tolerance: float
    max_fail_fraction: float
    verdicts: dict = field(default_factory=dict)
    ratings_in: int = 0
    ratings_out: int = 0

    @property
    def discarded_raters(self) -> list[str]:
        return sorted(r for r, v in self.verdicts.items() if v.discarded)

    def to_dict(self) -> dict:
        return {"gold_tolerance": self.gold_tolerance,
                "max_fail_fraction": self.max_fail_fraction,
                "ratings_in": self.ratings_in, "ratings_out": self.ratings_out,
                "discarded_raters": self.discarded_raters,
                "verdicts": [self.verdicts[k].to_dict() for k in sorted(self.verdicts)]}


def _expected_trap(trap_expected, group_id):
    if isinstance(trap_expected, Mapping):
        return trap_expected.get(group_id, TRAP_EXPECTED)
    return trap_expected


def submission_problems(rows: Sequence[RatingRecord], gold_tolerance: float,
                        expected_trap: int) -> list[str]:
    """Rules violated by one (rater, group) submission; empty when valid.

    Missing trap or gold fields are not checked.
    """
    problems = []
    traps = {r.trap_answer for r in rows if r.trap_answer is not None}
    if traps and traps != {expected_trap}:
        problems.append(f"trap answered {sorted(traps)}, expected {expected_trap}")
    golds = [r.gold_delta for r in rows if r.gold_delta is not None]
    if any(abs(g) > gold_tolerance for g in golds):
        problems.append(f"gold deviation {max(golds, key=abs):+g} beyond ±{gold_tolerance:g}")
    return problems


def filter_spam_raters(ratings: Sequence[RatingRecord], gold_tolerance: float = GOLD_TOLERANCE,
                       max_fail_fraction: float = MAX_FAIL_FRACTION,
                       trap_expected: Union[int, Mapping[str, int]] = TRAP_EXPECTED
                       ) -> tuple[list[RatingRecord], SpamReport]:
    """Drop invalid group submissions, and every rating of raters who fail too often.

    A submission (one rater's ratings of one group) is invalid when its trap
    answer differs from the expected one or its gold deviation exceeds
    ``gold_tolerance``. A rater whose invalid fraction exceeds
    ``max_fail_fraction`` is discarded entirely. Surviving records are
    returned unchanged and in input order.
    """
    submissions: dict[tuple, list[RatingRecord]] = defaultdict(list)
    for r in ratings:
        submissions[(r.rater_id, r.group_id)].append(r)

    report = SpamReport(gold_tolerance, max_fail_fraction, ratings_in=len(ratings))
    invalid: set[tuple] = set()
    per_rater: dict[str, list[tuple]] = defaultdict(list)
    for key, rows in submissions.items():
        per_rater[key[0]].append(key)
        problems = submission_problems(rows, gold_tolerance, _expected_trap(trap_expected, key[1]))
        if problems:
            invalid.add(key)
            report.verdicts.setdefault(key[0], RaterVerdict(key[0], 0, 0, False))
            report.verdicts[key[0]].reasons[key[1]] = problems

    discarded = set()
    for rater, keys in per_rater.items():
        v = report.verdicts.setdefault(rater, RaterVerdict(rater, 0, 0, False))
        v.submissions = len(keys)
        v.invalid_submissions = sum(k in invalid for k in keys)
        v.discarded = v.fail_fraction > max_fail_fraction
        if v.discarded:
            discarded.add(rater)

    kept = [r for r in ratings
            if r.rater_id not in discarded and (r.rater_id, r.group_id) not in invalid]
    report.ratings_out = len(kept)
    return kept, report


def split_clip_id(clip_id: str) -> tuple[str, str, str]:
    """``model/category/name`` -> parts; shorter ids fill model then category with ``all``."""
    parts = clip_id.split("/")
    if len(parts) >= 3:
        return parts[0], parts[1], "/".join(parts[2:])
    if len(parts) == 2:
        return parts[0], "all", parts[1]
    return "all", "all", parts[0]


def exclude_clips(ratings: Iterable[RatingRecord], clip_ids: Iterable[str]) -> list[RatingRecord]:
    drop = set(clip_ids)
    return [r for r in ratings if r.clip_id not in drop]


def per_clip_means(ratings: Iterable[RatingRecord], strip_model: bool = True) -> dict[str, float]:
    """Mean score per clip. With ``strip_model`` the model prefix is removed so
    the same test clip lines up across models."""
    scores: dict[str, list[int]] = defaultdict(list)
    for r in ratings:
        key = r.clip_id
        if strip_model:
            _, category, name = split_clip_id(r.clip_id)
            key = f"{category}/{name}"
        scores[key].append(r.score)
    return {k: math.fsum(v) / len(v) for k, v in scores.items()}


def group_by_model(ratings: Iterable[RatingRecord]) -> dict[str, list[RatingRecord]]:
    out: dict[str, list[RatingRecord]] = defaultdict(list)
    for r in ratings:
        out[split_clip_id(r.clip_id)[0]].append(r)
    return dict(out)
