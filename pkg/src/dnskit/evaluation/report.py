"""Per-model MOS / dMOS / CI tables built from rating records."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .ratings import RatingRecord, group_by_model, split_clip_id
from .stats import MosSummary, dmos, mos_summary

OVERALL = "overall"


@dataclass
class ModelScores:
    model: str
    complexity: Optional[str] = None
    # category -> summary, plus OVERALL
    categories: dict = field(default_factory=dict)

    @property
    def overall(self) -> MosSummary:
        return self.categories[OVERALL]

    def to_dict(self) -> dict:
        return {"model": self.model, "complexity": self.complexity,
                "mos": self.overall.mos, "ci95": self.overall.ci95,
                "dmos": self.overall.dmos, "n_ratings": self.overall.n_ratings,
                "categories": {k: v.to_dict() for k, v in sorted(self.categories.items())}}


def score_model(model: str, ratings: Sequence[RatingRecord],
                noisy: Optional["ModelScores"] = None,
                complexity: Optional[str] = None) -> ModelScores:
    """Condition-level summaries per category and overall (all ratings pooled)."""
    by_cat: dict[str, list[int]] = {}
    for r in ratings:
        by_cat.setdefault(split_clip_id(r.clip_id)[1], []).append(r.score)
    out = ModelScores(model, complexity)
    pools = dict(by_cat)
    pools[OVERALL] = [r.score for r in ratings]
    for cat, scores in pools.items():
        s = mos_summary(scores, "model-overall" if cat == OVERALL else "condition",
                        label=f"{model}:{cat}")
        if noisy is not None and cat in noisy.categories:
            s = MosSummary(s.scope, s.mos, s.n_ratings, s.ci95,
                           dmos(s, noisy.categories[cat]), s.label)
        out.categories[cat] = s
    return out


def score_models(ratings: Iterable[RatingRecord], noisy_ratings: Sequence[RatingRecord] = (),
                 complexity: Optional[dict] = None) -> tuple[list[ModelScores], Optional[ModelScores]]:
    complexity = complexity or {}
    noisy = score_model("noisy", list(noisy_ratings)) if noisy_ratings else None
    if noisy is not None:
        for cat, s in list(noisy.categories.items()):
            noisy.categories[cat] = MosSummary(s.scope, s.mos, s.n_ratings, s.ci95, 0.0, s.label)
    models = [score_model(m, rs, noisy, complexity.get(m))
              for m, rs in sorted(group_by_model(ratings).items())]
    models.sort(key=lambda m: -m.overall.mos)
    return models, noisy


def mos_table(models: Sequence[ModelScores], noisy: Optional[ModelScores] = None) -> str:
    """Text table: per category MOS and dMOS, then overall MOS, dMOS and 95% CI."""
    cats = sorted({c for m in models for c in m.categories if c != OVERALL})
    head = f"{'Model':<16}{'Cplx':<6}"
    for c in cats + [OVERALL]:
        head += f"{c[:12] + ' MOS':>17}{'dMOS':>7}"
    head += f"{'95% CI':>8}"
    lines = [head]
    rows = list(models) + ([noisy] if noisy is not None else [])
    for m in rows:
        line = f"{m.model:<16}{(m.complexity or ''):<6}"
        for c in cats + [OVERALL]:
            s = m.categories.get(c)
            if s is None:
                line += f"{'-':>17}{'-':>7}"
            else:
                d = "-" if s.dmos is None else f"{s.dmos:.2f}"
                line += f"{s.mos:>17.2f}{d:>7}"
        line += f"{m.overall.ci95:>8.2f}"
        lines.append(line)
    return "\n".join(lines)
