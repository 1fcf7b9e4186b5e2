"""Model ranking by overall MOS with a complexity tie-break inside clusters of
statistically indistinguishable neighbours.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Optional, Union

from .stats import MosSummary, PValueMatrix

COMPLEXITY_ORDER = {"RT": 0.0, "NRT": 1.0}
N_PRIZES = 3


@dataclass(frozen=True)
class RankingEntry:
    rank: int
    model: str
    mos: float
    mos_rank: int
    cluster: int
    complexity: Optional[Union[str, float]]
    prize: Optional[int]
    rationale: str

    def to_dict(self) -> dict:
        return asdict(self)


def complexity_cost(tag) -> float:
    if isinstance(tag, (int, float)) and not isinstance(tag, bool):
        return float(tag)
    key = str(tag).upper()
    if key not in COMPLEXITY_ORDER:
        raise ValueError(f"unknown complexity tag {tag!r}; use RT, NRT or a numeric cost")
    return COMPLEXITY_ORDER[key]


def _mos(value) -> float:
    return value.mos if isinstance(value, MosSummary) else float(value)


def rank_models(summaries: Mapping[str, Union[MosSummary, float]], p_matrix: PValueMatrix,
                complexity_tags: Optional[Mapping[str, object]] = None,
                n_prizes: int = N_PRIZES) -> list[RankingEntry]:
    """Rank models by overall MOS, then reorder overlap clusters by complexity.

    Neighbours in MOS order whose pairwise p-value is at or above the matrix
    threshold are chained into one cluster; within a cluster the lower
    complexity ranks higher (MOS, then model id, break remaining ties).
    """
    complexity_tags = dict(complexity_tags or {})
    models = sorted(summaries, key=lambda m: (-_mos(summaries[m]), str(m)))
    if not models:
        return []
    clusters = [[models[0]]]
    for prev, cur in zip(models, models[1:]):
        if p_matrix.pvalue(prev, cur) >= p_matrix.threshold:
            clusters[-1].append(cur)
        else:
            clusters.append([cur])

    out = []
    mos_rank = {m: i + 1 for i, m in enumerate(models)}
    for cid, members in enumerate(clusters):
        if len(members) > 1:
            missing = [m for m in members if m not in complexity_tags]
            if missing:
                raise ValueError(f"missing complexity tag for clustered models {missing}")
            members = sorted(members, key=lambda m: (complexity_cost(complexity_tags[m]),
                                                     -_mos(summaries[m]), str(m)))
        for m in members:
            rank = len(out) + 1
            if len(members) == 1:
                why = "distinct by significance; MOS order"
            else:
                others = ", ".join(str(o) for o in members if o != m)
                why = (f"overlaps with {others} (p >= {p_matrix.threshold:g}); "
                       f"ordered by complexity {complexity_tags[m]}")
            out.append(RankingEntry(
                rank=rank, model=m, mos=_mos(summaries[m]), mos_rank=mos_rank[m], cluster=cid,
                complexity=complexity_tags.get(m), prize=rank if rank <= n_prizes else None,
                rationale=why))
    return out


def ranking_table(entries) -> str:
    lines = [f"{'Rank':>4}  {'Model':<16}{'MOS':>6}  {'MOS rank':>8}  {'Cplx':>5}  "
             f"{'Prize':>5}  Rationale"]
    for e in entries:
        prize = str(e.prize) if e.prize else "-"
        cplx = "-" if e.complexity is None else str(e.complexity)
        lines.append(f"{e.rank:>4}  {str(e.model):<16}{e.mos:>6.2f}  {e.mos_rank:>8}  "
                     f"{cplx:>5}  {prize:>5}  {e.rationale}")
    return "\n".join(lines)
