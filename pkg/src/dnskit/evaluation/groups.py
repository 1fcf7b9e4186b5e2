"""Rating-group plans: payload clips plus one gold and one trap per group."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .. import seeding


class GroupPlanError(ValueError):
    pass


@dataclass(frozen=True)
class RatingGroup:
    group_id: str
    payload_clip_ids: tuple
    gold_clip_id: str
    trap_clip_id: str
    presentation_order: tuple

    @property
    def clip_ids(self) -> tuple:
        return self.payload_clip_ids + (self.gold_clip_id, self.trap_clip_id)

    def to_dict(self) -> dict:
        return {"group_id": self.group_id, "payload_clip_ids": list(self.payload_clip_ids),
                "gold_clip_id": self.gold_clip_id, "trap_clip_id": self.trap_clip_id,
                "presentation_order": list(self.presentation_order)}

    @classmethod
    def from_dict(cls, d) -> "RatingGroup":
        return cls(d["group_id"], tuple(d["payload_clip_ids"]), d["gold_clip_id"],
                   d["trap_clip_id"], tuple(d["presentation_order"]))


def _round_permutation(clips, rng, avoid, head):
    """Permutation of ``clips`` whose first ``head`` items avoid ``avoid``."""
    perm = [clips[i] for i in rng.permutation(len(clips))]
    if not avoid or head == 0:
        return perm
    # swap clashing head items with the earliest non-clashing tail items
    tail_ok = [i for i in range(head, len(perm)) if perm[i] not in avoid]
    k = 0
    for i in range(head):
        if perm[i] in avoid:
            j = tail_ok[k]
            k += 1
            perm[i], perm[j] = perm[j], perm[i]
    return perm


def assemble_groups(clips: Sequence[str], group_size: int = 10, raters_per_clip: int = 10,
                    gold_pool: Sequence[str] = (), trap_pool: Sequence[str] = (),
                    master_seed: int = 0) -> list[RatingGroup]:
    """Pack every clip into exactly ``raters_per_clip`` groups of ``group_size - 2``
    payload clips; each group also gets one gold and one trap clip (round-robin
    from the pools) and a seeded presentation order.
    """
    if group_size < 3:
        raise GroupPlanError(f"group_size {group_size} leaves no room for payload "
                             "next to the gold and trap clips")
    if not gold_pool or not trap_pool:
        raise GroupPlanError("gold and trap pools must be non-empty")
    if raters_per_clip < 1:
        raise GroupPlanError("raters_per_clip must be >= 1")
    clips = list(clips)
    if len(set(clips)) != len(clips):
        raise GroupPlanError("duplicate clip ids in payload list")
    controls = set(gold_pool) | set(trap_pool)
    if controls & set(clips):
        raise GroupPlanError("gold/trap clips must not also be payload clips")
    payload = group_size - 2
    slots = len(clips) * raters_per_clip
    if len(clips) < payload or slots % payload:
        raise GroupPlanError(
            f"cannot cover {len(clips)} clips x {raters_per_clip} ratings with groups of "
            f"{payload} payload clips ({slots} slots not a multiple of {payload}, or fewer "
            f"clips than one group's payload)")

    rng = seeding.stream(master_seed, "groups")
    sequence: list[str] = []
    for _ in range(raters_per_clip):
        # a group straddling two rounds must not repeat a clip
        used_tail = len(sequence) % payload
        avoid = set(sequence[len(sequence) - used_tail:]) if used_tail else set()
        sequence += _round_permutation(clips, rng, avoid, payload - used_tail if used_tail else 0)

    groups = []
    for g in range(slots // payload):
        members = tuple(sequence[g * payload:(g + 1) * payload])
        gold = gold_pool[g % len(gold_pool)]
        trap = trap_pool[g % len(trap_pool)]
        items = list(members) + [gold, trap]
        order = tuple(items[i] for i in rng.permutation(len(items)))
        groups.append(RatingGroup(f"g{g:06d}", members, gold, trap, order))
    return groups


def membership_counts(groups: Sequence[RatingGroup]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for g in groups:
        for c in g.payload_clip_ids:
            counts[c] = counts.get(c, 0) + 1
    return counts
