"""Corpus manifests (JSON lines) and clip loading."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Optional

from .audio import AudioClip, read_wav


@dataclass(frozen=True)
class ClipManifestEntry:
    clip_id: str
    path: str
    duration_s: float
    labels: frozenset = field(default_factory=frozenset)
    speaker_id: Optional[str] = None
    chapter_id: Optional[str] = None
    # excerpt offset into ``path`` for segments cut from a longer file
    offset_s: float = 0.0
    source_id: Optional[str] = None
    rt60_ms: Optional[float] = None

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError(f"{self.clip_id}: duration must be positive, got {self.duration_s}")
        object.__setattr__(self, "labels", frozenset(self.labels))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["labels"] = sorted(self.labels)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClipManifestEntry":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown manifest fields: {sorted(unknown)}")
        d = dict(d)
        d["labels"] = frozenset(d.get("labels") or ())
        return cls(**d)


def write_jsonl(records: Iterable[Mapping], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from exc


def load_manifest(path) -> list[ClipManifestEntry]:
    return [ClipManifestEntry.from_dict(d) for d in read_jsonl(path)]


def save_manifest(entries: Iterable[ClipManifestEntry], path) -> None:
    write_jsonl((e.to_dict() for e in entries), path)


class Corpus:
    """Indexed collection of manifest entries with a clip loader.

    The default loader decodes ``entry.path`` (relative paths resolve against
    ``root``) and cuts out ``[offset_s, offset_s + duration_s)``. Tests and
    in-memory pipelines can pass any ``loader(entry) -> AudioClip``.
    """

    def __init__(self, entries: Iterable[ClipManifestEntry], root=None,
                 loader: Optional[Callable[[ClipManifestEntry], AudioClip]] = None):
        self.entries = list(entries)
        self.by_id = {}
        for e in self.entries:
            if e.clip_id in self.by_id:
                raise ValueError(f"duplicate clip id {e.clip_id!r}")
            self.by_id[e.clip_id] = e
        self.root = Path(root) if root is not None else None
        self._loader = loader

    def __len__(self):
        return len(self.entries)

    def __contains__(self, clip_id):
        return clip_id in self.by_id

    def __getitem__(self, clip_id) -> ClipManifestEntry:
        try:
            return self.by_id[clip_id]
        except KeyError:
            raise KeyError(f"clip {clip_id!r} not in corpus") from None

    def subset(self, clip_ids: Iterable[str]) -> "Corpus":
        keep = set(clip_ids)
        return Corpus([e for e in self.entries if e.clip_id in keep], self.root, self._loader)

    def resolve(self, entry: ClipManifestEntry) -> Path:
        p = Path(entry.path)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def load(self, clip_id: str) -> AudioClip:
        entry = self[clip_id]
        if self._loader is not None:
            return self._loader(entry)
        clip = read_wav(self.resolve(entry))
        if entry.offset_s == 0.0 and abs(clip.duration_s - entry.duration_s) < 1.0 / clip.sample_rate_hz:
            return clip
        return clip.slice_seconds(entry.offset_s, entry.duration_s)
