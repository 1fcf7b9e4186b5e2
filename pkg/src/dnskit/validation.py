"""Input validation helpers shared by the estimator wrappers."""
from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from .audio import SAMPLE_RATE, AudioClip
from .evaluation.ratings import RatingRecord


def check_clip(x, sample_rate_hz: int = SAMPLE_RATE, name: str = "clip") -> AudioClip:
    """Coerce ``x`` (an AudioClip or 1-D array-like) to a finite, non-empty AudioClip."""
    clip = x if isinstance(x, AudioClip) else AudioClip(np.asarray(x, dtype=np.float64),
                                                        sample_rate_hz)
    if len(clip) == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(clip.samples)):
        raise ValueError(f"{name} contains NaN or infinite samples")
    if clip.sample_rate_hz != sample_rate_hz:
        raise ValueError(f"{name}: sample rate {clip.sample_rate_hz} Hz, expected {sample_rate_hz}")
    return clip


def check_clips(X, sample_rate_hz: int = SAMPLE_RATE) -> list[AudioClip]:
    """Accept a 2-D array (one clip per row) or a sequence of clips/arrays."""
    if isinstance(X, AudioClip):
        raise TypeError("expected a collection of clips, got a single AudioClip")
    if isinstance(X, np.ndarray):
        if X.ndim != 2:
            raise ValueError(f"expected a 2-D array of clips, got shape {X.shape}")
        rows = list(X)
    else:
        rows = list(X)
    if not rows:
        raise ValueError("no clips given")
    return [check_clip(r, sample_rate_hz, name=f"clip {i}") for i, r in enumerate(rows)]


def as_output(clips: list[AudioClip], like):
    """Return clips in the container style of ``like`` (2-D array in, 2-D array out)."""
    if isinstance(like, np.ndarray) and len({len(c) for c in clips}) == 1:
        return np.vstack([c.samples for c in clips])
    return clips


def check_range(value, name: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in value)
    if lo > hi:
        raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
    return lo, hi


def check_ratings(ratings) -> list[RatingRecord]:
    """Accept RatingRecords, mappings with the CSV columns, or a DataFrame."""
    if hasattr(ratings, "to_dict") and hasattr(ratings, "columns"):
        ratings = ratings.to_dict(orient="records")
    out = []
    for r in ratings:
        if isinstance(r, RatingRecord):
            out.append(r)
        elif isinstance(r, Mapping):
            d = {k: (None if _missing(v) else v) for k, v in r.items()}
            out.append(RatingRecord(**d))
        else:
            raise TypeError(f"cannot interpret {type(r).__name__} as a rating")
    return out


def _missing(v) -> bool:
    return v is None or v == "" or (isinstance(v, float) and np.isnan(v))
