"""Frame-energy activity detection and active-frame (segmental) RMS."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip

DEFAULT_THRESHOLD_DBFS = -50.0
DEFAULT_FRAME_MS = 20.0


class NoActivityError(ValueError):
    """Raised when a mask has no active frame."""


@dataclass(frozen=True, eq=False)
class ActivityMask:
    frame_length_samples: int
    active: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "active", np.asarray(self.active, dtype=bool))
        if self.frame_length_samples <= 0:
            raise ValueError("frame length must be positive")

    @property
    def n_frames(self) -> int:
        return self.active.shape[0]

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))

    def __and__(self, other: "ActivityMask") -> "ActivityMask":
        if other.frame_length_samples != self.frame_length_samples or other.n_frames != self.n_frames:
            raise ValueError("masks have different framing")
        return ActivityMask(self.frame_length_samples, self.active & other.active)

    def sample_mask(self, n_samples: int) -> np.ndarray:
        """Per-sample boolean mask; the discarded tail is always inactive."""
        out = np.zeros(n_samples, dtype=bool)
        covered = self.n_frames * self.frame_length_samples
        out[:covered] = np.repeat(self.active, self.frame_length_samples)
        return out


@dataclass(frozen=True)
class MaskParams:
    """Activity detector settings used when measuring segmental levels.

    ``joint=True`` restricts both signals to frames where speech *and* noise
    are active; the default measures each signal over its own active frames.
    """

    threshold_dbfs: float = DEFAULT_THRESHOLD_DBFS
    frame_ms: float = DEFAULT_FRAME_MS
    joint: bool = False


def frame_length(frame_ms: float, sample_rate_hz: int) -> int:
    n = frame_ms * sample_rate_hz / 1000.0
    n_int = int(round(n))
    if n_int <= 0 or not math.isclose(n, n_int, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"{frame_ms} ms is not a whole number of samples at {sample_rate_hz} Hz")
    return n_int


def frame_mean_square(samples: np.ndarray, frame_len: int) -> np.ndarray:
    n_frames = samples.shape[0] // frame_len
    frames = samples[:n_frames * frame_len].reshape(n_frames, frame_len)
    return np.mean(frames * frames, axis=1)


def detect_activity(clip: AudioClip, threshold_dbfs: float = DEFAULT_THRESHOLD_DBFS,
                    frame_ms: float = DEFAULT_FRAME_MS) -> ActivityMask:
    """Mark each non-overlapping frame active iff its RMS exceeds ``threshold_dbfs``.

    A trailing partial frame is dropped rather than zero-padded.
    """
    n = frame_length(frame_ms, clip.sample_rate_hz)
    if len(clip) < n:
        raise ValueError(f"clip of {len(clip)} samples is shorter than one {n}-sample frame")
    ms = frame_mean_square(clip.samples, n)
    # compare in the power domain so silent frames never hit log10(0)
    return ActivityMask(n, ms > 10.0 ** (threshold_dbfs / 10.0))


def active_samples(clip: AudioClip, mask: ActivityMask) -> np.ndarray:
    n_frames = mask.n_frames
    frames = clip.samples[:n_frames * mask.frame_length_samples].reshape(
        n_frames, mask.frame_length_samples)
    return frames[mask.active].ravel()


def segmental_rms_dbfs(clip: AudioClip, mask: ActivityMask) -> float:
    if len(clip) // mask.frame_length_samples != mask.n_frames:
        raise ValueError("mask framing does not match clip length")
    if mask.n_active == 0:
        raise NoActivityError("no activity: mask has no active frame")
    x = active_samples(clip, mask)
    power = float(np.mean(x * x))
    if power == 0.0:
        raise NoActivityError("no activity: active frames are silent")
    return 10.0 * math.log10(power)


def signal_masks(speech: AudioClip, noise: AudioClip,
                 params: MaskParams = MaskParams()) -> tuple[ActivityMask, ActivityMask]:
    """Masks over which speech and noise levels are measured for segmental SNR."""
    s_mask = detect_activity(speech, params.threshold_dbfs, params.frame_ms)
    n_mask = detect_activity(noise, params.threshold_dbfs, params.frame_ms)
    if params.joint:
        both = s_mask & n_mask
        return both, both
    return s_mask, n_mask


def segmental_snr_db(speech: AudioClip, noise: AudioClip, speech_mask: ActivityMask,
                     noise_mask: ActivityMask) -> float:
    return segmental_rms_dbfs(speech, speech_mask) - segmental_rms_dbfs(noise, noise_mask)
