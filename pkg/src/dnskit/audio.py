"""Waveform I/O, level measurement and gain primitives.

All pipeline audio is mono 16 kHz; on disk it is 16-bit little-endian PCM.
Levels are RMS levels in dBFS where an RMS of 1.0 (a full-scale square wave)
is 0 dBFS.
"""
from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000
SAMPLE_WIDTH_BYTES = 2
PCM_SCALE = 32768.0
DEFAULT_CEILING = 0.99


class AudioFormatError(ValueError):
    """WAV file uses a format outside the pipeline contract."""


class WavParseError(ValueError):
    """WAV container is truncated or corrupt."""


class SilentClipError(ValueError):
    """Level is undefined because the clip is all zeros."""


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"AudioClip must be mono (1-D), got shape {samples.shape}")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self) else 0.0

    def with_samples(self, samples) -> "AudioClip":
        return AudioClip(samples, self.sample_rate_hz)

    def slice_seconds(self, start_s: float, duration_s: float) -> "AudioClip":
        start = int(round(start_s * self.sample_rate_hz))
        n = int(round(duration_s * self.sample_rate_hz))
        if start < 0 or n < 0 or start + n > len(self):
            raise ValueError(f"slice [{start_s}, {start_s + duration_s}) s outside a "
                             f"{self.duration_s:.3f} s clip")
        return self.with_samples(self.samples[start:start + n])


def read_wav(path) -> AudioClip:
    """Decode a 16 kHz mono 16-bit PCM WAV file into an :class:`AudioClip`."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            n_frames = fh.getnframes()
            if channels != 1:
                raise AudioFormatError(f"{path}: unsupported channel count {channels} (expected 1)")
            if width != SAMPLE_WIDTH_BYTES:
                raise AudioFormatError(
                    f"{path}: unsupported bit depth {8 * width} (expected 16)")
            if rate != SAMPLE_RATE:
                raise AudioFormatError(
                    f"{path}: unsupported sample rate {rate} Hz (expected {SAMPLE_RATE})")
            raw = fh.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise WavParseError(f"{path}: {exc}") from exc
    if len(raw) != n_frames * SAMPLE_WIDTH_BYTES:
        raise WavParseError(
            f"{path}: truncated data chunk ({len(raw)} bytes, header declares "
            f"{n_frames * SAMPLE_WIDTH_BYTES})")
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioClip(pcm.astype(np.float64) / PCM_SCALE, rate)


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as 16-bit PCM. Samples must already lie in [-1, 1]."""
    x = clip.samples
    if clip.sample_rate_hz != SAMPLE_RATE:
        raise AudioFormatError(
            f"unsupported sample rate {clip.sample_rate_hz} Hz (expected {SAMPLE_RATE})")
    if len(x) and (not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1.0):
        raise ValueError("samples outside [-1, 1]; run clipping_guard before writing")
    pcm = np.clip(np.rint(x * PCM_SCALE), -32768, 32767).astype("<i2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(SAMPLE_WIDTH_BYTES)
        fh.setframerate(SAMPLE_RATE)
        fh.writeframes(pcm.tobytes())


def rms(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("RMS of an empty signal is undefined")
    return math.sqrt(float(np.mean(x * x)))


def rms_dbfs(clip: AudioClip) -> float:
    """RMS level of ``clip`` in dBFS. Raises :class:`SilentClipError` for silence."""
    value = rms(clip.samples)
    if value == 0.0:
        raise SilentClipError("silent clip: RMS level is undefined")
    return 20.0 * math.log10(value)


def db_to_gain(db: float) -> float:
    return 10.0 ** (db / 20.0)


def gain_to_db(gain: float) -> float:
    return 20.0 * math.log10(gain)


def apply_gain_to_level(clip: AudioClip, target_dbfs: float) -> tuple[AudioClip, float]:
    """Scale ``clip`` so that its RMS level equals ``target_dbfs``.

    Returns the scaled clip and the linear gain that was applied.
    """
    current = rms_dbfs(clip)
    gain = db_to_gain(target_dbfs - current)
    return clip.with_samples(clip.samples * gain), gain


def clipping_guard(clip: AudioClip, ceiling: float = DEFAULT_CEILING) -> tuple[AudioClip, float]:
    """Rescale ``clip`` so its peak does not exceed ``ceiling``.

    A clip already at or under the ceiling is returned untouched with rescale 1.0.
    """
    if not 0.0 < ceiling <= 1.0:
        raise ValueError(f"ceiling must be in (0, 1], got {ceiling}")
    peak = clip.peak
    if peak <= ceiling:
        return clip, 1.0
    rescale = ceiling / peak
    # (ceiling / peak) * peak can round one ulp above the ceiling
    while peak * rescale > ceiling:
        rescale = float(np.nextafter(rescale, 0.0))
    return clip.with_samples(clip.samples * rescale), rescale
