"""Deterministic synthetic corpora for the test suite.

Speech stand-ins are harmonic syllables separated by near-silent gaps, so the
activity gate has real work to do. Noise clips are filtered or bursty noise.
Every clip is generated from its id, so corpora cost nothing until loaded.
"""
from __future__ import annotations

import zlib
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from dnskit.audio import SAMPLE_RATE, AudioClip, write_wav
from dnskit.manifest import ClipManifestEntry, Corpus, save_manifest

SR = SAMPLE_RATE


def _rng(key: str) -> np.random.Generator:
    return np.random.default_rng(zlib.crc32(key.encode()))


def speech_like(rng: np.random.Generator, seconds: float, level_dbfs: float = -25.0) -> np.ndarray:
    n = int(round(seconds * SR))
    out = 1e-5 * rng.standard_normal(n)
    f0 = rng.uniform(90, 220)
    pos = int(rng.uniform(0.0, 0.2) * SR)
    while pos < n:
        length = int(rng.uniform(0.1, 0.4) * SR)
        t = np.arange(length) / SR
        tone = sum(np.sin(2 * np.pi * f0 * k * t + rng.uniform(0, 2 * np.pi)) / k
                   for k in range(1, 6))
        seg = tone * np.hanning(length)
        end = min(n, pos + length)
        out[pos:end] += seg[:end - pos]
        pos = end + int(rng.uniform(0.05, 0.4) * SR)
    active = np.abs(out) > 1e-3
    gain = 10 ** (level_dbfs / 20) / np.sqrt(np.mean(out[active] ** 2))
    return np.clip(out * gain, -0.95, 0.95)


def noise_like(rng: np.random.Generator, seconds: float, bursty: bool = False) -> np.ndarray:
    n = int(round(seconds * SR))
    x = rng.standard_normal(n)
    # random one-pole colouring
    y = lfilter([1.0], [1.0, -rng.uniform(0.0, 0.95)], x)
    if bursty:
        env = np.repeat(rng.random(-(-n // 1600)) < 0.4, 1600)[:n]
        y = y * np.where(env, 1.0, 1e-3)
    level = 10 ** (rng.uniform(-32, -18) / 20)
    return np.clip(y * level / np.sqrt(np.mean(y ** 2)), -0.95, 0.95)


def rir_like(rng: np.random.Generator, rt60_ms: float) -> np.ndarray:
    n = int(SR * min(rt60_ms, 1500) / 1000 * 1.2) + 1
    t = np.arange(n) / SR
    decay = np.exp(-6.9 * t / (rt60_ms / 1000))
    h = rng.standard_normal(n) * decay * 0.1
    h[0] = 1.0
    return h


@lru_cache(maxsize=256)
def _generate(clip_id: str, kind: str, duration_s: float, rt60_ms) -> np.ndarray:
    rng = _rng(clip_id)
    if kind == "speech":
        return speech_like(rng, duration_s, level_dbfs=rng.uniform(-30, -20))
    if kind == "rir":
        return rir_like(rng, rt60_ms)
    return noise_like(rng, duration_s, bursty=(kind == "bursty"))


def procedural_loader(entry: ClipManifestEntry) -> AudioClip:
    if entry.rt60_ms is not None:
        kind = "rir"
    elif entry.labels:
        kind = "bursty" if {"typing", "door shutting", "clatter"} & entry.labels else "noise"
    else:
        kind = "speech"
    return AudioClip(_generate(entry.clip_id, kind, entry.duration_s, entry.rt60_ms).copy())


def speech_entries(n_speakers=4, clips_per_speaker=4, clip_s=8.0, prefix="spk"):
    return [ClipManifestEntry(f"{prefix}{s:03d}_c{c:02d}", f"speech/{prefix}{s:03d}_c{c:02d}.wav",
                              clip_s, speaker_id=f"{prefix}{s:03d}",
                              chapter_id=f"{prefix}{s:03d}_ch{c // 2}")
            for s in range(n_speakers) for c in range(clips_per_speaker)]


def noise_entries(class_counts: dict, clip_s=8.0):
    out = []
    for cls, count in class_counts.items():
        tag = cls.replace(" ", "_")
        out += [ClipManifestEntry(f"n_{tag}_{i:03d}", f"noise/n_{tag}_{i:03d}.wav", clip_s,
                                  labels=frozenset({cls})) for i in range(count)]
    return out


def rir_entries(rt60s):
    return [ClipManifestEntry(f"rir_{i:03d}", f"rir/rir_{i:03d}.wav",
                              round(int(SR * min(r, 1500) / 1000 * 1.2 + 1) / SR, 6),
                              rt60_ms=float(r)) for i, r in enumerate(rt60s)]


def memory_corpus(entries) -> Corpus:
    return Corpus(entries, loader=procedural_loader)


def write_corpus(entries, root: Path, manifest_name: str) -> Path:
    """Render entries to WAVs under ``root`` and save their manifest."""
    root = Path(root)
    for e in entries:
        clip = procedural_loader(e)
        write_wav(clip, root / e.path)
    path = root / manifest_name
    fixed = [ClipManifestEntry.from_dict({**e.to_dict(), "duration_s": round(
        len(procedural_loader(e)) / SR, 6)}) for e in entries]
    save_manifest(fixed, path)
    return path
