"""Noisy-speech synthesis: long-clip assembly, segmental-SNR mixing, level
normalization and optional reverberation, reproducible from per-recipe seeds.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from . import seeding
from .activity import (MaskParams, detect_activity, segmental_rms_dbfs, segmental_snr_db,
                       signal_masks)
from .audio import (DEFAULT_CEILING, AudioClip, SilentClipError, apply_gain_to_level,
                    clipping_guard, rms, rms_dbfs, write_wav)
from .manifest import ClipManifestEntry, Corpus, write_jsonl

logger = logging.getLogger(__name__)

MANIFEST_NAME = "mix_records.jsonl"


class InsufficientMaterialError(ValueError):
    pass


class SynthesisError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class SynthesisConfig:
    snr_range: tuple = (0.0, 40.0)
    level_range: tuple = (-35.0, -15.0)
    duration_s: float = 30.0
    ceiling: float = DEFAULT_CEILING
    mask: MaskParams = field(default_factory=MaskParams)
    rir_probability: float = 0.0
    # "reverberant" stores the reverberated speech as the clean reference, "dry" the source
    clean_target: str = "reverberant"
    set_name: str = "train"

    def __post_init__(self):
        for name in ("snr_range", "level_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if not 0.0 < self.ceiling <= 1.0:
            raise ValueError("ceiling must be in (0, 1]")
        if not 0.0 <= self.rir_probability <= 1.0:
            raise ValueError("rir_probability must be in [0, 1]")
        if self.clean_target not in ("reverberant", "dry"):
            raise ValueError("clean_target must be 'reverberant' or 'dry'")


@dataclass(frozen=True)
class MixRecipe:
    index: int
    speech_clip_ids: tuple
    noise_clip_ids: tuple
    snr_db: float
    target_level_dbfs: float
    seed: int
    rir_id: Optional[str] = None
    duration_s: float = 30.0
    set_name: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "speech_clip_ids", tuple(self.speech_clip_ids))
        object.__setattr__(self, "noise_clip_ids", tuple(self.noise_clip_ids))

    @property
    def file_name(self) -> str:
        return (f"{self.set_name}_{self.index}_snr{self.snr_db:.2f}"
                f"_tl{self.target_level_dbfs:.2f}.wav")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["speech_clip_ids"] = list(self.speech_clip_ids)
        d["noise_clip_ids"] = list(self.noise_clip_ids)
        return d

    @classmethod
    def from_dict(cls, d) -> "MixRecipe":
        return cls(**d)


@dataclass(frozen=True)
class MixRecord:
    recipe: MixRecipe
    noise_gain: float
    level_gain: float
    clipping_rescale: float
    achieved_rms_dbfs: float
    achieved_snr_db: float
    output_path: Optional[str] = None
    clean_path: Optional[str] = None
    noise_path: Optional[str] = None

    @property
    def speech_gain_db(self) -> float:
        """Total gain from the mixing-stage speech to the stored clean reference."""
        return 20.0 * math.log10(self.level_gain * self.clipping_rescale)

    @property
    def noise_gain_db(self) -> float:
        return self.speech_gain_db + 20.0 * math.log10(self.noise_gain)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["recipe"] = self.recipe.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "MixRecord":
        d = dict(d)
        d["recipe"] = MixRecipe.from_dict(d["recipe"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class MixAudio:
    noisy: AudioClip
    clean: AudioClip
    noise: AudioClip


def build_long_clip(source_clips: Sequence[AudioClip], duration_s: float,
                    rng: np.random.Generator) -> AudioClip:
    """Concatenate ``source_clips`` in an rng-chosen order and trim to ``duration_s``."""
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    if not source_clips:
        raise InsufficientMaterialError("no source clips")
    sr = source_clips[0].sample_rate_hz
    if any(c.sample_rate_hz != sr for c in source_clips):
        raise ValueError("source clips have mixed sample rates")
    needed = int(round(duration_s * sr))
    available = sum(len(c) for c in source_clips)
    if available < needed:
        raise InsufficientMaterialError(
            f"insufficient source material: need {needed / sr:.3f} s, have "
            f"{available / sr:.3f} s (deficit {(needed - available) / sr:.3f} s)")
    parts, total = [], 0
    for i in rng.permutation(len(source_clips)):
        parts.append(source_clips[i].samples)
        total += len(source_clips[i])
        if total >= needed:
            break
    return AudioClip(np.concatenate(parts)[:needed], sr)


def _check_pair(speech: AudioClip, noise: AudioClip):
    if len(speech) != len(noise):
        raise ValueError(f"length mismatch: speech {len(speech)} vs noise {len(noise)} samples")
    if speech.sample_rate_hz != noise.sample_rate_hz:
        raise ValueError("speech and noise sample rates differ")


def _mix(speech, noise, snr_db, params):
    _check_pair(speech, noise)
    s_mask, n_mask = signal_masks(speech, noise, params)
    speech_db = segmental_rms_dbfs(speech, s_mask)
    noise_db = segmental_rms_dbfs(noise, n_mask)
    gain = 10.0 ** ((speech_db - noise_db - snr_db) / 20.0)
    mixture = speech.with_samples(speech.samples + gain * noise.samples)
    return mixture, gain, s_mask, n_mask


def mix_at_segmental_snr(speech: AudioClip, noise: AudioClip, snr_db: float,
                         mask_params: MaskParams = MaskParams()) -> tuple[AudioClip, float]:
    """Add ``noise`` to ``speech`` scaled so the active-frame SNR equals ``snr_db``.

    Returns the mixture and the linear gain applied to the noise.
    """
    mixture, gain, _, _ = _mix(speech, noise, snr_db, mask_params)
    return mixture, gain


def convolve_rir(clip: AudioClip, rir: AudioClip) -> AudioClip:
    """Reverberate ``clip`` with ``rir``, keep the input length and restore the input RMS."""
    if len(rir) == 0:
        raise ValueError("empty RIR")
    if rir.sample_rate_hz != clip.sample_rate_hz:
        raise ValueError(f"RIR sample rate {rir.sample_rate_hz} != clip sample rate "
                         f"{clip.sample_rate_hz}")
    if rms(rir.samples) == 0.0:
        raise SilentClipError("silent RIR")
    wet = fftconvolve(clip.samples, rir.samples, mode="full")[:len(clip)]
    before = rms(clip.samples)
    if before == 0.0:
        return clip.with_samples(np.zeros(len(clip)))
    after = rms(wet)
    if after == 0.0:
        raise SilentClipError("reverberated clip is silent (RIR delay exceeds clip length?)")
    return clip.with_samples(wet * (before / after))


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except Exception as exc:
        raise SynthesisError(name, exc) from exc


def render_mix(recipe: MixRecipe, speech_corpus: Corpus, noise_corpus: Corpus,
               rir_corpus: Optional[Corpus] = None,
               config: SynthesisConfig = SynthesisConfig()) -> tuple[MixRecord, MixAudio]:
    """Run the full mixing pipeline for one recipe in memory."""
    rng = seeding.rng_from_seed(recipe.seed)
    dry = _stage("speech", lambda: build_long_clip(
        [speech_corpus.load(i) for i in recipe.speech_clip_ids], recipe.duration_s, rng))
    speech = dry
    if recipe.rir_id is not None:
        if rir_corpus is None:
            raise SynthesisError("reverb", KeyError(f"no RIR corpus for {recipe.rir_id!r}"))
        speech = _stage("reverb", lambda: convolve_rir(dry, rir_corpus.load(recipe.rir_id)))
    noise = _stage("noise", lambda: build_long_clip(
        [noise_corpus.load(i) for i in recipe.noise_clip_ids], recipe.duration_s, rng))
    mixture, noise_gain, s_mask, n_mask = _stage(
        "mix", _mix, speech, noise, recipe.snr_db, config.mask)
    normalized, level_gain = _stage("level", apply_gain_to_level, mixture,
                                    recipe.target_level_dbfs)

    clean = dry if config.clean_target == "dry" else speech
    clean_scaled = clean.samples * level_gain
    noise_scaled = noise.samples * (noise_gain * level_gain)
    # one rescale for the whole triple keeps noisy = clean + noise and all files writable
    joint_peak = max(normalized.peak, float(np.max(np.abs(clean_scaled))),
                     float(np.max(np.abs(noise_scaled))))
    _, rescale = _stage("clip", clipping_guard,
                        AudioClip(np.array([joint_peak]), normalized.sample_rate_hz),
                        config.ceiling)
    audio = MixAudio(normalized.with_samples(normalized.samples * rescale),
                     clean.with_samples(clean_scaled * rescale),
                     noise.with_samples(noise_scaled * rescale))

    speech_out = speech.with_samples(speech.samples * (level_gain * rescale))
    achieved_snr = segmental_snr_db(speech_out, audio.noise, s_mask, n_mask)
    record = MixRecord(recipe=recipe, noise_gain=noise_gain, level_gain=level_gain,
                       clipping_rescale=rescale, achieved_rms_dbfs=rms_dbfs(audio.noisy),
                       achieved_snr_db=achieved_snr)
    return record, audio


def synthesize(recipe: MixRecipe, speech_corpus: Corpus, noise_corpus: Corpus,
               rir_corpus: Optional[Corpus] = None,
               config: SynthesisConfig = SynthesisConfig(), out_dir=".") -> MixRecord:
    """Render one recipe and write the noisy/clean/noise WAV triple under ``out_dir``."""
    record, audio = render_mix(recipe, speech_corpus, noise_corpus, rir_corpus, config)
    out_dir = Path(out_dir)
    paths = {}
    for kind, clip in (("noisy", audio.noisy), ("clean", audio.clean), ("noise", audio.noise)):
        rel = Path(kind) / recipe.file_name
        _stage("write", write_wav, clip, out_dir / rel)
        paths[kind] = rel.as_posix()
    return MixRecord(**{**record.__dict__, "output_path": paths["noisy"],
                        "clean_path": paths["clean"], "noise_path": paths["noise"]})


def remeasure_snr(record: MixRecord, clean: AudioClip, noise: AudioClip,
                  mask_params: MaskParams = MaskParams()) -> float:
    """Segmental SNR of a stored (clean, scaled-noise) pair.

    Activity thresholds are shifted by the gains recorded for each signal so
    frames are classified exactly as they were on the mixing-stage inputs.
    Only meaningful when the stored clean is the mixed speech (not ``dry``).
    """
    s_mask = detect_activity(clean, mask_params.threshold_dbfs + record.speech_gain_db,
                             mask_params.frame_ms)
    n_mask = detect_activity(noise, mask_params.threshold_dbfs + record.noise_gain_db,
                             mask_params.frame_ms)
    if mask_params.joint:
        s_mask = n_mask = s_mask & n_mask
    return segmental_snr_db(clean, noise, s_mask, n_mask)


class _SpeakerPool:
    """Speech clips grouped by speaker, restricted to speakers with enough material."""

    def __init__(self, corpus: Corpus, duration_s: float):
        by_speaker: dict[str, list[ClipManifestEntry]] = {}
        for e in corpus.entries:
            by_speaker.setdefault(e.speaker_id or e.clip_id, []).append(e)
        self.speakers = {}
        for spk, entries in by_speaker.items():
            if sum(e.duration_s for e in entries) >= duration_s:
                self.speakers[spk] = sorted(entries, key=lambda e: e.clip_id)
        # uniform over clips of eligible speakers
        self.clip_speaker = [(e.clip_id, spk) for spk, es in sorted(self.speakers.items())
                             for e in es]
        if not self.clip_speaker:
            raise InsufficientMaterialError(
                f"no speaker has {duration_s} s of speech; cannot build single-speaker clips")

    def draw(self, rng, duration_s) -> tuple:
        _, spk = self.clip_speaker[rng.integers(len(self.clip_speaker))]
        entries = self.speakers[spk]
        chosen, total = [], 0.0
        for i in rng.permutation(len(entries)):
            chosen.append(entries[i].clip_id)
            total += entries[i].duration_s
            if total >= duration_s:
                break
        return tuple(chosen)


def draw_noise_ids(entries: Sequence[ClipManifestEntry], rng, duration_s: float) -> tuple:
    """Uniform draw without replacement until ``duration_s`` is covered."""
    if sum(e.duration_s for e in entries) < duration_s:
        raise InsufficientMaterialError(
            f"noise pool holds less than {duration_s} s of audio")
    chosen, seen, total = [], set(), 0.0
    while total < duration_s:
        i = int(rng.integers(len(entries)))
        if i in seen:
            continue
        seen.add(i)
        chosen.append(entries[i].clip_id)
        total += entries[i].duration_s
    return tuple(chosen)


def sample_recipes(config: SynthesisConfig, count: int, master_seed: int,
                   speech_corpus: Corpus, noise_corpus: Corpus,
                   rir_corpus: Optional[Corpus] = None, start_index: int = 0) -> list[MixRecipe]:
    """Draw ``count`` recipes; recipe ``i`` depends only on ``(master_seed, i)``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return []
    if len(speech_corpus) == 0 or len(noise_corpus) == 0:
        raise ValueError("empty corpus: speech and noise manifests must be non-empty")
    pool = _SpeakerPool(speech_corpus, config.duration_s)
    noise_entries = noise_corpus.entries
    rir_ids = sorted(e.clip_id for e in rir_corpus.entries) if rir_corpus else []
    recipes = []
    for index in range(start_index, start_index + count):
        rng = seeding.stream(master_seed, "recipe:" + config.set_name, index)
        snr = float(rng.uniform(*config.snr_range))
        level = float(rng.uniform(*config.level_range))
        speech_ids = pool.draw(rng, config.duration_s)
        noise_ids = draw_noise_ids(noise_entries, rng, config.duration_s)
        rir_id = None
        if rir_ids and rng.random() < config.rir_probability:
            rir_id = rir_ids[int(rng.integers(len(rir_ids)))]
        recipes.append(MixRecipe(
            index=index, speech_clip_ids=speech_ids, noise_clip_ids=noise_ids, snr_db=snr,
            target_level_dbfs=level, rir_id=rir_id, duration_s=config.duration_s,
            seed=seeding.derive_seed(master_seed, "render:" + config.set_name, index),
            set_name=config.set_name))
    return recipes


_worker_state = {}


def _init_worker(speech_corpus, noise_corpus, rir_corpus, config, out_dir):
    _worker_state.update(speech=speech_corpus, noise=noise_corpus, rir=rir_corpus,
                         config=config, out_dir=out_dir)


def _synthesize_in_worker(recipe):
    s = _worker_state
    return synthesize(recipe, s["speech"], s["noise"], s["rir"], s["config"], s["out_dir"])


def run_synthesis(recipes: Sequence[MixRecipe], speech_corpus: Corpus, noise_corpus: Corpus,
                  rir_corpus: Optional[Corpus] = None,
                  config: SynthesisConfig = SynthesisConfig(), out_dir=".",
                  jobs: int = 1, manifest_name: str = MANIFEST_NAME) -> list[MixRecord]:
    """Render every recipe and write the JSON-lines record manifest.

    Records are returned (and written) in recipe order whatever ``jobs`` is.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if jobs <= 1 or len(recipes) <= 1:
        records = [synthesize(r, speech_corpus, noise_corpus, rir_corpus, config, out_dir)
                   for r in recipes]
    else:
        workers = min(jobs, len(recipes))
        chunk = max(1, len(recipes) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_init_worker,
                                 initargs=(speech_corpus, noise_corpus, rir_corpus, config,
                                           out_dir)) as pool:
            records = list(pool.map(_synthesize_in_worker, recipes, chunksize=chunk))
    write_jsonl((r.to_dict() for r in records), out_dir / manifest_name)
    logger.info("synthesized %d clips into %s", len(records), out_dir)
    return records
