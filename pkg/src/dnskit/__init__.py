"""Toolkit for noise-suppression challenge data and evaluation.

Synthesizes noisy/clean training pairs at segmental SNRs, curates clean-speech
and noise corpora, builds dev/blind test sets, analyses crowdsourced ACR
ratings (spam filtering, MOS/dMOS/CI, pairwise ANOVA, ranking) and checks
frame processors against real-time budgets.
"""
from .activity import ActivityMask, MaskParams, detect_activity, segmental_rms_dbfs
from .audio import (AudioClip, apply_gain_to_level, clipping_guard, read_wav, rms_dbfs,
                    write_wav)
from .estimators import (ActivityDetector, ChapterSelector, LevelNormalizer, NoiseClassBalancer,
                         NoiseMixer, SpamRaterFilter)
from .synthesis import (MixRecipe, MixRecord, SynthesisConfig, build_long_clip, convolve_rir,
                        mix_at_segmental_snr, sample_recipes, synthesize)

__version__ = "0.1.0"

__all__ = [
    "ActivityDetector", "ActivityMask", "AudioClip", "ChapterSelector", "LevelNormalizer",
    "MaskParams", "MixRecipe", "MixRecord", "NoiseClassBalancer", "NoiseMixer",
    "SpamRaterFilter", "SynthesisConfig", "apply_gain_to_level", "build_long_clip",
    "clipping_guard", "convolve_rir", "detect_activity", "mix_at_segmental_snr", "read_wav",
    "rms_dbfs", "sample_recipes", "segmental_rms_dbfs", "synthesize", "write_wav",
]
