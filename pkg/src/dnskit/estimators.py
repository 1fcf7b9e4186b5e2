"""scikit-learn style wrappers so the pipeline stages compose with Pipeline,
clone and get_params/set_params.

Audio "samples" here are whole clips: ``X`` is a 2-D array with one clip per
row or a list of clips (AudioClip or 1-D arrays) of any lengths.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import curation
from .activity import DEFAULT_FRAME_MS, DEFAULT_THRESHOLD_DBFS, MaskParams, detect_activity
from .audio import DEFAULT_CEILING, apply_gain_to_level, clipping_guard
from .evaluation.ratings import (GOLD_TOLERANCE, MAX_FAIL_FRACTION, TRAP_EXPECTED,
                                 filter_spam_raters)
from .synthesis import _mix
from .validation import as_output, check_clips, check_range, check_ratings


class ActivityDetector(TransformerMixin, BaseEstimator):
    """Frame-energy activity masks; stateless."""

    def __init__(self, threshold_dbfs=DEFAULT_THRESHOLD_DBFS, frame_ms=DEFAULT_FRAME_MS):
        self.threshold_dbfs = threshold_dbfs
        self.frame_ms = frame_ms

    def fit(self, X, y=None):
        check_clips(X)
        return self

    def transform(self, X):
        """List of :class:`~dnskit.activity.ActivityMask`, one per clip."""
        return [detect_activity(c, self.threshold_dbfs, self.frame_ms) for c in check_clips(X)]


class LevelNormalizer(TransformerMixin, BaseEstimator):
    """Scale each clip to ``target_dbfs`` RMS, then apply the clipping guard."""

    def __init__(self, target_dbfs=-25.0, ceiling=DEFAULT_CEILING):
        self.target_dbfs = target_dbfs
        self.ceiling = ceiling

    def fit(self, X, y=None):
        check_clips(X)
        return self

    def transform(self, X):
        out = []
        for clip in check_clips(X):
            scaled, _ = apply_gain_to_level(clip, self.target_dbfs)
            guarded, _ = clipping_guard(scaled, self.ceiling)
            out.append(guarded)
        return as_output(out, X)


class NoiseMixer(TransformerMixin, BaseEstimator):
    """Mix speech clips with noise from a fitted noise bank.

    ``fit`` stores the noise clips; ``transform`` pairs every speech clip with a
    bank entry, draws SNR and target level uniformly from the configured ranges
    and returns the level-normalized mixtures. Noise is tiled or cut to each
    clip's length. ``random_state`` makes the draws repeatable.
    """

    def __init__(self, snr_range=(0.0, 40.0), level_range=(-35.0, -15.0),
                 threshold_dbfs=DEFAULT_THRESHOLD_DBFS, frame_ms=DEFAULT_FRAME_MS,
                 joint_activity=False, ceiling=DEFAULT_CEILING, random_state=None):
        self.snr_range = snr_range
        self.level_range = level_range
        self.threshold_dbfs = threshold_dbfs
        self.frame_ms = frame_ms
        self.joint_activity = joint_activity
        self.ceiling = ceiling
        self.random_state = random_state

    def fit(self, X, y=None):
        check_range(self.snr_range, "snr_range")
        check_range(self.level_range, "level_range")
        self.noise_bank_ = check_clips(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "noise_bank_")
        mixtures, self.mix_params_ = [], []
        rng = np.random.default_rng(self.random_state)
        params = MaskParams(self.threshold_dbfs, self.frame_ms, self.joint_activity)
        for clip in check_clips(X):
            k = int(rng.integers(len(self.noise_bank_)))
            noise_src = self.noise_bank_[k].samples
            reps = -(-len(clip) // len(noise_src))
            noise = clip.with_samples(np.tile(noise_src, reps)[:len(clip)])
            snr = float(rng.uniform(*self.snr_range))
            level = float(rng.uniform(*self.level_range))
            mixture, gain, _, _ = _mix(clip, noise, snr, params)
            scaled, level_gain = apply_gain_to_level(mixture, level)
            guarded, rescale = clipping_guard(scaled, self.ceiling)
            mixtures.append(guarded)
            self.mix_params_.append({"noise_index": k, "snr_db": snr, "target_level_dbfs": level,
                                     "noise_gain": gain, "level_gain": level_gain,
                                     "clipping_rescale": rescale})
        return as_output(mixtures, X)


class ChapterSelector(TransformerMixin, BaseEstimator):
    """Learn which chapters are clean from their quality ratings.

    ``fit`` takes :class:`~dnskit.curation.ChapterQuality` objects;
    ``transform`` keeps manifest entries whose chapter was selected.
    """

    def __init__(self, policy="quartile", threshold=curation.MOS_THRESHOLD):
        self.policy = policy
        self.threshold = threshold

    def fit(self, X, y=None):
        qualities = list(X)
        self.selected_chapters_ = frozenset(
            curation.select_clean_chapters(qualities, self.policy, self.threshold))
        self.chapter_mos_ = {q.chapter_id: q.chapter_mos for q in qualities}
        return self

    def transform(self, X):
        check_is_fitted(self, "selected_chapters_")
        return [e for e in X if e.chapter_id in self.selected_chapters_]


class NoiseClassBalancer(TransformerMixin, BaseEstimator):
    """Speech removal followed by greedy class balancing over manifest entries."""

    def __init__(self, floor_per_class=curation.CLASS_FLOOR,
                 speech_labels=curation.DEFAULT_SPEECH_LABELS, detector=None):
        self.floor_per_class = floor_per_class
        self.speech_labels = speech_labels
        self.detector = detector

    def fit(self, X, y=None):
        speech_free = curation.remove_speech_clips(X, self.speech_labels, self.detector)
        selected, self.report_ = curation.balance_classes(speech_free, self.floor_per_class)
        self.selected_ids_ = frozenset(e.clip_id for e in selected)
        return self

    def transform(self, X):
        check_is_fitted(self, "selected_ids_")
        return [e for e in X if e.clip_id in self.selected_ids_]


class SpamRaterFilter(TransformerMixin, BaseEstimator):
    """Learn spam verdicts from gold/trap outcomes, then drop flagged ratings."""

    def __init__(self, gold_tolerance=GOLD_TOLERANCE, max_fail_fraction=MAX_FAIL_FRACTION,
                 trap_expected=TRAP_EXPECTED):
        self.gold_tolerance = gold_tolerance
        self.max_fail_fraction = max_fail_fraction
        self.trap_expected = trap_expected

    def fit(self, X, y=None):
        ratings = check_ratings(X)
        kept, self.report_ = filter_spam_raters(ratings, self.gold_tolerance,
                                                self.max_fail_fraction, self.trap_expected)
        self.discarded_raters_ = frozenset(self.report_.discarded_raters)
        self.invalid_submissions_ = frozenset(
            (v.rater_id, g) for v in self.report_.verdicts.values() for g in v.reasons)
        return self

    def transform(self, X):
        check_is_fitted(self, "discarded_raters_")
        return [r for r in check_ratings(X)
                if r.rater_id not in self.discarded_raters_
                and (r.rater_id, r.group_id) not in self.invalid_submissions_]
