import numpy as np
import pytest
from helpers import memory_corpus, noise_entries, rir_entries, speech_entries

from dnskit.audio import AudioClip, write_wav
from dnskit.testset import (CATEGORY_REVERB, CATEGORY_SYNTHETIC, RANDOM_FILL, Corpora, QuotaError,
                            TestSetPlan, build_synthetic_category, build_test_sets, plan_category,
                            register_real_recordings, source_ids)

SMALL = TestSetPlan(quota=10, priority_classes=("fan", "typing"), clips_per_priority=3,
                    random_fill=4, duration_s=3.0)


def _corpora(per_class=8, rest=10):
    speech = memory_corpus(speech_entries(n_speakers=6, clips_per_speaker=2, clip_s=3.0))
    noise = memory_corpus(noise_entries({"fan": per_class, "typing": per_class, "rain": rest},
                                        clip_s=3.0))
    rirs = memory_corpus(rir_entries([200, 400, 700, 1200, 1500]))
    return Corpora(speech, noise, rirs)


def test_plan_must_add_up():
    with pytest.raises(ValueError, match="does not add up"):
        TestSetPlan(quota=301)
    TestSetPlan()  # default 12 x 15 + 120 = 300


def test_composition_and_ranges():
    plan = plan_category(SMALL, True, _corpora(), 3)
    classes = [c for c, _ in plan]
    assert classes.count("fan") == 3 and classes.count("typing") == 3
    assert classes.count(RANDOM_FILL) == 4
    for _, r in plan:
        assert 0.0 <= r.snr_db <= 25.0
        assert r.rir_id in {"rir_001", "rir_002", "rir_003"}


def test_priority_shortage():
    with pytest.raises(QuotaError, match="fan"):
        plan_category(SMALL, False, _corpora(per_class=2), 0)


def test_no_eligible_rir():
    c = _corpora()
    c.rirs = memory_corpus(rir_entries([100, 2000]))
    with pytest.raises(QuotaError, match="RIR"):
        plan_category(SMALL, True, c, 0)


def test_in_memory_render_and_categories():
    entries = build_synthetic_category(SMALL, False, _corpora(), 1)
    assert len(entries) == 10
    assert all(e.category == CATEGORY_SYNTHETIC and e.clip_path is None for e in entries)


def test_dev_blind_disjoint(tmp_path):
    sets = build_test_sets(SMALL, _corpora(per_class=8, rest=10), 9, tmp_path)
    for name in ("dev", "blind"):
        cats = [e.category for e in sets[name]]
        assert cats.count(CATEGORY_SYNTHETIC) == 10 and cats.count(CATEGORY_REVERB) == 10
        assert (tmp_path / sets[name][0].clip_path).exists()
    assert not source_ids(sets["dev"]) & source_ids(sets["blind"])


def test_real_recordings_skip_bad_files(tmp_path):
    write_wav(AudioClip(np.zeros(160)), tmp_path / "ok.wav")
    (tmp_path / "bad.wav").write_bytes(b"not a wav")
    entries = register_real_recordings("real", [tmp_path / "ok.wav", tmp_path / "bad.wav"])
    assert [e.clip_path for e in entries] == [str(tmp_path / "ok.wav")]
