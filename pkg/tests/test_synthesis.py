import json

import numpy as np
import pytest
from helpers import memory_corpus, noise_entries, rir_entries, speech_entries
from hypothesis import given, settings
from hypothesis import strategies as st

from dnskit.activity import MaskParams, signal_masks, segmental_snr_db
from dnskit.audio import AudioClip, read_wav, rms_dbfs
from dnskit.manifest import read_jsonl
from dnskit.synthesis import (InsufficientMaterialError, MixRecipe, MixRecord, SynthesisConfig,
                              SynthesisError, build_long_clip, convolve_rir, mix_at_segmental_snr,
                              remeasure_snr, render_mix, run_synthesis, sample_recipes, synthesize)


@pytest.fixture(scope="module")
def corpora():
    speech = memory_corpus(speech_entries(n_speakers=4, clips_per_speaker=4, clip_s=4.0))
    noise = memory_corpus(noise_entries({"fan": 6, "typing": 6}, clip_s=4.0))
    rirs = memory_corpus(rir_entries([250, 500, 900]))
    return speech, noise, rirs


CFG = SynthesisConfig(duration_s=5.0)


def test_build_long_clip_trims_exactly():
    rng = np.random.default_rng(0)
    clips = [AudioClip(np.full(16000, v)) for v in (0.1, 0.2, 0.3)]
    out = build_long_clip(clips, 2.5, rng)
    assert len(out) == 40000


def test_build_long_clip_reports_deficit():
    clips = [AudioClip(np.zeros(16000))]
    with pytest.raises(InsufficientMaterialError, match="deficit 1.000 s"):
        build_long_clip(clips, 2.0, np.random.default_rng(0))


def test_mix_hits_requested_snr():
    rng = np.random.default_rng(1)
    s = AudioClip(rng.standard_normal(16000) * 0.1)
    n = AudioClip(rng.standard_normal(16000) * 0.05)
    mix, gain = mix_at_segmental_snr(s, n, 12.0)
    scaled = n.with_samples(n.samples * gain)
    sm, nm = signal_masks(s, n, MaskParams())
    assert segmental_snr_db(s, scaled, sm, nm) == pytest.approx(12.0, abs=1e-9)
    np.testing.assert_allclose(mix.samples, s.samples + scaled.samples)


def test_mix_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        mix_at_segmental_snr(AudioClip(np.ones(640)), AudioClip(np.ones(320)), 0.0)


def test_convolution_matches_direct_sum():
    # oracle: textbook O(N*M) causal convolution, truncated to the input length
    rng = np.random.default_rng(2)
    x = rng.standard_normal(700)
    h = rng.standard_normal(37) * np.exp(-np.arange(37) / 8)
    direct = np.array([sum(h[k] * x[n - k] for k in range(len(h)) if 0 <= n - k < len(x))
                       for n in range(len(x))])
    direct *= np.sqrt(np.mean(x ** 2)) / np.sqrt(np.mean(direct ** 2))
    out = convolve_rir(AudioClip(x), AudioClip(h))
    np.testing.assert_allclose(out.samples, direct, atol=1e-10)
    assert rms_dbfs(out) == pytest.approx(rms_dbfs(AudioClip(x)), abs=1e-9)


def test_convolution_rejects_rate_mismatch_and_silence():
    with pytest.raises(ValueError):
        convolve_rir(AudioClip(np.ones(10)), AudioClip(np.ones(3), 8000))
    with pytest.raises(ValueError):
        convolve_rir(AudioClip(np.ones(10)), AudioClip(np.zeros(3)))


def test_recipes_are_index_local(corpora):
    speech, noise, _ = corpora
    full = sample_recipes(CFG, 10, 42, speech, noise)
    tail = sample_recipes(CFG, 4, 42, speech, noise, start_index=6)
    assert full[6:] == tail
    assert sample_recipes(CFG, 10, 43, speech, noise) != full


def test_recipe_draws_single_speaker(corpora):
    speech, noise, _ = corpora
    for r in sample_recipes(CFG, 20, 1, speech, noise):
        assert len({speech[c].speaker_id for c in r.speech_clip_ids}) == 1
        assert CFG.snr_range[0] <= r.snr_db <= CFG.snr_range[1]
        assert CFG.level_range[0] <= r.target_level_dbfs <= CFG.level_range[1]


def test_render_records_gain_chain(corpora):
    speech, noise, _ = corpora
    (recipe,) = sample_recipes(CFG, 1, 5, speech, noise)
    record, audio = render_mix(recipe, speech, noise, None, CFG)
    np.testing.assert_allclose(audio.noisy.samples, audio.clean.samples + audio.noise.samples,
                               atol=1e-12)
    assert record.achieved_snr_db == pytest.approx(recipe.snr_db, abs=1e-9)
    if record.clipping_rescale == 1.0:
        assert record.achieved_rms_dbfs == pytest.approx(recipe.target_level_dbfs, abs=1e-9)


def test_forced_clipping_is_recorded(corpora):
    speech, noise, _ = corpora
    (recipe,) = sample_recipes(CFG, 1, 9, speech, noise)
    loud = MixRecipe(**{**recipe.to_dict(), "target_level_dbfs": -2.0})
    record, audio = render_mix(loud, speech, noise, None, CFG)
    assert record.clipping_rescale < 1.0
    assert max(audio.noisy.peak, audio.clean.peak, audio.noise.peak) <= CFG.ceiling
    expected = -2.0 + 20 * np.log10(record.clipping_rescale)
    assert record.achieved_rms_dbfs == pytest.approx(expected, abs=1e-6)


def test_reverb_stage_and_clean_target(corpora):
    speech, noise, rirs = corpora
    (recipe,) = sample_recipes(CFG, 1, 3, speech, noise)
    wet = MixRecipe(**{**recipe.to_dict(), "rir_id": "rir_001"})
    rec_r, audio_r = render_mix(wet, speech, noise, rirs, CFG)
    dry_cfg = SynthesisConfig(duration_s=5.0, clean_target="dry")
    rec_d, audio_d = render_mix(wet, speech, noise, rirs, dry_cfg)
    np.testing.assert_allclose(audio_r.noisy.samples, audio_d.noisy.samples)
    assert not np.allclose(audio_r.clean.samples, audio_d.clean.samples)


def test_missing_rir_corpus_names_stage(corpora):
    speech, noise, _ = corpora
    (recipe,) = sample_recipes(CFG, 1, 3, speech, noise)
    wet = MixRecipe(**{**recipe.to_dict(), "rir_id": "rir_000"})
    with pytest.raises(SynthesisError) as err:
        render_mix(wet, speech, noise, None, CFG)
    assert err.value.stage == "reverb"


def test_short_speaker_material():
    speech = memory_corpus(speech_entries(n_speakers=2, clips_per_speaker=1, clip_s=2.0))
    noise = memory_corpus(noise_entries({"fan": 4}, clip_s=4.0))
    with pytest.raises(InsufficientMaterialError):
        sample_recipes(CFG, 1, 0, speech, noise)


def test_written_triple_and_remeasure(tmp_path, corpora):
    speech, noise, _ = corpora
    recipes = sample_recipes(CFG, 3, 11, speech, noise)
    records = run_synthesis(recipes, speech, noise, None, CFG, tmp_path)
    lines = list(read_jsonl(tmp_path / "mix_records.jsonl"))
    assert [MixRecord.from_dict(d) for d in lines] == records
    for r in records:
        assert r.output_path == f"noisy/{r.recipe.file_name}"
        assert r.recipe.file_name.startswith(f"train_{r.recipe.index}_snr")
        clean = read_wav(tmp_path / r.clean_path)
        noise_clip = read_wav(tmp_path / r.noise_path)
        assert remeasure_snr(r, clean, noise_clip, CFG.mask) == pytest.approx(r.recipe.snr_db,
                                                                             abs=0.1)


def test_synthesize_is_deterministic(tmp_path, corpora):
    speech, noise, _ = corpora
    (recipe,) = sample_recipes(CFG, 1, 21, speech, noise)
    synthesize(recipe, speech, noise, None, CFG, tmp_path / "a")
    synthesize(recipe, speech, noise, None, CFG, tmp_path / "b")
    for kind in ("noisy", "clean", "noise"):
        a = (tmp_path / "a" / kind / recipe.file_name).read_bytes()
        b = (tmp_path / "b" / kind / recipe.file_name).read_bytes()
        assert a == b


def test_config_validation():
    with pytest.raises(ValueError):
        SynthesisConfig(snr_range=(10, 0))
    with pytest.raises(ValueError):
        SynthesisConfig(clean_target="wet")


@settings(max_examples=25, deadline=None)
@given(st.floats(-10, 50), st.integers(0, 10_000))
def test_snr_property(snr, seed):
    rng = np.random.default_rng(seed)
    s = AudioClip(rng.standard_normal(3200) * 0.05)
    n = AudioClip(rng.standard_normal(3200) * rng.uniform(0.001, 0.3))
    _, gain = mix_at_segmental_snr(s, n, snr)
    sm, nm = signal_masks(s, n, MaskParams())
    assert segmental_snr_db(s, n.with_samples(n.samples * gain), sm, nm) == pytest.approx(
        snr, abs=1e-9)


def test_record_json_round_trip(corpora):
    speech, noise, _ = corpora
    (recipe,) = sample_recipes(CFG, 1, 4, speech, noise)
    record, _ = render_mix(recipe, speech, noise, None, CFG)
    assert MixRecord.from_dict(json.loads(json.dumps(record.to_dict()))) == record
