import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnskit.audio import (AudioClip, AudioFormatError, SilentClipError, WavParseError,
                          apply_gain_to_level, clipping_guard, db_to_gain, read_wav, rms,
                          rms_dbfs, write_wav)


def _write_raw(path, data: bytes, channels=1, width=2, rate=16000):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(data)


def test_round_trip_is_exact_for_pcm_grid(tmp_path):
    ints = np.array([-32768, -1, 0, 1, 12345, 32767], dtype=np.int16)
    clip = AudioClip(ints / 32768.0)
    write_wav(clip, tmp_path / "a.wav")
    back = read_wav(tmp_path / "a.wav")
    np.testing.assert_array_equal(back.samples, clip.samples)
    assert back.sample_rate_hz == 16000


def test_full_scale_positive_saturates(tmp_path):
    write_wav(AudioClip(np.array([1.0, -1.0])), tmp_path / "s.wav")
    back = read_wav(tmp_path / "s.wav")
    assert back.samples[0] == 32767 / 32768 and back.samples[1] == -1.0


@pytest.mark.parametrize("kw,field", [({"channels": 2}, "channel"), ({"width": 1}, "bit depth"),
                                      ({"rate": 8000}, "sample rate")])
def test_format_errors_name_the_field(tmp_path, kw, field):
    _write_raw(tmp_path / "x.wav", b"\x00\x00" * 8, **kw)
    with pytest.raises(AudioFormatError, match=field):
        read_wav(tmp_path / "x.wav")


def test_truncated_data_chunk(tmp_path):
    _write_raw(tmp_path / "t.wav", b"\x01\x00" * 100)
    raw = (tmp_path / "t.wav").read_bytes()
    (tmp_path / "t.wav").write_bytes(raw[:-51])
    with pytest.raises(WavParseError):
        read_wav(tmp_path / "t.wav")


def test_garbage_file(tmp_path):
    (tmp_path / "g.wav").write_bytes(b"RIFF" + struct.pack("<I", 4) + b"JUNK")
    with pytest.raises(WavParseError):
        read_wav(tmp_path / "g.wav")


def test_write_rejects_out_of_range(tmp_path):
    with pytest.raises(ValueError):
        write_wav(AudioClip(np.array([0.5, 1.2])), tmp_path / "o.wav")
    with pytest.raises(ValueError):
        write_wav(AudioClip(np.array([np.nan])), tmp_path / "n.wav")


def test_rms_dbfs_reference_points():
    assert rms_dbfs(AudioClip(np.ones(100))) == pytest.approx(0.0)
    t = np.arange(16000) / 16000
    sine = np.sin(2 * np.pi * 1000 * t)
    assert rms_dbfs(AudioClip(sine)) == pytest.approx(-3.0103, abs=1e-3)


def test_silence_raises():
    with pytest.raises(SilentClipError):
        rms_dbfs(AudioClip(np.zeros(10)))
    with pytest.raises(SilentClipError):
        apply_gain_to_level(AudioClip(np.zeros(10)), -25)


@settings(max_examples=60, deadline=None)
@given(st.floats(-60, 0), st.integers(0, 2**32 - 1))
def test_level_normalization_hits_target(target, seed):
    x = np.random.default_rng(seed).standard_normal(800) * 0.01
    out, gain = apply_gain_to_level(AudioClip(x), target)
    assert rms_dbfs(out) == pytest.approx(target, abs=1e-9)
    assert gain == pytest.approx(db_to_gain(target) / rms(x))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 20.0), st.floats(0.1, 1.0))
def test_clipping_guard_never_exceeds_ceiling(peak, ceiling):
    x = np.array([0.0, peak, -peak / 2])
    out, rescale = clipping_guard(AudioClip(x), ceiling)
    assert out.peak <= ceiling
    if peak <= ceiling:
        assert rescale == 1.0
    else:
        assert rescale < 1.0
        assert out.peak == pytest.approx(ceiling, rel=1e-12)


def test_slice_seconds():
    clip = AudioClip(np.arange(32000) / 32000.0)
    part = clip.slice_seconds(0.5, 1.0)
    assert len(part) == 16000 and part.samples[0] == clip.samples[8000]
    with pytest.raises(ValueError):
        clip.slice_seconds(1.5, 1.0)
