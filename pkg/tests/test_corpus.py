import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trivial_sre.corpus import (
    AudioClip,
    ManifestEntry,
    SynthSpec,
    decimate_2x,
    load_manifest,
    manifest_stats,
    quantize_pcm16,
    read_wav,
    synth_corpus,
    write_manifest,
    write_wav,
)
from trivial_sre.errors import (
    DuplicateUttId,
    EmptyManifest,
    InvalidSpec,
    OddRate,
    ParseError,
    TruncatedFile,
    UnsupportedFormat,
)


def stdlib_wav(path, pcm, rate, channels=1):
    """Write with the stdlib writer, independent of the package's own."""
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(np.asarray(pcm, dtype="<i2").tobytes())


# -- WAV -------------------------------------------------------------------


def test_read_silence(tmp_path):
    p = tmp_path / "z.wav"
    stdlib_wav(p, np.zeros(8000), 8000)
    clip = read_wav(p)
    assert clip.sample_rate_hz == 8000
    assert clip.samples.shape == (8000,)
    assert np.all(clip.samples == 0.0)


def test_read_half_scale(tmp_path):
    p = tmp_path / "h.wav"
    stdlib_wav(p, np.full(100, 16384), 8000)
    assert np.all(read_wav(p).samples == 0.5)


def test_stereo_rejected(tmp_path):
    p = tmp_path / "s.wav"
    stdlib_wav(p, np.zeros(200), 8000, channels=2)
    with pytest.raises(UnsupportedFormat):
        read_wav(p)


def test_not_riff(tmp_path):
    p = tmp_path / "x.wav"
    p.write_bytes(b"hello world, not audio")
    with pytest.raises(UnsupportedFormat):
        read_wav(p)


def test_truncated_data_chunk(tmp_path):
    p = tmp_path / "t.wav"
    stdlib_wav(p, np.arange(100), 8000)
    p.write_bytes(p.read_bytes()[:-40])
    with pytest.raises(TruncatedFile):
        read_wav(p)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_wav(tmp_path / "nope.wav")


def test_write_readable_by_stdlib(tmp_path):
    rng = np.random.default_rng(3)
    clip = AudioClip(quantize_pcm16(rng.uniform(-0.9, 0.9, 500)), 16000)
    p = tmp_path / "w.wav"
    write_wav(p, clip)
    with wave.open(str(p), "rb") as w:
        assert (w.getnchannels(), w.getsampwidth(), w.getframerate()) == (1, 2, 16000)
        pcm = np.frombuffer(w.readframes(w.getnframes()), dtype="<i2")
    assert np.array_equal(pcm / 32768.0, clip.samples)


def test_synth_roundtrip_exact(tmp_path):
    clips, entries = synth_corpus(SynthSpec(n_speakers=2, utts_per_speaker_per_event=2))
    for clip, e in zip(clips, entries):
        p = tmp_path / e.path
        write_wav(p, clip)
        back = read_wav(p)
        assert back.sample_rate_hz == clip.sample_rate_hz
        assert np.array_equal(back.samples, clip.samples)


# -- decimation ------------------------------------------------------------


def dominant_bin_hz(x, rate):
    spec = np.abs(np.fft.rfft(x))
    return np.argmax(spec) * rate / len(x)


def test_decimate_silence():
    out = decimate_2x(AudioClip(np.zeros(16000), 16000))
    assert out.sample_rate_hz == 8000
    assert out.samples.shape == (8000,)
    assert np.all(out.samples == 0.0)


def test_decimate_passband_sine():
    t = np.arange(16000) / 16000
    x = 0.5 * np.sin(2 * np.pi * 1000 * t)
    y = decimate_2x(AudioClip(x, 16000)).samples
    assert dominant_bin_hz(y, 8000) == pytest.approx(1000.0)
    core = y[100:-100]
    amp = np.sqrt(2) * np.sqrt(np.mean(core ** 2))
    assert abs(amp - 0.5) / 0.5 < 0.05


def test_decimate_stopband_sine():
    t = np.arange(16000) / 16000
    x = 0.5 * np.sin(2 * np.pi * 7000 * t)
    y = decimate_2x(AudioClip(x, 16000)).samples
    # energy per unit time, so the halved sample count does not bias it
    ratio = np.mean(y ** 2) / np.mean(x ** 2)
    assert ratio < 0.05


def test_decimate_odd_rate():
    with pytest.raises(OddRate):
        decimate_2x(AudioClip(np.zeros(10), 11025))


@given(st.integers(min_value=1, max_value=3000))
@settings(max_examples=50, deadline=None)
def test_decimate_halves_duration(n):
    out = decimate_2x(AudioClip(np.ones(n), 16000))
    assert abs(out.duration_s - n / 16000) <= 1 / 8000


# -- manifests -------------------------------------------------------------


def test_empty_manifest_file(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("")
    assert load_manifest(p) == []


def test_manifest_line(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("# header\nc01\tS001\tcough\t/d/c01.wav\t0.27\n")
    (e,) = load_manifest(p)
    assert e == ManifestEntry("c01", "S001", "cough", "/d/c01.wav", 0.27)


def test_manifest_unknown_event_is_other(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("u1\tS1\tsneeze\ta.wav\t0.3\n")
    assert load_manifest(p)[0].event == "other"


def test_manifest_duplicate(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("c01\tS1\tcough\ta.wav\t0.2\nc01\tS2\tlaugh\tb.wav\t0.3\n")
    with pytest.raises(DuplicateUttId):
        load_manifest(p)


def test_manifest_parse_error_has_line(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("c01\tS1\tcough\ta.wav\t0.2\nbroken line\n")
    with pytest.raises(ParseError) as info:
        load_manifest(p)
    assert info.value.line == 2


def test_manifest_roundtrip(tmp_path):
    _, entries = synth_corpus(SynthSpec(n_speakers=3, utts_per_speaker_per_event=2))
    p = tmp_path / "m.tsv"
    write_manifest(p, entries)
    assert load_manifest(p) == entries


# -- stats -----------------------------------------------------------------


def hundred_four_speaker_manifest():
    # 58 speakers x 9 + 46 speakers x 8 = 890 cough segments; durations
    # alternate 0.25 / 0.29 over the 890 rows, averaging 0.27
    entries = []
    for s in range(104):
        for k in range(9 if s < 58 else 8):
            dur = 0.25 if len(entries) % 2 == 0 else 0.29
            entries.append(ManifestEntry(f"c{s:03d}_{k}", f"S{s:03d}", "cough", "x.wav", dur))
    return entries


def test_stats_arithmetic_104_speakers():
    stats = manifest_stats(hundred_four_speaker_manifest())
    cough = stats.per_event["cough"]
    assert cough.n_speakers == 104
    assert cough.n_utts == 890
    assert round(cough.utts_per_spk, 1) == 8.6
    assert cough.avg_dur_s == pytest.approx(0.27, abs=1e-12)


def test_stats_single():
    s = manifest_stats([ManifestEntry("u", "A", "wei", "u.wav", 0.5)])
    assert (s.n_speakers, s.n_utts, s.avg_dur_s) == (1, 1, 0.5)


def test_stats_utts_per_spk():
    es = [ManifestEntry(f"a{i}", "A", "cough", "x", 0.2) for i in range(2)]
    es += [ManifestEntry(f"b{i}", "B", "cough", "x", 0.2) for i in range(4)]
    assert manifest_stats(es).utts_per_spk == 3.0


def test_stats_empty():
    with pytest.raises(EmptyManifest):
        manifest_stats([])


entry_lists = st.lists(
    st.tuples(st.integers(0, 6), st.sampled_from(["cough", "laugh", "wei", "other"]),
              st.floats(0.01, 2.0)),
    min_size=1, max_size=40)


@given(entry_lists)
@settings(max_examples=100, deadline=None)
def test_stats_match_recount(rows):
    entries = [ManifestEntry(f"u{i}", f"S{s}", ev, "x.wav", d) for i, (s, ev, d) in enumerate(rows)]
    stats = manifest_stats(entries)
    assert stats.n_utts == len(rows)
    assert stats.n_speakers == len({s for s, _, _ in rows})
    assert stats.avg_dur_s == pytest.approx(sum(d for _, _, d in rows) / len(rows), rel=1e-12)
    for ev in {ev for _, ev, _ in rows}:
        sub = [r for r in rows if r[1] == ev]
        es = stats.per_event[ev]
        assert es.n_utts == len(sub)
        assert es.n_speakers == len({s for s, _, _ in sub})
        assert es.utts_per_spk == pytest.approx(len(sub) / es.n_speakers)


# -- synthesis -------------------------------------------------------------


def test_synth_deterministic():
    spec = SynthSpec(n_speakers=2, utts_per_speaker_per_event=2, seed=11)
    c1, e1 = synth_corpus(spec)
    c2, e2 = synth_corpus(spec)
    assert e1 == e2
    assert all(np.array_equal(a.samples, b.samples) for a, b in zip(c1, c2))


def test_synth_counts():
    clips, entries = synth_corpus(SynthSpec())
    assert len(entries) == len(clips) == 480
    assert len({e.spk_id for e in entries}) == 20
    assert len({e.utt_id for e in entries}) == 480


def test_synth_seed_changes_audio():
    c1, _ = synth_corpus(SynthSpec(n_speakers=1, utts_per_speaker_per_event=1, seed=1))
    c2, _ = synth_corpus(SynthSpec(n_speakers=1, utts_per_speaker_per_event=1, seed=2))
    assert any(not np.array_equal(a.samples, b.samples) for a, b in zip(c1, c2))


@given(st.floats(0.05, 0.5), st.floats(1e-3, 0.3), st.integers(0, 2 ** 32))
@settings(max_examples=15, deadline=None)
def test_synth_durations_in_range(lo, width, seed):
    spec = SynthSpec(n_speakers=2, utts_per_speaker_per_event=2, duration_range_s=(lo, lo + width),
                     seed=seed)
    clips, entries = synth_corpus(spec)
    for clip, e in zip(clips, entries):
        assert lo <= clip.duration_s <= lo + width
        assert e.duration_s == clip.duration_s
        assert np.max(np.abs(clip.samples)) <= 1.0


@pytest.mark.parametrize("kw", [
    {"n_speakers": 0},
    {"utts_per_speaker_per_event": 0},
    {"events": ("sneeze",)},
    {"duration_range_s": (0.4, 0.2)},
    {"sample_rate_hz": 4000},
])
def test_synth_invalid(kw):
    with pytest.raises(InvalidSpec):
        synth_corpus(SynthSpec(**kw))
