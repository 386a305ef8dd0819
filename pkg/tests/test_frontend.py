import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trivial_sre.corpus import AudioClip
from trivial_sre.errors import RateMismatch, TooShort
from trivial_sre.frontend import (
    FrontendConfig,
    SpliceSpec,
    apply_cmvn,
    compute_fbank,
    featurize,
    frame_count,
    read_feature_blocks,
    splice,
    write_feature_block,
)

CFG = FrontendConfig()


def htk_mel(f):
    return 2595.0 * math.log10(1.0 + f / 700.0)


def slow_fbank(x, rate=8000, n_mels=40, fmin=20.0, fmax=3800.0, pre=0.97, floor=1e-10):
    """Loop-level reference: explicit DFT, Hamming formula, per-bin triangles."""
    L, S, nfft = 200, 80, 256
    y = [x[0]] + [x[n] - pre * x[n - 1] for n in range(1, len(x))]
    lo, hi = htk_mel(fmin), htk_mel(fmax)
    edges = [lo + (hi - lo) * i / (n_mels + 1) for i in range(n_mels + 2)]
    k = np.arange(nfft // 2 + 1)
    n = np.arange(L)
    dft = np.exp(-2j * np.pi * np.outer(k, n) / nfft)
    rows = []
    for t in range(1 + (len(x) - L) // S):
        frame = [y[t * S + i] * (0.54 - 0.46 * math.cos(2 * math.pi * i / (L - 1))) for i in range(L)]
        power = np.abs(dft @ np.array(frame)) ** 2
        row = []
        for m in range(n_mels):
            a, c, b = edges[m], edges[m + 1], edges[m + 2]
            e = 0.0
            for j in range(nfft // 2 + 1):
                mel = htk_mel(j * rate / nfft)
                if a < mel <= c:
                    e += power[j] * (mel - a) / (c - a)
                elif c < mel < b:
                    e += power[j] * (b - mel) / (b - c)
            row.append(math.log(max(e, floor)))
        rows.append(row)
    return np.array(rows)


def test_matches_loop_reference():
    x = np.random.default_rng(0).uniform(-0.5, 0.5, 8 * 80 + 200)
    got = compute_fbank(AudioClip(x, 8000))
    ref = slow_fbank(x)
    assert got.shape == ref.shape == (9, 40)
    assert np.max(np.abs(got - ref)) < 1e-9


def test_silence_is_floor():
    fb = compute_fbank(AudioClip(np.zeros(8000), 8000))
    assert fb.shape == (98, 40)
    assert np.all(fb == math.log(1e-10))


def test_sine_argmax_nearest_center():
    t = np.arange(8000) / 8000
    fb = compute_fbank(AudioClip(0.5 * np.sin(2 * np.pi * 1000 * t), 8000))
    lo, hi = htk_mel(20.0), htk_mel(3800.0)
    centers = [700.0 * (10 ** ((lo + (hi - lo) * i / 41) / 2595.0) - 1.0) for i in range(1, 41)]
    want = int(np.argmin([abs(c - 1000.0) for c in centers]))
    assert np.all(fb.argmax(axis=1) == want)


def test_too_short():
    with pytest.raises(TooShort):
        compute_fbank(AudioClip(np.zeros(100), 8000))


def test_rate_checked():
    with pytest.raises(RateMismatch):
        compute_fbank(AudioClip(np.zeros(16000), 16000))


@given(st.floats(0.01, 50.0), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_amplitude_scaling_law(alpha, seed):
    x = np.random.default_rng(seed).standard_normal(1200) * 0.1
    a = compute_fbank(AudioClip(x, 8000))
    b = compute_fbank(AudioClip(alpha * x, 8000))
    floor = math.log(1e-10)
    ok = (a > floor + 1) & (b > floor + 1)
    assert ok.mean() > 0.9
    assert np.max(np.abs((b - a)[ok] - 2 * math.log(alpha))) < 1e-6


@given(st.integers(200, 3000), st.integers(0, 79), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_trailing_samples_invariance(n, extra, seed):
    # pad n up to a frame boundary, then add fewer than a shift of samples
    n = 200 + ((n - 200) // 80) * 80
    x = np.random.default_rng(seed).standard_normal(n + extra)
    a = compute_fbank(AudioClip(x[:n], 8000))
    b = compute_fbank(AudioClip(x, 8000))
    assert a.shape[0] == frame_count(n, CFG) == 1 + (n - 200) // 80
    assert np.array_equal(a, b)


# -- CMVN ------------------------------------------------------------------


@given(st.integers(1, 30), st.integers(1, 12), st.floats(-100, 100), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_cmvn_properties(T, D, c, seed):
    x = np.random.default_rng(seed).normal(0, 3, (T, D))
    out = apply_cmvn(x)
    assert np.max(np.abs(out.mean(axis=0))) < 1e-9
    assert np.allclose(apply_cmvn(x + c), out, atol=1e-9)


def test_cmvn_single_frame():
    assert np.all(apply_cmvn(np.array([[1.0, -2.0, 5.0]])) == 0.0)


# -- splicing --------------------------------------------------------------


def test_splice_shape():
    assert splice(np.zeros((10, 40)), SpliceSpec(4, 4)).shape == (10, 360)


def test_splice_single_frame():
    f = np.arange(5.0)[None, :]
    assert np.array_equal(splice(f, SpliceSpec(4, 4)), np.tile(f, (1, 9)))


def test_splice_identity():
    x = np.random.default_rng(1).standard_normal((7, 3))
    assert np.array_equal(splice(x, SpliceSpec(0, 0)), x)


@given(st.integers(1, 25), st.integers(1, 6), st.integers(0, 5), st.integers(0, 5))
@settings(max_examples=50, deadline=None)
def test_splice_center_and_clamp(T, D, left, right):
    x = np.random.default_rng(T * 31 + D).standard_normal((T, D))
    out = splice(x, SpliceSpec(left, right)).reshape(T, left + right + 1, D)
    assert np.array_equal(out[:, left, :], x)
    for t in range(T):
        for j, off in enumerate(range(-left, right + 1)):
            assert np.array_equal(out[t, j], x[min(max(t + off, 0), T - 1)])


def test_featurize_shape():
    t = np.arange(2400) / 8000
    x = np.sin(2 * np.pi * 440 * t)
    assert featurize(AudioClip(x, 8000)).shape == (frame_count(2400, CFG), 360)


# -- dump format -----------------------------------------------------------


def test_feature_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    a, b = rng.standard_normal((4, 6)) * 1e3, rng.standard_normal((2, 6))
    p_hex, p_dec = tmp_path / "h.txt", tmp_path / "d.txt"
    for path, hexfloat in ((p_hex, True), (p_dec, False)):
        with open(path, "w") as fh:
            write_feature_block(fh, "u1", a, hexfloat, extra=("S1", "cough"))
            write_feature_block(fh, "u2", b, hexfloat)
    blocks = list(read_feature_blocks(p_hex))
    assert [(u, e) for u, e, _ in blocks] == [("u1", ["S1", "cough"]), ("u2", [])]
    assert np.array_equal(blocks[0][2], a) and np.array_equal(blocks[1][2], b)
    dec = list(read_feature_blocks(p_dec))
    assert np.allclose(dec[0][2], a, rtol=1e-8, atol=0)
