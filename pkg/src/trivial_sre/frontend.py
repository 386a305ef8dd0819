"""Log mel filterbank (Fbank) features, mean normalization and frame splicing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, RateMismatch, TooShort

FRONTEND_RATE_HZ = 8000


@dataclass(frozen=True)
class FrontendConfig:
    frame_len_ms: float = 25.0
    frame_shift_ms: float = 10.0
    preemphasis: float = 0.97
    n_mels: int = 40
    fmin_hz: float = 20.0
    fmax_hz: float = 3800.0
    log_floor: float = 1e-10
    sample_rate_hz: int = FRONTEND_RATE_HZ

    def __post_init__(self):
        if not 0 <= self.preemphasis < 1:
            raise ValueError("preemphasis must lie in [0, 1)")
        if self.n_mels < 2:
            raise ValueError("n_mels must be >= 2")
        if not 0 <= self.fmin_hz < self.fmax_hz <= self.sample_rate_hz / 2:
            raise ValueError("need 0 <= fmin_hz < fmax_hz <= sample_rate/2")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        if self.frame_len_samples < 1 or self.frame_shift_samples < 1:
            raise ValueError("frame length and shift must span at least one sample")

    @property
    def frame_len_samples(self) -> int:
        return int(round(self.frame_len_ms * self.sample_rate_hz / 1000.0))

    @property
    def frame_shift_samples(self) -> int:
        return int(round(self.frame_shift_ms * self.sample_rate_hz / 1000.0))

    @property
    def n_fft(self) -> int:
        return 1 << (self.frame_len_samples - 1).bit_length()


@dataclass(frozen=True)
class SpliceSpec:
    left: int = 4
    right: int = 4

    @property
    def width(self) -> int:
        return self.left + self.right + 1


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: FrontendConfig) -> np.ndarray:
    """Center frequency (Hz) of each triangular filter."""
    mels = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)
    return mel_to_hz(mels[1:-1])


def mel_filterbank(cfg: FrontendConfig) -> np.ndarray:
    """Triangular filters on the power-spectrum bins, shape (n_mels, n_fft//2 + 1).

    Filter edges are equally spaced on the HTK mel scale between fmin and fmax;
    the triangles are linear in mel.
    """
    edges = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)
    bin_mel = hz_to_mel(np.arange(cfg.n_fft // 2 + 1) * cfg.sample_rate_hz / cfg.n_fft)
    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bin_mel - left) / (center - left)
    down = (right - bin_mel) / (right - center)
    return np.maximum(0.0, np.minimum(up, down))


def frame_count(n_samples, cfg: FrontendConfig) -> int:
    if n_samples < cfg.frame_len_samples:
        return 0
    return 1 + (n_samples - cfg.frame_len_samples) // cfg.frame_shift_samples


def compute_fbank(clip, cfg: FrontendConfig | None = None) -> np.ndarray:
    """Log mel filterbank energies, one row per frame.

    Pre-emphasis ``y[n] = x[n] - a*x[n-1]`` runs over the whole clip, then each
    frame gets a Hamming window and a power spectrum of size next-pow2(frame length).
    Energies below ``log_floor`` are floored before the log, so exact silence
    maps to ``log(log_floor)``.
    """
    cfg = cfg or FrontendConfig()
    if clip.sample_rate_hz != cfg.sample_rate_hz:
        raise RateMismatch(f"expected {cfg.sample_rate_hz} Hz audio, got {clip.sample_rate_hz} Hz")
    x = np.asarray(clip.samples, dtype=np.float64)
    n_frames = frame_count(len(x), cfg)
    if n_frames == 0:
        raise TooShort(f"{len(x)} samples is shorter than one {cfg.frame_len_samples}-sample frame")

    L, S = cfg.frame_len_samples, cfg.frame_shift_samples
    idx = np.arange(n_frames)[:, None] * S + np.arange(L)[None, :]
    y = x.copy()
    y[1:] -= cfg.preemphasis * x[:-1]
    emph = y[idx] * np.hamming(L)
    power = np.abs(np.fft.rfft(emph, n=cfg.n_fft, axis=1)) ** 2
    energies = power @ mel_filterbank(cfg).T
    return np.log(np.maximum(energies, cfg.log_floor))


def apply_cmvn(features) -> np.ndarray:
    """Subtract the per-dimension mean over frames (variance is left alone)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("apply_cmvn needs a nonempty T x D matrix")
    return features - features.mean(axis=0, keepdims=True)


def splice(features, spec: SpliceSpec | None = None) -> np.ndarray:
    """Concatenate each frame with its neighbours t-left .. t+right.

    Out-of-range neighbours replicate the first/last frame, so the number of
    rows is unchanged.
    """
    spec = spec or SpliceSpec()
    features = np.asarray(features, dtype=np.float64)
    T = features.shape[0]
    if T == 0:
        raise ValueError("cannot splice an empty feature matrix")
    offsets = np.arange(-spec.left, spec.right + 1)
    idx = np.clip(np.arange(T)[:, None] + offsets[None, :], 0, T - 1)
    return features[idx].reshape(T, -1)


def featurize(clip, cfg: FrontendConfig | None = None, spec: SpliceSpec | None = None) -> np.ndarray:
    """Fbank -> mean normalization -> splicing, the network input for one utterance."""
    return splice(apply_cmvn(compute_fbank(clip, cfg)), spec)


# ---------------------------------------------------------------------------
# Text dump: header "utt_id T D", then T lines of space-separated values.


def _fmt(values, hexfloat):
    if hexfloat:
        return " ".join(float.hex(float(v)) for v in values)
    return " ".join(f"{v:.9g}" for v in values)


def write_feature_block(fh, utt_id, features, hexfloat=False, extra=()):
    """Append one utterance block.  ``extra`` tokens go after ``T D`` in the header."""
    features = np.asarray(features, dtype=np.float64)
    T, D = features.shape
    fh.write(" ".join([utt_id, str(T), str(D), *map(str, extra)]) + "\n")
    for row in features:
        fh.write(_fmt(row, hexfloat) + "\n")


def _parse_value(tok):
    return float.fromhex(tok) if "0x" in tok.lower() else float(tok)


def read_feature_blocks(path):
    """Yield ``(utt_id, extra_tokens, matrix)`` for every block of a dump file."""
    with open(path, encoding="utf-8") as fh:
        lineno = 0
        while True:
            header = fh.readline()
            lineno += 1
            if not header:
                return
            if not header.strip():
                continue
            parts = header.split()
            if len(parts) < 3:
                raise ParseError("block header needs 'utt_id T D'", lineno)
            utt_id, T, D = parts[0], int(parts[1]), int(parts[2])
            rows = np.empty((T, D))
            for t in range(T):
                line = fh.readline()
                lineno += 1
                vals = line.split()
                if len(vals) != D:
                    raise ParseError(f"expected {D} values, got {len(vals)}", lineno)
                rows[t] = [_parse_value(v) for v in vals]
            yield utt_id, parts[3:], rows


__all__ = [
    "FrontendConfig", "SpliceSpec", "compute_fbank", "apply_cmvn", "splice", "featurize",
    "mel_filterbank", "mel_center_frequencies", "hz_to_mel", "mel_to_hz", "frame_count",
    "write_feature_block", "read_feature_blocks",
]

