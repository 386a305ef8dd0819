"""Audio I/O, 2x decimation, corpus manifests and the synthetic event corpus."""

from __future__ import annotations

import math
import os
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import (
    DuplicateUttId,
    EmptyManifest,
    InvalidSpec,
    OddRate,
    ParseError,
    TruncatedFile,
    UnsupportedFormat,
)

EVENTS = ("cough", "laugh", "wei")
ALL_EVENTS = EVENTS + ("other",)

PCM_SCALE = 32768.0
DECIMATION_TAPS = 63
NOISE_DB = 30.0


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    spk_id: str
    event: str
    path: str
    duration_s: float


@dataclass(frozen=True)
class EventStats:
    n_speakers: int
    n_utts: int
    utts_per_spk: float
    avg_dur_s: float


@dataclass(frozen=True)
class CorpusStats:
    n_speakers: int
    n_utts: int
    utts_per_spk: float
    avg_dur_s: float
    per_event: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic trivial-event corpus.

    Durations default to the 0.2-0.4 s range of real cough/laugh/"wei"
    segments; the rate defaults to 16 kHz so that the pipeline exercises
    decimation the same way real recordings would.
    """

    n_speakers: int = 20
    utts_per_speaker_per_event: int = 8
    events: tuple = EVENTS
    duration_range_s: tuple = (0.2, 0.4)
    sample_rate_hz: int = 16000
    seed: int = 7
    spk_prefix: str = "S"

    def validate(self):
        if self.n_speakers < 1:
            raise InvalidSpec("n_speakers must be >= 1")
        if self.utts_per_speaker_per_event < 1:
            raise InvalidSpec("utts_per_speaker_per_event must be >= 1")
        if not self.events or any(e not in EVENTS for e in self.events):
            raise InvalidSpec(f"events must be a nonempty subset of {EVENTS}, got {self.events}")
        if len(set(self.events)) != len(self.events):
            raise InvalidSpec("duplicate event in events")
        lo, hi = self.duration_range_s
        if not 0 < lo <= hi:
            raise InvalidSpec(f"need 0 < min <= max duration, got {self.duration_range_s}")
        if self.sample_rate_hz < 8000:
            raise InvalidSpec("sample_rate_hz must be at least 8000")
        if math.ceil(lo * self.sample_rate_hz) > math.floor(hi * self.sample_rate_hz):
            raise InvalidSpec("duration range contains no whole sample count")


# ---------------------------------------------------------------------------
# WAV


def read_wav(path) -> AudioClip:
    """Read a 16-bit PCM mono RIFF/WAVE file, scaling samples by 1/32768."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedFormat(f"{path}: not a RIFF/WAVE file")

    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise TruncatedFile(f"{path}: fmt chunk is {len(body)} bytes")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            if fmt is None:
                raise UnsupportedFormat(f"{path}: data chunk before fmt chunk")
            if len(body) < size:
                raise TruncatedFile(
                    f"{path}: data chunk declares {size} bytes, {len(body)} present"
                )
            format_tag, channels, rate, _, _, bits = fmt
            if format_tag != 1:
                raise UnsupportedFormat(f"{path}: format tag {format_tag} is not PCM")
            if channels != 1:
                raise UnsupportedFormat(f"{path}: {channels} channels, need mono")
            if bits != 16:
                raise UnsupportedFormat(f"{path}: {bits}-bit samples, need 16-bit")
            if size % 2:
                raise TruncatedFile(f"{path}: odd data size {size}")
            samples = np.frombuffer(body, dtype="<i2").astype(np.float64) / PCM_SCALE
            if samples.size == 0:
                raise TruncatedFile(f"{path}: empty data chunk")
            return AudioClip(samples, rate)
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise UnsupportedFormat(f"{path}: missing fmt chunk")
    raise TruncatedFile(f"{path}: missing data chunk")


def quantize_pcm16(samples) -> np.ndarray:
    """Round to the 16-bit grid used by :func:`write_wav`."""
    q = np.clip(np.round(np.asarray(samples, dtype=np.float64) * PCM_SCALE), -32768, 32767)
    return q / PCM_SCALE


def write_wav(path, clip: AudioClip):
    pcm = np.clip(np.round(clip.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, clip.sample_rate_hz,
                                clip.sample_rate_hz * 2, 2, 16)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + fmt + b"data" + struct.pack("<I", len(payload)) + payload)


# ---------------------------------------------------------------------------
# Decimation


def decimation_filter() -> np.ndarray:
    # cutoff 0.9 x output Nyquist, i.e. 0.45 of the input Nyquist
    return signal.firwin(DECIMATION_TAPS, 0.5 * 0.9, window="hamming")


def decimate_2x(clip: AudioClip) -> AudioClip:
    """Low-pass with a 63-tap Hamming-windowed sinc, then keep every second sample.

    The filter is applied centred (zero phase) so the output stays aligned with
    the input; output length is ``ceil(len(input) / 2)``.
    """
    if clip.sample_rate_hz % 2:
        raise OddRate(f"sample rate {clip.sample_rate_hz} is not divisible by 2")
    filtered = np.convolve(clip.samples, decimation_filter(), mode="full")
    half = DECIMATION_TAPS // 2
    filtered = filtered[half:half + len(clip.samples)]
    return AudioClip(filtered[::2].copy(), clip.sample_rate_hz // 2)


# ---------------------------------------------------------------------------
# Manifests


def load_manifest(path) -> list[ManifestEntry]:
    """Parse a TAB-separated manifest: ``utt_id spk_id event path duration_s``.

    Blank lines and lines starting with ``#`` are skipped.  Unknown event
    tokens become ``other``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise ParseError(f"expected 5 TAB-separated fields, got {len(fields)}", lineno)
            utt_id, spk_id, event, wav_path, dur = fields
            try:
                duration = float(dur)
            except ValueError:
                raise ParseError(f"non-numeric duration {dur!r}", lineno) from None
            if not math.isfinite(duration) or duration < 0:
                raise ParseError(f"invalid duration {dur!r}", lineno)
            if utt_id in seen:
                raise DuplicateUttId(f"line {lineno}: duplicate utt_id {utt_id!r}")
            seen.add(utt_id)
            if event not in EVENTS:
                event = "other"
            entries.append(ManifestEntry(utt_id, spk_id, event, wav_path, duration))
    return entries


def write_manifest(path, entries):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# utt_id\tspk_id\tevent\tpath\tduration_s\n")
        for e in entries:
            fh.write(f"{e.utt_id}\t{e.spk_id}\t{e.event}\t{e.path}\t{e.duration_s!r}\n")


def resolve_audio_path(manifest_path, entry: ManifestEntry) -> Path:
    """Relative entry paths are taken relative to the manifest's directory."""
    p = Path(entry.path)
    if p.is_absolute():
        return p
    return Path(manifest_path).parent / p


def _stats(entries) -> EventStats:
    per_spk = defaultdict(int)
    total_dur = 0.0
    for e in entries:
        per_spk[e.spk_id] += 1
        total_dur += e.duration_s
    n_utts = sum(per_spk.values())
    return EventStats(len(per_spk), n_utts, n_utts / len(per_spk), total_dur / n_utts)


def manifest_stats(entries) -> CorpusStats:
    """Speaker/utterance counts and mean duration, overall and per event."""
    entries = list(entries)
    if not entries:
        raise EmptyManifest("manifest has no entries")
    by_event = defaultdict(list)
    for e in entries:
        by_event[e.event].append(e)
    overall = _stats(entries)
    per_event = {ev: _stats(by_event[ev]) for ev in ALL_EVENTS if by_event[ev]}
    return CorpusStats(overall.n_speakers, overall.n_utts, overall.utts_per_spk,
                       overall.avg_dur_s, per_event)


# ---------------------------------------------------------------------------
# Synthetic corpus

# (low, high) Hz for the four resonances of a speaker's vocal-tract profile;
# all below 3.6 kHz so they survive decimation to 8 kHz
_FORMANT_RANGES = ((300.0, 800.0), (900.0, 1800.0), (1900.0, 2700.0), (2800.0, 3500.0))
_BANDWIDTH_RANGE = (60.0, 180.0)
_PITCH_RANGE = (90.0, 260.0)
# background noise around each event, as left by hand segmentation
_MARGIN_RANGE_S = (0.02, 0.05)
_NOISE_FLOOR = 10.0 ** (-NOISE_DB / 20.0)


@dataclass(frozen=True)
class _Speaker:
    formants: np.ndarray
    formants_end: np.ndarray
    bandwidths: np.ndarray
    pitch_hz: float


def _draw_speaker(seed, index) -> _Speaker:
    rng = np.random.default_rng([seed, index])
    formants = np.array([rng.uniform(lo, hi) for lo, hi in _FORMANT_RANGES])
    formants_end = np.array([rng.uniform(lo, hi) for lo, hi in _FORMANT_RANGES])
    bandwidths = rng.uniform(*_BANDWIDTH_RANGE, size=len(formants))
    return _Speaker(formants, formants_end, bandwidths, float(rng.uniform(*_PITCH_RANGE)))


def _resonator(formants, bandwidths, rate):
    """Denominator of an all-pole filter, one conjugate pole pair per formant."""
    a = np.array([1.0])
    for f, bw in zip(formants, bandwidths):
        r = math.exp(-math.pi * bw / rate)
        a = np.convolve(a, [1.0, -2.0 * r * math.cos(2 * math.pi * f / rate), r * r])
    return a


def _gliding_filter(src, start, end, bandwidths, rate, block=64):
    """All-pole filtering whose resonances move linearly from ``start`` to ``end``.

    Coefficients are updated every ``block`` samples; the filter state carries
    across blocks since the order never changes.
    """
    out = np.empty_like(src)
    n_blocks = max(1, -(-len(src) // block))
    zi = np.zeros(2 * len(start))
    for b in range(n_blocks):
        frac = b / max(1, n_blocks - 1)
        a = _resonator(start + frac * (end - start), bandwidths, rate)
        sl = slice(b * block, (b + 1) * block)
        out[sl], zi = signal.lfilter([1.0], a, src[sl], zi=zi)
    return out


def _harmonic_source(f0_track, rate):
    phase = 2 * math.pi * np.cumsum(f0_track) / rate
    n_harm = max(1, int(0.45 * rate / f0_track.max()))
    k = np.arange(1, n_harm + 1)[:, None]
    return (np.sin(k * phase) / k).sum(axis=0)


def _render(event, spk: _Speaker, n_total, rate, rng):
    lead = int(rng.uniform(*_MARGIN_RANGE_S) * rate)
    tail = int(rng.uniform(*_MARGIN_RANGE_S) * rate)
    n = max(n_total - lead - tail, n_total // 2)
    lead = min(lead, n_total - n)
    t = np.arange(n) / rate
    jitter = 1.0 + rng.normal(0.0, 0.02, size=len(spk.formants))
    pitch = spk.pitch_hz * (1.0 + rng.uniform(-0.06, 0.06))
    if event == "cough":
        attack = 1.0 - np.exp(-t / 0.003)
        decay = np.exp(-t / (t[-1] / 3.0 + 1e-3))
        src = rng.standard_normal(n) * attack * decay
    elif event == "laugh":
        # glottal pulse train, amplitude modulated into "ha-ha" bursts
        period = rate / pitch
        pulses = np.zeros(n)
        pulses[np.arange(0.0, n, period).astype(int)] = 1.0
        am_rate = rng.uniform(4.0, 6.0)
        am = 0.5 * (1.0 - np.cos(2 * math.pi * am_rate * t))
        src = (pulses + 0.05 * rng.standard_normal(n)) * am
    elif event == "wei":
        glide = np.linspace(0.9, 1.15, n)
        src = _harmonic_source(pitch * glide, rate)
        ramp = min(n // 4, int(0.02 * rate))
        env = np.ones(n)
        if ramp:
            edge = 0.5 * (1.0 - np.cos(np.linspace(0.0, math.pi, ramp)))
            env[:ramp] = edge
            env[-ramp:] = edge[::-1]
        src = src * env
    else:
        raise InvalidSpec(f"cannot render event {event!r}")
    y = _gliding_filter(src, spk.formants * jitter, spk.formants_end * jitter, spk.bandwidths, rate)
    y = y / np.max(np.abs(y))
    out = _NOISE_FLOOR * rng.standard_normal(n_total)
    out[lead:lead + n] += y
    y = out
    gain = 10.0 ** (rng.uniform(-3.0, 3.0) / 20.0)
    y = 0.5 * gain * y / np.max(np.abs(y))
    return quantize_pcm16(y)


def synth_corpus(spec: SynthSpec):
    """Render a deterministic corpus of cough / laugh / "wei" utterances.

    Each speaker owns two 8-pole resonator profiles and a base pitch.  Every
    event glides from the first profile to the second, so the speaker stays
    visible after per-utterance mean normalization; background noise at
    ``NOISE_DB`` below the event pads both ends.  Each utterance jitters
    duration, gain, pitch and the resonances slightly.
    Samples are already on the 16-bit grid, so writing and re-reading a clip
    reproduces it exactly.

    Returns:
        (clips, entries): parallel lists; entry paths are ``wav/<utt_id>.wav``.
    """
    spec.validate()
    rate = spec.sample_rate_hz
    lo = math.ceil(spec.duration_range_s[0] * rate)
    hi = math.floor(spec.duration_range_s[1] * rate)
    seed = int(spec.seed) & 0xFFFFFFFFFFFFFFFF
    clips, entries = [], []
    for s in range(spec.n_speakers):
        spk = _draw_speaker(seed, s)
        spk_id = f"{spec.spk_prefix}{s + 1:03d}"
        for ev in spec.events:
            ev_index = EVENTS.index(ev)
            for k in range(spec.utts_per_speaker_per_event):
                rng = np.random.default_rng([seed, s, ev_index, k])
                n = int(rng.integers(lo, hi + 1))
                samples = _render(ev, spk, n, rate, rng)
                utt_id = f"{spk_id}_{ev}_{k + 1:02d}"
                clips.append(AudioClip(samples, rate))
                entries.append(ManifestEntry(utt_id, spk_id, ev, os.path.join("wav", utt_id + ".wav"),
                                             n / rate))
    return clips, entries
