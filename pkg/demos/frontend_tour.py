"""A walk through the front end on synthetic coughs.

Renders one cough for each of three speakers at 16 kHz, decimates to 8 kHz,
and follows the audio through filterbank analysis, mean normalization and
splicing.  Along the way it shows why mean normalization matters here: a
gain change shifts every log energy by the same constant, and the
normalization removes it.

    python3 demos/frontend_tour.py
"""

import numpy as np

from trivial_sre import SpliceSpec, SynthSpec, apply_cmvn, compute_fbank, decimate_2x, splice, synth_corpus
from trivial_sre.corpus import AudioClip
from trivial_sre.ctdnn import CtDnnConfig, receptive_field_span
from trivial_sre.frontend import FrontendConfig, mel_center_frequencies

clips, entries = synth_corpus(SynthSpec(n_speakers=3, utts_per_speaker_per_event=1, events=("cough",), seed=3))
cfg = FrontendConfig()

print("filter centres (Hz), every fifth of 40:")
print("  " + "  ".join(f"{c:6.0f}" for c in mel_center_frequencies(cfg)[::5]))
print()

fbanks = {}
for clip, e in zip(clips, entries):
    low = decimate_2x(clip)
    fb = compute_fbank(low, cfg)
    fbanks[e.spk_id] = fb
    peak = mel_center_frequencies(cfg)[fb.mean(axis=0).argmax()]
    print(f"{e.utt_id}: {clip.duration_s:.3f}s at {clip.sample_rate_hz} Hz -> {len(low.samples)} samples "
          f"at 8 kHz -> {fb.shape[0]} frames; strongest band near {peak:.0f} Hz")

# a louder take of the same cough: every log energy moves by 2 log(gain)
spk, fb = next(iter(fbanks.items()))
clip = decimate_2x(clips[0])
louder = compute_fbank(AudioClip(clip.samples * 3.0, 8000), cfg)
shift = louder - fb
print(f"\ngain 3 on {spk}: log-energy shift {shift.mean():.6f} +/- {shift.std():.1e} "
      f"(2 log 3 = {2 * np.log(3):.6f})")
print(f"after mean normalization the two differ by at most "
      f"{np.abs(apply_cmvn(louder) - apply_cmvn(fb)).max():.1e}")

# what the network actually sees
x = splice(apply_cmvn(fb), SpliceSpec(4, 4))
print(f"\nspliced input: {x.shape[0]} frames x {x.shape[1]} values (9 frames of 40 bands)")
print(f"each output frame of the default network depends on {receptive_field_span(CtDnnConfig())} input frames,")
print("so a 0.3 s event (about 28 frames) is covered by barely more than one receptive field.")

# the static envelope is exactly what mean normalization removes; speaker
# identity has to survive in how the spectrum moves during the event
names = sorted(fbanks)


def glide(fb):
    z = apply_cmvn(fb)
    third = len(z) // 3
    return z[-third:].mean(axis=0) - z[:third].mean(axis=0)


print("\nbetween-speaker distances:")
print("  pair         raw mean   normalized mean   normalized glide")
for i, a in enumerate(names):
    for b in names[i + 1:]:
        raw = np.linalg.norm(fbanks[a].mean(0) - fbanks[b].mean(0))
        norm = np.linalg.norm(apply_cmvn(fbanks[a]).mean(0) - apply_cmvn(fbanks[b]).mean(0))
        moving = np.linalg.norm(glide(fbanks[a]) - glide(fbanks[b]))
        print(f"  {a}-{b}  {raw:9.2f}   {norm:15.2f}   {moving:16.2f}")
