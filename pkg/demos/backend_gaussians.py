"""When do LDA and PLDA beat plain cosine scoring?

Draws d-vectors from a known two-covariance model in which the within-speaker
noise is strongly anisotropic, so a few nuisance directions swamp the
speaker directions under cosine scoring.  The back end is then trained on
either plenty or very few speakers.

With plenty of speakers LDA finds and suppresses the nuisance directions and
PLDA adds a calibrated score on top.  With fewer training vectors than
dimensions the within-speaker scatter is rank-deficient: LDA then favours
directions in which the training speakers happen to show no variation at
all, and these do not carry over to new speakers.  Cosine scoring suffers
from the shared offset as well as the nuisance directions; the LDA-based
scorers subtract the training mean first.  The full pipeline is in
the second regime (270 training vectors of 400 dimensions).

    python3 demos/backend_gaussians.py
"""

import numpy as np

from trivial_sre import DVector
from trivial_sre.corpus import ManifestEntry
from trivial_sre.evaluate import build_trials, compute_eer, fit_backend, score_trials

DIM = 60
rng = np.random.default_rng(0)
# speaker variation lives in 10 directions, nuisance in 5 others with 5x the spread
basis = np.linalg.qr(rng.standard_normal((DIM, DIM)))[0]
between = np.zeros(DIM)
between[:10] = 1.0
within = np.full(DIM, 0.3)
within[10:15] = 25.0
offset = rng.normal(0, 3, DIM)  # shared mean, as network outputs have


def draw(prefix, n_spk, per, seed):
    r = np.random.default_rng(seed)
    vecs, manifest = [], []
    for s in range(n_spk):
        centre = offset + basis @ (r.standard_normal(DIM) * np.sqrt(between))
        for k in range(per):
            utt = f"{prefix}{s:03d}_{k}"
            x = centre + basis @ (r.standard_normal(DIM) * np.sqrt(within))
            vecs.append(DVector(utt, x, f"{prefix}{s:03d}", "cough"))
            manifest.append(ManifestEntry(utt, f"{prefix}{s:03d}", "cough", "-", 0.3))
    return vecs, manifest


test_vecs, test_manifest = draw("S", 40, 8, 1)
trials = build_trials(test_manifest, "cough", enroll_per_spk=3, seed=5)
print(f"{len(trials)} trials from 40 held-out speakers, {DIM}-dimensional vectors\n")
print(f"{'training set':>26}  {'cosine':>7}  {'lda':>7}  {'plda':>7}")
for n_spk, per in ((300, 10), (40, 10), (12, 4)):
    train_vecs, _ = draw("T", n_spk, per, 2)
    models = fit_backend(train_vecs, lda_dim=20)
    eers = [compute_eer(score_trials(trials, test_vecs, s, models)).eer for s in ("cosine", "lda", "plda")]
    label = f"{n_spk} spk x {per} ({n_spk * per} vecs)"
    print(f"{label:>26}  " + "  ".join(f"{100 * e:6.2f}%" for e in eers))
