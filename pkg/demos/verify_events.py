"""Speaker verification on synthetic coughs, laughs and "wei"s, end to end.

Runs the same stages as ``trivial-sre pipeline``: synthesize a 20-speaker
evaluation corpus and a separate 30-speaker training corpus, train the
feature network, extract d-vectors, build trials, score and evaluate.  The
scoring and evaluation stages are then repeated for each back end.  Takes
about two and a half minutes on one core.

The LDA and PLDA back ends are trained on 270 d-vectors of 400 dimensions.
Their within-speaker scatter therefore has no variation at all in most
directions, and LDA latches onto exactly those.  The last lines print the
resulting eigenvalues: ratios of between- to within-speaker variance in the
hundreds of thousands, which new speakers do not share.

    python3 demos/verify_events.py [out_dir]
"""

import logging
import sys
import tempfile
from pathlib import Path

from trivial_sre.config import parse_config
from trivial_sre.backend import read_dvectors
from trivial_sre.evaluate import fit_backend, read_scores
from trivial_sre.pipeline import run_stage

logging.basicConfig(level=logging.INFO, format="  %(message)s", stream=sys.stdout)
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="trivial-sre-"))
cfg = parse_config(None, [f"paths.out_dir={out}"])

print(f"artifacts in {out}\n")
for stage in ("synth", "train", "extract"):
    print(f"[{stage}]")
    run_stage(stage, cfg)

logging.getLogger().setLevel(logging.WARNING)
results = {}
for scorer in ("cosine", "lda", "plda"):
    cfg.set("eval.scorer", scorer)
    run_stage("score", cfg)
    for event, report in run_stage("eval", cfg).items():
        results[scorer, event] = report

events = cfg.events()
print(f"\nEER (%)     " + "".join(f"{e:>9}" for e in events))
for scorer in ("cosine", "lda", "plda"):
    print(f"{scorer:<12}" + "".join(f"{100 * results[scorer, e].eer:9.2f}" for e in events))

# cosine scores crowd near 1: every d-vector shares a large common component
rep = results["cosine", "cough"]
print(f"\ncosine / cough: {rep.n_target} target and {rep.n_nontarget} nontarget trials")
print("  threshold    false accept   false reject")
pts = list(zip(rep.thresholds, rep.det_points))
for th, (far, frr) in pts[:: max(1, len(pts) // 8)]:
    print(f"  {th:9.4f}    {far:12.3f}   {frr:12.3f}")

plda_scores = read_scores(out / "scores_cough.tsv")
tar, non = plda_scores.split()
print(f"\nPLDA log-likelihood ratios on coughs: targets median {sorted(tar)[len(tar) // 2]:.3g}, "
      f"nontargets median {sorted(non)[len(non) // 2]:.3g}")

lda = fit_backend(read_dvectors(out / "train_dvectors.txt"), need_plda=False).lda
ev = lda.eigenvalues
print(f"LDA on {lda.projection.shape[1]}-dim training d-vectors kept {len(ev)} directions, "
      f"eigenvalues {ev[-1]:.3g} to {ev[0]:.3g}")
