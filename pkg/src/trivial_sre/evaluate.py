"""Verification trials, scoring, EER and DET operating points."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend import (
    apply_lda,
    average_enrollment,
    cosine_score,
    fit_lda,
    fit_plda,
    length_normalize,
    plda_score,
)
from .errors import InsufficientData, MissingEmbedding, OneClassOnly, ParseError

TARGET, NONTARGET = "target", "nontarget"
SCORERS = ("cosine", "lda", "plda")


@dataclass(frozen=True)
class Trial:
    enroll_utts: tuple
    test_utt: str
    label: str
    event: str

    def __post_init__(self):
        if not self.enroll_utts:
            raise ValueError("a trial needs at least one enrollment utterance")
        if self.test_utt in self.enroll_utts:
            raise ValueError(f"test utterance {self.test_utt!r} is also enrolled")
        if self.label not in (TARGET, NONTARGET):
            raise ValueError(f"label must be target or nontarget, got {self.label!r}")

    @property
    def is_target(self) -> bool:
        return self.label == TARGET


@dataclass
class ScoreSet:
    records: list = field(default_factory=list)  # (Trial, score)

    def split(self):
        """(target scores, nontarget scores) as arrays."""
        tar = np.array([s for t, s in self.records if t.is_target], dtype=np.float64)
        non = np.array([s for t, s in self.records if not t.is_target], dtype=np.float64)
        return tar, non

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class EerReport:
    eer: float
    threshold: float
    n_target: int
    n_nontarget: int
    det_points: list
    thresholds: list


def build_trials(manifest, event, enroll_per_spk=3, seed=0):
    """Cross every speaker's enrollment set with every held-out utterance.

    Per speaker (sorted by id) the utterances of ``event`` are shuffled with a
    seeded generator; the first ``enroll_per_spk`` form the enrollment set and
    the rest are test utterances.  Speakers with fewer than
    ``enroll_per_spk`` utterances are skipped.
    """
    by_spk = defaultdict(list)
    for e in manifest:
        if e.event == event:
            by_spk[e.spk_id].append(e.utt_id)
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    enrolled, tests = [], []
    for spk in sorted(by_spk):
        utts = by_spk[spk]
        if len(utts) < enroll_per_spk:
            continue
        order = rng.permutation(len(utts))
        shuffled = [utts[i] for i in order]
        enrolled.append((spk, tuple(shuffled[:enroll_per_spk])))
        tests.extend((spk, u) for u in shuffled[enroll_per_spk:])
    eligible = sum(1 for spk in by_spk if len(by_spk[spk]) >= enroll_per_spk + 1)
    if enroll_per_spk < 1 or eligible < 2:
        raise InsufficientData(
            f"event {event!r}: need >= 2 speakers with >= {enroll_per_spk + 1} utterances, found {eligible}"
        )
    return [
        Trial(enroll, test_utt, TARGET if spk == test_spk else NONTARGET, event)
        for spk, enroll in enrolled
        for test_spk, test_utt in tests
    ]


# ---------------------------------------------------------------------------
# scoring


@dataclass(frozen=True, eq=False)
class BackendModels:
    lda: object = None
    plda: object = None
    length_norm: bool = True


def fit_backend(train_vectors, lda_dim=150, plda_iters=10, length_norm=True, need_plda=True):
    """Fit the LDA (and optionally PLDA) models on labelled training d-vectors.

    ``lda_dim`` is clipped to ``n_speakers - 1``; PLDA is trained on the
    LDA-projected, length-normalized vectors.
    """
    vecs = [length_normalize(v) for v in train_vectors] if length_norm else list(train_vectors)
    n_spk = len({v.spk_id for v in vecs})
    dim = min(lda_dim, n_spk - 1, vecs[0].dim)
    lda = fit_lda(vecs, dim)
    plda = None
    if need_plda:
        projected = [_post_lda(apply_lda(lda, v), length_norm) for v in vecs]
        plda = fit_plda(projected, plda_iters)
    return BackendModels(lda, plda, length_norm)


def _post_lda(v, length_norm):
    return length_normalize(v) if length_norm else v


def _prepare(v, scorer, models):
    x = v.values
    if models.length_norm:
        x = length_normalize(x)
    if scorer in ("lda", "plda") and models.lda is not None:
        x = apply_lda(models.lda, x)
        if scorer == "plda":
            x = _post_lda(x, models.length_norm)
    return x


def score_trials(trials, dvectors, scorer="cosine", models=None) -> ScoreSet:
    """One score per trial; multi-utterance enrollments are averaged first.

    Args:
        trials: list of Trial.
        dvectors: mapping utt_id -> DVector (or a list of DVector).
        scorer: ``cosine``, ``lda`` (LDA-projected cosine) or ``plda``.
        models: BackendModels; required for ``lda`` and ``plda``.
    """
    if scorer not in SCORERS:
        raise ValueError(f"unknown scorer {scorer!r}; choose from {SCORERS}")
    if not isinstance(dvectors, dict):
        dvectors = {v.utt_id: v for v in dvectors}
    models = models or BackendModels()
    if scorer == "lda" and models.lda is None:
        raise ValueError("lda scorer needs a fitted LDA transform")
    if scorer == "plda" and models.plda is None:
        raise ValueError("plda scorer needs a fitted PLDA model")

    cache = {}

    def prepared(utt):
        if utt not in cache:
            if utt not in dvectors:
                raise MissingEmbedding(utt)
            cache[utt] = _prepare(dvectors[utt], scorer, models)
        return cache[utt]

    enroll_cache = {}
    records = []
    for trial in trials:
        key = trial.enroll_utts
        if key not in enroll_cache:
            enroll_cache[key] = average_enrollment([prepared(u) for u in key],
                                                   normalize=models.length_norm)
        e = enroll_cache[key]
        t = prepared(trial.test_utt)
        s = plda_score(models.plda, e, t) if scorer == "plda" else cosine_score(e, t)
        if not math.isfinite(s):
            raise FloatingPointError(f"non-finite score for trial {trial}")
        records.append((trial, s))
    return ScoreSet(records)


# ---------------------------------------------------------------------------
# EER / DET


def _sweep(tar, non):
    tar = np.sort(np.asarray(tar, dtype=np.float64))
    non = np.sort(np.asarray(non, dtype=np.float64))
    if tar.size == 0 or non.size == 0:
        raise OneClassOnly(f"need targets and nontargets, got {tar.size} and {non.size}")
    thresholds = np.unique(np.concatenate([tar, non]))
    # accept iff score >= threshold
    far = (non.size - np.searchsorted(non, thresholds, side="left")) / non.size
    frr = np.searchsorted(tar, thresholds, side="left") / tar.size
    thresholds = np.append(thresholds, np.inf)
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)
    return thresholds, far, frr


def det_points_arrays(tar, non):
    _, far, frr = _sweep(tar, non)
    return list(zip(far.tolist(), frr.tolist()))


def det_points(scores: ScoreSet):
    """(FAR, FRR) at every distinct score plus +inf, thresholds ascending."""
    return det_points_arrays(*scores.split())


def eer_arrays(tar, non) -> EerReport:
    thresholds, far, frr = _sweep(tar, non)
    d = far - frr  # goes from +1 down to -1
    k = int(np.argmax(d <= 0))
    if d[k] == 0 or k == 0:
        eer = far[k]
    else:
        alpha = d[k - 1] / (d[k - 1] - d[k])
        eer = far[k - 1] + alpha * (far[k] - far[k - 1])
    cand = [k - 1, k] if k > 0 else [k]
    best = min(cand, key=lambda i: (abs(d[i]), i))
    return EerReport(float(eer), float(thresholds[best]), len(tar), len(non),
                     list(zip(far.tolist(), frr.tolist())), thresholds.tolist())


def compute_eer(scores: ScoreSet) -> EerReport:
    """Equal error rate with linear interpolation between sweep points."""
    return eer_arrays(*scores.split())


# ---------------------------------------------------------------------------
# files


def write_trials(path, trials):
    with open(path, "w", encoding="utf-8") as fh:
        for t in trials:
            fh.write(f"{','.join(t.enroll_utts)}\t{t.test_utt}\t{t.label}\t{t.event}\n")


def _parse_trial(fields, lineno):
    if len(fields) != 4:
        raise ParseError(f"expected 4 trial fields, got {len(fields)}", lineno)
    try:
        return Trial(tuple(fields[0].split(",")), fields[1], fields[2], fields[3])
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None


def read_trials(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if line and not line.startswith("#"):
                out.append(_parse_trial(line.split("\t"), lineno))
    return out


def write_scores(path, scores: ScoreSet):
    with open(path, "w", encoding="utf-8") as fh:
        for t, s in scores.records:
            fh.write(f"{','.join(t.enroll_utts)}\t{t.test_utt}\t{t.label}\t{t.event}\t{s!r}\n")


def read_scores(path) -> ScoreSet:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise ParseError(f"expected 5 score fields, got {len(fields)}", lineno)
            try:
                score = float(fields[4])
            except ValueError:
                raise ParseError(f"bad score {fields[4]!r}", lineno) from None
            records.append((_parse_trial(fields[:4], lineno), score))
    return ScoreSet(records)


def format_report(report: EerReport, header=None) -> str:
    lines = [f"# {k}={v}" for k, v in (header or {}).items()]
    lines += [
        f"eer={report.eer!r}",
        f"threshold={report.threshold!r}",
        f"n_target={report.n_target}",
        f"n_nontarget={report.n_nontarget}",
        "det:",
    ]
    lines += [f"{far!r} {frr!r}" for far, frr in report.det_points]
    return "\n".join(lines) + "\n"


def write_report(path, report: EerReport, header=None):
    """Write the text report and a sibling ``.csv`` with threshold,far,frr rows."""
    path = Path(path)
    path.write_text(format_report(report, header), encoding="utf-8")
    with open(path.with_suffix(".csv"), "w", encoding="utf-8") as fh:
        fh.write("threshold,far,frr\n")
        for th, (far, frr) in zip(report.thresholds, report.det_points):
            fh.write(f"{th!r},{far!r},{frr!r}\n")


def read_report(path) -> dict:
    """Parse the key=value part of a report (``det`` rows returned as a list)."""
    out = {"det": []}
    in_det = False
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#") or not line.strip():
            continue
        if line == "det:":
            in_det = True
        elif in_det:
            far, frr = line.split()
            out["det"].append((float(far), float(frr)))
        else:
            key, _, value = line.partition("=")
            out[key] = float(value) if key in ("eer", "threshold") else int(value)
    return out


# ---------------------------------------------------------------------------
# raw feature dump for external projection (e.g. t-SNE)


def dump_features(model, utterances, out_path, hexfloat=False) -> int:
    """Write frame-level feature-layer rows, one block per utterance.

    ``utterances`` yields ``(utt_id, spk_id, event, spliced_features)``.  Block
    headers are ``utt_id T D spk_id event``.  Returns the number of rows.
    """
    from .ctdnn import extract_features
    from .frontend import write_feature_block

    items = list(utterances)
    rows = extract_features(model, [x for *_, x in items]) if items else []
    n = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for (utt, spk, ev, _), feats in zip(items, rows):
            write_feature_block(fh, utt, feats, hexfloat=hexfloat, extra=(spk, ev))
            n += len(feats)
    return n


__all__ = [
    "Trial", "ScoreSet", "EerReport", "BackendModels", "build_trials", "fit_backend",
    "score_trials", "compute_eer", "eer_arrays", "det_points", "det_points_arrays",
    "dump_features", "write_trials", "read_trials", "write_scores", "read_scores",
    "write_report", "read_report", "format_report",
]
