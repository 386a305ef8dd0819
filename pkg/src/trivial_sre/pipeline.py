"""Stage functions behind the command line: synth, train, extract, score, eval.

Each stage reads the artifacts of the previous one from ``paths.out_dir``:

    eval/manifest.tsv, eval/wav/        synthetic evaluation corpus
    train/manifest.tsv, train/wav/      synthetic training corpus (other speakers)
    model.ctdnn, train_report.tsv       trained network
    dvectors.txt, train_dvectors.txt    utterance embeddings
    trials_<event>.tsv, scores_<event>.tsv
    eer_<event>.txt, eer_<event>.csv
"""

from __future__ import annotations

import logging
import zlib

import numpy as np

from . import corpus
from .backend import DVector, read_dvectors, write_dvectors
from .ctdnn import extract_features, init_params, load_params, save_params, train
from .errors import RateMismatch
from .evaluate import (
    BackendModels,
    build_trials,
    compute_eer,
    fit_backend,
    read_scores,
    score_trials,
    write_report,
    write_scores,
    write_trials,
)
from .frontend import FRONTEND_RATE_HZ, featurize

log = logging.getLogger(__name__)

STAGES = ("synth", "train", "extract", "score", "eval")


class StageError(Exception):
    def __init__(self, stage, exc):
        self.stage = stage
        self.cause = exc
        super().__init__(f"{stage}: {exc}")


def stage_seed(seed: int, stage: str) -> int:
    """Per-stage seed: the master seed XOR a fixed tag.  The evaluation corpus
    uses the master seed itself."""
    tag = 0 if stage == "synth" else zlib.crc32(stage.encode())
    return (int(seed) ^ tag) & 0xFFFFFFFFFFFFFFFF


def load_clip(path) -> corpus.AudioClip:
    """Read a WAV file and bring it to the 8 kHz frontend rate.

    16 kHz input is decimated once; anything else that is not 8 kHz is rejected.
    """
    clip = corpus.read_wav(path)
    if clip.sample_rate_hz == 2 * FRONTEND_RATE_HZ:
        clip = corpus.decimate_2x(clip)
    if clip.sample_rate_hz != FRONTEND_RATE_HZ:
        raise RateMismatch(f"{path}: {clip.sample_rate_hz} Hz audio, need 8000 or 16000 Hz")
    return clip


def featurize_manifest(manifest_path, entries, cfg):
    return [featurize(load_clip(corpus.resolve_audio_path(manifest_path, e)), cfg.frontend, cfg.splice)
            for e in entries]


# ---------------------------------------------------------------------------


def run_synth(cfg):
    lo, hi = cfg["synth.min_dur"], cfg["synth.max_dur"]
    specs = [(cfg.manifest, corpus.SynthSpec(
        n_speakers=cfg["synth.n_speakers"],
        utts_per_speaker_per_event=cfg["synth.utts_per_event"],
        events=tuple(cfg["synth.events"]),
        duration_range_s=(lo, hi),
        sample_rate_hz=cfg["synth.sample_rate"],
        seed=stage_seed(cfg["seed"], "synth"),
        spk_prefix="S"))]
    if cfg["synth.train_speakers"] > 0:
        specs.append((cfg.train_manifest, corpus.SynthSpec(
            n_speakers=cfg["synth.train_speakers"],
            utts_per_speaker_per_event=cfg["synth.train_utts_per_event"],
            events=tuple(cfg["synth.events"]),
            duration_range_s=(lo, hi),
            sample_rate_hz=cfg["synth.sample_rate"],
            seed=stage_seed(cfg["seed"], "synth-train"),
            spk_prefix="T")))
    for manifest_path, spec in specs:
        clips, entries = corpus.synth_corpus(spec)
        for clip, entry in zip(clips, entries):
            corpus.write_wav(corpus.resolve_audio_path(manifest_path, entry), clip)
        corpus.write_manifest(manifest_path, entries)
        log.info("synth: wrote %d utterances to %s", len(entries), manifest_path)


def run_train(cfg):
    entries = corpus.load_manifest(cfg.train_manifest)
    if not entries:
        raise ValueError(f"{cfg.train_manifest}: no training utterances")
    feats = featurize_manifest(cfg.train_manifest, entries, cfg)
    speakers = sorted({e.spk_id for e in entries})
    index = {s: i for i, s in enumerate(speakers)}
    data = [(x, np.full(len(x), index[e.spk_id])) for x, e in zip(feats, entries)]
    params = init_params(cfg.ctdnn(len(speakers)), stage_seed(cfg["seed"], "init"))
    log.info("train: %d utterances, %d frames, %d speakers, %d parameters",
             len(data), sum(len(x) for x, _ in data), len(speakers), params.n_parameters)
    params, reports = train(
        params, data,
        epochs=cfg["trainer.epochs"],
        lr=cfg["trainer.lr"],
        momentum=cfg["trainer.momentum"],
        lr_decay=cfg["trainer.lr_decay"],
        frame_budget=cfg["trainer.frame_budget"],
        clip_norm=cfg["trainer.clip_norm"] or None,
        seed=stage_seed(cfg["seed"], "train"),
        callback=lambda r: log.info("train: epoch %d  ce=%.4f  acc=%.4f", r.epoch,
                                    r.mean_cross_entropy, r.frame_accuracy),
    )
    save_params(params, cfg.model)
    with open(cfg.out_dir / "train_report.tsv", "w", encoding="utf-8") as fh:
        fh.write("epoch\tmean_cross_entropy\tframe_accuracy\tlr\n")
        for r in reports:
            fh.write(f"{r.epoch}\t{r.mean_cross_entropy!r}\t{r.frame_accuracy!r}\t{r.lr!r}\n")
    return params, reports


def _embed(params, manifest_path, cfg):
    entries = corpus.load_manifest(manifest_path)
    feats = featurize_manifest(manifest_path, entries, cfg)
    rows = extract_features(params, feats)
    return [DVector(e.utt_id, r.mean(axis=0), e.spk_id, e.event) for e, r in zip(entries, rows)]


def run_extract(cfg):
    params = load_params(cfg.model)
    targets = [(cfg.manifest, cfg.out_dir / "dvectors.txt")]
    if cfg.train_manifest.exists():
        targets.append((cfg.train_manifest, cfg.out_dir / "train_dvectors.txt"))
    for manifest_path, out in targets:
        vecs = _embed(params, manifest_path, cfg)
        write_dvectors(out, vecs)
        log.info("extract: %d d-vectors -> %s", len(vecs), out)


def run_score(cfg):
    scorer = cfg["eval.scorer"]
    dvecs = read_dvectors(cfg.out_dir / "dvectors.txt")
    models = None
    if scorer in ("lda", "plda"):
        train_vecs = read_dvectors(cfg.out_dir / "train_dvectors.txt")
        models = fit_backend(train_vecs, lda_dim=cfg["backend.lda_dim"],
                             plda_iters=cfg["backend.plda_iters"],
                             length_norm=cfg["backend.length_norm"],
                             need_plda=(scorer == "plda"))
    else:
        models = BackendModels(length_norm=cfg["backend.length_norm"])
    entries = corpus.load_manifest(cfg.manifest)
    for event in cfg.events():
        trials = build_trials(entries, event, cfg["trials.enroll_per_spk"],
                              stage_seed(cfg["seed"], "trials"))
        write_trials(cfg.out_dir / f"trials_{event}.tsv", trials)
        scores = score_trials(trials, dvecs, scorer, models)
        write_scores(cfg.out_dir / f"scores_{event}.tsv", scores)
        log.info("score: %s, %d trials (%s)", event, len(trials), scorer)


def run_eval(cfg):
    results = {}
    for event in cfg.events():
        scores = read_scores(cfg.out_dir / f"scores_{event}.tsv")
        report = compute_eer(scores)
        header = {"event": event, "scorer": cfg["eval.scorer"], "seed": cfg["seed"],
                  "trial_seed": stage_seed(cfg["seed"], "trials"),
                  "enroll_per_spk": cfg["trials.enroll_per_spk"]}
        write_report(cfg.out_dir / f"eer_{event}.txt", report, header)
        log.info("eval: %s EER %.2f%% (%d target / %d nontarget)", event, 100 * report.eer,
                 report.n_target, report.n_nontarget)
        results[event] = report
    return results


RUNNERS = {"synth": run_synth, "train": run_train, "extract": run_extract,
           "score": run_score, "eval": run_eval}


def run_stage(stage, cfg):
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return RUNNERS[stage](cfg)
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        raise StageError(stage, exc) from exc


def run_pipeline(cfg):
    """Run every stage in order; returns the per-event EER reports."""
    result = None
    for stage in STAGES:
        result = run_stage(stage, cfg)
    return result
