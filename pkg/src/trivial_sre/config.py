"""Run configuration: ``key=value`` files with dotted keys and overrides.

Every key has a default; an empty file yields a complete configuration.
Later occurrences of a key win (a warning is logged for duplicates inside
one file), and ``--set`` overrides are applied after the file.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .ctdnn import ConvSpec, CtDnnConfig
from .errors import ParseError, UnknownKey
from .frontend import FrontendConfig, SpliceSpec

log = logging.getLogger(__name__)


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _words(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


# key -> (type parser, default, help)
SCHEMA = {
    "seed": (int, 7, "master seed; every stage derives its own seed from it"),
    "paths.out_dir": (str, "run", "directory for all artifacts"),
    "paths.manifest": (str, "", "evaluation manifest (default <out_dir>/eval/manifest.tsv)"),
    "paths.train_manifest": (str, "", "training manifest (default <out_dir>/train/manifest.tsv)"),
    "paths.model": (str, "", "CT-DNN model file (default <out_dir>/model.ctdnn)"),
    "synth.n_speakers": (int, 20, "speakers in the synthetic evaluation corpus"),
    "synth.utts_per_event": (int, 8, "utterances per speaker and event"),
    "synth.events": (_words, ("cough", "laugh", "wei"), "events to render"),
    "synth.min_dur": (float, 0.2, "shortest utterance (s)"),
    "synth.max_dur": (float, 0.4, "longest utterance (s)"),
    "synth.sample_rate": (int, 16000, "rendering rate (Hz); 16000 is decimated to 8000"),
    "synth.train_speakers": (int, 30, "speakers in the separate synthetic training corpus"),
    "synth.train_utts_per_event": (int, 3, "training utterances per speaker and event"),
    "frontend.frame_len_ms": (float, 25.0, "analysis frame length"),
    "frontend.frame_shift_ms": (float, 10.0, "frame shift"),
    "frontend.preemphasis": (float, 0.97, "pre-emphasis coefficient"),
    "frontend.n_mels": (int, 40, "mel filters"),
    "frontend.fmin_hz": (float, 20.0, "lowest filter edge"),
    "frontend.fmax_hz": (float, 3800.0, "highest filter edge"),
    "frontend.log_floor": (float, 1e-10, "energy floor before the log"),
    "frontend.splice_left": (int, 4, "left context frames"),
    "frontend.splice_right": (int, 4, "right context frames"),
    "ctdnn.conv1_maps": (int, 64, ""),
    "ctdnn.conv1_patch_time": (int, 3, ""),
    "ctdnn.conv1_patch_freq": (int, 5, ""),
    "ctdnn.conv1_pool_freq": (int, 2, ""),
    "ctdnn.conv2_maps": (int, 128, ""),
    "ctdnn.conv2_patch_time": (int, 3, ""),
    "ctdnn.conv2_patch_freq": (int, 5, ""),
    "ctdnn.conv2_pool_freq": (int, 2, ""),
    "ctdnn.bottleneck_dim": (int, 512, "bottleneck units"),
    "ctdnn.td1_offsets": (_ints, (-2, 0, 2), "first time-delay splice offsets"),
    "ctdnn.td2_offsets": (_ints, (-4, 0, 4), "second time-delay splice offsets"),
    "ctdnn.td_dim": (int, 1024, "P-norm input width of each time-delay layer"),
    "ctdnn.pnorm_p": (float, 2.0, "P-norm exponent"),
    "ctdnn.pnorm_group": (int, 4, "P-norm group size"),
    "ctdnn.feature_dim": (int, 400, "feature (d-vector) layer units"),
    "trainer.epochs": (int, 3, "training epochs"),
    "trainer.lr": (float, 0.001, "initial learning rate"),
    "trainer.lr_decay": (float, 0.7, "per-epoch learning-rate factor"),
    "trainer.momentum": (float, 0.9, "momentum"),
    "trainer.frame_budget": (int, 512, "frames per minibatch"),
    "trainer.clip_norm": (float, 5.0, "global gradient-norm clip (0 disables)"),
    "backend.length_norm": (_bool, True, "length-normalize d-vectors before scoring"),
    "backend.lda_dim": (int, 150, "LDA output dimension (clipped to n_train_speakers - 1)"),
    "backend.plda_iters": (int, 10, "PLDA EM iterations"),
    "trials.enroll_per_spk": (int, 3, "enrollment utterances per speaker"),
    "eval.scorer": (str, "cosine", "cosine | lda | plda"),
    "eval.event": (str, "all", "cough | laugh | wei | all"),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: v[1] for k, v in SCHEMA.items()})

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key, text, where="override"):
        if key not in SCHEMA:
            raise UnknownKey(key)
        parser = SCHEMA[key][0]
        try:
            self.values[key] = parser(text)
        except ValueError as exc:
            raise ParseError(f"{where}: bad value for {key}: {exc}") from None

    # typed views ---------------------------------------------------------

    @property
    def out_dir(self) -> Path:
        return Path(self["paths.out_dir"])

    def path(self, key, default) -> Path:
        return Path(self[key]) if self[key] else self.out_dir / default

    @property
    def manifest(self) -> Path:
        return self.path("paths.manifest", "eval/manifest.tsv")

    @property
    def train_manifest(self) -> Path:
        return self.path("paths.train_manifest", "train/manifest.tsv")

    @property
    def model(self) -> Path:
        return self.path("paths.model", "model.ctdnn")

    @property
    def frontend(self) -> FrontendConfig:
        return FrontendConfig(
            frame_len_ms=self["frontend.frame_len_ms"],
            frame_shift_ms=self["frontend.frame_shift_ms"],
            preemphasis=self["frontend.preemphasis"],
            n_mels=self["frontend.n_mels"],
            fmin_hz=self["frontend.fmin_hz"],
            fmax_hz=self["frontend.fmax_hz"],
            log_floor=self["frontend.log_floor"],
        )

    @property
    def splice(self) -> SpliceSpec:
        return SpliceSpec(self["frontend.splice_left"], self["frontend.splice_right"])

    def ctdnn(self, n_speakers) -> CtDnnConfig:
        def conv(name):
            return ConvSpec(*(self[f"ctdnn.{name}_{f}"] for f in ("maps", "patch_time", "patch_freq", "pool_freq")))

        return CtDnnConfig(
            n_speakers=n_speakers,
            input_mels=self["frontend.n_mels"],
            splice=self.splice,
            conv1=conv("conv1"),
            conv2=conv("conv2"),
            bottleneck_dim=self["ctdnn.bottleneck_dim"],
            td1_offsets=self["ctdnn.td1_offsets"],
            td2_offsets=self["ctdnn.td2_offsets"],
            td_dim=self["ctdnn.td_dim"],
            pnorm_p=self["ctdnn.pnorm_p"],
            pnorm_group=self["ctdnn.pnorm_group"],
            feature_dim=self["ctdnn.feature_dim"],
        )

    def events(self):
        ev = self["eval.event"]
        return tuple(self["synth.events"]) if ev == "all" else (ev,)


def _split_assignment(text, where):
    key, sep, value = text.partition("=")
    if not sep:
        raise ParseError(f"{where}: expected key=value, got {text!r}")
    return key.strip(), value.strip()


def parse_config(path=None, overrides=()) -> RunConfig:
    """Build a RunConfig from an optional file plus ``key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"no such config file: {path}")
        seen = {}
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"expected key=value, got {raw.strip()!r}", lineno)
            key = key.strip()
            if key not in SCHEMA:
                raise UnknownKey(key)
            if key in seen:
                log.warning("%s: key %s repeated on line %d (first on line %d); last value wins",
                            path, key, lineno, seen[key])
            seen[key] = lineno
            try:
                cfg.values[key] = SCHEMA[key][0](value.strip())
            except ValueError as exc:
                raise ParseError(f"bad value for {key}: {exc}", lineno) from None
    for item in overrides:
        key, value = _split_assignment(item, "--set")
        cfg.set(key, value)
    return cfg


def describe_defaults() -> str:
    width = max(map(len, SCHEMA))
    lines = []
    for key, (_, default, text) in SCHEMA.items():
        if isinstance(default, tuple):
            default = ",".join(map(str, default))
        lines.append(f"  {key:<{width}} = {default}" + (f"    {text}" if text else ""))
    return "\n".join(lines)


