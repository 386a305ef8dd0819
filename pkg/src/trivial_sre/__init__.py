"""Speaker verification on trivial speech events (cough, laugh, "wei") with d-vectors.

Modules:
    corpus    WAV I/O, 2x decimation, manifests, synthetic event corpus
    frontend  log mel filterbank features, mean normalization, splicing
    ctdnn     convolutional + time-delay feature network, training, model files
    backend   d-vector pooling, cosine / LDA / PLDA scoring
    evaluate  trials, EER and DET points, score/report files
    pipeline  the stages run by the ``trivial-sre`` command
"""

from .backend import (
    DVector,
    LdaTransform,
    PldaModel,
    apply_lda,
    cosine_score,
    extract_dvector,
    fit_lda,
    fit_plda,
    length_normalize,
    plda_score,
)
from .corpus import (
    AudioClip,
    ManifestEntry,
    SynthSpec,
    decimate_2x,
    load_manifest,
    manifest_stats,
    read_wav,
    synth_corpus,
    write_wav,
)
from .ctdnn import (
    CtDnnConfig,
    CtDnnParams,
    forward,
    init_params,
    load_params,
    loss_and_grads,
    receptive_field_span,
    save_params,
    sgd_step,
    train,
)
from .evaluate import Trial, build_trials, compute_eer, det_points, score_trials
from .frontend import FrontendConfig, SpliceSpec, apply_cmvn, compute_fbank, splice

__version__ = "0.1.0"
