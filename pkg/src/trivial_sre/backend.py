"""d-vector pooling and scoring: cosine, LDA + cosine, two-covariance PLDA."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import (
    BadDim,
    DegenerateScatter,
    DimMismatch,
    EmptyUtterance,
    ParseError,
    SingularCovariance,
    TooFewSamples,
    ZeroVector,
)

RIDGE = 1e-6


@dataclass
class DVector:
    utt_id: str
    values: np.ndarray
    spk_id: str | None = None
    event: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def extract_dvector(model, features, utt_id="", spk_id=None, event=None) -> DVector:
    """Average the feature-layer rows of the network over the utterance.

    ``features`` is the spliced frontend output for a single utterance.
    """
    from .ctdnn import forward

    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise EmptyUtterance(f"utterance {utt_id!r} has no frames")
    rows, _ = forward(model, features)
    return DVector(utt_id, rows.mean(axis=0), spk_id, event)


def pool_features(rows, utt_id="", spk_id=None, event=None) -> DVector:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyUtterance(f"utterance {utt_id!r} has no frames")
    return DVector(utt_id, rows.mean(axis=0), spk_id, event)


def _values(v):
    return v.values if isinstance(v, DVector) else np.asarray(v, dtype=np.float64)


def _with_values(v, values):
    if isinstance(v, DVector):
        return DVector(v.utt_id, values, v.spk_id, v.event)
    return values


def length_normalize(v):
    """Scale to unit Euclidean norm.  Accepts a DVector or a plain array."""
    x = _values(v)
    norm = np.linalg.norm(x)
    if norm == 0:
        raise ZeroVector("cannot length-normalize a zero vector")
    return _with_values(v, x / norm)


def cosine_score(enroll, test) -> float:
    e, t = _values(enroll), _values(test)
    if e.shape != t.shape:
        raise DimMismatch(f"dimensions differ: {e.shape} vs {t.shape}")
    ne, nt = np.linalg.norm(e), np.linalg.norm(t)
    if ne == 0 or nt == 0:
        raise ZeroVector("cosine score of a zero vector")
    return float(np.clip(np.dot(e, t) / (ne * nt), -1.0, 1.0))


def average_enrollment(vectors, normalize=True):
    """Pool several enrollment d-vectors into one (mean, then unit length)."""
    vals = np.array([_values(v) for v in vectors])
    if len(vals) == 0:
        raise EmptyUtterance("no enrollment vectors")
    mean = vals.mean(axis=0)
    return length_normalize(mean) if normalize else mean


def _labelled_matrix(vectors):
    X = np.array([_values(v) for v in vectors])
    labels = [v.spk_id for v in vectors]
    if any(lab is None for lab in labels):
        raise ValueError("every vector needs a spk_id")
    classes, y = np.unique(np.array(labels, dtype=object).astype(str), return_inverse=True)
    return X, y, len(classes)


# ---------------------------------------------------------------------------
# LDA


@dataclass(frozen=True, eq=False)
class LdaTransform:
    mean: np.ndarray
    projection: np.ndarray  # (k, D), rows in decreasing-eigenvalue order
    within_cov: np.ndarray  # the (ridged) Sw used to whiten
    eigenvalues: np.ndarray

    @property
    def out_dim(self) -> int:
        return self.projection.shape[0]


def scatter_matrices(X, y, n_classes):
    """Pooled within-class covariance (/(N - C)) and between-class covariance (/N)."""
    N, D = X.shape
    mu = X.mean(axis=0)
    Sw = np.zeros((D, D))
    Sb = np.zeros((D, D))
    for c in range(n_classes):
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        centred = Xc - mc
        Sw += centred.T @ centred
        d = (mc - mu)[:, None]
        Sb += len(Xc) * (d @ d.T)
    return Sw / (N - n_classes), Sb / N


def fit_lda(vectors, out_dim) -> LdaTransform:
    """Fit LDA by whitening the within-class covariance with its Cholesky factor.

    Solves ``Sb u = lambda Sw u``; the kept rows satisfy ``P Sw P^T = I`` for
    the ridged ``Sw`` (ridge ``1e-6 * trace(Sw) / D``).
    """
    X, y, n_classes = _labelled_matrix(vectors)
    if n_classes < 2:
        raise TooFewSamples("LDA needs at least two classes")
    counts = np.bincount(y, minlength=n_classes)
    if counts.min() < 2:
        raise TooFewSamples("every class needs at least two vectors")
    N, D = X.shape
    if not 1 <= out_dim <= min(D, n_classes - 1):
        raise BadDim(f"out_dim {out_dim} outside [1, {min(D, n_classes - 1)}]")

    Sw, Sb = scatter_matrices(X, y, n_classes)
    if np.trace(Sb) <= 1e-12 * (np.trace(Sw) + np.trace(Sb)) or np.trace(Sb) == 0:
        raise DegenerateScatter("between-class scatter vanishes")
    eps = RIDGE * np.trace(Sw) / D
    if eps <= 0:
        eps = RIDGE * max(np.trace(Sb) / D, np.finfo(float).tiny)
    Sw = Sw + eps * np.eye(D)

    L = linalg.cholesky(Sw, lower=True)
    Linv = linalg.solve_triangular(L, np.eye(D), lower=True)
    M = Linv @ Sb @ Linv.T
    M = 0.5 * (M + M.T)
    evals, evecs = linalg.eigh(M)
    order = np.argsort(evals)[::-1][:out_dim]
    P = evecs[:, order].T @ Linv
    # sign convention: largest-magnitude coefficient of each row is positive
    signs = np.sign(P[np.arange(out_dim), np.abs(P).argmax(axis=1)])
    P *= signs[:, None]
    return LdaTransform(X.mean(axis=0), P, Sw, evals[order])


def apply_lda(t: LdaTransform, v):
    x = _values(v)
    if x.shape != t.mean.shape:
        raise DimMismatch(f"vector dim {x.shape[0]} != LDA input dim {t.mean.shape[0]}")
    return _with_values(v, t.projection @ (x - t.mean))


# ---------------------------------------------------------------------------
# PLDA (two-covariance model)


@dataclass(frozen=True, eq=False)
class PldaModel:
    """Speaker mean ``y ~ N(mu, between_cov)``, observation ``x ~ N(y, within_cov)``."""

    mu: np.ndarray
    between_cov: np.ndarray
    within_cov: np.ndarray
    loglik_history: tuple = ()

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @cached_property
    def _scoring(self):
        tot = self.between_cov + self.within_cov
        ac = self.between_cov
        tot_inv = np.linalg.inv(tot)
        # Schur complement of the joint covariance
        schur = tot - ac @ tot_inv @ ac
        schur_inv = np.linalg.inv(schur)
        Q = tot_inv - schur_inv
        P = tot_inv @ ac @ schur_inv
        _, logdet_tot = np.linalg.slogdet(tot)
        _, logdet_schur = np.linalg.slogdet(schur)
        # log|joint| = log|tot| + log|schur|
        const = -0.5 * (logdet_tot + logdet_schur) + logdet_tot
        return 0.5 * (Q + Q.T), P, const


def _ridge_pd(S, scale_ref, strict=False):
    """Return S (symmetrized) if positive definite, else S plus a small ridge.

    With ``strict`` a matrix that passes Cholesky but whose smallest
    eigenvalue is below the ridge is also lifted; sample covariances from
    fewer speakers than dimensions are singular only up to rounding.
    """
    S = 0.5 * (S + S.T)
    D = S.shape[0]
    try:
        linalg.cholesky(S, lower=True)
        if not strict or np.linalg.eigvalsh(S)[0] > RIDGE * np.trace(S) / D:
            return S
    except linalg.LinAlgError:
        pass
    eps = RIDGE * np.trace(S) / D
    if eps <= 0:
        eps = RIDGE * scale_ref
    S = S + eps * np.eye(D)
    try:
        linalg.cholesky(S, lower=True)
    except linalg.LinAlgError:
        raise SingularCovariance("covariance is singular even after ridge") from None
    return S


def _speaker_stats(X, y, n_classes):
    counts = np.bincount(y, minlength=n_classes)
    sums = np.zeros((n_classes, X.shape[1]))
    np.add.at(sums, y, X)
    means = sums / counts[:, None]
    scatter = np.zeros((X.shape[1], X.shape[1]))
    for c in range(n_classes):
        d = X[y == c] - means[c]
        scatter += d.T @ d
    return counts, means, scatter


def plda_loglik(mu, Sb, Sw, counts, means, scatter) -> float:
    """Marginal log-likelihood of all data under the two-covariance model.

    For a speaker with ``n`` observations the stacked covariance splits into
    the mean direction (``Sw + n Sb``) and ``n - 1`` orthogonal copies of ``Sw``.
    """
    D = mu.shape[0]
    Lw = linalg.cho_factor(Sw, lower=True)
    logdet_w = 2.0 * np.sum(np.log(np.diag(Lw[0])))
    total = -0.5 * np.sum(linalg.cho_solve(Lw, scatter).diagonal())
    for n in np.unique(counts):
        sel = counts == n
        C = linalg.cho_factor(Sw + n * Sb, lower=True)
        logdet_c = 2.0 * np.sum(np.log(np.diag(C[0])))
        d = means[sel] - mu
        quad = np.sum(d * linalg.cho_solve(C, d.T).T, axis=1)
        total += np.sum(-0.5 * (n * D * np.log(2 * np.pi) + (n - 1) * logdet_w + logdet_c + n * quad))
    return float(total)


def fit_plda(vectors, iters: int = 10) -> PldaModel:
    """EM training of the two-covariance PLDA model.

    Initialised from the sample between/within covariances; the latent
    variables are the speaker means.  ``loglik_history`` holds the total
    log-likelihood before the first and after every iteration.
    """
    X, y, n_classes = _labelled_matrix(vectors)
    counts = np.bincount(y, minlength=n_classes)
    if n_classes < 2 or counts.min() < 2:
        raise TooFewSamples("PLDA needs at least two classes with two vectors each")
    N, D = X.shape
    counts, means, scatter = _speaker_stats(X, y, n_classes)
    scale_ref = max(np.mean(np.diag(np.cov(X.T).reshape(D, D))), np.finfo(float).tiny)

    mu = X.mean(axis=0)
    Sw = _ridge_pd(scatter / N, scale_ref, strict=True)
    Sb = _ridge_pd(np.cov(means.T, bias=True).reshape(D, D), scale_ref, strict=True)
    history = [plda_loglik(mu, Sb, Sw, counts, means, scatter)]

    for _ in range(iters):
        # E-step: posterior of each speaker mean
        Pb = np.linalg.inv(Sb)
        Pw = np.linalg.inv(Sw)
        post_mean = np.empty((n_classes, D))
        post_cov_sum_b = np.zeros((D, D))
        post_cov_sum_w = np.zeros((D, D))
        for n in np.unique(counts):
            sel = np.flatnonzero(counts == n)
            cov = np.linalg.inv(Pb + n * Pw)
            cov = 0.5 * (cov + cov.T)
            rhs = Pb @ mu + n * (means[sel] @ Pw.T)
            post_mean[sel] = rhs @ cov.T
            post_cov_sum_b += len(sel) * cov
            post_cov_sum_w += len(sel) * n * cov
        # M-step
        mu = post_mean.mean(axis=0)
        d = post_mean - mu
        Sb = (post_cov_sum_b + d.T @ d) / n_classes
        shift = means - post_mean
        Sw = (scatter + (counts[:, None] * shift).T @ shift + post_cov_sum_w) / N
        Sb = _ridge_pd(Sb, scale_ref)
        Sw = _ridge_pd(Sw, scale_ref)
        history.append(plda_loglik(mu, Sb, Sw, counts, means, scatter))
    return PldaModel(mu, Sb, Sw, tuple(history))


def plda_score(model: PldaModel, enroll, test) -> float:
    """Log-likelihood ratio (nats) of same-speaker vs different-speaker."""
    e, t = _values(enroll), _values(test)
    if e.shape != model.mu.shape or t.shape != model.mu.shape:
        raise DimMismatch(f"vector dims {e.shape}/{t.shape} do not match model dim {model.dim}")
    Q, P, const = model._scoring
    e = e - model.mu
    t = t - model.mu
    return float(0.5 * e @ Q @ e + 0.5 * t @ Q @ t + e @ P @ t + const)


# ---------------------------------------------------------------------------
# d-vector files: header "utt_id spk_id event dim", then one line of values


def write_dvectors(path, vectors, hexfloat=False):
    with open(path, "w", encoding="utf-8") as fh:
        for v in vectors:
            fh.write(f"{v.utt_id} {v.spk_id or '-'} {v.event or '-'} {v.dim}\n")
            if hexfloat:
                fh.write(" ".join(map(float.hex, v.values.tolist())) + "\n")
            else:
                fh.write(" ".join(repr(float(x)) for x in v.values) + "\n")


def read_dvectors(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split()
        if len(parts) != 4:
            raise ParseError("d-vector header needs 'utt_id spk_id event dim'", i + 1)
        utt, spk, ev, dim = parts
        if i + 1 >= len(lines):
            raise ParseError("missing value line", i + 2)
        toks = lines[i + 1].split()
        if len(toks) != int(dim):
            raise ParseError(f"expected {dim} values, got {len(toks)}", i + 2)
        vals = [float.fromhex(x) if "0x" in x else float(x) for x in toks]
        out.append(DVector(utt, np.array(vals), None if spk == "-" else spk, None if ev == "-" else ev))
        i += 2
    return out
