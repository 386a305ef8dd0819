"""Convolutional + time-delay speaker feature network (CT-DNN) in numpy.

Per frame, the spliced 9x40 Fbank patch is treated as an image (time x freq)
and passed through two convolution layers, each followed by ReLU and max
pooling over frequency, then flattened into a 512-unit ReLU bottleneck.
Across frames, two time-delay layers splice bottleneck outputs at fixed
offsets (clamped at utterance edges), apply an affine map and a P-norm.
A linear 400-unit feature layer follows; its rows are the frame-level
speaker features.  The output layer produces one logit per training speaker.

Arrays are channel-last: conv activations have shape (frames, time, freq, maps)
and are flattened in that order before the bottleneck.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    CorruptTensor,
    InvalidConfig,
    LabelOutOfRange,
    NonFiniteGradient,
    ShapeMismatch,
    VersionMismatch,
)
from .frontend import SpliceSpec

FORMAT_TAG = "CTDNN1"


@dataclass(frozen=True)
class ConvSpec:
    maps: int
    patch_time: int
    patch_freq: int
    pool_freq: int


@dataclass(frozen=True)
class CtDnnConfig:
    n_speakers: int = 2
    input_mels: int = 40
    splice: SpliceSpec = field(default_factory=SpliceSpec)
    conv1: ConvSpec = ConvSpec(64, 3, 5, 2)
    conv2: ConvSpec = ConvSpec(128, 3, 5, 2)
    bottleneck_dim: int = 512
    td1_offsets: tuple = (-2, 0, 2)
    td2_offsets: tuple = (-4, 0, 4)
    td_dim: int = 1024  # affine output of each TD layer, i.e. the P-norm input
    pnorm_p: float = 2.0
    pnorm_group: int = 4
    feature_dim: int = 400

    # derived geometry ---------------------------------------------------

    def conv_shapes(self):
        """[(H_in, W_in, C_in, H_out, W_conv, W_pooled, maps)] for both conv layers."""
        shapes = []
        h, w, c = self.splice.width, self.input_mels, 1
        for conv in (self.conv1, self.conv2):
            ho, wo = h - conv.patch_time + 1, w - conv.patch_freq + 1
            wp = wo // conv.pool_freq if conv.pool_freq > 0 else 0
            shapes.append((h, w, c, ho, wo, wp, conv.maps))
            h, w, c = ho, wp, conv.maps
        return shapes

    @property
    def flat_dim(self) -> int:
        _, _, _, h, _, w, c = self.conv_shapes()[-1]
        return h * w * c

    @property
    def pnorm_dim(self) -> int:
        return self.td_dim // self.pnorm_group

    def validate(self):
        counts = [self.n_speakers, self.input_mels, self.bottleneck_dim, self.td_dim,
                  self.pnorm_group, self.feature_dim]
        if any(int(v) != v or v < 1 for v in counts):
            raise InvalidConfig(f"sizes must be positive integers: {counts}")
        if self.splice.left < 0 or self.splice.right < 0:
            raise InvalidConfig("splice context must be nonnegative")
        for conv in (self.conv1, self.conv2):
            if min(conv.maps, conv.patch_time, conv.patch_freq, conv.pool_freq) < 1:
                raise InvalidConfig(f"conv settings must be positive: {conv}")
        for h, w, _, ho, wo, wp, _ in self.conv_shapes():
            if ho < 1 or wo < 1 or wp < 1:
                raise InvalidConfig(f"convolution does not fit a {h}x{w} input")
        if self.td_dim % self.pnorm_group:
            raise InvalidConfig(f"P-norm input {self.td_dim} not divisible by group {self.pnorm_group}")
        if self.pnorm_p < 1:
            raise InvalidConfig("pnorm_p must be >= 1")
        if not self.td1_offsets or not self.td2_offsets:
            raise InvalidConfig("time-delay offsets must be nonempty")

    def tensor_shapes(self) -> dict:
        self.validate()
        c1, c2 = self.conv1, self.conv2
        n1, n2 = len(self.td1_offsets), len(self.td2_offsets)
        return {
            "conv1.weight": (c1.maps, 1, c1.patch_time, c1.patch_freq),
            "conv1.bias": (c1.maps,),
            "conv2.weight": (c2.maps, c1.maps, c2.patch_time, c2.patch_freq),
            "conv2.bias": (c2.maps,),
            "bottleneck.weight": (self.bottleneck_dim, self.flat_dim),
            "bottleneck.bias": (self.bottleneck_dim,),
            "td1.weight": (self.td_dim, n1 * self.bottleneck_dim),
            "td1.bias": (self.td_dim,),
            "td2.weight": (self.td_dim, n2 * self.pnorm_dim),
            "td2.bias": (self.td_dim,),
            "feature.weight": (self.feature_dim, self.pnorm_dim),
            "feature.bias": (self.feature_dim,),
            "output.weight": (self.n_speakers, self.feature_dim),
            "output.bias": (self.n_speakers,),
        }

    # key=value form used by the model file ------------------------------

    def to_items(self) -> list:
        items = [("n_speakers", self.n_speakers), ("input_mels", self.input_mels),
                 ("splice_left", self.splice.left), ("splice_right", self.splice.right)]
        for name in ("conv1", "conv2"):
            conv = getattr(self, name)
            items += [(f"{name}_{f.name}", getattr(conv, f.name)) for f in dataclasses.fields(conv)]
        items += [("bottleneck_dim", self.bottleneck_dim),
                  ("td1_offsets", ",".join(map(str, self.td1_offsets))),
                  ("td2_offsets", ",".join(map(str, self.td2_offsets))),
                  ("td_dim", self.td_dim), ("pnorm_p", repr(float(self.pnorm_p))),
                  ("pnorm_group", self.pnorm_group), ("feature_dim", self.feature_dim)]
        return items

    @classmethod
    def from_items(cls, items: dict) -> "CtDnnConfig":
        items = dict(items)
        try:
            convs = {name: ConvSpec(*(int(items.pop(f"{name}_{f.name}"))
                                      for f in dataclasses.fields(ConvSpec)))
                     for name in ("conv1", "conv2")}
            cfg = cls(
                n_speakers=int(items.pop("n_speakers")),
                input_mels=int(items.pop("input_mels")),
                splice=SpliceSpec(int(items.pop("splice_left")), int(items.pop("splice_right"))),
                bottleneck_dim=int(items.pop("bottleneck_dim")),
                td1_offsets=tuple(int(v) for v in items.pop("td1_offsets").split(",")),
                td2_offsets=tuple(int(v) for v in items.pop("td2_offsets").split(",")),
                td_dim=int(items.pop("td_dim")),
                pnorm_p=float(items.pop("pnorm_p")),
                pnorm_group=int(items.pop("pnorm_group")),
                feature_dim=int(items.pop("feature_dim")),
                **convs,
            )
        except KeyError as exc:
            raise InvalidConfig(f"missing config key {exc.args[0]}") from None
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from None
        if items:
            raise InvalidConfig(f"unknown config keys {sorted(items)}")
        cfg.validate()
        return cfg


def receptive_field_span(config: CtDnnConfig) -> int:
    """Frames of input context seen by one output frame.

    The convolutions work inside the spliced patch, so only the splice and the
    two time-delay layers widen the window.
    """
    def reach(offsets):
        return max(abs(o) for o in offsets)

    left = config.splice.left + reach(config.td1_offsets) + reach(config.td2_offsets)
    right = config.splice.right + reach(config.td1_offsets) + reach(config.td2_offsets)
    return 1 + left + right


@dataclass
class CtDnnParams:
    config: CtDnnConfig
    tensors: dict

    def __post_init__(self):
        shapes = self.config.tensor_shapes()
        if list(self.tensors) != list(shapes):
            raise ShapeMismatch(f"tensor names {list(self.tensors)} != {list(shapes)}")
        for name, shape in shapes.items():
            if self.tensors[name].shape != shape:
                raise ShapeMismatch(f"{name}: shape {self.tensors[name].shape} != {shape}")

    def __getitem__(self, name):
        return self.tensors[name]

    def copy(self) -> "CtDnnParams":
        return CtDnnParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def equals(self, other) -> bool:
        return (self.config == other.config and list(self.tensors) == list(other.tensors)
                and all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors))

    @property
    def n_parameters(self) -> int:
        return sum(v.size for v in self.tensors.values())


def xavier_bound(name, shape) -> float:
    if len(shape) == 4:
        receptive = shape[2] * shape[3]
        fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
    else:
        fan_out, fan_in = shape
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(config: CtDnnConfig, seed: int = 0) -> CtDnnParams:
    """Xavier-uniform weights, zero biases, deterministic per seed."""
    shapes = config.tensor_shapes()
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    tensors = {}
    for name, shape in shapes.items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape)
        else:
            bound = xavier_bound(name, shape)
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return CtDnnParams(config, tensors)


def zero_params(config: CtDnnConfig) -> CtDnnParams:
    return CtDnnParams(config, {k: np.zeros(s) for k, s in config.tensor_shapes().items()})


# ---------------------------------------------------------------------------
# layers


def _conv_cols(x, pt, pf):
    n, _, _, c = x.shape
    win = sliding_window_view(x, (pt, pf), axis=(1, 2))  # (n, ho, wo, c, pt, pf)
    ho, wo = win.shape[1], win.shape[2]
    return win.reshape(n * ho * wo, c * pt * pf), ho, wo


def _conv_forward(x, weight, bias):
    m, c, pt, pf = weight.shape
    cols, ho, wo = _conv_cols(x, pt, pf)
    out = cols @ weight.reshape(m, -1).T + bias
    return out.reshape(x.shape[0], ho, wo, m)


def _conv_backward(x, weight, dout, need_dx=True):
    m, c, pt, pf = weight.shape
    cols, ho, wo = _conv_cols(x, pt, pf)
    d2 = dout.reshape(-1, m)
    dw = (d2.T @ cols).reshape(weight.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ weight.reshape(m, -1)).reshape(x.shape[0], ho, wo, c, pt, pf)
    dx = np.zeros_like(x)
    for i in range(pt):
        for j in range(pf):
            dx[:, i:i + ho, j:j + wo, :] += dcols[..., i, j]
    return dx, dw, db


def _pool_forward(a, pool):
    n, h, w, c = a.shape
    wp = w // pool
    grouped = a[:, :, :wp * pool, :].reshape(n, h, wp, pool, c)
    arg = grouped.argmax(axis=3)
    out = np.take_along_axis(grouped, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return out, arg


def _pool_backward(dout, arg, in_shape, pool):
    n, h, w, c = in_shape
    wp = dout.shape[2]
    grouped = np.zeros((n, h, wp, pool, c))
    np.put_along_axis(grouped, arg[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
    da = np.zeros(in_shape)
    da[:, :, :wp * pool, :] = grouped.reshape(n, h, wp * pool, c)
    return da


def _pnorm_forward(z, group, p):
    g = np.abs(z.reshape(z.shape[0], -1, group))
    if p == 2.0:
        return np.sqrt((g * g).sum(axis=2))
    return (g ** p).sum(axis=2) ** (1.0 / p)


def _pnorm_backward(z, y, dy, group, p):
    zg = z.reshape(z.shape[0], -1, group)
    safe = np.where(y > 0, y, 1.0)[:, :, None]
    if p == 2.0:
        local = zg / safe
    else:
        local = np.sign(zg) * np.abs(zg) ** (p - 1.0) * safe ** (1.0 - p)
    local = np.where((y > 0)[:, :, None], local, 0.0)
    return (local * dy[:, :, None]).reshape(z.shape)


def _delay_index(lengths, offsets):
    """Row indices of the spliced inputs for a batch of concatenated utterances."""
    lengths = np.asarray(lengths, dtype=np.int64)
    starts = np.repeat(np.cumsum(lengths) - lengths, lengths)
    ends = starts + np.repeat(lengths, lengths) - 1
    t = np.arange(lengths.sum())
    off = np.asarray(offsets, dtype=np.int64)
    return np.clip(t[:, None] + off[None, :], starts[:, None], ends[:, None])


# ---------------------------------------------------------------------------
# forward / backward


def _check_input(params, spliced, lengths):
    cfg = params.config
    spliced = np.asarray(spliced, dtype=np.float64)
    expected = cfg.splice.width * cfg.input_mels
    if spliced.ndim != 2 or spliced.shape[1] != expected:
        raise ShapeMismatch(f"expected T x {expected} spliced input, got {spliced.shape}")
    if spliced.shape[0] == 0:
        raise ShapeMismatch("empty input")
    if lengths is None:
        lengths = [spliced.shape[0]]
    if sum(lengths) != spliced.shape[0] or min(lengths) < 1:
        raise ShapeMismatch(f"segment lengths {list(lengths)} do not cover {spliced.shape[0]} frames")
    return spliced, lengths


def _forward(params, spliced, lengths):
    cfg = params.config
    t = params.tensors
    n = spliced.shape[0]
    cache = {}

    x = spliced.reshape(n, cfg.splice.width, cfg.input_mels, 1)
    for name, conv in (("conv1", cfg.conv1), ("conv2", cfg.conv2)):
        z = _conv_forward(x, t[f"{name}.weight"], t[f"{name}.bias"])
        r = np.maximum(z, 0.0)
        pooled, arg = _pool_forward(r, conv.pool_freq)
        cache[name] = (x, z, arg)
        x = pooled
    flat = x.reshape(n, -1)
    zb = flat @ t["bottleneck.weight"].T + t["bottleneck.bias"]
    h = np.maximum(zb, 0.0)
    cache["bottleneck"] = (flat, zb)

    for name, offsets in (("td1", cfg.td1_offsets), ("td2", cfg.td2_offsets)):
        idx = _delay_index(lengths, offsets)
        cat = h[idx].reshape(n, -1)
        z = cat @ t[f"{name}.weight"].T + t[f"{name}.bias"]
        y = _pnorm_forward(z, cfg.pnorm_group, cfg.pnorm_p)
        cache[name] = (idx, cat, z, y)
        h = y

    features = h @ t["feature.weight"].T + t["feature.bias"]
    logits = features @ t["output.weight"].T + t["output.bias"]
    cache["feature"] = h
    cache["output"] = features
    return features, logits, cache


def _backward(params, cache, dlogits):
    cfg = params.config
    t = params.tensors
    g = {}
    n = dlogits.shape[0]

    features = cache["output"]
    g["output.weight"] = dlogits.T @ features
    g["output.bias"] = dlogits.sum(axis=0)
    dfeat = dlogits @ t["output.weight"]

    h = cache["feature"]
    g["feature.weight"] = dfeat.T @ h
    g["feature.bias"] = dfeat.sum(axis=0)
    dh = dfeat @ t["feature.weight"]

    for name in ("td2", "td1"):
        idx, cat, z, y = cache[name]
        dz = _pnorm_backward(z, y, dh, cfg.pnorm_group, cfg.pnorm_p)
        g[f"{name}.weight"] = dz.T @ cat
        g[f"{name}.bias"] = dz.sum(axis=0)
        dcat = (dz @ t[f"{name}.weight"]).reshape(n, idx.shape[1], -1)
        dh = np.zeros((n, dcat.shape[2]))
        for k in range(idx.shape[1]):
            np.add.at(dh, idx[:, k], dcat[:, k])

    flat, zb = cache["bottleneck"]
    dzb = dh * (zb > 0)
    g["bottleneck.weight"] = dzb.T @ flat
    g["bottleneck.bias"] = dzb.sum(axis=0)
    dx = dzb @ t["bottleneck.weight"]

    for name, conv in (("conv2", cfg.conv2), ("conv1", cfg.conv1)):
        x, z, arg = cache[name]
        pooled_shape = arg.shape
        dx = dx.reshape(pooled_shape)
        dr = _pool_backward(dx, arg, z.shape, conv.pool_freq)
        dz = dr * (z > 0)
        dx, g[f"{name}.weight"], g[f"{name}.bias"] = _conv_backward(
            x, t[f"{name}.weight"], dz, need_dx=(name != "conv1"))

    return {k: g[k] for k in t}


def forward(params: CtDnnParams, spliced, lengths=None):
    """Frame features and logits for one utterance (or a concatenated batch).

    Args:
        params: network parameters.
        spliced: (T, splice_width * input_mels) matrix.
        lengths: optional utterance lengths when ``spliced`` stacks several
            utterances; time-delay context never crosses their boundaries.

    Returns:
        (features, logits) with shapes (T, feature_dim) and (T, n_speakers).
    """
    spliced, lengths = _check_input(params, spliced, lengths)
    features, logits, _ = _forward(params, spliced, lengths)
    return features, logits


def extract_features(params: CtDnnParams, utterances, frame_budget=2048):
    """Feature-layer rows for each utterance, batched for speed."""
    out = []
    batch, size = [], 0
    for x in utterances:
        x = np.asarray(x, dtype=np.float64)
        if batch and size + len(x) > frame_budget:
            out.extend(_split(forward(params, np.vstack(batch), [len(b) for b in batch])[0], batch))
            batch, size = [], 0
        batch.append(x)
        size += len(x)
    if batch:
        out.extend(_split(forward(params, np.vstack(batch), [len(b) for b in batch])[0], batch))
    return out


def _split(rows, batch):
    return np.split(rows, np.cumsum([len(b) for b in batch])[:-1])


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    n = len(labels)
    loss = float(np.mean(log_norm - z[np.arange(n), labels]))
    dlogits = softmax(logits)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def _check_labels(params, labels, n):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeMismatch(f"need {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= params.config.n_speakers):
        raise LabelOutOfRange(f"labels must lie in [0, {params.config.n_speakers})")
    return labels


def loss_and_grads(params: CtDnnParams, spliced, labels, lengths=None):
    """Mean softmax cross-entropy (nats) over frames and its exact gradients."""
    spliced, lengths = _check_input(params, spliced, lengths)
    labels = _check_labels(params, labels, spliced.shape[0])
    _, logits, cache = _forward(params, spliced, lengths)
    loss, dlogits = _cross_entropy(logits, labels)
    return loss, _backward(params, cache, dlogits)


def loss_only(params: CtDnnParams, spliced, labels, lengths=None) -> float:
    spliced, lengths = _check_input(params, spliced, lengths)
    labels = _check_labels(params, labels, spliced.shape[0])
    _, logits, _ = _forward(params, spliced, lengths)
    return _cross_entropy(logits, labels)[0]


def check_gradients(params: CtDnnParams, spliced, labels, h=1e-4, floor=1e-6):
    """Compare analytic gradients with central finite differences.

    Returns ``{tensor name: max elementwise relative error}`` where the
    relative error of one element is ``|a - n| / max(|a|, |n|, floor)``.
    Every element of every tensor is perturbed, so keep the config tiny.
    """
    _, analytic = loss_and_grads(params, spliced, labels)
    probe = params.copy()
    errors = {}
    for name, w in probe.tensors.items():
        numeric = np.zeros_like(w)
        flat = w.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_only(probe, spliced, labels)
            flat[i] = orig - h
            down = loss_only(probe, spliced, labels)
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2 * h)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        errors[name] = float(np.max(np.abs(a - numeric) / denom))
    return errors


# ---------------------------------------------------------------------------
# training


def sgd_step(params: CtDnnParams, grads: dict, lr: float, momentum: float = 0.0, velocity=None):
    """Momentum SGD: ``v <- momentum*v - lr*g``; ``w <- w + v``.

    Returns new ``(params, velocity)``; the inputs are not modified.
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    if not 0 <= momentum < 1:
        raise ValueError("momentum must lie in [0, 1)")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    if velocity is None:
        velocity = params.zeros_like()
    new_v = {k: momentum * velocity[k] - lr * grads[k] for k in params.tensors}
    new_t = {k: params.tensors[k] + new_v[k] for k in params.tensors}
    return CtDnnParams(params.config, new_t), new_v


def clip_gradients(grads: dict, max_norm: float) -> dict:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if not np.isfinite(norm):
        raise NonFiniteGradient("non-finite gradient norm")
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


@dataclass(frozen=True)
class TrainReport:
    epoch: int
    mean_cross_entropy: float
    frame_accuracy: float
    lr: float


def make_batches(lengths, order, frame_budget):
    """Group utterances (in ``order``) into batches of at most ``frame_budget`` frames.

    An utterance longer than the budget gets a batch of its own.
    """
    batches, cur, size = [], [], 0
    for i in order:
        if cur and size + lengths[i] > frame_budget:
            batches.append(cur)
            cur, size = [], 0
        cur.append(int(i))
        size += lengths[i]
    if cur:
        batches.append(cur)
    return batches


def train(params: CtDnnParams, dataset, epochs: int, lr: float = 0.01, momentum: float = 0.9,
          lr_decay: float = 1.0, frame_budget: int = 512, seed: int = 0, clip_norm=None,
          callback=None):
    """Minibatch momentum SGD over utterances.

    ``dataset`` is a list of ``(spliced, labels)`` pairs.  Utterances are
    shuffled per epoch with a seeded generator and packed into batches of at
    most ``frame_budget`` frames; the batch loss is the mean over its frames.
    The learning rate is multiplied by ``lr_decay`` after every epoch.  With
    ``clip_norm`` set, a batch gradient whose global L2 norm exceeds it is
    rescaled to that norm before the update.

    Returns:
        (trained params, list of per-epoch TrainReport).
    """
    if not dataset:
        raise ValueError("empty training set")
    data = [(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)) for x, y in dataset]
    lengths = [len(x) for x, _ in data]
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    velocity = None
    reports = []
    rate = lr
    for epoch in range(1, epochs + 1):
        total_loss = 0.0
        correct = 0
        frames = 0
        for batch in make_batches(lengths, rng.permutation(len(data)), frame_budget):
            x = np.vstack([data[i][0] for i in batch])
            y = np.concatenate([data[i][1] for i in batch])
            seg = [lengths[i] for i in batch]
            x, seg = _check_input(params, x, seg)
            y = _check_labels(params, y, len(x))
            _, logits, cache = _forward(params, x, seg)
            loss, dlogits = _cross_entropy(logits, y)
            grads = _backward(params, cache, dlogits)
            if clip_norm is not None:
                grads = clip_gradients(grads, clip_norm)
            params, velocity = sgd_step(params, grads, rate, momentum, velocity)
            total_loss += loss * len(y)
            correct += int(np.sum(logits.argmax(axis=1) == y))
            frames += len(y)
        report = TrainReport(epoch, total_loss / frames, correct / frames, rate)
        reports.append(report)
        if callback is not None:
            callback(report)
        rate *= lr_decay
    return params, reports


# ---------------------------------------------------------------------------
# serialization


def save_params(params: CtDnnParams, path):
    """Write the text model format: header, config lines, hex-float tensors."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(FORMAT_TAG + "\n")
        for key, value in params.config.to_items():
            fh.write(f"{key}={value}\n")
        fh.write(f"tensors={len(params.tensors)}\n")
        for name, arr in params.tensors.items():
            fh.write(" ".join(["tensor", name, *map(str, arr.shape)]) + "\n")
            fh.write(" ".join(map(float.hex, arr.ravel().tolist())) + "\n")


def load_params(path) -> CtDnnParams:
    path = Path(path)
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != FORMAT_TAG:
            raise VersionMismatch(f"{path}: header {header!r}, expected {FORMAT_TAG!r}")
        items = {}
        n_tensors = None
        for line in fh:
            line = line.strip()
            key, sep, value = line.partition("=")
            if not sep:
                raise CorruptTensor(f"{path}: bad config line {line!r}")
            if key == "tensors":
                n_tensors = int(value)
                break
            items[key] = value
        if n_tensors is None:
            raise CorruptTensor(f"{path}: missing tensor section")
        config = CtDnnConfig.from_items(items)
        shapes = config.tensor_shapes()
        tensors = {}
        for _ in range(n_tensors):
            head = fh.readline().split()
            if len(head) < 2 or head[0] != "tensor":
                raise CorruptTensor(f"{path}: expected a tensor header, got {' '.join(head)!r}")
            name, shape = head[1], tuple(int(v) for v in head[2:])
            if shapes.get(name) != shape:
                raise CorruptTensor(f"{path}: tensor {name} has shape {shape}, config needs {shapes.get(name)}")
            tokens = fh.readline().split()
            count = int(np.prod(shape))
            if len(tokens) != count:
                raise CorruptTensor(f"{path}: tensor {name} has {len(tokens)} values, shape needs {count}")
            try:
                values = np.array([float.fromhex(v) for v in tokens])
            except ValueError:
                raise CorruptTensor(f"{path}: tensor {name} has a malformed value") from None
            tensors[name] = values.reshape(shape)
    if list(tensors) != list(shapes):
        raise CorruptTensor(f"{path}: tensors {list(tensors)} do not match the config")
    return CtDnnParams(config, tensors)
