"""Train a scaled-down feature network on data it can separate.

Four "speakers" whose filterbank frames differ by a constant offset are
easy for a small convolutional/time-delay network once it has had a couple
of dozen passes over the data.  Before training, the analytic gradients are
compared with central finite differences.  The point is random, so a
difference step that crosses a ReLU or max-pool switch could inflate the
error; the test suite searches for a point where that cannot happen.

    python3 demos/train_toy_network.py
"""

import numpy as np

from trivial_sre import CtDnnConfig, init_params, train
from trivial_sre.ctdnn import ConvSpec, check_gradients, forward

cfg = CtDnnConfig(n_speakers=4, input_mels=16, conv1=ConvSpec(4, 3, 5, 2), conv2=ConvSpec(8, 3, 3, 2),
                  bottleneck_dim=24, td_dim=32, pnorm_group=4, feature_dim=12)
width = cfg.splice.width * cfg.input_mels
rng = np.random.default_rng(0)
means = rng.standard_normal((4, cfg.input_mels))
means *= 2.0 / np.linalg.norm(means[:, None] - means[None], axis=-1).max()


def utterance(spk, T):
    frames = means[spk] + rng.normal(0, 0.3, (T + 8, cfg.input_mels))
    return np.hstack([frames[k:k + T] for k in range(9)])  # 4 + 1 + 4 context


data = [(utterance(s, 30), np.full(30, s)) for s in range(4) for _ in range(6)]
params = init_params(cfg, 1)
print(f"network: {params.n_parameters} parameters, input {width} values per frame")

x, y = data[0][0][:6], np.arange(6) % 4
errors = check_gradients(params, x, y, h=1e-4)
worst = max(errors, key=errors.get)
print(f"gradient check: worst relative error {errors[worst]:.1e} ({worst})\n")

params, reports = train(params, data, epochs=20, lr=0.01, momentum=0.9, lr_decay=0.9,
                        frame_budget=120, seed=2)
for r in reports:
    print(f"epoch {r.epoch:2d}  cross-entropy {r.mean_cross_entropy:.3f}  frame accuracy {r.frame_accuracy:.3f}")

feats, _ = forward(params, np.vstack([u for u, _ in data]))
labels = np.concatenate([l for _, l in data])
centroids = np.array([feats[labels == s].mean(axis=0) for s in range(4)])
spread = np.mean([feats[labels == s].std(axis=0).mean() for s in range(4)])
gap = np.min([np.linalg.norm(a - b) for i, a in enumerate(centroids) for b in centroids[i + 1:]])
print(f"\nfeature layer: nearest centroids {gap:.2f} apart, per-speaker spread {spread:.2f}")
