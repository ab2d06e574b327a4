"""Brute-force reference segmenter: ridge regression fitted to the first frame.

Each object gets an affine per-cell score ``s = X^T w + b`` on the stride-16
features, fitted in closed form so that its bilinear upsampling matches the
full-resolution first-frame mask.  Scores go through the same D-only head
and multi-object fusion as the engine.  There is no online update.
"""

import numpy as np

from .features import STRIDE, FeatureSpec, ToyFeatureProvider
from .io import split_objects
from .pipeline import ObjectState, aggregate_multi_object, fit_calibration, refine_d_only
from .tensor_ops import upsample_bilinear


def _design(features):
    x = np.asarray(features, dtype=np.float64)
    return np.concatenate([x, np.ones((1,) + x.shape[1:])])


def fit_ridge(features, label, lam=1.0):
    """Weights ``(C + 1,)`` minimizing ``||U(X w) - y||^2 + lam ||w||^2`` by a dense solve."""
    phi = _design(features)
    y = np.asarray(label, dtype=np.float64)
    up = np.stack([upsample_bilinear(ch, STRIDE)[:y.shape[0], :y.shape[1]] for ch in phi])
    a = up.reshape(len(phi), -1)
    gram = a @ a.T + lam * np.eye(len(phi))
    return np.linalg.solve(gram, a @ y.ravel())


def ridge_scores(weights, features):
    phi = _design(features)
    return np.tensordot(weights, phi, axes=1)


class RidgeOracle:
    def __init__(self, provider=None, lam=1.0):
        self.provider = provider or ToyFeatureProvider(FeatureSpec())
        self.lam = lam
        self.models = []

    def initialize(self, image, label_map):
        img = np.asarray(image, dtype=np.float64)
        ids, masks = split_objects(label_map)
        x0 = self.provider(_pad(img), frame_index=0)
        self.size = img.shape[1:]
        self.models = []
        for oid, m in zip(ids, masks):
            y = np.zeros((x0.shape[1] * STRIDE, x0.shape[2] * STRIDE))
            y[:m.shape[0], :m.shape[1]] = m
            w = fit_ridge(x0, y, self.lam)
            state = ObjectState(oid, None, None, fit_calibration(ridge_scores(w, x0), y))
            self.models.append((state, w))
        return label_map

    def predict(self, image, frame_index=None):
        x = self.provider(_pad(np.asarray(image, dtype=np.float64)), frame_index=frame_index)
        probs = [refine_d_only(st, ridge_scores(w, x), self.size) for st, w in self.models]
        return aggregate_multi_object(probs, [st.object_id for st, _ in self.models]).labels


def _pad(img):
    _, h, w = img.shape
    return np.pad(img, ((0, 0), (0, -h % STRIDE), (0, -w % STRIDE)), mode="edge")


def oracle_sequence(frames, first_label_map, provider=None, lam=1.0):
    """Label maps for every frame; frame 0 is returned as given."""
    oracle = RidgeOracle(provider, lam)
    out = []
    for i, f in enumerate(frames):
        out.append(np.asarray(first_label_map) if i == 0 else oracle.predict(f, i))
        if i == 0:
            oracle.initialize(f, first_label_map)
    return out
