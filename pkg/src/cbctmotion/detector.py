"""Slice-based motion scoring and volume-level classification.

A volume is represented by axial slices; each slice is normalized, reduced to
six artifact-sensitive statistics, and scored by a logistic model trained
with momentum gradient descent on binary cross-entropy. The volume verdict
averages the per-slice probabilities and thresholds the mean at 0.5.

The learnable part follows the scikit-learn estimator protocol
(fit/predict_proba/get_params) so it can sit in sklearn pipelines, and the
feature extractor is a stateless transformer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import ValidationError
from .volume import Volume

__all__ = [
    "MOTION",
    "NO_MOTION",
    "FEATURE_NAMES",
    "Slice",
    "VolumeVerdict",
    "extract_axial_slices",
    "normalize_slice",
    "compute_features",
    "SliceFeatureExtractor",
    "MotionSliceScorer",
    "score_slice",
    "volume_average",
    "classify_volume",
    "score_volume",
    "scorer_to_json",
    "scorer_from_json",
]

MOTION = "Motion(+)"
NO_MOTION = "NoMotion(-)"

FEATURE_NAMES = (
    "tv_over_mean",
    "orientation_entropy",
    "highfreq_energy_ratio",
    "laplacian_variance",
    "edge_doubling",
    "bright_fraction",
)


@dataclass(frozen=True)
class Slice:
    """One axial slice: 2D intensities, its source volume id and z index."""

    data: np.ndarray
    volume_id: str = ""
    index: int = 0


@dataclass(frozen=True)
class VolumeVerdict:
    """Volume classification: per-slice probabilities, their mean, and the
    thresholded decision."""

    volume_id: str
    slice_scores: tuple[float, ...]
    y_pred: float
    y_final: str

    @property
    def n_slices(self) -> int:
        return len(self.slice_scores)


def extract_axial_slices(volume: Volume, n: int = 300, volume_id: str = "") -> list[Slice]:
    """Pick up to ``n`` axial slices, evenly spread over z.

    With nz >= n the indices are round(i*(nz-1)/(n-1)); duplicates (which the
    even spread cannot produce, but defensively) are replaced by the nearest
    unused neighbors. With nz < n all nz slices are returned, never
    upsampled.
    """
    nz = volume.values.shape[0]
    if nz < 1:
        raise ValidationError("volume has no axial slices")
    if nz < n:
        indices = list(range(nz))
    elif n == 1:
        indices = [(nz - 1) // 2]
    else:
        raw = [int(math.floor(i * (nz - 1) / (n - 1) + 0.5)) for i in range(n)]
        seen: set[int] = set()
        indices = []
        for idx in raw:
            if idx not in seen:
                seen.add(idx)
                indices.append(idx)
        offset = 1
        while len(indices) < n and offset < nz:
            for idx in list(indices):
                for cand in (idx - offset, idx + offset):
                    if 0 <= cand < nz and cand not in seen:
                        seen.add(cand)
                        indices.append(cand)
                        if len(indices) == n:
                            break
                if len(indices) == n:
                    break
            offset += 1
        indices.sort()
    return [Slice(data=volume.values[i], volume_id=volume_id, index=i) for i in indices]


def _bilinear_resize(data: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with pixel-center alignment; identity when the shape
    already matches."""
    if data.shape == out_shape:
        return data
    in_h, in_w = data.shape
    out_h, out_w = out_shape
    rows = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    cols = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    grid = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(data, grid, order=1, mode="nearest")


def normalize_slice(raw: Slice | np.ndarray, out_size: tuple[int, int] = (256, 256)) -> Slice:
    """Clamp to the slice's 99.5th percentile, scale to [0, 1], and resize.

    The percentile clamp keeps isolated metal hot pixels from compressing the
    bone contrast. An all-zero slice stays all-zero.
    """
    if isinstance(raw, Slice):
        data, volume_id, index = raw.data, raw.volume_id, raw.index
    else:
        data, volume_id, index = np.asarray(raw), "", 0
    if data.ndim != 2:
        raise ValidationError(f"slice must be 2D, got shape {data.shape}")
    data = data.astype(np.float64)
    top = float(np.percentile(data, 99.5))
    if top <= 0.0:
        out = np.zeros(out_size)
    else:
        out = np.clip(data, 0.0, top) / top
        out = np.clip(_bilinear_resize(out, tuple(out_size)), 0.0, 1.0)
    return Slice(data=out, volume_id=volume_id, index=index)


def compute_features(sl: Slice | np.ndarray) -> np.ndarray:
    """Six artifact-sensitive statistics of a normalized slice.

    1. total variation over total intensity
    2. entropy of the magnitude-weighted gradient-orientation histogram
       (18 bins over 180 degrees)
    3. spectral energy in the 0.25-0.5 Nyquist annulus over total (DC excluded)
    4. variance of the 4-neighbor Laplacian
    5. strongest normalized autocorrelation of the gradient magnitude at
       lags between 2 and 10 px (ghost-edge doubling)
    6. fraction of pixels above 0.8
    """
    data = sl.data if isinstance(sl, Slice) else np.asarray(sl)
    data = data.astype(np.float64)

    total = float(data.sum())
    tv = float(np.abs(np.diff(data, axis=0)).sum() + np.abs(np.diff(data, axis=1)).sum())
    tv_ratio = tv / total if total > 0 else 0.0

    gy, gx = np.gradient(data)
    mag = np.hypot(gx, gy)
    mag_sum = float(mag.sum())
    if mag_sum > 0:
        theta = np.mod(np.arctan2(gy, gx), math.pi)
        hist, _ = np.histogram(theta, bins=18, range=(0.0, math.pi), weights=mag)
        p = hist / mag_sum
        nz = p[p > 0]
        entropy = float(-(nz * np.log(nz)).sum())
    else:
        entropy = 0.0

    spectrum = np.abs(np.fft.fft2(data)) ** 2
    fy = np.fft.fftfreq(data.shape[0])
    fx = np.fft.fftfreq(data.shape[1])
    radius = np.hypot(fy[:, None], fx[None, :])
    annulus = (radius >= 0.125) & (radius <= 0.25)
    denom = float(spectrum.sum() - spectrum[0, 0])
    high_ratio = float(spectrum[annulus].sum() / denom) if denom > 0 else 0.0

    lap = ndimage.laplace(data, mode="reflect")
    lap_var = float(lap.var())

    centered = mag - mag.mean()
    power = float((centered**2).sum())
    if power > 0:
        ac = np.fft.ifft2(np.abs(np.fft.fft2(centered)) ** 2).real / power
        ly = np.minimum(np.arange(data.shape[0]), data.shape[0] - np.arange(data.shape[0]))
        lx = np.minimum(np.arange(data.shape[1]), data.shape[1] - np.arange(data.shape[1]))
        lag = np.hypot(ly[:, None], lx[None, :])
        ring = (lag >= 2.0) & (lag <= 10.0)
        doubling = float(ac[ring].max())
    else:
        doubling = 0.0

    bright = float((data > 0.8).mean())

    features = np.array([tv_ratio, entropy, high_ratio, lap_var, doubling, bright])
    if not np.all(np.isfinite(features)):
        raise ValidationError(f"non-finite feature values: {features}")
    return features


class SliceFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer turning slices into the 6-feature matrix.

    Accepts a list of Slice objects / 2D arrays or one (n, h, w) array.
    """

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        if isinstance(X, np.ndarray) and X.ndim == 3:
            items = list(X)
        else:
            items = list(X)
        return np.stack([compute_features(item) for item in items])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Clamp keeps probabilities strictly inside (0, 1) in float64.
    return 1.0 / (1.0 + np.exp(-np.clip(z, -30.0, 30.0)))


class MotionSliceScorer(ClassifierMixin, BaseEstimator):
    """Logistic slice scorer trained with momentum gradient descent on BCE.

    Features are standardized with statistics from the training data only.
    Training starts from zero weights, runs full-batch by default (set
    ``batch_size`` for seeded mini-batches), and is deterministic given the
    seed. ``loss_trace_`` holds the full-batch BCE before training and after
    every epoch.
    """

    def __init__(
        self,
        learning_rate: float = 1e-3,
        momentum: float = 0.9,
        epochs: int = 500,
        batch_size: int | None = None,
        seed: int = 0,
    ):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _loss(self, Xs: np.ndarray, y: np.ndarray, w: np.ndarray, b: float) -> float:
        p = _sigmoid(Xs @ w + b)
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y = y.astype(np.float64)
        classes = np.unique(y)
        if not np.isin(classes, (0.0, 1.0)).all():
            raise ValidationError(f"labels must be binary 0/1, got {classes}")
        if classes.size < 2:
            raise ValidationError("training data must contain both classes")

        self.feature_mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.feature_std_ = np.where(std > 0, std, 1.0)
        Xs = (X - self.feature_mean_) / self.feature_std_

        n, d = Xs.shape
        w = np.zeros(d)
        b = 0.0
        vel_w = np.zeros(d)
        vel_b = 0.0
        rng = np.random.default_rng(self.seed)
        trace = [self._loss(Xs, y, w, b)]
        for _ in range(self.epochs):
            if self.batch_size is None:
                batches = [np.arange(n)]
            else:
                order = rng.permutation(n)
                batches = [order[i : i + self.batch_size] for i in range(0, n, self.batch_size)]
            for idx in batches:
                p = _sigmoid(Xs[idx] @ w + b)
                err = p - y[idx]
                grad_w = Xs[idx].T @ err / idx.size
                grad_b = float(err.mean())
                vel_w = self.momentum * vel_w - self.learning_rate * grad_w
                vel_b = self.momentum * vel_b - self.learning_rate * grad_b
                w = w + vel_w
                b = b + vel_b
            trace.append(self._loss(Xs, y, w, b))

        self.coef_ = w
        self.intercept_ = b
        self.loss_trace_ = np.array(trace)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = d
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        X = check_array(X)
        Xs = (X - self.feature_mean_) / self.feature_std_
        return Xs @ self.coef_ + self.intercept_

    def predict_proba(self, X) -> np.ndarray:
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)


def score_slice(scorer: MotionSliceScorer, sl: Slice | np.ndarray) -> float:
    """Motion probability of one normalized slice."""
    features = compute_features(sl)
    return float(scorer.predict_proba(features[None, :])[0, 1])


def volume_average(scores) -> float:
    """Mean slice probability: y_pred = sum(y_i) / N."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValidationError("cannot average an empty score list")
    return float(scores.mean())


def classify_volume(y_pred: float) -> str:
    """Threshold the averaged probability: Motion(+) iff y_pred >= 0.5."""
    return MOTION if y_pred >= 0.5 else NO_MOTION


def score_volume(
    scorer: MotionSliceScorer,
    volume: Volume,
    n_slices: int = 300,
    out_size: tuple[int, int] = (256, 256),
    volume_id: str = "",
) -> VolumeVerdict:
    """Full per-volume pipeline: slices -> normalize -> features -> average."""
    slices = [normalize_slice(s, out_size) for s in extract_axial_slices(volume, n_slices, volume_id)]
    features = np.stack([compute_features(s) for s in slices])
    scores = scorer.predict_proba(features)[:, 1]
    y_pred = volume_average(scores)
    return VolumeVerdict(
        volume_id=volume_id,
        slice_scores=tuple(float(v) for v in scores),
        y_pred=y_pred,
        y_final=classify_volume(y_pred),
    )


def scorer_to_json(scorer: MotionSliceScorer) -> str:
    check_is_fitted(scorer, "coef_")
    doc = {
        "feature_names": list(FEATURE_NAMES),
        "feature_mean": [float(v) for v in scorer.feature_mean_],
        "feature_std": [float(v) for v in scorer.feature_std_],
        "weights": [float(v) for v in scorer.coef_],
        "bias": float(scorer.intercept_),
        "hyper": {
            "learning_rate": scorer.learning_rate,
            "momentum": scorer.momentum,
            "epochs": scorer.epochs,
            "batch_size": scorer.batch_size,
            "seed": scorer.seed,
        },
        "loss_trace": [float(v) for v in scorer.loss_trace_],
    }
    return json.dumps(doc, indent=1)


def scorer_from_json(text: str) -> MotionSliceScorer:
    doc = json.loads(text)
    scorer = MotionSliceScorer(**doc["hyper"])
    scorer.feature_mean_ = np.array(doc["feature_mean"])
    scorer.feature_std_ = np.array(doc["feature_std"])
    scorer.coef_ = np.array(doc["weights"])
    scorer.intercept_ = float(doc["bias"])
    scorer.loss_trace_ = np.array(doc["loss_trace"])
    scorer.classes_ = np.array([0, 1])
    scorer.n_features_in_ = scorer.coef_.size
    return scorer
