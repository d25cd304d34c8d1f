"""Principal component projection of frame features for visual inspection."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (k, D), orthonormal rows
    explained_variance: np.ndarray  # (k,), descending
    explained_ratio: np.ndarray  # (k,)
    total_variance: float

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def to_arrays(self) -> dict:
        return {
            "pca.mean": self.mean,
            "pca.components": self.components,
            "pca.explained_variance": self.explained_variance,
            "pca.explained_ratio": self.explained_ratio,
            "pca.total_variance": np.array([self.total_variance]),
        }

    @classmethod
    def from_arrays(cls, arrays: dict) -> "PcaModel":
        return cls(
            arrays["pca.mean"],
            arrays["pca.components"],
            arrays["pca.explained_variance"],
            arrays["pca.explained_ratio"],
            float(arrays["pca.total_variance"][0]),
        )


def covariance(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(frames, dtype=np.float64)
    mean = x.mean(axis=0)
    xc = x - mean
    return mean, xc.T @ xc / (x.shape[0] - 1)


def fit(frames: np.ndarray, k: int = 3) -> PcaModel:
    """Eigendecompose the sample covariance (1/(M-1)) and keep the top ``k`` axes.

    Each component is flipped so its largest-magnitude entry is positive.
    Rank-deficient data yields trailing variances of (numerically) zero.
    """
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ShapeError(f"need an (M>=2, D) matrix, got shape {x.shape}")
    if not 1 <= k <= x.shape[1]:
        raise ConfigError(f"k must be in [1, {x.shape[1]}], got {k}")
    mean, cov = covariance(x)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:k]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order].T.copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), pivot])
    comps *= signs[:, None]
    total = float(np.trace(cov))
    ratio = evals / total if total > 0 else np.zeros_like(evals)
    return PcaModel(mean, comps, evals, ratio, total)


def transform(model: PcaModel, frames: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if x.shape[1] != model.mean.size:
        raise ShapeError(f"model expects {model.mean.size} columns, got {x.shape[1]}")
    return (x - model.mean) @ model.components.T


def reconstruct(model: PcaModel, scores: np.ndarray) -> np.ndarray:
    return scores @ model.components + model.mean


def export_scatter(scores: np.ndarray, labels, path) -> None:
    """Write ``pc1,pc2,pc3,label`` rows in input order."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != 3:
        raise ShapeError(f"scatter export needs 3 components, got shape {scores.shape}")
    labels = list(labels)
    if len(labels) != scores.shape[0]:
        raise ShapeError("one label per score row required")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pc1", "pc2", "pc3", "label"])
        for row, lab in zip(scores, labels):
            w.writerow([repr(float(v)) for v in row] + [lab])


def export_variance(model: PcaModel, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", "explained_variance", "explained_ratio", "cumulative_ratio"])
        cum = np.cumsum(model.explained_ratio)
        for j in range(model.k):
            w.writerow([j + 1, repr(float(model.explained_variance[j])),
                        repr(float(model.explained_ratio[j])), repr(float(cum[j]))])
