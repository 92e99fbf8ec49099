"""Feature extraction from demand grids: max-pool, standardize, PCA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def maxpool(grid, pool_size: int) -> np.ndarray:
    """Non-overlapping max-pool of a 2-D array.

    Edges that do not fill a window are padded with zeros at the bottom and
    right. Demand is non-negative, so padding never beats a real cell.
    """
    if pool_size < 1:
        raise ValueError(f"pool_size must be >= 1, got {pool_size}")
    values = np.asarray(getattr(grid, "values", grid), dtype=float)
    if pool_size == 1:
        return values.copy()
    rows, cols = values.shape
    pr, pc = -rows % pool_size, -cols % pool_size
    if pr or pc:
        values = np.pad(values, ((0, pr), (0, pc)))
    r, c = values.shape
    return values.reshape(r // pool_size, pool_size, c // pool_size, pool_size).max(axis=(1, 3))


@dataclass
class Preprocessor:
    pool_size: int
    feature_means: np.ndarray
    feature_stds: np.ndarray
    pca_basis: np.ndarray  # (n_components, n_features), orthonormal rows
    eigenvalues: np.ndarray  # all of them, descending
    n_components: int
    whiten: bool = True

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        if total <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / total

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.feature_means) / self.feature_stds

    def project(self, z: np.ndarray) -> np.ndarray:
        return z @ self.pca_basis.T

    def reconstruct(self, scores: np.ndarray) -> np.ndarray:
        return scores @ self.pca_basis

    def _scale(self) -> np.ndarray:
        ev = self.eigenvalues[: self.n_components]
        return np.sqrt(np.where(ev > 0, ev, 1.0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        scores = self.project(self.standardize(x))
        return scores / self._scale() if self.whiten else scores


def fit_preprocessor(
    features: np.ndarray,
    pool_size: int = 1,
    variance_threshold: float = 0.95,
    n_components: int | None = None,
    whiten: bool = True,
) -> Preprocessor:
    """Fit standardization and PCA on flattened (already pooled) training features.

    Zero-variance features get std 1. The number of components is the smallest
    count reaching ``variance_threshold`` of the variance unless given
    explicitly; with no variance at all it falls back to one.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two training samples to fit the preprocessor")
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    stds[stds <= 1e-12 * np.maximum(1.0, np.abs(means))] = 1.0
    z = (x - means) / stds
    cov = z.T @ z / (x.shape[0] - 1)
    ev, vec = np.linalg.eigh(cov)
    order = np.argsort(ev)[::-1]
    ev = np.clip(ev[order], 0.0, None)
    vec = vec[:, order]
    # Fix each eigenvector's sign so its largest-magnitude entry is positive.
    pivots = np.argmax(np.abs(vec), axis=0)
    vec *= np.sign(vec[pivots, np.arange(vec.shape[1])])

    if n_components is None:
        total = ev.sum()
        if total <= 0:
            n_components = 1
        else:
            cum = np.cumsum(ev) / total
            n_components = int(np.searchsorted(cum, variance_threshold - 1e-12) + 1)
    n_components = max(1, min(n_components, len(ev)))
    return Preprocessor(
        pool_size=pool_size,
        feature_means=means,
        feature_stds=stds,
        pca_basis=vec[:, :n_components].T.copy(),
        eigenvalues=ev,
        n_components=n_components,
        whiten=whiten,
    )
