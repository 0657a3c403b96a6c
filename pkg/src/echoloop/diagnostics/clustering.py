"""k-means, a shared 2-D projection, and centroid-distance polarization traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .._seeding import make_rng
from ..errors import AlignmentError, UsageError
from ..recommenders import EmbeddingMatrix


def _as_points(points):
    if isinstance(points, EmbeddingMatrix):
        points = points.vectors
    return check_array(points, dtype=np.float64, ensure_min_samples=1)


def _sq_distances(X, centroids):
    return ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp(X, k, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers.append(X[idx])
        closest = np.minimum(closest, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _assign(X, centroids):
    d2 = _sq_distances(X, centroids)
    labels = d2.argmin(axis=1)  # first minimum: ties go to the lower centroid index
    k = len(centroids)
    for j in range(k):
        if (labels == j).any():
            continue
        # re-seed an empty cluster with the point farthest from its centroid,
        # taken from a cluster that can spare it
        sizes = np.bincount(labels, minlength=k)
        cost = d2[np.arange(len(X)), labels]
        cost = np.where(sizes[labels] > 1, cost, -np.inf)
        labels[int(np.argmax(cost))] = j
    return labels


def _means(X, labels, k):
    return np.array([X[labels == j].mean(axis=0) for j in range(k)])


def _sse(X, labels, centroids):
    return float(((X - centroids[labels]) ** 2).sum())


def _transfer_pass(X, labels, k):
    """Move single points between clusters while that strictly lowers the SSE.

    A Lloyd fixpoint can still admit an improving single-point transfer
    (the moved point drags its old centroid with it); this sweep removes
    those, so the result is also a Hartigan local optimum.
    """
    labels = labels.copy()
    sizes = np.bincount(labels, minlength=k).astype(np.float64)
    centroids = _means(X, labels, k)
    scale = max(float(((X - X.mean(axis=0)) ** 2).sum()), 1.0)
    moved = True
    while moved:
        moved = False
        for i in range(len(X)):
            a = labels[i]
            if sizes[a] <= 1:
                continue
            d2 = ((centroids - X[i]) ** 2).sum(axis=1)
            gain = sizes / (sizes + 1) * d2
            gain[a] = sizes[a] / (sizes[a] - 1) * d2[a]
            b = int(np.argmin(gain))
            if b == a or gain[b] >= gain[a] - 1e-12 * scale:
                continue
            centroids[a] = (centroids[a] * sizes[a] - X[i]) / (sizes[a] - 1)
            centroids[b] = (centroids[b] * sizes[b] + X[i]) / (sizes[b] + 1)
            sizes[a] -= 1
            sizes[b] += 1
            labels[i] = b
            moved = True
    return labels


def _lloyd(X, k, rng, max_iter):
    centroids = _kmeans_pp(X, k, rng)
    labels = None
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new = _assign(X, centroids)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centroids = _means(X, labels, k)
        history.append(_sse(X, labels, centroids))
    polished = _transfer_pass(X, labels, k)
    if not np.array_equal(polished, labels):
        labels = polished
        centroids = _means(X, labels, k)
        history.append(_sse(X, labels, centroids))
    return labels, centroids, history, n_iter


class KMeans(ClusterMixin, BaseEstimator):
    """Lloyd's algorithm with k-means++ seeding and a single-point transfer polish.

    Runs ``n_init`` seeded restarts and keeps the lowest within-cluster sum
    of squares; the earliest restart wins ties.
    """

    def __init__(self, n_clusters=2, seed=0, max_iter=300, n_init=20):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter
        self.n_init = n_init

    def fit(self, X, y=None):
        X = _as_points(X)
        k = self.n_clusters
        if k < 1:
            raise UsageError("n_clusters must be >= 1")
        if len(X) < k:
            raise UsageError(f"{len(X)} points cannot form {k} clusters")
        best = None
        for run in range(self.n_init):
            labels, centroids, history, n_iter = _lloyd(X, k, make_rng(self.seed, "kmeans", run), self.max_iter)
            if best is None or history[-1] < best[2][-1]:
                best = (labels, centroids, history, n_iter)
        self.labels_, self.cluster_centers_, self.inertia_history_, self.n_iter_ = best
        self.inertia_ = self.inertia_history_[-1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        return _sq_distances(_as_points(X), self.cluster_centers_).argmin(axis=1)


def kmeans(points, k, seed=0, max_iter=300, n_init=20):
    """Return ``(labels, centroids)``."""
    model = KMeans(n_clusters=k, seed=seed, max_iter=max_iter, n_init=n_init).fit(points)
    return model.labels_, model.cluster_centers_


class PrincipalProjection(TransformerMixin, BaseEstimator):
    """Linear projection onto the top principal components of the fitted data.

    Component signs are fixed so the largest-magnitude loading is positive,
    which makes the projection deterministic.
    """

    def __init__(self, n_components=2):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = _as_points(X)
        self.mean_ = X.mean(axis=0)
        _, _, vt = np.linalg.svd(X - self.mean_, full_matrices=False)
        comps = vt[: self.n_components]
        if len(comps) < self.n_components:
            comps = np.vstack([comps, np.zeros((self.n_components - len(comps), X.shape[1]))])
        signs = np.sign(comps[np.arange(len(comps)), np.abs(comps).argmax(axis=1)])
        signs[signs == 0] = 1.0
        self.components_ = comps * signs[:, None]
        return self

    def transform(self, X):
        check_is_fitted(self)
        return (_as_points(X) - self.mean_) @ self.components_.T


@dataclass
class PolarizationTrace:
    subject_ids: tuple
    labels: dict
    centroids: list
    distances: list
    projections: list

    @property
    def ratio(self):
        return self.distances[-1] / self.distances[0] if self.distances[0] > 0 else float("inf")


def _group_distance(centroids):
    k = len(centroids)
    d = [np.linalg.norm(centroids[a] - centroids[b]) for a in range(k) for b in range(a + 1, k)]
    return float(np.mean(d)) if d else 0.0


def common_subjects(embedding_snapshots):
    """Subjects present in every snapshot, sorted."""
    sets = [set(s.subject_ids) for s in embedding_snapshots]
    return tuple(sorted(set.intersection(*sets))) if sets else ()


def polarization_trace(embedding_snapshots, k=2, seed=0, subjects=None) -> PolarizationTrace:
    """Track the separation of end-state clusters back through every period.

    Labels come from k-means on the last snapshot and are held fixed; for
    each period the group means under those labels are compared by
    Euclidean distance (mean pairwise distance when ``k > 2``). All periods
    are projected with the principal axes of the last snapshot.

    Without ``subjects`` every snapshot must cover the same subject set;
    with it, each snapshot must contain those subjects and the rest are
    ignored.
    """
    snapshots = list(embedding_snapshots)
    if not snapshots:
        raise UsageError("polarization_trace needs at least one snapshot")
    if subjects is None:
        subjects = tuple(sorted(snapshots[-1].subject_ids))
        strict = True
    else:
        subjects = tuple(sorted(subjects))
        strict = False
    expected = set(subjects)
    aligned = []
    for n, snap in enumerate(snapshots, 1):
        present = set(snap.subject_ids)
        if (strict and present != expected) or not expected <= present:
            raise AlignmentError(f"snapshot {n} does not cover the analysed subject set")
        aligned.append(snap.reindex(subjects).vectors)
    if any(X.shape[1] != aligned[-1].shape[1] for X in aligned):
        raise AlignmentError("embedding dimension changes across periods")
    labels, _ = kmeans(aligned[-1], k, seed=seed)
    projector = PrincipalProjection(2).fit(aligned[-1])
    centroids, distances, projections = [], [], []
    for X in aligned:
        c = _means(X, labels, k)
        centroids.append(c)
        distances.append(_group_distance(c))
        projections.append(projector.transform(X))
    return PolarizationTrace(subjects, dict(zip(subjects, labels.tolist())), centroids, distances, projections)
