"""Backbone recommenders with a scikit-learn style estimator interface.

Every model is fit on a :class:`~echoloop.ingest.Dataset` and ranks the full
catalog of that dataset, including items the snapshot never saw. Rankings
are by descending score with ties broken by ascending item id.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from numba import njit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError, ParseError, UsageError, ValidationError
from .ingest import Dataset

RECOMMENDER_KINDS = ("most_popular", "item_knn", "matrix_factorization")


@dataclass(frozen=True)
class EmbeddingMatrix:
    subject_ids: tuple
    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.subject_ids):
            raise ValidationError("one vector row per subject is required")
        if len(set(self.subject_ids)) != len(self.subject_ids):
            raise ValidationError("subject ids must be unique")

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.subject_ids)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.subject_ids == other.subject_ids and np.array_equal(self.vectors, other.vectors)

    __hash__ = None

    def reindex(self, subject_ids):
        pos = {s: j for j, s in enumerate(self.subject_ids)}
        return EmbeddingMatrix(tuple(subject_ids), self.vectors[[pos[s] for s in subject_ids]])


def write_embeddings(matrix: EmbeddingMatrix, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id"] + [f"dim_{j}" for j in range(matrix.dim)])
        for subject, row in zip(matrix.subject_ids, matrix.vectors):
            writer.writerow([subject] + [repr(float(v)) for v in row])


def read_embeddings(path) -> EmbeddingMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "subject_id":
            raise ParseError(f"{path}: bad embedding header", line=1)
        dim = len(header) - 1
        ids, rows = [], []
        for row in reader:
            if len(row) != dim + 1:
                raise ParseError(f"{path}: expected {dim + 1} columns", line=reader.line_num)
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return EmbeddingMatrix(tuple(ids), np.array(rows, dtype=np.float64).reshape(len(ids), dim))


class BaseRecommender(BaseEstimator):
    """Shared catalog bookkeeping, ranking, and popularity fallback."""

    def fit(self, X: Dataset, y=None):
        if len(X) == 0:
            raise ValidationError("cannot train on an empty snapshot")
        self.items_ = np.array(X.sorted_items, dtype=object)
        self.item_index_ = {item: j for j, item in enumerate(self.items_)}
        self.users_ = np.array(X.sorted_users, dtype=object)
        self.user_index_ = {user: j for j, user in enumerate(self.users_)}
        self.user_ids_ = np.fromiter(
            (self.user_index_[x.user_id] for x in X.interactions), dtype=np.int64, count=len(X)
        )
        self.item_ids_ = np.fromiter(
            (self.item_index_[x.item_id] for x in X.interactions), dtype=np.int64, count=len(X)
        )
        self.popularity_ = np.bincount(self.item_ids_, minlength=len(self.items_)).astype(np.float64)
        self.seen_ = set(zip(self.user_ids_.tolist(), self.item_ids_.tolist()))
        self._fit(X)
        return self

    def _fit(self, X):
        pass

    def _user_scores(self, u):
        raise NotImplementedError

    def score_items(self, user):
        """Scores for every catalog item, aligned with ``items_``."""
        check_is_fitted(self)
        u = self.user_index_.get(user)
        if u is None or not self._has_history(u):
            return self.popularity_.copy()
        return self._user_scores(u)

    def _has_history(self, u):
        return True

    def score(self, user, item):
        return float(self.score_items(user)[self.item_index_[item]])

    def recommend(self, user, k, exclusions=()):
        """Top-``k`` catalog items for ``user``, skipping ``exclusions``."""
        if k < 1:
            raise UsageError(f"k must be >= 1, got {k}")
        scores = self.score_items(user)
        eligible = np.ones(len(self.items_), dtype=bool)
        for item in exclusions:
            j = self.item_index_.get(item)
            if j is not None:
                eligible[j] = False
        idx = np.flatnonzero(eligible)
        order = idx[np.argsort(-scores[idx], kind="stable")]
        return [str(item) for item in self.items_[order[:k]]]

    def embeddings(self):
        return None


class MostPopular(BaseRecommender):
    def _user_scores(self, u):
        return self.popularity_.copy()


class ItemKNN(BaseRecommender):
    """Item-item cosine similarity over the binary user-item matrix."""

    def __init__(self, neighbors=50):
        self.neighbors = neighbors

    def _fit(self, X):
        if self.neighbors < 1:
            raise ConfigError("neighbors must be >= 1")
        n_users, n_items = len(self.users_), len(self.items_)
        m = sp.csr_matrix(
            (np.ones(len(self.user_ids_)), (self.user_ids_, self.item_ids_)), shape=(n_users, n_items)
        )
        m.data[:] = 1.0  # duplicates summed by the constructor; binarize
        self.matrix_ = m
        co = (m.T @ m).toarray()
        norms = np.sqrt(np.diag(co))
        with np.errstate(divide="ignore", invalid="ignore"):
            sim = co / np.outer(norms, norms)
        sim[~np.isfinite(sim)] = 0.0
        np.fill_diagonal(sim, 0.0)
        k = min(self.neighbors, n_items)
        if k < n_items:
            # keep the k most similar neighbours of each target item (column)
            order = np.argsort(-sim, axis=0, kind="stable")
            mask = np.zeros_like(sim, dtype=bool)
            np.put_along_axis(mask, order[:k], True, axis=0)
            sim = np.where(mask, sim, 0.0)
        self.similarity_ = sim

    def _has_history(self, u):
        return self.matrix_.indptr[u + 1] > self.matrix_.indptr[u]

    def _user_scores(self, u):
        row = self.matrix_.getrow(u)
        return np.asarray(row @ self.similarity_).ravel()


@njit(cache=False)
def _sgd_epoch(P, Q, users, items, labels, lr, reg):
    loss = 0.0
    for s in range(users.shape[0]):
        u = users[s]
        i = items[s]
        x = 0.0
        for f in range(P.shape[1]):
            x += P[u, f] * Q[i, f]
        if x >= 0:
            p = 1.0 / (1.0 + np.exp(-x))
        else:
            e = np.exp(x)
            p = e / (1.0 + e)
        g = p - labels[s]
        loss -= np.log(p + 1e-12) if labels[s] > 0.5 else np.log(1.0 - p + 1e-12)
        for f in range(P.shape[1]):
            pu = P[u, f]
            qi = Q[i, f]
            P[u, f] -= lr * (g * qi + reg * pu)
            Q[i, f] -= lr * (g * pu + reg * qi)
    return loss / max(users.shape[0], 1)


class MatrixFactorization(BaseRecommender):
    """Latent factors fit by SGD on pointwise logistic loss.

    Each epoch visits every observed interaction (label 1) once, in a seeded
    random order, followed by ``negatives_per_positive`` items drawn
    uniformly from the catalog (label 0). The score is the dot product of
    the user and item factors.
    """

    def __init__(
        self,
        embedding_dim=32,
        learning_rate=0.05,
        epochs=20,
        negatives_per_positive=4,
        regularization=1e-4,
        init_scale=0.1,
        seed=0,
        warm_start=False,
    ):
        self.embedding_dim = embedding_dim
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.negatives_per_positive = negatives_per_positive
        self.regularization = regularization
        self.init_scale = init_scale
        self.seed = seed
        self.warm_start = warm_start

    def fit(self, X: Dataset, y=None):
        previous = None
        if self.warm_start and hasattr(self, "user_factors_"):
            previous = (self.users_, self.user_factors_, self.items_, self.item_factors_)
        self._previous = previous
        try:
            return super().fit(X, y)
        finally:
            del self._previous

    def _init_factors(self, rng, ids, old_ids, old_factors):
        factors = rng.normal(0.0, self.init_scale, size=(len(ids), self.embedding_dim))
        if old_factors is not None and old_factors.shape[1] == self.embedding_dim:
            pos = {s: j for j, s in enumerate(old_ids)}
            for j, s in enumerate(ids):
                if s in pos:
                    factors[j] = old_factors[pos[s]]
        return factors

    def _fit(self, X):
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if self.epochs < 1 or self.learning_rate <= 0 or self.negatives_per_positive < 1:
            raise ConfigError("epochs, learning_rate and negatives_per_positive must be positive")
        rng = np.random.default_rng(self.seed)
        prev = self._previous or (None, None, None, None)
        P = self._init_factors(rng, self.users_, prev[0], prev[1])
        Q = self._init_factors(rng, self.items_, prev[2], prev[3])

        n_pos, r, n_items = len(self.user_ids_), self.negatives_per_positive, len(self.items_)
        labels = np.zeros(n_pos * (r + 1))
        labels[:: r + 1] = 1.0
        self.loss_curve_ = []
        for _ in range(self.epochs):
            perm = rng.permutation(n_pos)
            users = np.repeat(self.user_ids_[perm], r + 1)
            items = np.empty((n_pos, r + 1), dtype=np.int64)
            items[:, 0] = self.item_ids_[perm]
            items[:, 1:] = rng.integers(0, n_items, size=(n_pos, r))
            loss = _sgd_epoch(
                P, Q, users, items.ravel(), labels, float(self.learning_rate), float(self.regularization)
            )
            self.loss_curve_.append(float(loss))
        self.user_factors_ = P
        self.item_factors_ = Q

    def _user_scores(self, u):
        return self.item_factors_ @ self.user_factors_[u]

    def embeddings(self):
        check_is_fitted(self)
        return (
            EmbeddingMatrix(tuple(str(u) for u in self.users_), self.user_factors_.copy()),
            EmbeddingMatrix(tuple(str(i) for i in self.items_), self.item_factors_.copy()),
        )


@dataclass(frozen=True)
class RecommenderConfig:
    kind: str = "most_popular"
    embedding_dim: int = 32
    learning_rate: float = 0.05
    epochs: int = 20
    negatives_per_positive: int = 4
    regularization: float = 1e-4
    neighbors: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.kind not in RECOMMENDER_KINDS:
            raise ConfigError(f"recommender kind must be one of {RECOMMENDER_KINDS}, got {self.kind!r}")
        for name in ("embedding_dim", "epochs", "negatives_per_positive", "neighbors"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if self.regularization < 0:
            raise ConfigError(f"regularization must be >= 0, got {self.regularization!r}")

    def to_dict(self):
        return asdict(self)


def make_recommender(config: RecommenderConfig, seed=None) -> BaseRecommender:
    seed = config.seed if seed is None else seed
    if config.kind == "most_popular":
        return MostPopular()
    if config.kind == "item_knn":
        return ItemKNN(neighbors=config.neighbors)
    return MatrixFactorization(
        embedding_dim=config.embedding_dim,
        learning_rate=config.learning_rate,
        epochs=config.epochs,
        negatives_per_positive=config.negatives_per_positive,
        regularization=config.regularization,
        seed=seed,
    )


def train(config: RecommenderConfig, snapshot: Dataset, seed=None) -> BaseRecommender:
    return make_recommender(config, seed=seed).fit(snapshot)


def recommend(model: BaseRecommender, user, k, exclusions=()):
    return model.recommend(user, k, exclusions)


def export_embeddings(model: BaseRecommender):
    """``(user_matrix, item_matrix)`` for factor models, otherwise ``None``."""
    return model.embeddings()
