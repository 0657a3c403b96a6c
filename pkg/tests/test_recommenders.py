import math

import numpy as np
import pytest
from sklearn.base import clone

from echoloop.errors import ConfigError, UsageError
from echoloop.ingest import Interaction, build_dataset
from echoloop.recommenders import (
    EmbeddingMatrix,
    ItemKNN,
    MatrixFactorization,
    MostPopular,
    RecommenderConfig,
    export_embeddings,
    make_recommender,
    read_embeddings,
    recommend,
    train,
    write_embeddings,
)


def counts_log(counts):
    rows, t = [], 0
    for item, n in counts.items():
        for j in range(n):
            rows.append(Interaction(f"u{j}", item, t))
            t += 1
    return build_dataset(rows)


def two_blocks():
    rows = []
    for u in range(10):
        block = range(5) if u < 5 else range(5, 10)
        for i in block:
            rows.append(Interaction(f"u{u}", f"i{i}", u * 10 + i))
    return build_dataset(rows)


def test_most_popular_ranking():
    ds = counts_log({"A": 10, "B": 2, "C": 1})
    model = MostPopular().fit(ds)
    assert model.recommend("nobody", 2) == ["A", "B"]
    assert all(model.score(u, "A") > model.score(u, "B") for u in ds.users)


def test_exclusions_and_clamp():
    ds = counts_log({"A": 2, "B": 1})
    assert recommend(MostPopular().fit(ds), "u0", 5, {"A"}) == ["B"]
    with pytest.raises(UsageError):
        MostPopular().fit(ds).recommend("u0", 0)


def test_ties_break_by_item_id():
    ds = build_dataset([Interaction("u1", "B", 1), Interaction("u2", "A", 2)])
    assert MostPopular().fit(ds).recommend("u3", 2) == ["A", "B"]


def test_item_knn_matches_brute_force_cosine():
    ds = build_dataset([
        Interaction(u, i, t) for t, (u, i) in enumerate(
            [("a", "x"), ("a", "y"), ("b", "x"), ("b", "z"), ("c", "y"), ("c", "z"), ("c", "w"), ("d", "w")]
        )
    ])
    model = ItemKNN(neighbors=2).fit(ds)
    items = ds.sorted_items
    who = {i: {x.user_id for x in ds.interactions if x.item_id == i} for i in items}
    sim = {(i, j): (len(who[i] & who[j]) / math.sqrt(len(who[i]) * len(who[j])) if i != j else 0.0)
           for i in items for j in items}
    kept = {}
    for j in items:
        top = sorted((i for i in items), key=lambda i: (-sim[i, j], items.index(i)))[:2]
        for i in items:
            kept[i, j] = sim[i, j] if i in top else 0.0
    for user in ds.users:
        history = {x.item_id for x in ds.interactions if x.user_id == user}
        expected = [sum(kept[i, j] for i in history) for j in items]
        np.testing.assert_allclose(model.score_items(user), expected, rtol=1e-12, atol=1e-12)


def test_mf_separates_blocks():
    ds = two_blocks()
    model = MatrixFactorization(embedding_dim=64, epochs=50, seed=3).fit(ds)
    inside, across = [], []
    for u in range(10):
        for i in range(10):
            s = model.score(f"u{u}", f"i{i}")
            (inside if (u < 5) == (i < 5) else across).append(s)
    assert np.mean(inside) > np.mean(across)


def test_mf_is_deterministic_and_exports_shapes():
    ds = two_blocks()
    a = MatrixFactorization(embedding_dim=8, epochs=5, seed=1).fit(ds)
    b = clone(a).fit(ds)
    ua, ia = export_embeddings(a)
    ub, ib = export_embeddings(b)
    assert ua == ub and ia == ib
    assert ua.vectors.shape == (10, 8)
    assert export_embeddings(MostPopular().fit(ds)) is None


def test_mf_shape_for_hundred_users():
    ds = build_dataset([Interaction(f"u{u:03d}", f"i{u % 7}", u) for u in range(100)])
    users, items = MatrixFactorization(embedding_dim=8, epochs=1).fit(ds).embeddings()
    assert users.vectors.shape == (100, 8) and items.vectors.shape == (7, 8)


def test_warm_start_reuses_factors():
    ds = two_blocks()
    model = MatrixFactorization(embedding_dim=4, epochs=3, warm_start=True).fit(ds)
    first = model.user_factors_.copy()
    model.set_params(epochs=1, learning_rate=1e-9).fit(ds)
    np.testing.assert_allclose(model.user_factors_, first, atol=1e-6)


def test_unknown_user_gets_popularity():
    ds = counts_log({"A": 3, "B": 1})
    model = ItemKNN().fit(ds)
    assert model.recommend("stranger", 2) == ["A", "B"]


def test_embedding_csv_round_trip(tmp_path):
    m = EmbeddingMatrix(("a", "b"), np.array([[0.1, -2.5e-17], [3.0, 1 / 3]]))
    write_embeddings(m, tmp_path / "e.csv")
    assert read_embeddings(tmp_path / "e.csv") == m


def test_config_and_factory():
    with pytest.raises(ConfigError, match="kind"):
        RecommenderConfig(kind="bpr")
    with pytest.raises(ConfigError, match="embedding_dim"):
        RecommenderConfig(embedding_dim=0)
    cfg = RecommenderConfig(kind="matrix_factorization", embedding_dim=4, epochs=2)
    assert make_recommender(cfg, seed=9).get_params()["seed"] == 9
    assert isinstance(train(RecommenderConfig(kind="item_knn"), two_blocks()), ItemKNN)
