import numpy as np
import pytest

from echoloop.diagnostics.metrics import (
    Histogram,
    ObservationSet,
    PopularityIndex,
    attribute_distribution,
    catalog_fef_rate,
    distribution_divergence,
    fef_rate,
    lc_rate,
    popularity_gap,
)
from echoloop.errors import MetricError, UsageError
from echoloop.ingest import AttributeTable, Interaction
from echoloop.riskgen import Profile

from .oracles import sweep_catalog_fef, sweep_fef, sweep_lc_lists, sweep_lc_sets, sweep_popularity_gap


def test_hand_examples():
    assert fef_rate([({"a", "b", "c"}, {"a", "d"})]) == 0.5
    assert fef_rate([({"a"}, {"a"}), ({"b", "c"}, {"c", "b"})]) == 0.0
    assert fef_rate([({"a"}, {"b"}), (set(), {"c"})]) == 1.0
    assert catalog_fef_rate([["x"] * 9 + ["FAB::1"]], {"x"}) == 0.1
    assert catalog_fef_rate({"u": ["x"]}, {"x"}) == 0.0
    assert lc_rate([({"a"}, {"a"})] * 3 + [({"a"}, {"b"})]) == 0.25
    assert lc_rate([(["a", "b"], ["b", "a"])]) == 1.0
    assert lc_rate([({"a", "b"}, {"b", "a"})]) == 0.0
    gaps = popularity_gap({"u": ["i1"]}, {"u": ["i2"]}, PopularityIndex({"i1": 10, "i2": 2}, frozenset({"i1", "i2"})))
    assert gaps.gaps == {"u": 8.0}


def test_metric_errors():
    with pytest.raises(MetricError):
        fef_rate([({"a"}, set())])
    with pytest.raises(UsageError):
        fef_rate([])
    with pytest.raises(UsageError):
        lc_rate([({"a"}, ["a"])])
    with pytest.raises(UsageError):
        catalog_fef_rate([[]], {"a"})
    index = PopularityIndex({}, frozenset({"a"}))
    with pytest.raises(MetricError):
        popularity_gap({"u": ["FAB::x"]}, {"u": ["a"]}, index)


def test_fef_exhaustive_up_to_two_subjects():
    assert sweep_fef(fef_rate, 2)[0] == 0


def test_fef_accepts_observation_sets():
    pairs = [(ObservationSet("u", frozenset("ab")), ObservationSet("u", frozenset("bc")))]
    assert fef_rate(pairs) == 0.5


def test_catalog_fef_exhaustive_up_to_two_subjects():
    assert sweep_catalog_fef(catalog_fef_rate, 2)[0] == 0


def test_lc_sets_exhaustive_up_to_two_subjects():
    assert sweep_lc_sets(lc_rate, 2)[0] == 0


def test_lc_lists_sampled():
    assert sweep_lc_lists(lc_rate, sampled=2000, seed=5)[0] == 0


def test_popularity_gap_sampled():
    assert sweep_popularity_gap(popularity_gap, PopularityIndex, sampled=2000, seed=5)[0] == 0


def test_identical_lists_have_zero_gap():
    index = PopularityIndex({"a": 5, "b": 1}, frozenset("ab"))
    stats = popularity_gap({"u": ["a", "b"], "v": ["b"]}, {"u": ["a", "b"], "v": ["b"]}, index)
    assert set(stats.gaps.values()) == {0.0}
    assert stats.summary()["std_error"] == 0.0


def test_popularity_index_from_interactions():
    index = PopularityIndex.from_interactions([Interaction("u", "a", 1), Interaction("v", "a", 2)], {"a", "b"})
    assert (index["a"], index["b"], "b" in index, "z" in index) == (2, 0, True, False)
    assert index.translated(3)["b"] == 3


def test_distributions_and_divergence():
    profiles = [Profile(f"u{j}", {"gender": [g]}) for j, g in enumerate(["Male"] * 3 + ["Female"])]
    hist = attribute_distribution(profiles, "gender")
    assert hist.counts == {"Female": 1, "Male": 3} and hist.total == 4
    table = AttributeTable("user")
    table.add("u1", "gender", "Male")
    assert attribute_distribution(table, "gender").counts == {"Male": 1}
    with pytest.raises(UsageError):
        attribute_distribution(table, "age")
    a = Histogram.from_counts("x", {"A": 3, "B": 1})
    b = Histogram.from_counts("x", {"A": 1, "B": 3})
    assert distribution_divergence(a, a).tv_distance == 0.0
    assert distribution_divergence(a, b).tv_distance == 0.5
    assert distribution_divergence(a, b).top1_share_delta == 0.5
    assert distribution_divergence(a, Histogram.from_counts("x", {"C": 2})).tv_distance == 1.0


def test_gap_summary_quartiles():
    index = PopularityIndex({f"i{j}": j for j in range(10)}, frozenset(f"i{j}" for j in range(10)))
    ranked = {f"u{j}": [f"i{j}"] for j in range(10)}
    stats = popularity_gap(ranked, {u: ["i0"] for u in ranked}, index)
    s = stats.summary()
    assert (s["min"], s["median"], s["max"], s["mean"]) == (0.0, 4.5, 9.0, 4.5)
    assert s["std_error"] == pytest.approx(np.std(np.arange(10), ddof=1) / np.sqrt(10))
