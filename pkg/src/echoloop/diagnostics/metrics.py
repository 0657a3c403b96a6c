"""Bias and hallucination metrics.

Rates are computed as a single integer division wherever the inputs are
counts, so they agree bit-for-bit with exact rational evaluation.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Set
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from ..errors import MetricError, UsageError
from ..ingest import AttributeTable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Histogram:
    attribute: str
    counts: dict
    total: int

    def __post_init__(self):
        if self.total != sum(self.counts.values()):
            raise UsageError("histogram total does not match its counts")

    @classmethod
    def from_counts(cls, attribute, counts):
        counts = dict(sorted(counts.items()))
        return cls(attribute, counts, sum(counts.values()))

    def mode(self):
        """Most frequent value; ties resolve to the smallest value."""
        return min(self.counts, key=lambda v: (-self.counts[v], v))


@dataclass(frozen=True)
class ObservationSet:
    subject_id: str
    values: frozenset = field(default_factory=frozenset)


def attribute_distribution(source, attribute_name) -> Histogram:
    """Count every (possibly multi-valued) occurrence of an attribute.

    ``source`` is an :class:`AttributeTable` or an iterable of profiles.
    """
    counts: dict[str, int] = {}
    if isinstance(source, AttributeTable):
        if attribute_name not in source.vocab:
            raise UsageError(f"unknown attribute {attribute_name!r}")
        records = source.records.values()
    else:
        records = [p.attributes for p in source]
        if not any(attribute_name in r for r in records):
            raise UsageError(f"unknown attribute {attribute_name!r}")
    for attrs in records:
        for v in attrs.get(attribute_name, ()):
            counts[v] = counts.get(v, 0) + 1
    return Histogram.from_counts(attribute_name, counts)


class Divergence(NamedTuple):
    tv_distance: float
    top1_share_delta: float


def distribution_divergence(generated: Histogram, reference: Histogram) -> Divergence:
    if generated.total <= 0 or reference.total <= 0:
        raise UsageError("distribution_divergence needs non-empty histograms")
    values = set(generated.counts) | set(reference.counts)
    gen = {v: Fraction(generated.counts.get(v, 0), generated.total) for v in values}
    ref = {v: Fraction(reference.counts.get(v, 0), reference.total) for v in values}
    tv = sum(abs(gen[v] - ref[v]) for v in values) / 2
    top = generated.mode()
    return Divergence(float(tv), float(gen[top] - ref[top]))


def _as_set(obs):
    if isinstance(obs, ObservationSet):
        return obs.values
    return frozenset(obs)


def fef_rate(pairs) -> float:
    """Pooled ``1 - sum|O_llm & O_gt| / sum|O_gt|`` over ``(O_llm, O_gt)`` pairs."""
    pairs = list(pairs)
    if not pairs:
        raise UsageError("fef_rate needs at least one pair")
    hits = total = 0
    for generated, truth in pairs:
        truth = _as_set(truth)
        if not truth:
            raise MetricError("every ground-truth observation set must be non-empty")
        hits += len(_as_set(generated) & truth)
        total += len(truth)
    return min(max((total - hits) / total, 0.0), 1.0)


def catalog_fef_rate(ranked_lists, catalog) -> float:
    """Share of recommended entries that are not catalog members."""
    if isinstance(ranked_lists, Mapping):
        ranked_lists = ranked_lists.values()
    catalog = catalog if isinstance(catalog, Set) else frozenset(catalog)
    total = missing = 0
    for ranked in ranked_lists:
        for item in ranked:
            total += 1
            missing += item not in catalog
    if total == 0:
        raise UsageError("catalog_fef_rate needs at least one recommended entry")
    return missing / total


def _kind(obs):
    if isinstance(obs, (ObservationSet, Set)):
        return "set"
    if isinstance(obs, (list, tuple)):
        return "list"
    raise UsageError(f"unsupported observation type {type(obs).__name__}")


def lc_rate(trials) -> float:
    """Share of trial pairs whose two outputs differ.

    Sets compare as sets; ranked lists compare position by position.
    """
    trials = list(trials)
    if not trials:
        raise UsageError("lc_rate needs at least one trial pair")
    differing = 0
    for first, second in trials:
        kind = _kind(first)
        if kind != _kind(second):
            raise UsageError("both outputs of a trial pair must be the same kind")
        if kind == "set":
            differing += _as_set(first) != _as_set(second)
        else:
            differing += list(first) != list(second)
    return differing / len(trials)


@dataclass(frozen=True)
class PopularityIndex:
    """Interaction counts per item over one training snapshot."""

    counts: dict
    catalog: frozenset

    @classmethod
    def from_interactions(cls, interactions, catalog):
        counts: dict[str, int] = {}
        for x in interactions:
            counts[x.item_id] = counts.get(x.item_id, 0) + 1
        return cls(counts, frozenset(catalog))

    def __getitem__(self, item):
        return self.counts.get(item, 0)

    def __contains__(self, item):
        return item in self.catalog

    def translated(self, offset):
        return PopularityIndex({i: self[i] + offset for i in self.catalog}, self.catalog)


@dataclass(frozen=True)
class GapStats:
    """Per-user gaps plus their mean, rounded once from the exact rational value."""

    gaps: dict
    skipped: tuple = ()
    exact_mean: float | None = None

    @property
    def values(self):
        return np.array(list(self.gaps.values()), dtype=np.float64)

    def summary(self):
        v = self.values
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        return {
            "n_users": len(v),
            "skipped": len(self.skipped),
            "min": float(v.min()),
            "q1": float(q1),
            "median": float(med),
            "q3": float(q3),
            "max": float(v.max()),
            "mean": self.exact_mean if self.exact_mean is not None else math.fsum(v) / len(v),
            "std_error": se,
        }

    @property
    def mean(self):
        return self.summary()["mean"]


def popularity_gap(ranked_lists: Mapping, reference_items: Mapping, index: PopularityIndex) -> GapStats:
    """Per-user mean popularity of recommended minus reference items.

    Out-of-catalog recommendations are dropped first; a user left with no
    in-catalog recommendation is skipped.
    """
    gaps, exact, skipped = {}, [], []
    for user in sorted(ranked_lists):
        if user not in reference_items:
            raise UsageError(f"user {user!r} has no reference items")
        ranked = [i for i in ranked_lists[user] if i in index]
        reference = list(reference_items[user])
        if not reference:
            raise UsageError(f"user {user!r} has an empty reference list")
        if not ranked:
            skipped.append(user)
            continue
        sr, nr = sum(index[i] for i in ranked), len(ranked)
        sf, nf = sum(index[i] for i in reference), len(reference)
        gap = Fraction(sr * nf - sf * nr, nr * nf)
        gaps[user] = float(gap)
        exact.append(gap)
    if skipped:
        logger.warning("popularity gap skipped %d users with no in-catalog recommendation", len(skipped))
    if not gaps:
        raise MetricError("every user was skipped; popularity gap is undefined")
    return GapStats(gaps, tuple(skipped), float(sum(exact) / len(exact)))
