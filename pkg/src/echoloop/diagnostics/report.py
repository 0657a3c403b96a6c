"""Assemble the phase-wise risk report from a loop trace.

The report is recomputed entirely from a stored trace plus the input
dataset, so a run and a later ``diagnose`` produce identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError, TraceError
from ..ingest import Dataset
from ..timeline import ground_truth_by_period, temporal_split
from .clustering import common_subjects, polarization_trace
from .metrics import (
    Histogram,
    PopularityIndex,
    attribute_distribution,
    catalog_fef_rate,
    distribution_divergence,
    fef_rate,
    lc_rate,
    popularity_gap,
)

PHASES = (1, 2, 3)
INDEX_MODES = ("previous", "initial")
UNAVAILABLE = "unavailable"


@dataclass(frozen=True)
class DiagnosticsConfig:
    """Which phases to compute and which snapshot period-n popularity uses.

    ``popularity_index="previous"`` scores period ``n`` against the data
    accumulated through ``n - 1``; ``"initial"`` always uses the initial
    training set. Phase 2 always uses the initial training set.
    """

    phases: tuple = PHASES
    popularity_index: str = "previous"
    polarization_k: int = 2
    seed: int = 0

    def __post_init__(self):
        bad = [p for p in self.phases if p not in PHASES]
        if bad or not self.phases:
            raise ConfigError(f"phases must be a non-empty subset of {PHASES}, got {list(self.phases)}")
        if self.popularity_index not in INDEX_MODES:
            raise ConfigError(f"popularity_index must be one of {INDEX_MODES}, got {self.popularity_index!r}")
        if self.polarization_k < 2:
            raise ConfigError("polarization_k must be >= 2")

    def to_dict(self):
        return {
            "phases": list(self.phases),
            "popularity_index": self.popularity_index,
            "polarization_k": self.polarization_k,
            "seed": self.seed,
        }


def _records(period, role, trial):
    return {r["subject"]: r["output"] for r in period.generated if r["role"] == role and r["trial"] == trial}


def _categorical_item_attributes(dataset):
    """Item attributes that group items (identifier-like attributes are skipped)."""
    table = dataset.item_attributes
    return [a for a in table.attribute_names if len(table.vocab[a]) < max(len(table.records), 2)]


def _profile_block(dataset, period):
    first, second = _records(period, "representer", 0), _records(period, "representer", 1)
    if not first:
        return None
    truth = dataset.user_attributes
    block = {"distributions": {}, "divergences": {}, "fef": {}, "lc": {}, "top1_share": {}}
    attributes = sorted({a for attrs in first.values() for a in attrs})
    for attribute in attributes:
        users = sorted(first)
        gen = attribute_distribution([_Attrs(first[u]) for u in users], attribute)
        ref_counts = {}
        pairs = []
        for u in users:
            gt = truth.get(u, attribute)
            for v in gt:
                ref_counts[v] = ref_counts.get(v, 0) + 1
            if gt:
                pairs.append((set(first[u].get(attribute, ())), set(gt)))
        ref = Histogram.from_counts(attribute, ref_counts)
        block["distributions"][attribute] = {"generated": gen.counts, "reference": ref.counts}
        block["top1_share"][attribute] = gen.counts[gen.mode()] / gen.total if gen.total else None
        if gen.total and ref.total:
            block["divergences"][attribute] = distribution_divergence(gen, ref)._asdict()
        block["fef"][attribute] = fef_rate(pairs) if pairs else None
        trials = [(set(first[u].get(attribute, ())), set(second[u].get(attribute, ()))) for u in users if u in second]
        block["lc"][attribute] = lc_rate(trials) if trials else None
    return block


class _Attrs:
    __slots__ = ("attributes",)

    def __init__(self, attributes):
        self.attributes = attributes


def _augmentation_block(dataset, split, period):
    first, second = _records(period, "augmenter", 0), _records(period, "augmenter", 1)
    if not first:
        return None
    item_attrs = dataset.item_attributes.records
    block = {"distributions": {}, "divergences": {}}
    for attribute in _categorical_item_attributes(dataset):
        gen, ref = {}, {}
        for items in first.values():
            for item in items:
                for v in item_attrs.get(item, {}).get(attribute, ()):
                    gen[v] = gen.get(v, 0) + 1
        for x in split.d0.interactions:
            for v in item_attrs.get(x.item_id, {}).get(attribute, ()):
                ref[v] = ref.get(v, 0) + 1
        g, r = Histogram.from_counts(attribute, gen), Histogram.from_counts(attribute, ref)
        block["distributions"][attribute] = {"generated": g.counts, "reference": r.counts}
        if g.total and r.total:
            block["divergences"][attribute] = distribution_divergence(g, r)._asdict()
    trials = [(list(first[u]), list(second.get(u, []))) for u in sorted(first)]
    block["lc"] = lc_rate(trials)
    return block


def _decision_lc(period):
    first, second = _records(period, "recommender", 0), _records(period, "recommender", 1)
    trials = [(list(first[u]), list(second[u])) for u in sorted(first) if u in second]
    return lc_rate(trials) if trials else None


def _gap(period, references, index, rows, metric):
    if not period.ranked_lists:
        return None
    stats = popularity_gap(period.ranked_lists, references, index)
    for user, gap in stats.gaps.items():
        rows.append((metric, period.index, user, gap))
    return stats.summary()


def build_report(trace, dataset: Dataset, config: DiagnosticsConfig = DiagnosticsConfig()):
    """Return ``(report, tidy_rows)`` where rows are ``(metric, period, subject, value)``."""
    split_cfg = trace.config["split"]
    split = temporal_split(dataset, split_cfg["cutoff_fraction"], split_cfg["mode"])
    if split.cutoff_time != trace.cutoff_time or len(split.d0) != trace.initial_size:
        raise TraceError("dataset does not match the trace (cutoff or initial size differ)")
    references = ground_truth_by_period(split, trace.schedule)
    catalog = frozenset(trace.catalog)
    initial_index = PopularityIndex.from_interactions(split.d0.interactions, catalog)
    rows = []
    report = {
        "summary": {
            "num_common_users": trace.num_common_users,
            "cutoff_time": trace.cutoff_time,
            "dataset_sizes": trace.dataset_sizes,
            "injected_counts": [len(p.injected) for p in trace.periods],
            "total_quota": trace.schedule.total_quota(),
            "recommended_entries": [sum(map(len, p.ranked_lists.values())) for p in trace.periods],
        },
        "diagnostics": config.to_dict(),
    }
    first = trace.periods[0]

    if 1 in config.phases:
        profiles = _profile_block(dataset, first)
        augmentation = _augmentation_block(dataset, split, first)
        report["phase1"] = {
            "period": first.index,
            "distributions": {
                "profile": profiles["distributions"] if profiles else UNAVAILABLE,
                "augmentation": augmentation["distributions"] if augmentation else UNAVAILABLE,
            },
            "divergences": {
                "profile": profiles["divergences"] if profiles else UNAVAILABLE,
                "augmentation": augmentation["divergences"] if augmentation else UNAVAILABLE,
            },
            "fef": {"profile": profiles["fef"] if profiles else UNAVAILABLE},
            "lc": {
                "profile": profiles["lc"] if profiles else UNAVAILABLE,
                "augmentation": augmentation["lc"] if augmentation else UNAVAILABLE,
            },
        }

    if 2 in config.phases:
        report["phase2"] = {
            "period": first.index,
            "gap_stats": _gap(first, references[0], initial_index, rows, "phase2_popularity_gap"),
            "catalog_fef": catalog_fef_rate(first.ranked_lists, catalog) if first.ranked_lists else None,
            "lc": _decision_lc(first),
        }

    if 3 in config.phases:
        per_period = []
        accumulated = list(split.d0.interactions)
        polar = _polarization(trace, config, rows)
        for n, period in enumerate(trace.periods):
            if config.popularity_index == "initial":
                index = initial_index
            else:
                index = PopularityIndex.from_interactions(accumulated, catalog)
            profiles = _profile_block(dataset, period)
            entry = {
                "period": period.index,
                "gap_stats": _gap(period, references[n], index, rows, "popularity_gap"),
                "fef": {
                    "catalog": catalog_fef_rate(period.ranked_lists, catalog) if period.ranked_lists else None,
                    "profile": profiles["fef"] if profiles else UNAVAILABLE,
                },
                "lc": {
                    "recommender": _decision_lc(period),
                    "profile": profiles["lc"] if profiles else UNAVAILABLE,
                },
                "profile_top1_share": profiles["top1_share"] if profiles else UNAVAILABLE,
                "centroid_distance": {
                    kind: (p.distances[n] if p is not None else UNAVAILABLE) for kind, p in polar.items()
                },
            }
            per_period.append(entry)
            if entry["gap_stats"] is not None:
                rows.append(("mean_popularity_gap", period.index, "", entry["gap_stats"]["mean"]))
            if entry["fef"]["catalog"] is not None:
                rows.append(("catalog_fef", period.index, "", entry["fef"]["catalog"]))
            accumulated.extend(period.injected)
        report["phase3"] = {
            "per_period": per_period,
            "projections": {
                kind: (
                    [
                        {"period": trace.periods[n].index, "coords": {s: list(map(float, xy)) for s, xy in zip(p.subject_ids, proj)}}
                        for n, proj in enumerate(p.projections)
                    ]
                    if p is not None
                    else UNAVAILABLE
                )
                for kind, p in polar.items()
            },
        }
    return report, rows


def _polarization(trace, config, rows):
    out = {"user": None, "item": None}
    if not trace.periods or not all(p.has_embeddings for p in trace.periods):
        return out
    for kind in out:
        snaps = [p.user_embeddings if kind == "user" else p.item_embeddings for p in trace.periods]
        subjects = common_subjects(snaps)
        if len(subjects) < config.polarization_k:
            continue
        pt = polarization_trace(snaps, config.polarization_k, config.seed, subjects=subjects)
        out[kind] = pt
        for period, d, proj in zip(trace.periods, pt.distances, pt.projections):
            rows.append((f"centroid_distance_{kind}", period.index, "", d))
            for s, (x, y) in zip(pt.subject_ids, proj):
                rows.append((f"projection_{kind}_x", period.index, s, float(x)))
                rows.append((f"projection_{kind}_y", period.index, s, float(y)))
    return out


def write_report(report, rows, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(out / "plot_data.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "period", "subject", "value"])
        for metric, period, subject, value in rows:
            writer.writerow([metric, period, subject, repr(float(value))])
