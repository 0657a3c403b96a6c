"""The closed Recommend -> Inject -> Train loop and its on-disk trace."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ._seeding import derive_seed
from .errors import ConfigError, GenerationError, LoopError, TemporalOrderError, TraceError, ValidationError
from .ingest import Dataset, Interaction, canonical_key, parse_interaction_log, write_interactions
from .recommenders import RecommenderConfig, make_recommender, read_embeddings, write_embeddings
from .riskgen import (
    GeneratorConfig,
    augment_interactions,
    infer_profile,
    repeat_invocation,
    rerank_or_generate,
)
from .timeline import PeriodSchedule, SplitConfig, build_period_schedule, common_users, temporal_split

logger = logging.getLogger(__name__)

DECISION_MODES = ("backbone_only", "rerank", "open_generation")


@dataclass(frozen=True)
class PipelineConfig:
    """How the simulated system is composed.

    ``decision_mode`` picks who produces the final lists: the backbone
    alone, a decision generator re-ranking the backbone's top
    ``candidate_pool_size`` items, or a decision generator sampling the
    catalog directly.
    """

    recommender: RecommenderConfig = field(default_factory=RecommenderConfig)
    augmenter: GeneratorConfig | None = None
    representer: GeneratorConfig | None = None
    decision: GeneratorConfig | None = None
    decision_mode: str = "backbone_only"
    augment_each_period: bool = True
    exclude_seen: bool = True
    candidate_pool_size: int = 20
    pairs_per_user: int = 1
    profile_attributes: tuple | None = None
    warm_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.decision_mode not in DECISION_MODES:
            raise ConfigError(f"decision_mode must be one of {DECISION_MODES}, got {self.decision_mode!r}")
        if self.decision_mode != "backbone_only" and self.decision is None:
            raise ConfigError(f"decision_mode={self.decision_mode!r} requires a decision generator config")
        if self.candidate_pool_size < 1 or self.pairs_per_user < 1:
            raise ConfigError("candidate_pool_size and pairs_per_user must be >= 1")

    def to_dict(self):
        return {
            "recommender": self.recommender.to_dict(),
            "augmenter": self.augmenter.to_dict() if self.augmenter else None,
            "representer": self.representer.to_dict() if self.representer else None,
            "decision": self.decision.to_dict() if self.decision else None,
            "decision_mode": self.decision_mode,
            "augment_each_period": self.augment_each_period,
            "exclude_seen": self.exclude_seen,
            "candidate_pool_size": self.candidate_pool_size,
            "pairs_per_user": self.pairs_per_user,
            "profile_attributes": list(self.profile_attributes) if self.profile_attributes else None,
            "warm_start": self.warm_start,
            "seed": self.seed,
        }


@dataclass
class PeriodTrace:
    index: int
    tau: int
    dataset_size: int
    train_size: int = 0
    injected: list = field(default_factory=list)
    ranked_lists: dict = field(default_factory=dict)
    generated: list = field(default_factory=list)
    user_embeddings: object = None
    item_embeddings: object = None
    warnings: list = field(default_factory=list)

    @property
    def has_embeddings(self):
        return self.user_embeddings is not None and self.item_embeddings is not None


@dataclass
class LoopTrace:
    initial_size: int
    cutoff_time: int
    num_common_users: int
    schedule: PeriodSchedule
    catalog: tuple
    periods: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def dataset_sizes(self):
        return [self.initial_size] + [p.dataset_size for p in self.periods]

    def injected_through(self, n):
        """Injected interactions of periods ``1..n``."""
        out = []
        for p in self.periods[:n]:
            out.extend(p.injected)
        return out


def inject(d_prev: Dataset, ranked_lists, tau_n: int, after: int | None = None) -> Dataset:
    """Append one interaction per recommended item at the canonical timestamp.

    ``after`` is the canonical timestamp of the previous injection, if any;
    ``tau_n`` must come strictly later.
    """
    if after is not None and tau_n <= after:
        raise TemporalOrderError(f"tau {tau_n} does not follow the previous injection at {after}")
    new = []
    for user in sorted(ranked_lists):
        for item in ranked_lists[user]:
            if item not in d_prev.items:
                raise ValidationError(f"cannot inject out-of-catalog item {item!r}")
            new.append(Interaction(user, item, tau_n))
    if not new:
        return d_prev
    new.sort(key=canonical_key)
    rows = d_prev.interactions
    if rows and canonical_key(rows[-1]) > canonical_key(new[0]):
        return d_prev.with_interactions(rows + tuple(new))
    return d_prev.with_interactions(rows + tuple(new), presorted=True)


def _profile_schema(dataset, names):
    vocab = dataset.user_attributes.vocab
    names = names or sorted(vocab)
    missing = [a for a in names if a not in vocab]
    if missing:
        raise ConfigError(f"profile attributes {missing} are absent from the user attribute table")
    return {a: sorted(vocab[a]) for a in names}


def _record(period, role, subject, output, fabricated, trial):
    return {
        "period": period,
        "role": role,
        "subject": subject,
        "output": output,
        "fabricated": fabricated,
        "trial": trial,
    }


def run_feedback_loop(dataset: Dataset, split_config: SplitConfig, pipeline_config: PipelineConfig) -> LoopTrace:
    """Simulate ``split_config.num_periods`` recommendation cycles.

    At the head of each period the backbone is trained on everything
    accumulated so far (plus any synthetic augmentation), each active user
    receives as many recommendations as they really consumed in that
    period, and the in-catalog recommendations are appended at the period's
    canonical timestamp. Ground-truth interactions never enter training.
    """
    cfg = pipeline_config
    split = temporal_split(dataset, split_config.cutoff_fraction, split_config.mode)
    schedule = build_period_schedule(split, split_config.num_periods)
    common = common_users(split)
    if not common:
        raise LoopError("no common users: nobody is active both before and after the cutoff")
    if not any(p.quotas for p in schedule.periods):
        raise LoopError("no period has active users")

    catalog = tuple(dataset.sorted_items)
    item_attrs = dataset.item_attributes.records
    schema = _profile_schema(dataset, cfg.profile_attributes) if cfg.representer else None
    trace = LoopTrace(
        initial_size=len(split.d0),
        cutoff_time=split.cutoff_time,
        num_common_users=len(common),
        schedule=schedule,
        catalog=catalog,
        config={"split": asdict(split_config), "pipeline": cfg.to_dict()},
    )

    current = split.d0
    previous_tau = None
    reused_augmentation = None
    model = None
    for period in schedule.periods:
        n = period.index
        record = PeriodTrace(n, period.tau, 0)
        histories = current.user_histories()
        active = sorted(period.quotas)

        # (a) synthetic content derived from D^(n-1)
        synthetic = []
        if cfg.augmenter is not None:
            if reused_augmentation is not None and not cfg.augment_each_period:
                synthetic = reused_augmentation
            else:
                counts = {x.item_id for x in current.interactions}
                cold = [i for i in catalog if i not in counts]
                inputs = {
                    "config": cfg.augmenter,
                    "dataset_snapshot": current,
                    "cold_items": cold,
                    "pairs_per_user": cfg.pairs_per_user,
                    "users": active,
                    "invocation_index": n,
                }
                try:
                    synthetic = repeat_invocation(augment_interactions, inputs, 0)
                    retry = repeat_invocation(augment_interactions, inputs, 1)
                except GenerationError as exc:
                    record.warnings.append(f"augmentation skipped: {exc}")
                    synthetic, retry = [], []
                for trial, rows in ((0, synthetic), (1, retry)):
                    chosen = {}
                    for x in rows:
                        chosen.setdefault(x.user_id, []).append(x.item_id)
                    for user in sorted(chosen):
                        record.generated.append(_record(n, "augmenter", user, chosen[user], False, trial))
                reused_augmentation = synthetic
        if cfg.representer is not None:
            for user in active:
                history = [item_attrs.get(i, {}) for i in histories.get(user, ())]
                inputs = {
                    "config": cfg.representer,
                    "user_id": user,
                    "history": history,
                    "attribute_schema": schema,
                    "invocation_index": n,
                }
                for trial in (0, 1):
                    profile = repeat_invocation(infer_profile, inputs, trial)
                    record.generated.append(
                        _record(n, "representer", user, profile.attributes, profile.fabricated_flags, trial)
                    )

        # (b) train
        snapshot = current.with_interactions(current.interactions + tuple(synthetic)) if synthetic else current
        record.train_size = len(snapshot)
        seed_n = derive_seed(cfg.recommender.seed, "period", n)
        if cfg.warm_start and model is not None:
            model.set_params(seed=seed_n).fit(snapshot)
        else:
            model = make_recommender(cfg.recommender, seed=seed_n)
            if cfg.warm_start:
                model.set_params(warm_start=True)
            model.fit(snapshot)
        popularity = {}
        for x in snapshot.interactions:
            popularity[x.item_id] = popularity.get(x.item_id, 0) + 1

        # (c) recommend
        to_inject = {}
        for user in active:
            seen = set(histories.get(user, ())) if cfg.exclude_seen else set()
            k = period.quotas[user]
            eligible = len(catalog) - len(seen)
            if k > eligible:
                record.warnings.append(f"quota of {user} clamped from {k} to {eligible}")
                k = eligible
            if k == 0:
                continue
            lists = _decide(cfg, model, user, k, seen, catalog, popularity, n)
            record.ranked_lists[user] = lists[0]
            fabricated = [i not in dataset.items for i in lists[0]]
            if len(lists) > 1:
                for trial, ranked in enumerate(lists):
                    record.generated.append(
                        _record(n, "recommender", user, ranked, [i not in dataset.items for i in ranked], trial)
                    )
            to_inject[user] = [i for i, fab in zip(lists[0], fabricated) if not fab]

        # (d) inject
        current = inject(current, to_inject, period.tau, after=previous_tau)
        previous_tau = period.tau
        record.injected = sorted(
            (Interaction(u, i, period.tau) for u, items in to_inject.items() for i in items), key=canonical_key
        )
        record.dataset_size = len(current)
        emb = model.embeddings()
        if emb is not None:
            # only subjects the model actually saw; the rest keep their random init
            trained_users = sorted({x.user_id for x in snapshot.interactions})
            trained_items = sorted({x.item_id for x in snapshot.interactions})
            record.user_embeddings = emb[0].reindex(trained_users)
            record.item_embeddings = emb[1].reindex(trained_items)
        for w in record.warnings:
            logger.warning("period %d: %s", n, w)
        trace.periods.append(record)
    return trace


def _decide(cfg, model, user, k, seen, catalog, popularity, n):
    """Trial-0 list, plus a trial-1 list when a decision generator is involved."""
    if cfg.decision_mode == "backbone_only":
        return [model.recommend(user, k, seen)]
    if cfg.decision_mode == "rerank":
        pool = model.recommend(user, max(k, cfg.candidate_pool_size), seen)
        inputs = {"config": cfg.decision, "user_id": user, "candidates": pool, "k": k,
                  "catalog": catalog, "popularity": popularity, "invocation_index": n}
    else:
        eligible = [i for i in catalog if i not in seen]
        inputs = {"config": cfg.decision, "user_id": user, "candidates": None, "k": k,
                  "catalog": eligible, "popularity": popularity, "invocation_index": n}
    return [repeat_invocation(rerank_or_generate, inputs, trial) for trial in (0, 1)]


# -- serialization -----------------------------------------------------------


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def save_trace(trace: LoopTrace, directory, metadata=None):
    """Write the trace tree: ``trace.json``, ``schedule.json`` and ``period_{n}/``."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    summary = {
        "initial_size": trace.initial_size,
        "cutoff_time": trace.cutoff_time,
        "num_common_users": trace.num_common_users,
        "num_periods": len(trace.periods),
        "dataset_sizes": trace.dataset_sizes,
        "injected_counts": [len(p.injected) for p in trace.periods],
        "train_sizes": [p.train_size for p in trace.periods],
        "embeddings": [p.has_embeddings for p in trace.periods],
        "warnings": trace.warnings + [f"period {p.index}: {w}" for p in trace.periods for w in p.warnings],
        "config": trace.config,
        "metadata": metadata or {},
    }
    _dump_json(summary, root / "trace.json")
    _dump_json(trace.schedule.to_dict(), root / "schedule.json")
    (root / "catalog.txt").write_text("".join(f"{i}\n" for i in trace.catalog), encoding="utf-8")
    for p in trace.periods:
        pdir = root / f"period_{p.index}"
        pdir.mkdir(exist_ok=True)
        with open(pdir / "recs.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["user_id", "rank", "item_id", "fabricated"])
            catalog = set(trace.catalog)
            for user in sorted(p.ranked_lists):
                for rank, item in enumerate(p.ranked_lists[user], 1):
                    writer.writerow([user, rank, item, int(item not in catalog)])
        with open(pdir / "injected.csv", "w", newline="", encoding="utf-8") as fh:
            write_interactions(p.injected, fh)
        with open(pdir / "generated.jsonl", "w", encoding="utf-8") as fh:
            for rec in p.generated:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        if p.has_embeddings:
            write_embeddings(p.user_embeddings, pdir / "embeddings_user.csv")
            write_embeddings(p.item_embeddings, pdir / "embeddings_item.csv")


def _require(path):
    if not path.is_file():
        raise TraceError(f"missing trace file {path}")
    return path


def load_trace(directory):
    """Read a trace tree back; returns ``(trace, metadata)``."""
    root = Path(directory)
    try:
        summary = json.loads(_require(root / "trace.json").read_text(encoding="utf-8"))
        schedule = PeriodSchedule.from_dict(json.loads(_require(root / "schedule.json").read_text(encoding="utf-8")))
        catalog = tuple(_require(root / "catalog.txt").read_text(encoding="utf-8").split())
        trace = LoopTrace(
            summary["initial_size"], summary["cutoff_time"], summary["num_common_users"],
            schedule, catalog, config=summary["config"],
        )
        for n in range(1, summary["num_periods"] + 1):
            pdir = root / f"period_{n}"
            if not pdir.is_dir():
                raise TraceError(f"missing period directory {pdir}")
            p = PeriodTrace(n, schedule.periods[n - 1].tau, summary["dataset_sizes"][n])
            p.train_size = summary["train_sizes"][n - 1]
            with open(_require(pdir / "recs.csv"), newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                next(reader, None)
                for row in reader:
                    p.ranked_lists.setdefault(row[0], []).append(row[2])
            p.injected = parse_interaction_log(_require(pdir / "injected.csv"))
            with open(_require(pdir / "generated.jsonl"), encoding="utf-8") as fh:
                p.generated = [json.loads(line) for line in fh if line.strip()]
            if summary["embeddings"][n - 1]:
                p.user_embeddings = read_embeddings(_require(pdir / "embeddings_user.csv"))
                p.item_embeddings = read_embeddings(_require(pdir / "embeddings_item.csv"))
            trace.periods.append(p)
        trace.warnings = summary["warnings"]
    except TraceError:
        raise
    except (KeyError, IndexError, ValueError, json.JSONDecodeError) as exc:
        raise TraceError(f"corrupt trace in {root}: {exc}") from None
    return trace, summary.get("metadata", {})
