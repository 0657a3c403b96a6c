"""Temporal split, common users, and the post-cutoff period schedule."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateTimelineError, ScheduleError, ValidationError
from .ingest import Dataset

SPLIT_MODES = ("timeline", "count")


@dataclass(frozen=True)
class SplitConfig:
    """Cutoff as a fraction in (0, 1) plus the number of post-cutoff periods.

    ``mode="timeline"`` places the cutoff at that fraction of the time span;
    ``mode="count"`` places it after that fraction of the interactions.
    """

    cutoff_fraction: float
    num_periods: int
    mode: str = "timeline"

    def __post_init__(self):
        f = self.cutoff_fraction
        if isinstance(f, bool) or not isinstance(f, (int, float)) or not 0 < f < 1:
            raise ConfigError(f"cutoff_fraction must lie in (0, 1), got {f!r}")
        if isinstance(self.num_periods, bool) or not isinstance(self.num_periods, int) or self.num_periods < 1:
            raise ConfigError(f"num_periods must be a positive integer, got {self.num_periods!r}")
        if self.mode not in SPLIT_MODES:
            raise ConfigError(f"split mode must be one of {SPLIT_MODES}, got {self.mode!r}")


@dataclass(frozen=True, eq=False)
class TemporalSplit:
    cutoff_time: int
    d0: Dataset
    dgt: Dataset


def temporal_split(dataset: Dataset, cutoff_fraction: float, mode: str = "timeline") -> TemporalSplit:
    """Partition the log into the initial training set and the ground-truth set.

    Interactions at or before the cutoff go to ``d0``; the rest to ``dgt``.
    """
    if len(dataset) == 0:
        raise ValidationError("cannot split an empty dataset")
    SplitConfig(cutoff_fraction, 1, mode)
    ts = dataset.timestamps
    lo, hi = int(ts[0]), int(ts[-1])
    if lo == hi:
        raise DegenerateTimelineError(f"all {len(ts)} interactions share timestamp {lo}")
    if mode == "timeline":
        cutoff = lo + math.floor(cutoff_fraction * (hi - lo))
    else:
        # round half up, clamped so d0 is never empty
        k = min(max(math.floor(cutoff_fraction * len(ts) + 0.5), 1), len(ts))
        cutoff = int(ts[k - 1])
    idx = int(np.searchsorted(ts, cutoff, side="right"))
    rows = dataset.interactions
    return TemporalSplit(
        cutoff,
        dataset.with_interactions(rows[:idx], presorted=True),
        dataset.with_interactions(rows[idx:], presorted=True),
    )


def common_users(split: TemporalSplit) -> frozenset:
    before = {x.user_id for x in split.d0.interactions}
    after = {x.user_id for x in split.dgt.interactions}
    return frozenset(before & after)


@dataclass(frozen=True)
class Period:
    """One post-cutoff period ``(start, end]`` with its per-user quotas."""

    index: int
    start: int
    end: int
    tau: int
    quotas: dict = field(default_factory=dict)

    @property
    def active_users(self):
        return frozenset(self.quotas)

    def contains(self, timestamp):
        return self.start < timestamp <= self.end


@dataclass(frozen=True)
class PeriodSchedule:
    cutoff_time: int
    boundaries: tuple
    periods: tuple

    @property
    def num_periods(self):
        return len(self.periods)

    def total_quota(self):
        return sum(sum(p.quotas.values()) for p in self.periods)

    def to_dict(self):
        return {
            "cutoff_time": self.cutoff_time,
            "boundaries": list(self.boundaries),
            "periods": [
                {
                    "index": p.index,
                    "tau": p.tau,
                    "active": [{"user": u, "quota": k} for u, k in p.quotas.items()],
                }
                for p in self.periods
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data):
        b = data["boundaries"]
        periods = tuple(
            Period(
                p["index"], b[p["index"] - 1], b[p["index"]], p["tau"],
                {a["user"]: a["quota"] for a in p["active"]},
            )
            for p in data["periods"]
        )
        return cls(data["cutoff_time"], tuple(b), periods)


def _period_of(timestamp, cutoff, width, num_periods):
    return min(num_periods, -(-(timestamp - cutoff) // width))


def build_period_schedule(split: TemporalSplit, num_periods: int) -> PeriodSchedule:
    """Split ``(cutoff, max timestamp]`` into equal periods and derive quotas.

    Intervals are half-open on the left; the last period absorbs the integer
    remainder. A user's quota in a period is the number of their ground-truth
    interactions inside it, and only common users are scheduled.
    """
    if len(split.dgt) == 0:
        raise ScheduleError("ground-truth set is empty; nothing to schedule")
    if num_periods < 1:
        raise ScheduleError(f"num_periods must be >= 1, got {num_periods}")
    ts = split.dgt.timestamps
    distinct = len(np.unique(ts))
    if num_periods > distinct:
        raise ScheduleError(
            f"{num_periods} periods requested but only {distinct} distinct post-cutoff timestamps"
        )
    cutoff, last = split.cutoff_time, int(ts[-1])
    width = (last - cutoff) // num_periods
    boundaries = [cutoff + n * width for n in range(num_periods)] + [last]

    common = common_users(split)
    quotas = [dict() for _ in range(num_periods)]
    for x in split.dgt.interactions:
        if x.user_id in common:
            q = quotas[_period_of(x.timestamp, cutoff, width, num_periods) - 1]
            q[x.user_id] = q.get(x.user_id, 0) + 1

    periods = []
    for n in range(1, num_periods + 1):
        start, end = boundaries[n - 1], boundaries[n]
        tau = (start + end) // 2
        if tau == start:
            tau = end
        periods.append(Period(n, start, end, tau, dict(sorted(quotas[n - 1].items()))))
    return PeriodSchedule(cutoff, tuple(boundaries), tuple(periods))


def ground_truth_by_period(split: TemporalSplit, schedule: PeriodSchedule):
    """Per period, map each active user to the items they actually consumed."""
    out = [dict() for _ in schedule.periods]
    cutoff, n_periods = schedule.cutoff_time, schedule.num_periods
    width = schedule.boundaries[1] - schedule.boundaries[0]
    for x in split.dgt.interactions:
        n = _period_of(x.timestamp, cutoff, width, n_periods)
        period = schedule.periods[n - 1]
        if x.user_id in period.quotas:
            out[n - 1].setdefault(x.user_id, []).append(x.item_id)
    return out
