import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from echoloop.errors import ConfigError, DegenerateTimelineError, ScheduleError
from echoloop.ingest import Interaction, build_dataset
from echoloop.timeline import (
    PeriodSchedule,
    SplitConfig,
    build_period_schedule,
    common_users,
    ground_truth_by_period,
    temporal_split,
)


def one_per_timestamp(n):
    return build_dataset([Interaction(f"u{t % 3}", f"i{t}", t) for t in range(1, n + 1)])


def test_split_on_ten_timestamps():
    split = temporal_split(one_per_timestamp(10), 0.8)
    assert split.cutoff_time == 8
    assert (len(split.d0), len(split.dgt)) == (8, 2)


@pytest.mark.parametrize("n, fraction, d0, dgt", [
    (1_000_209, 0.8, 800_167, 200_042),
    (946_531, 0.5, 473_266, 473_265),
])
def test_count_mode_rounding(n, fraction, d0, dgt):
    # counting rule only: rank of the cutoff interaction
    k = min(max(math.floor(fraction * n + 0.5), 1), n)
    assert (k, n - k) == (d0, dgt)


def test_count_mode_on_small_log():
    split = temporal_split(one_per_timestamp(11), 0.5, mode="count")
    assert (len(split.d0), len(split.dgt)) == (6, 5)


def test_split_config_validation():
    with pytest.raises(ConfigError, match="cutoff_fraction"):
        SplitConfig(1.5, 3)
    with pytest.raises(ConfigError, match="num_periods"):
        SplitConfig(0.5, 0)
    with pytest.raises(ConfigError, match="mode"):
        SplitConfig(0.5, 2, mode="weekly")


def test_single_timestamp_is_degenerate():
    ds = build_dataset([Interaction("u1", "i1", 5), Interaction("u2", "i1", 5)])
    with pytest.raises(DegenerateTimelineError):
        temporal_split(ds, 0.5)


def test_common_users_intersection():
    ds = build_dataset([Interaction("u1", "i1", 1), Interaction("u2", "i1", 2), Interaction("u2", "i2", 9)])
    assert common_users(temporal_split(ds, 0.5)) == {"u2"}


def test_hand_enumerated_schedule():
    ds = build_dataset([
        Interaction("u1", "i1", 1), Interaction("u2", "i2", 8),
        Interaction("u1", "i3", 9), Interaction("u1", "i4", 9), Interaction("u2", "i3", 10),
    ])
    split = temporal_split(ds, 0.78)
    assert split.cutoff_time == 8
    schedule = build_period_schedule(split, 2)
    first, second = schedule.periods
    assert first.quotas == {"u1": 2} and second.quotas == {"u2": 1}
    assert (first.start, first.end, second.end) == (8, 9, 10)
    assert first.contains(9) and not first.contains(8)


def test_schedule_errors():
    split = temporal_split(one_per_timestamp(10), 0.8)
    with pytest.raises(ScheduleError, match="distinct"):
        build_period_schedule(split, 3)


def test_schedule_json_round_trip():
    split = temporal_split(one_per_timestamp(30), 0.5)
    schedule = build_period_schedule(split, 4)
    assert PeriodSchedule.from_dict(schedule.to_dict()) == schedule


logs = st.lists(
    st.tuples(st.sampled_from(["a", "b", "c", "d", "e"]), st.sampled_from(["x", "y", "z"]), st.integers(0, 60)),
    min_size=2, max_size=60, unique=True,
)


@settings(max_examples=200)
@given(logs, st.floats(0.05, 0.95), st.sampled_from(["timeline", "count"]))
def test_split_partitions_log(raw, fraction, mode):
    ds = build_dataset(raw)
    assume(len(set(ds.timestamps.tolist())) > 1)
    split = temporal_split(ds, fraction, mode)
    assert len(split.d0) + len(split.dgt) == len(ds)
    assert all(x.timestamp <= split.cutoff_time for x in split.d0.interactions)
    assert all(x.timestamp > split.cutoff_time for x in split.dgt.interactions)
    assert split.d0.items == ds.items


@settings(max_examples=200)
@given(logs, st.floats(0.05, 0.9), st.integers(1, 6))
def test_schedule_matches_interval_scan(raw, fraction, n_periods):
    ds = build_dataset(raw)
    assume(len(set(ds.timestamps.tolist())) > 1)
    split = temporal_split(ds, fraction)
    assume(len(set(split.dgt.timestamps.tolist())) >= n_periods)
    schedule = build_period_schedule(split, n_periods)
    b = schedule.boundaries
    common = {x.user_id for x in split.d0.interactions} & {x.user_id for x in split.dgt.interactions}
    expected = [dict() for _ in range(n_periods)]
    truth = [dict() for _ in range(n_periods)]
    for x in split.dgt.interactions:
        hits = [n for n in range(n_periods) if b[n] < x.timestamp <= b[n + 1]]
        assert len(hits) == 1
        if x.user_id in common:
            q = expected[hits[0]]
            q[x.user_id] = q.get(x.user_id, 0) + 1
            truth[hits[0]].setdefault(x.user_id, []).append(x.item_id)
    assert [p.quotas for p in schedule.periods] == expected
    assert schedule.total_quota() == sum(1 for x in split.dgt.interactions if x.user_id in common)
    assert ground_truth_by_period(split, schedule) == truth
    for p in schedule.periods:
        assert p.start < p.tau <= p.end
