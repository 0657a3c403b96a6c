import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echoloop.errors import ConfigError, LoopError, TemporalOrderError, TraceError, ValidationError
from echoloop.ingest import Interaction, build_dataset
from echoloop.loop import PipelineConfig, inject, load_trace, run_feedback_loop, save_trace
from echoloop.recommenders import RecommenderConfig
from echoloop.riskgen import GeneratorConfig
from echoloop.synthetic import planted_partition
from echoloop.timeline import SplitConfig, build_period_schedule, temporal_split


def hundred_rows():
    return build_dataset(
        [Interaction(f"u{j % 10}", f"i{j % 20}", j) for j in range(100)] + [Interaction("u0", "i99", 500)]
    ).with_interactions([Interaction(f"u{j % 10}", f"i{j % 20}", j) for j in range(100)])


def test_inject_appends_one_row_per_item():
    d = hundred_rows()
    out = inject(d, {"u1": ["i1", "i2", "i99"], "u2": ["i3", "i4"]}, 200)
    assert len(out) == 105
    assert all(x.timestamp == 200 for x in out.interactions[100:])
    assert inject(d, {}, 200) == d


def test_inject_accepts_already_seen_items():
    d = hundred_rows()
    before = sum(x.user_id == "u1" and x.item_id == "i1" for x in d.interactions)
    out = inject(d, {"u1": ["i1"]}, 200)
    assert sum(x.user_id == "u1" and x.item_id == "i1" for x in out.interactions) == before + 1


def test_inject_guards():
    d = hundred_rows()
    with pytest.raises(TemporalOrderError):
        inject(d, {"u1": ["i1"]}, 300, after=300)
    with pytest.raises(ValidationError):
        inject(d, {"u1": ["nope"]}, 300)


def test_single_period_counting_contract():
    ds = build_dataset([
        Interaction("u1", "a", 1), Interaction("u2", "a", 2), Interaction("u2", "b", 3), Interaction("u3", "c", 4),
        Interaction("u1", "d", 9), Interaction("u1", "e", 10),
    ])
    trace = run_feedback_loop(ds, SplitConfig(0.5, 1), PipelineConfig())
    (period,) = trace.periods
    assert period.ranked_lists == {"u1": ["b", "c"]}
    assert [tuple(x) for x in period.injected] == [("u1", "b", period.tau), ("u1", "c", period.tau)]
    assert trace.dataset_sizes == [4, 6]


def test_full_fabrication_injects_nothing():
    rows, ua, ia = planted_partition(30, 20, 2, 0.2, seed=1)
    ds = build_dataset(rows, ua, ia)
    cfg = PipelineConfig(decision=GeneratorConfig(fef_probability=1.0), decision_mode="open_generation")
    trace = run_feedback_loop(ds, SplitConfig(0.5, 2), cfg)
    for p, sp in zip(trace.periods, trace.schedule.periods):
        assert p.injected == []
        assert {u: len(r) for u, r in p.ranked_lists.items()} == sp.quotas
    assert trace.dataset_sizes == [trace.initial_size] * 3


def test_pipeline_config_validation():
    with pytest.raises(ConfigError, match="decision_mode"):
        PipelineConfig(decision_mode="vote")
    with pytest.raises(ConfigError, match="requires"):
        PipelineConfig(decision_mode="rerank")


def test_no_common_users_is_a_loop_error():
    ds = build_dataset([Interaction("u1", "a", 1), Interaction("u2", "a", 10)])
    with pytest.raises(LoopError):
        run_feedback_loop(ds, SplitConfig(0.5, 1), PipelineConfig())


def full_config(**kw):
    params = dict(
        recommender=RecommenderConfig(kind="matrix_factorization", embedding_dim=4, epochs=3),
        augmenter=GeneratorConfig(),
        representer=GeneratorConfig(fef_probability=0.1, lc_flip_probability=0.3),
        decision=GeneratorConfig(fef_probability=0.2, lc_flip_probability=0.3),
        decision_mode="open_generation",
        profile_attributes=("gender",),
    )
    return PipelineConfig(**{**params, **kw})


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.sampled_from(["backbone_only", "open_generation"]))
def test_conservation(seed, n_periods, mode):
    rows, ua, ia = planted_partition(40, 30, 2, 0.3, seed=seed, interactions_per_user=6, late_items=4)
    ds = build_dataset(rows, ua, ia)
    split_cfg = SplitConfig(0.6, n_periods)
    schedule = build_period_schedule(temporal_split(ds, 0.6), n_periods)
    cfg = full_config() if mode == "open_generation" else PipelineConfig()
    trace = run_feedback_loop(ds, split_cfg, cfg)
    flagged = 0
    for p, sp in zip(trace.periods, schedule.periods):
        in_catalog = [i for r in p.ranked_lists.values() for i in r if i in ds.items]
        flagged += sum(len(r) for r in p.ranked_lists.values()) - len(in_catalog)
        assert len(p.injected) == len(in_catalog)
        assert all(x.timestamp == sp.tau for x in p.injected)
    sizes = trace.dataset_sizes
    assert all(sizes[n] == sizes[n - 1] + len(trace.periods[n - 1].injected) for n in range(1, len(sizes)))
    total_recommended = sum(len(r) for p in trace.periods for r in p.ranked_lists.values())
    assert total_recommended + sum(_clamped(p) for p in trace.periods) == schedule.total_quota()
    assert sizes[-1] - sizes[0] == total_recommended - flagged


def _clamped(period):
    lost = 0
    for w in period.warnings:
        if "clamped" in w:
            a, b = w.rsplit("from ", 1)[1].split(" to ")
            lost += int(a) - int(b)
    return lost


def test_generated_records_and_determinism():
    rows, ua, ia = planted_partition(40, 30, 2, 0.3, seed=3, interactions_per_user=6, late_items=5)
    ds = build_dataset(rows, ua, ia)
    a = run_feedback_loop(ds, SplitConfig(0.6, 2), full_config())
    b = run_feedback_loop(ds, SplitConfig(0.6, 2), full_config())
    assert [p.generated for p in a.periods] == [p.generated for p in b.periods]
    roles = {r["role"] for r in a.periods[0].generated}
    assert roles == {"augmenter", "representer", "recommender"}
    assert {r["trial"] for r in a.periods[0].generated} == {0, 1}
    assert a.periods[0].user_embeddings == b.periods[0].user_embeddings


def test_trace_round_trip(tmp_path):
    rows, ua, ia = planted_partition(40, 30, 2, 0.3, seed=3, interactions_per_user=6, late_items=5)
    ds = build_dataset(rows, ua, ia)
    trace = run_feedback_loop(ds, SplitConfig(0.6, 2), full_config())
    save_trace(trace, tmp_path / "t", {"note": 1})
    back, meta = load_trace(tmp_path / "t")
    assert meta == {"note": 1}
    assert back.schedule == trace.schedule and back.dataset_sizes == trace.dataset_sizes
    for p, q in zip(trace.periods, back.periods):
        assert p.ranked_lists == q.ranked_lists
        assert p.injected == q.injected
        assert json.loads(json.dumps(p.generated)) == q.generated
        assert p.user_embeddings.subject_ids == q.user_embeddings.subject_ids
        assert (p.user_embeddings.vectors == q.user_embeddings.vectors).all()


def test_truncated_trace_names_missing_file(tmp_path):
    ds = hundred_rows()
    trace = run_feedback_loop(ds, SplitConfig(0.5, 2), PipelineConfig())
    save_trace(trace, tmp_path / "t")
    (tmp_path / "t" / "period_2" / "injected.csv").unlink()
    with pytest.raises(TraceError, match="injected.csv"):
        load_trace(tmp_path / "t")
