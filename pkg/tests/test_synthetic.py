import pytest

from echoloop.cli import main
from echoloop.errors import UsageError
from echoloop.synthetic import planted_partition


def test_zero_inter_prob_keeps_communities_apart():
    rows, users, items = planted_partition(50, 40, 2, 0.0, seed=4)
    for x in rows:
        assert users.get(x.user_id, "community")[0][1:] == items.get(x.item_id, "genre")[0].split("_")[1]


def test_counts_and_late_items():
    rows, _, _ = planted_partition(1000, 60, 3, 0.2, seed=1, interactions_per_user=10, late_items=5)
    assert len(rows) == 10_000
    late = {f"i{j}" for j in range(55, 60)}
    assert all(x.timestamp >= 900_000 for x in rows if x.item_id in late)
    assert len({(x.user_id, x.item_id) for x in rows}) == 10_000


def test_bad_parameters():
    with pytest.raises(UsageError):
        planted_partition(2, 10, 3, 0.1)
    with pytest.raises(UsageError):
        planted_partition(5, 10, 2, 1.5)


def test_cli_files_are_reproducible(tmp_path):
    args = ["gen-synthetic", "--users", "30", "--items", "12", "--communities", "2", "--inter-prob", "0.1", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("interactions.csv", "items.csv", "users.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_rejects_too_many_communities(tmp_path, capsys):
    code = main(["gen-synthetic", "--users", "2", "--items", "5", "--communities", "3", "--inter-prob", "0",
                 "--out", str(tmp_path)])
    assert code == 2
    assert "communities" in capsys.readouterr().err
