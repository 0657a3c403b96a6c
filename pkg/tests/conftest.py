import shutil
from importlib import resources
from pathlib import Path

import pytest

from echoloop.ingest import AttributeTable, Interaction, build_dataset


def rows(*triples):
    return [Interaction(u, i, t) for u, i, t in triples]


@pytest.fixture
def tiny_dataset():
    """Two users before the cutoff, both active after it, one cold item."""
    log = rows(
        ("u1", "i1", 1), ("u1", "i2", 2), ("u2", "i1", 3), ("u2", "i3", 4),
        ("u1", "i3", 9), ("u2", "i2", 10), ("u3", "i4", 10),
    )
    users = AttributeTable("user")
    users.add("u1", "gender", "Male")
    users.add("u2", "gender", "Female")
    items = AttributeTable("item")
    for item, genre in (("i1", "Drama"), ("i2", "Comedy"), ("i3", "Drama"), ("i4", "Comedy")):
        items.add(item, "genre", genre)
    return build_dataset(log, users, items)


@pytest.fixture
def toy_dir(tmp_path) -> Path:
    toy = resources.files("echoloop") / "data" / "toy"
    out = tmp_path / "toy"
    out.mkdir()
    for name in ("config.toml", "interactions.csv", "users.csv", "items.csv"):
        shutil.copyfile(toy / name, out / name)
    return out


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
