"""Planted-partition interaction logs used as diagnostic ground truth."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import UsageError
from .ingest import AttributeTable, Interaction, write_attribute_table, write_interactions

GENDERS = ("Female", "Male")
AGE_BUCKETS = ("18-24", "25-34", "35-44", "45-49", "50-55", "56+")


def planted_partition(
    n_users,
    n_items,
    n_communities,
    inter_prob,
    seed=0,
    interactions_per_user=10,
    time_span=1_000_000,
    item_skew=0.0,
    late_items=0,
):
    """Users and items split round-robin into communities.

    Each interaction leaves the user's own community with probability
    ``inter_prob``. Within a community items are drawn without replacement,
    uniformly unless ``item_skew`` > 0 (Zipf-like weights ``rank**-skew``).
    The last ``late_items`` items are released late: their interactions all
    fall in the final tenth of the time span, so early cutoffs leave them cold.
    Returns ``(interactions, user_attributes, item_attributes)``.
    """
    if n_communities < 1:
        raise UsageError("need at least one community")
    if n_communities > n_users:
        raise UsageError(f"{n_communities} communities exceed {n_users} users")
    if n_communities > n_items:
        raise UsageError(f"{n_communities} communities exceed {n_items} items")
    if not 0 <= inter_prob <= 1:
        raise UsageError("inter_prob must lie in [0, 1]")
    if interactions_per_user > n_items:
        raise UsageError("interactions_per_user exceeds the catalog size")
    if not 0 <= late_items <= n_items:
        raise UsageError("late_items must lie in [0, n_items]")
    rng = np.random.default_rng(seed)
    release = time_span - max(time_span // 10, 1)
    uw, iw = len(str(n_users - 1)), len(str(n_items - 1))
    users = [f"u{j:0{uw}d}" for j in range(n_users)]
    items = [f"i{j:0{iw}d}" for j in range(n_items)]
    members = [list(range(c, n_items, n_communities)) for c in range(n_communities)]
    weights = []
    for group in members:
        w = np.arange(1, len(group) + 1, dtype=np.float64) ** -item_skew
        weights.append(w / w.sum())

    interactions = []
    for u in range(n_users):
        own = u % n_communities
        taken = set()
        for _ in range(interactions_per_user):
            c = own
            if n_communities > 1 and rng.random() < inter_prob:
                c = (own + 1 + rng.integers(n_communities - 1)) % n_communities
            group, w = members[c], weights[c].copy()
            free = np.array([j not in taken for j in group])
            if not free.any():
                group = [j for j in range(n_items) if j not in taken]
                w, free = np.ones(len(group)) / len(group), np.ones(len(group), dtype=bool)
            w = np.where(free, w, 0.0)
            j = group[rng.choice(len(group), p=w / w.sum())]
            taken.add(j)
            ts = int(rng.integers(time_span))
            if j >= n_items - late_items:
                ts = release + ts % (time_span - release)
            interactions.append(Interaction(users[u], items[j], ts))

    user_attrs = AttributeTable("user")
    for u, name in enumerate(users):
        user_attrs.add(name, "community", f"c{u % n_communities}")
        user_attrs.add(name, "gender", GENDERS[int(rng.random() < 0.72)])
        user_attrs.add(name, "age", AGE_BUCKETS[int(rng.integers(len(AGE_BUCKETS)))])
    item_attrs = AttributeTable("item")
    for j, name in enumerate(items):
        item_attrs.add(name, "genre", f"genre_{j % n_communities}")
        item_attrs.add(name, "title", f"Title {j}")
    return interactions, user_attrs, item_attrs


def write_synthetic(out_dir, **params):
    """Write ``interactions.csv``, ``users.csv`` and ``items.csv`` to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    interactions, user_attrs, item_attrs = planted_partition(**params)
    paths = {
        "interactions": out / "interactions.csv",
        "user_attributes": out / "users.csv",
        "item_attributes": out / "items.csv",
    }
    with open(paths["interactions"], "w", newline="", encoding="utf-8") as fh:
        write_interactions(interactions, fh)
    with open(paths["user_attributes"], "w", newline="", encoding="utf-8") as fh:
        write_attribute_table(user_attrs, fh)
    with open(paths["item_attributes"], "w", newline="", encoding="utf-8") as fh:
        write_attribute_table(item_attrs, fh)
    return paths
