"""Parsing and validation of interaction logs and attribute tables."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from functools import cached_property
from operator import itemgetter
from pathlib import Path
from typing import Iterable, NamedTuple, TextIO

import numpy as np

from .errors import ParseError, UsageError, ValidationError

logger = logging.getLogger(__name__)

INTERACTION_HEADER = ("user_id", "item_id", "timestamp")
ATTRIBUTE_HEADER = ("subject_id", "attribute", "value")
SUBJECT_KINDS = ("user", "item")


class Interaction(NamedTuple):
    user_id: str
    item_id: str
    timestamp: int


def canonical_key(interaction: Interaction):
    return (interaction.timestamp, interaction.user_id, interaction.item_id)


_CANONICAL = itemgetter(2, 0, 1)


@dataclass
class AttributeTable:
    """Multi-valued string attributes keyed by subject id."""

    subject_kind: str
    records: dict[str, dict[str, list[str]]] = field(default_factory=dict)
    vocab: dict[str, set[str]] = field(default_factory=dict)

    def __post_init__(self):
        if self.subject_kind not in SUBJECT_KINDS:
            raise UsageError(f"unknown subject_kind {self.subject_kind!r}")

    def add(self, subject_id, attribute, value):
        values = self.records.setdefault(subject_id, {}).setdefault(attribute, [])
        if value in values:
            raise ValidationError(
                f"duplicate {self.subject_kind} attribute row ({subject_id}, {attribute}, {value})"
            )
        values.append(value)
        self.vocab.setdefault(attribute, set()).add(value)

    def get(self, subject_id, attribute, default=()):
        return self.records.get(subject_id, {}).get(attribute, list(default))

    @property
    def attribute_names(self):
        return sorted(self.vocab)

    def restrict(self, subjects):
        """Return ``(table, dropped)`` keeping only records for ``subjects``."""
        kept = AttributeTable(self.subject_kind)
        dropped = 0
        for subject_id, attrs in self.records.items():
            if subject_id not in subjects:
                dropped += 1
                continue
            for attribute, values in attrs.items():
                for value in values:
                    kept.add(subject_id, attribute, value)
        return kept, dropped


@dataclass(frozen=True, eq=False)
class Dataset:
    """Canonically sorted interaction log plus its user and item universe.

    ``users`` and ``items`` are fixed at construction; views built with
    :meth:`with_interactions` keep them, so the catalog survives temporal
    splitting and cold items stay recommendable.
    """

    interactions: tuple
    users: frozenset
    items: frozenset
    user_attributes: AttributeTable
    item_attributes: AttributeTable
    dropped_attribute_records: int = 0

    def __len__(self):
        return len(self.interactions)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.interactions == other.interactions
            and self.users == other.users
            and self.items == other.items
            and self.user_attributes == other.user_attributes
            and self.item_attributes == other.item_attributes
        )

    __hash__ = None

    @cached_property
    def timestamps(self) -> np.ndarray:
        return np.fromiter((x.timestamp for x in self.interactions), dtype=np.int64, count=len(self))

    @cached_property
    def sorted_items(self):
        return sorted(self.items)

    @cached_property
    def sorted_users(self):
        return sorted(self.users)

    def with_interactions(self, interactions: Iterable[Interaction], presorted=False) -> "Dataset":
        """A view over the same users, catalog and attributes."""
        rows = tuple(interactions) if presorted else tuple(sorted(interactions, key=_CANONICAL))
        return Dataset(
            rows, self.users, self.items, self.user_attributes, self.item_attributes,
            self.dropped_attribute_records,
        )

    def user_histories(self):
        histories: dict[str, list[str]] = {}
        for x in self.interactions:
            histories.setdefault(x.user_id, []).append(x.item_id)
        return histories


def _open(source):
    if isinstance(source, Path):
        return source.open(newline="", encoding="utf-8"), True
    if isinstance(source, str):
        return io.StringIO(source), False
    return source, False


def _read_rows(source, header):
    stream, owned = _open(source)
    try:
        reader = csv.reader(stream)
        first = next(reader, None)
        if first is None:
            raise ParseError("missing header", line=1)
        if tuple(h.strip() for h in first) != header:
            raise ParseError(f"expected header {','.join(header)!r}, got {','.join(first)!r}", line=1)
        for row in reader:
            if not row:
                continue
            yield reader.line_num, row
    finally:
        if owned:
            stream.close()


def parse_interaction_log(source: TextIO | str | Path, format: str = "csv") -> list[Interaction]:
    """Parse an interaction CSV (``user_id,item_id,timestamp``) in file order.

    ``source`` is a text stream, a :class:`~pathlib.Path`, or the CSV text. Timestamps
    must be non-negative integers; fractional values are rejected rather
    than truncated.
    """
    if format != "csv":
        raise UsageError(f"unsupported log format {format!r}")
    out = []
    for line, row in _read_rows(source, INTERACTION_HEADER):
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", line=line)
        user_id, item_id, raw_ts = row
        if not user_id or not item_id:
            raise ParseError("empty user_id or item_id", line=line)
        try:
            ts = int(raw_ts)
        except ValueError:
            raise ParseError(f"timestamp {raw_ts!r} is not an integer", line=line) from None
        if ts < 0:
            raise ParseError(f"negative timestamp {ts}", line=line)
        out.append(Interaction(user_id, item_id, ts))
    return out


def parse_attribute_table(source: TextIO | str | Path, subject_kind: str) -> AttributeTable:
    table = AttributeTable(subject_kind)
    for line, row in _read_rows(source, ATTRIBUTE_HEADER):
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", line=line)
        subject_id, attribute, value = row
        if not subject_id or not attribute:
            raise ParseError("empty subject_id or attribute", line=line)
        try:
            table.add(subject_id, attribute, value)
        except ValidationError as exc:
            raise ValidationError(f"line {line}: {exc}") from None
    return table


def build_dataset(
    interactions: Iterable[Interaction],
    user_attrs: AttributeTable | None = None,
    item_attrs: AttributeTable | None = None,
) -> Dataset:
    rows = [x if type(x) is Interaction else Interaction(*x) for x in interactions]
    if len(set(rows)) != len(rows):
        seen = set()
        for x in rows:
            if x in seen:
                raise ValidationError(f"duplicate interaction {tuple(x)}")
            seen.add(x)
    rows.sort(key=_CANONICAL)
    users = frozenset(x.user_id for x in rows)
    items = frozenset(x.item_id for x in rows)

    user_attrs, dropped_u = (user_attrs or AttributeTable("user")).restrict(users)
    item_attrs, dropped_i = (item_attrs or AttributeTable("item")).restrict(items)
    dropped = dropped_u + dropped_i
    if dropped:
        logger.warning("dropped %d attribute records for subjects absent from the log", dropped)
    return Dataset(tuple(rows), users, items, user_attrs, item_attrs, dropped)


def write_interactions(interactions: Iterable[Interaction], stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(INTERACTION_HEADER)
    writer.writerows(interactions)


def write_attribute_table(table: AttributeTable, stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(ATTRIBUTE_HEADER)
    for subject_id, attrs in table.records.items():
        for attribute, values in attrs.items():
            for value in values:
                writer.writerow((subject_id, attribute, value))


def load_dataset(interactions_path, user_attributes_path=None, item_attributes_path=None) -> Dataset:
    """Read and validate the CSV files that make up a dataset."""
    log = parse_interaction_log(Path(interactions_path))
    users = parse_attribute_table(Path(user_attributes_path), "user") if user_attributes_path else None
    items = parse_attribute_table(Path(item_attributes_path), "item") if item_attributes_path else None
    return build_dataset(log, users, items)
