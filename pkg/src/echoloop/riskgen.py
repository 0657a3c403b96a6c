"""Seeded stand-ins for the Augmenter, Representer and Recommender roles.

Each generator exposes explicit knobs for popularity bias (``beta``),
fabrication (``fef_probability``) and self-inconsistency across repeated
calls (``lc_flip_probability``), so downstream diagnostics can be checked
against a known ground truth. Every output is a pure function of
``(config.seed, role, subject, invocation_index)``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from ._seeding import derive_seed, make_rng
from .errors import ConfigError, GenerationError, UsageError, ValidationError
from .ingest import Dataset, Interaction

FAB_PREFIX = "FAB::"


def is_fabricated(value) -> bool:
    return str(value).startswith(FAB_PREFIX)


@dataclass(frozen=True)
class GeneratorConfig:
    popularity_temperature: float = 1.0
    fef_probability: float = 0.0
    lc_flip_probability: float = 0.0
    attribute_skew: Mapping = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        beta = self.popularity_temperature
        if not (isinstance(beta, (int, float)) and beta >= 0):
            raise ConfigError(f"popularity_temperature must be >= 0, got {beta!r}")
        for name in ("fef_probability", "lc_flip_probability"):
            p = getattr(self, name)
            if not (isinstance(p, (int, float)) and 0 <= p <= 1):
                raise ConfigError(f"{name} must lie in [0, 1], got {p!r}")
        for attribute, weights in self.attribute_skew.items():
            if any(w < 0 for w in weights.values()) or not any(w > 0 for w in weights.values()):
                raise ConfigError(f"attribute_skew[{attribute!r}] needs non-negative weights, one positive")

    def to_dict(self):
        return {
            "popularity_temperature": self.popularity_temperature,
            "fef_probability": self.fef_probability,
            "lc_flip_probability": self.lc_flip_probability,
            "attribute_skew": {a: dict(w) for a, w in self.attribute_skew.items()},
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Profile:
    subject_id: str
    attributes: dict
    provenance: str = "generated"
    fabricated_flags: dict = field(default_factory=dict)

    def observation(self, attribute):
        return frozenset(self.attributes.get(attribute, ()))


def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _choice_probability(beta, delta):
    """Probability of picking the first of two items whose preference differs by ``delta``."""
    if delta == 0:
        return 0.5
    if math.isinf(beta):
        return 1.0 if delta > 0 else 0.0
    return _sigmoid(beta * delta)


def _tokens(attributes: Mapping) -> set:
    return {f"{a}={v}" for a, values in attributes.items() for v in values}


def preference(history_tokens: set, item_tokens: set, popularity: float) -> float:
    """Jaccard overlap of attribute tokens plus a ``log(1 + popularity)`` prior."""
    union = history_tokens | item_tokens
    overlap = len(history_tokens & item_tokens) / len(union) if union else 0.0
    return overlap + math.log1p(popularity)


def augment_interactions(
    config: GeneratorConfig,
    dataset_snapshot: Dataset,
    cold_items: Sequence[str],
    pairs_per_user: int = 1,
    users: Sequence[str] | None = None,
    timestamp: int | None = None,
    invocation_index: int = 0,
) -> list[Interaction]:
    """Pairwise cold-item selection, one synthetic interaction per sampled pair.

    For every target user and pair ``(a, b)`` drawn from ``cold_items``,
    ``a`` is kept with probability ``sigmoid(beta * (pref(a) - pref(b)))``.
    """
    if pairs_per_user < 1:
        raise UsageError("pairs_per_user must be >= 1")
    cold = sorted(set(cold_items))
    if len(cold) < 2:
        raise GenerationError(f"augmentation needs at least 2 cold items, got {len(cold)}")
    popularity: dict[str, int] = {}
    for x in dataset_snapshot.interactions:
        popularity[x.item_id] = popularity.get(x.item_id, 0) + 1
    for item in cold:
        if item not in dataset_snapshot.items:
            raise ValidationError(f"cold item {item!r} is not in the catalog")
        if popularity.get(item):
            raise ValidationError(f"cold item {item!r} has interactions in the snapshot")

    item_attrs = dataset_snapshot.item_attributes.records
    cold_tokens = [_tokens(item_attrs.get(item, {})) for item in cold]
    histories = dataset_snapshot.user_histories()
    if users is None:
        users = sorted(histories)
    if timestamp is None:
        timestamp = int(dataset_snapshot.timestamps[-1]) if len(dataset_snapshot) else 0

    beta = config.popularity_temperature
    out = []
    for user in users:
        history = set()
        for item in histories.get(user, ()):
            history |= _tokens(item_attrs.get(item, {}))
        rng = make_rng(config.seed, "augmenter", user, invocation_index)
        for _ in range(pairs_per_user):
            a, b = rng.choice(len(cold), size=2, replace=False)
            pa = preference(history, cold_tokens[a], popularity.get(cold[a], 0))
            pb = preference(history, cold_tokens[b], popularity.get(cold[b], 0))
            keep_a = rng.random() < _choice_probability(beta, pa - pb)
            out.append(Interaction(user, cold[a] if keep_a else cold[b], timestamp))
    return out


def _categorical_weights(vocab, skew, history_counts):
    """Skew acts as a prior (uniform when absent); history counts reweight it add-one style."""
    w = np.array(
        [(skew.get(v, 0.0) if skew else 1.0) * (1 + history_counts.get(v, 0)) for v in vocab],
        dtype=np.float64,
    )
    total = w.sum()
    if total <= 0:
        raise ConfigError("attribute_skew puts no weight on the attribute's vocabulary")
    return w / total


def infer_profile(
    config: GeneratorConfig,
    user_id: str,
    history: Sequence[Mapping],
    attribute_schema: Mapping[str, Sequence[str]],
    invocation_index: int = 0,
) -> Profile:
    """Emit one value per schema attribute, occasionally a fabricated one.

    ``history`` holds the attribute mappings of the items the user consumed;
    values observed there for an attribute of the same name raise that
    value's weight.
    """
    if not attribute_schema:
        raise UsageError("attribute_schema is empty")
    rng = make_rng(config.seed, "representer", user_id, invocation_index)
    attributes, flags = {}, {}
    for attribute in sorted(attribute_schema):
        vocab = sorted(set(attribute_schema[attribute]))
        if not vocab:
            raise UsageError(f"attribute {attribute!r} has an empty vocabulary")
        counts: dict[str, int] = {}
        for item in history:
            for v in item.get(attribute, ()):
                counts[v] = counts.get(v, 0) + 1
        weights = _categorical_weights(vocab, config.attribute_skew.get(attribute), counts)
        # draw both variates unconditionally so knobs do not shift other attributes' streams
        u, pick = rng.random(), rng.choice(len(vocab), p=weights)
        token = rng.integers(1 << 30)
        if u < config.fef_probability:
            value = f"{FAB_PREFIX}{attribute}::{token}"
        else:
            value = vocab[pick]
        attributes[attribute] = [value]
        flags[attribute] = value not in vocab
    return Profile(user_id, attributes, "generated", flags)


def _plackett_luce_order(rng, items, popularity, beta):
    """Popularity-tempered sampling without replacement (Gumbel top-k)."""
    pops = np.array([popularity.get(i, 0) for i in items], dtype=np.float64)
    if math.isinf(beta):
        order = sorted(range(len(items)), key=lambda j: (-pops[j], items[j]))
        rng.gumbel(size=len(items))  # keep stream position independent of beta
        return [items[j] for j in order]
    keys = beta * np.log1p(pops) + rng.gumbel(size=len(items))
    order = np.argsort(-keys, kind="stable")
    return [items[j] for j in order]


def rerank_or_generate(
    config: GeneratorConfig,
    user_id: str,
    candidates: Sequence[str] | None,
    k: int,
    catalog: Sequence[str],
    popularity: Mapping[str, int] | None = None,
    invocation_index: int = 0,
) -> list[str]:
    """Re-rank ``candidates`` or, when none are given, generate from ``catalog``.

    Candidate mode orders the pool by popularity-tempered sampling and keeps
    the first ``k``. Open mode samples ``k`` catalog items the same way, then
    swaps each slot for a fabricated identifier with probability
    ``fef_probability``.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    popularity = popularity or {}
    beta = config.popularity_temperature
    rng = make_rng(config.seed, "recommender", user_id, invocation_index)
    if candidates is not None:
        candidates = list(candidates)
        if k > len(candidates):
            raise UsageError(f"k={k} exceeds the {len(candidates)} candidates")
        return _plackett_luce_order(rng, candidates, popularity, beta)[:k]

    pool = sorted(set(catalog))
    if not pool:
        raise GenerationError("open generation needs a non-empty catalog")
    ranked = _plackett_luce_order(rng, pool, popularity, beta)[: min(k, len(pool))]
    swaps = rng.random(len(ranked)) < config.fef_probability
    tag = rng.integers(1 << 62)
    return [
        f"{FAB_PREFIX}item::{tag:x}-{slot}" if swap else item
        for slot, (item, swap) in enumerate(zip(ranked, swaps))
    ]


def repeat_invocation(op: Callable, inputs: Mapping, trial_index: int, cache: "ReplayCache | None" = None):
    """Run ``op`` as the ``trial_index``-th repetition of one request.

    Trial 0 is the reference call. A later trial replays it with probability
    ``1 - lc_flip_probability`` and otherwise re-samples under a fresh
    sub-seed. Augmentation requests are split per user so each subject gets
    its own replay decision.
    """
    inputs = dict(inputs)
    config: GeneratorConfig = inputs["config"]
    base = inputs.pop("invocation_index", 0)
    if op is augment_interactions:
        users = inputs.get("users")
        if users is None:
            users = sorted(inputs["dataset_snapshot"].user_histories())
        if len(users) != 1:
            out = []
            for user in users:
                out.extend(repeat_invocation(op, {**inputs, "users": [user], "invocation_index": base}, trial_index, cache))
            return out
        subject = users[0]
    else:
        subject = inputs["user_id"]
    key = (op.__name__, subject, base)
    if cache is not None and key in cache:
        reference = _restore(op, cache[key])
    else:
        reference = op(**inputs, invocation_index=base)
        if cache is not None:
            cache.put(key, reference)
    if trial_index == 0:
        return reference
    flip = make_rng(config.seed, "lc", subject, base, trial_index).random() < config.lc_flip_probability
    if not flip:
        return reference
    return op(**inputs, invocation_index=derive_seed(base, "trial", trial_index))


def _restore(op, value):
    """Undo the JSON flattening of a cached output read back from disk."""
    if op is infer_profile and isinstance(value, dict):
        return Profile(**value)
    if op is augment_interactions:
        return [x if isinstance(x, Interaction) else Interaction(*x) for x in value]
    return value


def _jsonable(value):
    if dataclasses.is_dataclass(value):
        return dataclasses.asdict(value)
    return str(value)


def request_hash(payload) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ReplayCache:
    """Append-only store keyed by a request; optionally mirrored to a JSON-lines file."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._entries = {}
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        record = json.loads(line)
                        self._entries[record["key"]] = record["value"]

    def __contains__(self, request):
        return request_hash(request) in self._entries

    def __len__(self):
        return len(self._entries)

    def __getitem__(self, request):
        return self._entries[request_hash(request)]

    def put(self, request, value):
        key = request_hash(request)
        if key in self._entries:
            if self._entries[key] != value:
                raise ValidationError("replay cache is append-only; conflicting value for existing key")
            return
        self._entries[key] = value
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "value": value}, sort_keys=True, default=_jsonable) + "\n")


# -- adapter contract for real LLM backends --------------------------------


class LlmBackend(Protocol):
    def complete(self, prompt: str, seed: int) -> str: ...


class BackendParseError(GenerationError):
    """A backend response could not be mapped onto the requested structure."""


class RecordingBackend:
    """Wrap a backend so every completion is recorded and replayed by request hash.

    With ``backend=None`` the wrapper is replay-only and a cache miss raises
    :class:`GenerationError`.
    """

    def __init__(self, backend: LlmBackend | None, cache: ReplayCache):
        self.backend = backend
        self.cache = cache

    def complete(self, prompt: str, seed: int) -> str:
        request = {"prompt": prompt, "seed": seed}
        if request in self.cache:
            return self.cache[request]
        if self.backend is None:
            raise GenerationError("replay-only backend has no recording for this request")
        text = self.backend.complete(prompt, seed)
        self.cache.put(request, text)
        return text


def _load_json_object(text):
    try:
        data = json.loads(text)
    except (TypeError, json.JSONDecodeError) as exc:
        raise BackendParseError(f"response is not JSON: {exc}") from None
    if not isinstance(data, dict):
        raise BackendParseError("response must be a JSON object")
    return data


def profile_prompt(user_id, history, attribute_schema):
    return json.dumps(
        {
            "task": "infer_profile",
            "subject": user_id,
            "history": [dict(h) for h in history],
            "schema": {a: sorted(v) for a, v in sorted(attribute_schema.items())},
        },
        sort_keys=True,
    )


def parse_profile_response(text, user_id, attribute_schema) -> Profile:
    """Read ``{"attributes": {name: value | [values]}}``; unrequested names are dropped."""
    data = _load_json_object(text)
    raw = data.get("attributes")
    if not isinstance(raw, dict):
        raise BackendParseError("missing 'attributes' object")
    attributes, flags = {}, {}
    for attribute in sorted(attribute_schema):
        if attribute not in raw:
            continue
        values = raw[attribute]
        values = [str(v) for v in (values if isinstance(values, list) else [values])]
        vocab = set(attribute_schema[attribute])
        attributes[attribute] = values
        flags[attribute] = any(v not in vocab for v in values)
    return Profile(user_id, attributes, "generated", flags)


def parse_choice_response(text, pair) -> str:
    choice = _load_json_object(text).get("choice")
    if choice not in pair:
        raise BackendParseError(f"choice {choice!r} is not one of {list(pair)}")
    return choice


def parse_ranked_list_response(text, k) -> list[str]:
    items = _load_json_object(text).get("items")
    if not isinstance(items, list):
        raise BackendParseError("missing 'items' list")
    out = []
    for item in items:
        if str(item) not in out:
            out.append(str(item))
    return out[:k]


def infer_profile_with_backend(backend: LlmBackend, user_id, history, attribute_schema, seed=0) -> Profile:
    prompt = profile_prompt(user_id, history, attribute_schema)
    return parse_profile_response(backend.complete(prompt, seed), user_id, attribute_schema)
