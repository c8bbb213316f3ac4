"""Dataset ingestion, synthetic benchmarks, and preprocessing.

The JSONL instance schema is the single interchange format:

    {"id": str, "query": str, "context": str, "gold": str|int,
     "evidence_spans": [[start, end], ...]?,            # byte offsets
     "candidates": [{"id": int, "title": str, ...}]?}

Unknown fields are preserved on round-trip.  Real benchmark corpora are
converted into this schema by scripts outside the engine.

The synthetic generator builds needle-in-a-haystack instances: one evidence
sentence carrying per-instance codeword clusters and a numeric access code,
embedded at a seeded position among templated distractor sentences drawn
from a disjoint vocabulary.  Gold evidence spans delimit exactly the
informative parts of the needle, the gold answer occurs nowhere else in the
context, and the context length lands within +/-2% of the requested token
count (exactly on it, in fact, via single-token padding).

Also here: the co-visitation graph and recency-decayed candidate generation
used for recommendation preprocessing, and token-level evidence overlap
metrics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .policy import ScoreMap
from .tokenization import TokenizedContext, tokenize

REQUIRED_FIELDS = ("id", "query", "context", "gold")
_KNOWN_FIELDS = REQUIRED_FIELDS + ("evidence_spans", "candidates")


@dataclass
class Instance:
    """One dataset record: query, context, gold target, optional gold
    evidence byte ranges and candidate items."""

    id: str
    query: str
    context: str
    gold: object
    evidence_spans: list[tuple[int, int]] | None = None
    candidates: list[dict] | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.evidence_spans is not None:
            n = len(self.context.encode("utf-8"))
            prev_end = -1
            for start, end in self.evidence_spans:
                if not (0 <= start < end <= n):
                    raise DataError(
                        f"instance {self.id}: evidence span [{start}, {end}) "
                        f"outside context bounds [0, {n})"
                    )
                if start < prev_end:
                    raise DataError(
                        f"instance {self.id}: evidence spans overlap or are unsorted"
                    )
                prev_end = end

    def to_record(self) -> dict:
        record = {
            "id": self.id,
            "query": self.query,
            "context": self.context,
            "gold": self.gold,
        }
        if self.evidence_spans is not None:
            record["evidence_spans"] = [[s, e] for s, e in self.evidence_spans]
        if self.candidates is not None:
            record["candidates"] = self.candidates
        record.update(self.extra)
        return record

    @classmethod
    def from_record(cls, record: dict) -> "Instance":
        spans = record.get("evidence_spans")
        return cls(
            id=str(record["id"]),
            query=record["query"],
            context=record["context"],
            gold=record["gold"],
            evidence_spans=[(int(s), int(e)) for s, e in spans] if spans is not None else None,
            candidates=record.get("candidates"),
            extra={k: v for k, v in record.items() if k not in _KNOWN_FIELDS},
        )


def load_jsonl(path: str | Path) -> list[Instance]:
    """Read one Instance per line; malformed lines fail with their number."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    instances = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for fname in REQUIRED_FIELDS:
                if fname not in record:
                    raise DataError(f"{path}:{lineno}: missing field {fname!r}")
            instances.append(Instance.from_record(record))
    return instances


def save_jsonl(dataset: list[Instance], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for inst in dataset:
            fh.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Synthetic needle benchmark
# ---------------------------------------------------------------------------

_ADJECTIVES = (
    "ancient mossy quiet crimson hollow gilded dusty narrow silver broken "
    "wandering pale misty amber rusty weathered sleepy distant crooked faded"
).split()
_NOUNS = (
    "lantern harbor oak meadow raven chapel anvil orchard tide boulder "
    "willow sparrow hearth canyon mill bridge cellar thicket belfry quarry"
).split()
_VERBS = (
    "glimmered drifted settled crumbled swayed echoed lingered gathered "
    "faded wandered rippled slumbered brightened softened stirred"
).split()
_PLACES = (
    "valley ridge shore village grove marsh cliff plaza garden crossing "
    "hollow summit lagoon terrace mooring"
).split()
_FILLERS = (
    "meanwhile elsewhere nearby eventually quietly slowly upstream downstream "
    "northward afterwards"
).split()

_CONSONANTS = "b c d f g l m n p r s t v z br cl dr gr pl st tr".split()
_VOWELS = "a e i o u ai ea io ou".split()

DEFAULT_NEEDLE_TEMPLATE = "Dossier {clusters} holds access code {value}."


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for one synthetic instance.

    ``target_tokens`` is the total context length; ``n_distractors`` fixes
    the distractor sentence count when set, otherwise the generator fills up
    to the target.  The needle template frames the evidence sentence; the
    cluster knobs control how many codeword groups it carries and how far
    apart they sit, which sets the evidence density.
    """

    target_tokens: int = 2000
    n_distractors: int | None = None
    needle_template: str = DEFAULT_NEEDLE_TEMPLATE
    seed: int = 0
    n_clusters: int = 6
    cluster_size: int = 5
    filler_gap: int = 5

    def __post_init__(self):
        if self.target_tokens < 1:
            raise DataError("target_tokens must be >= 1")
        if self.n_clusters < 1 or self.cluster_size < 1:
            raise DataError("needle needs at least one codeword cluster")


def _pseudo_word(rng: np.random.Generator) -> str:
    n = int(rng.integers(2, 4))
    parts = [
        _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
        for _ in range(n)
    ]
    return "".join(parts) + _CONSONANTS[rng.integers(len(_CONSONANTS))]


def _distractor_sentence(rng: np.random.Generator) -> str:
    return (
        f"The {_ADJECTIVES[rng.integers(len(_ADJECTIVES))]} "
        f"{_NOUNS[rng.integers(len(_NOUNS))]} "
        f"{_VERBS[rng.integers(len(_VERBS))]} near the "
        f"{_PLACES[rng.integers(len(_PLACES))]}."
    )


def _count_tokens(text: str) -> int:
    return len(tokenize(text).tokens)


def gen_needle(spec: SynthSpec) -> Instance:
    """Generate one needle instance, deterministic in the seed.

    The gold answer (the numeric access code) appears exactly once in the
    context, inside the final evidence span; distractor sentences contain no
    digits, so no collision is possible.
    """
    rng = np.random.default_rng(spec.seed)
    value = str(rng.integers(10**7, 10**8))
    clusters = [
        [_pseudo_word(rng) for _ in range(spec.cluster_size)]
        for _ in range(spec.n_clusters)
    ]
    cluster_block_parts = []
    for ci, cluster in enumerate(clusters):
        cluster_block_parts.append(" ".join(cluster))
        if ci < len(clusters) - 1:
            fill = [
                _ADJECTIVES[rng.integers(len(_ADJECTIVES))] if j % 2 == 0
                else _NOUNS[rng.integers(len(_NOUNS))]
                for j in range(spec.filler_gap)
            ]
            cluster_block_parts.append("beneath the " + " ".join(fill))
    cluster_block = " ".join(cluster_block_parts)
    needle = spec.needle_template.format(clusters=cluster_block, value=value)
    query = (
        "Report the access code for dossier "
        + " ".join(word for cluster in clusters for word in cluster)
        + "."
    )

    needle_tokens = _count_tokens(needle)
    if spec.target_tokens < needle_tokens:
        raise DataError(
            f"target_tokens={spec.target_tokens} below needle length {needle_tokens}"
        )
    sentences: list[str] = []
    count = needle_tokens
    if spec.n_distractors is not None:
        for _ in range(spec.n_distractors):
            s = _distractor_sentence(rng)
            sentences.append(s)
            count += _count_tokens(s)
    else:
        while True:
            s = _distractor_sentence(rng)
            c = _count_tokens(s)
            if count + c > spec.target_tokens:
                break
            sentences.append(s)
            count += c
    position = int(rng.integers(0, len(sentences) + 1))
    sentences.insert(position, needle)
    # single-word padding lands the token count exactly on target
    if spec.n_distractors is None:
        while count < spec.target_tokens:
            sentences.append(_FILLERS[rng.integers(len(_FILLERS))])
            count += 1
    context = " ".join(sentences)

    context_bytes = context.encode("utf-8")
    spans: list[tuple[int, int]] = []
    for cluster in clusters:
        phrase = " ".join(cluster).encode("utf-8")
        start = context_bytes.find(phrase)
        spans.append((start, start + len(phrase)))
    trailer = f"access code {value}".encode("utf-8")
    start = context_bytes.find(trailer)
    spans.append((start, start + len(trailer)))
    spans.sort()

    if context.count(value) != 1:
        raise DataError("gold answer collided with distractor text")

    return Instance(
        id=f"needle-{spec.seed:08d}",
        query=query,
        context=context,
        gold=value,
        evidence_spans=spans,
    )


def gen_dataset(
    n: int, target_tokens: int = 2000, seed: int = 0, **spec_kwargs
) -> list[Instance]:
    """n needle instances with consecutive per-instance seeds."""
    return [
        gen_needle(SynthSpec(target_tokens=target_tokens, seed=seed + i, **spec_kwargs))
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# Co-visitation graph and candidate generation
# ---------------------------------------------------------------------------


@dataclass
class CoVisGraph:
    """Item-item co-occurrence counts within a sliding window.

    adjacency[a] lists (neighbor, count) sorted by descending count, ties by
    ascending neighbor id.
    """

    adjacency: dict

    def neighbors(self, item) -> list[tuple[object, int]]:
        return self.adjacency.get(item, [])

    def count(self, a, b) -> int:
        for neighbor, c in self.adjacency.get(a, []):
            if neighbor == b:
                return c
        return 0

    def total_weight(self) -> int:
        return sum(c for pairs in self.adjacency.values() for _, c in pairs)


def build_covis(histories: list[list], window: int) -> CoVisGraph:
    """Accumulate co[i_t][i_j] += 1 for every j in [t-w, t+w], j != t,
    over all users."""
    if window < 1:
        raise DataError("window must be >= 1")
    counts: dict = {}
    for history in histories:
        n = len(history)
        for t in range(n):
            lo = max(0, t - window)
            hi = min(n - 1, t + window)
            for j in range(lo, hi + 1):
                if j == t:
                    continue
                a, b = history[t], history[j]
                counts.setdefault(a, {})
                counts[a][b] = counts[a].get(b, 0) + 1
    adjacency = {
        a: sorted(pairs.items(), key=lambda kv: (-kv[1], kv[0]))
        for a, pairs in counts.items()
    }
    return CoVisGraph(adjacency=adjacency)


def popularity_from_histories(histories: list[list]) -> list:
    """Items ordered by descending interaction count, ties by ascending id."""
    counts: dict = {}
    for history in histories:
        for item in history:
            counts[item] = counts.get(item, 0) + 1
    return [item for item, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]


def candidates(
    history: list,
    graph: CoVisGraph,
    alpha: float = 0.85,
    M: int = 10,
    K: int = 40,
    popularity: list | None = None,
) -> list:
    """Top-K candidates by recency-decayed co-visitation score.

    s(c) = sum over the last M history items r (rank 0 = most recent) of
    alpha^rank(r) * co[r][c].  History items are never candidates.  When
    fewer than K items score above zero, the remainder is backfilled from
    ``popularity`` order, still excluding history and already-selected items.
    """
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must lie in (0, 1)")
    recent = list(reversed(history[-M:]))
    seen = set(history)
    scores: dict = {}
    for rank, r in enumerate(recent):
        decay = alpha**rank
        for neighbor, count in graph.neighbors(r):
            if neighbor in seen:
                continue
            scores[neighbor] = scores.get(neighbor, 0.0) + decay * count
    ranked = [c for c, _ in sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))]
    out = ranked[:K]
    if len(out) < K and popularity:
        chosen = set(out)
        for item in popularity:
            if len(out) >= K:
                break
            if item in seen or item in chosen:
                continue
            out.append(item)
            chosen.add(item)
    return out


# ---------------------------------------------------------------------------
# Evidence overlap
# ---------------------------------------------------------------------------


def gold_token_indices(
    ctx: TokenizedContext, gold_spans: list[tuple[int, int]]
) -> set[int]:
    """Indices of tokens whose byte range intersects any gold span."""
    out = set()
    for i, tok in enumerate(ctx.tokens):
        for start, end in gold_spans:
            if tok.char_start < end and tok.char_end > start:
                out.add(i)
                break
    return out


def evidence_overlap(
    pred_scores: ScoreMap,
    threshold: float,
    gold_spans: list[tuple[int, int]],
    ctx: TokenizedContext,
) -> tuple[float, float, float]:
    """Token-level precision/recall/F1 of thresholded scores against gold
    evidence spans.

    Predicted evidence tokens are those with p_i >= threshold.  Both sides
    empty scores (1, 1, 1); exactly one side empty scores (0, 0, 0).
    """
    predicted = set(np.flatnonzero(pred_scores.probs >= threshold).tolist())
    gold = gold_token_indices(ctx, gold_spans)
    if not predicted and not gold:
        return 1.0, 1.0, 1.0
    if not predicted or not gold:
        return 0.0, 0.0, 0.0
    tp = len(predicted & gold)
    precision = tp / len(predicted)
    recall = tp / len(gold)
    if tp == 0:
        return precision, recall, 0.0
    f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1
