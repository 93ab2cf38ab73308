"""Automatic training data generation from event tables.

Key-argument selection scores each table property, keeps the top half plus
the best time-related property, and a sentence becomes a positive instance
of an entry when every key argument value (or alias) appears as a token
span and all key spans sit within a bounded dependency distance of each
other. Everything else feeds seeded negative sampling pools.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .core import (
    OUTSIDE,
    EventSchema,
    EventTable,
    LabelSequence,
    ParsedSentence,
    TableEntry,
    Token,
    normalize_surface,
    read_jsonl,
    validate_sentence,
    write_jsonl,
)

NEG_INF = float("-inf")

# Fallback used when a table does not flag its time-related properties.
TIME_KEYWORDS = frozenset({"date", "time", "year", "from", "to", "start", "end"})


class Strategy(str, Enum):
    """Key-argument selection policies used for dataset comparisons."""

    ALL = "all"            # every property is a key argument
    IMP = "imp"            # top half by importance score
    IMP_TIME = "imp_time"  # top half plus the best time-related property


@dataclass(frozen=True)
class ImportanceStats:
    count_cvt: Mapping[str, int]
    count_arg: Mapping[str, int]
    count_cvt_arg: Mapping[tuple[str, str], int]


def collect_stats(tables: Sequence[EventTable]) -> ImportanceStats:
    """Entry-level occurrence counts across all tables."""
    count_cvt: dict[str, int] = {}
    count_arg: dict[str, int] = {}
    count_cvt_arg: dict[tuple[str, str], int] = {}
    for table in tables:
        count_cvt[table.event_type] = count_cvt.get(table.event_type, 0) + len(table.entries)
        for entry in table.entries:
            for prop in entry.values:
                count_arg[prop] = count_arg.get(prop, 0) + 1
                key = (table.event_type, prop)
                count_cvt_arg[key] = count_cvt_arg.get(key, 0) + 1
    return ImportanceStats(count_cvt, count_arg, count_cvt_arg)


def importance_score(stats: ImportanceStats, event_type: str, prop: str) -> float:
    """log(count(type, prop) / (count(type) * count(prop))), natural log.

    Returns -inf when the property never occurs with the type. Only the
    ranking matters downstream, so the log base is immaterial.
    """
    n_cvt = stats.count_cvt.get(event_type, 0)
    if n_cvt <= 0:
        raise ValueError(f"count_cvt is zero or missing for event type {event_type!r}")
    n_arg = stats.count_arg.get(prop, 0)
    if n_arg <= 0:
        raise ValueError(f"count_arg is zero or missing for property {prop!r}")
    joint = stats.count_cvt_arg.get((event_type, prop), 0)
    if joint == 0:
        return NEG_INF
    return math.log(joint / (n_cvt * n_arg))


def time_related_properties(table: EventTable) -> list[str]:
    """Properties flagged time-related, else a keyword fallback on names."""
    if table.time_properties:
        return [p for p in table.properties if p in set(table.time_properties)]
    out = []
    for prop in table.properties:
        parts = set(prop.casefold().replace("-", "_").split("_"))
        if parts & TIME_KEYWORDS:
            out.append(prop)
    return out


def select_key_args(
    table: EventTable,
    stats: ImportanceStats,
    strategy: Strategy = Strategy.IMP_TIME,
) -> EventSchema:
    """Partition a table's properties into key and non-key arguments.

    The default policy keeps the ceil(n/2) highest-importance properties and
    adds the single highest-scoring time-related property when one exists.
    Score ties break by ascending property name.
    """
    if not table.properties:
        raise ValueError(f"table {table.event_type} has no properties")
    importance = {
        p: importance_score(stats, table.event_type, p) for p in table.properties
    }
    if strategy == Strategy.ALL:
        key = set(table.properties)
    else:
        ranked = sorted(table.properties, key=lambda p: (-importance[p], p))
        top = math.ceil(len(table.properties) / 2)
        key = set(ranked[:top])
        if strategy == Strategy.IMP_TIME:
            time_props = time_related_properties(table)
            if time_props:
                best_time = min(time_props, key=lambda p: (-importance[p], p))
                key.add(best_time)
    return EventSchema(
        event_type=table.event_type,
        key_args=frozenset(key),
        nonkey_args=frozenset(set(table.properties) - key),
        importance=importance,
    )


@dataclass
class GenerationConfig:
    """Knobs for matching and negative-sample composition.

    max_dep_distance=None disables the dependency distance rule; the
    negative ratios are counts relative to the number of positive records.
    """

    max_dep_distance: int | None = 2
    partial_negative_ratio: float = 1.0
    violation_negative_ratio: float = 1.0
    alias_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.max_dep_distance is not None and self.max_dep_distance < 1:
            raise ValueError("max_dep_distance must be at least 1")
        for name in ("partial_negative_ratio", "violation_negative_ratio"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and non-negative")


def role_label(event_type: str, prop: str) -> str:
    """Label-space role name; event types namespace their properties."""
    return f"{event_type}:{prop}"


def split_role(role: str) -> tuple[str, str]:
    event_type, _, prop = role.rpartition(":")
    if not event_type:
        raise ValueError(f"role {role!r} is not event-type qualified")
    return event_type, prop


def read_alias_map(path: str) -> dict[str, str]:
    """Tab-separated surface -> canonical pairs, normalized on load."""
    aliases: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'surface<TAB>canonical'")
            aliases[normalize_surface(parts[0])] = normalize_surface(parts[1])
    return aliases


def _candidate_surfaces(value: str, alias_map: Mapping[str, str]) -> set[str]:
    """The value itself, its canonical form, and surfaces redirecting to it."""
    norm = normalize_surface(value)
    out = {norm}
    if norm in alias_map:
        out.add(alias_map[norm])
    for surface, canonical in alias_map.items():
        if canonical == norm:
            out.add(surface)
    return out


def _find_span(
    sentence_norm: Sequence[str], surfaces: Iterable[str]
) -> tuple[int, int] | None:
    """Longest-match, leftmost occurrence of any candidate surface."""
    best: tuple[int, int] | None = None
    for surface in surfaces:
        pattern = surface.split()
        if not pattern:
            continue
        width = len(pattern)
        for start in range(0, len(sentence_norm) - width + 1):
            if sentence_norm[start:start + width] == pattern:
                if best is None or width > best[1] - best[0] or (
                    width == best[1] - best[0] and start < best[0]
                ):
                    best = (start, start + width)
                break  # leftmost occurrence of this surface
    return best


def find_role_spans(
    sentence: ParsedSentence,
    entry: TableEntry,
    schema: EventSchema,
    cfg: GenerationConfig,
) -> dict[str, tuple[int, int]]:
    """Token spans for every entry property present in the sentence."""
    norm = sentence.normalized
    spans: dict[str, tuple[int, int]] = {}
    for prop in sorted(entry.values):
        surfaces: set[str] = set()
        for value in entry.values[prop]:
            surfaces |= _candidate_surfaces(value, cfg.alias_map)
        span = _find_span(norm, surfaces)
        if span is not None:
            spans[prop] = span
    return spans


def match_entry(
    sentence: ParsedSentence,
    entry: TableEntry,
    schema: EventSchema,
    cfg: GenerationConfig,
) -> list[tuple[str, tuple[int, int]]] | None:
    """Role-to-span assignments iff every key argument matched, else None."""
    spans = find_role_spans(sentence, entry, schema, cfg)
    if not schema.key_args <= set(spans):
        return None
    return sorted(spans.items())


def span_head(sentence: ParsedSentence, span: tuple[int, int]) -> int:
    """The unique token whose head leaves the span; leftmost as fallback."""
    start, end = span
    if not (0 <= start < end <= len(sentence)):
        raise ValueError(f"span {span} outside sentence {sentence.id}")
    outgoing = [
        i for i in range(start, end)
        if not (start <= sentence.dep_head[i] < end)
    ]
    if len(outgoing) == 1:
        return outgoing[0]
    return start


def _depth_and_ancestors(sentence: ParsedSentence, node: int) -> list[int]:
    chain = [node]
    cur = node
    n = len(sentence)
    while sentence.dep_head[cur] != -1:
        cur = sentence.dep_head[cur]
        chain.append(cur)
        if len(chain) > n:
            raise ValueError(f"sentence {sentence.id}: dependency heads contain a cycle")
    return chain


def dep_distance(
    sentence: ParsedSentence, span_a: tuple[int, int], span_b: tuple[int, int]
) -> int:
    """Minimal hop count between the head tokens of two spans."""
    violations = validate_sentence(sentence)
    if violations:
        raise ValueError(f"sentence {sentence.id}: {violations[0]}")
    a = span_head(sentence, span_a)
    b = span_head(sentence, span_b)
    chain_a = _depth_and_ancestors(sentence, a)
    depth_a = {node: i for i, node in enumerate(chain_a)}
    chain_b = _depth_and_ancestors(sentence, b)
    for hops_b, node in enumerate(chain_b):
        if node in depth_a:
            return depth_a[node] + hops_b
    raise ValueError(f"sentence {sentence.id}: no common ancestor found")


def trigger_candidate(
    sentence: ParsedSentence, key_spans: Sequence[tuple[int, int]]
) -> Token:
    """Least common ancestor token of all key-argument span heads."""
    if not key_spans:
        raise ValueError("need at least one key span")
    heads = [span_head(sentence, span) for span in key_spans]
    lca = heads[0]
    for node in heads[1:]:
        chain = _depth_and_ancestors(sentence, lca)
        positions = {n: i for i, n in enumerate(chain)}
        cur = node
        while cur not in positions:
            cur = sentence.dep_head[cur]
        lca = cur
    return sentence.tokens[lca]


@dataclass
class LabeledInstance:
    """One (sentence, entry) labeling outcome."""

    sentence_id: str
    event_type: str
    entry_id: str
    sequence: LabelSequence
    positive: bool
    reason: str | None = None          # partial | distance | trivial for negatives
    spans: dict[str, tuple[int, int]] = field(default_factory=dict)
    max_key_distance: int | None = None
    diagnostics: list[str] = field(default_factory=list)


def label_sentence(
    sentence: ParsedSentence,
    matches: Mapping[str, tuple[int, int]],
    schema: EventSchema,
    cfg: GenerationConfig,
) -> LabeledInstance:
    """BIO-tag a sentence against one entry's matched spans.

    Positive iff all key arguments matched and every key-span pair lies
    within max_dep_distance hops; otherwise an all-O negative with the
    reason recorded. Overlapping spans keep the higher-importance role.
    """
    n = len(sentence)
    diagnostics: list[str] = []
    order = sorted(
        matches,
        key=lambda p: (-schema.importance.get(p, NEG_INF), p),
    )
    kept: dict[str, tuple[int, int]] = {}
    occupied: set[int] = set()
    for prop in order:
        start, end = matches[prop]
        tokens = set(range(start, end))
        if tokens & occupied:
            diagnostics.append(
                f"overlap: dropped {prop} span [{start},{end}) in {sentence.id}"
            )
            continue
        kept[prop] = (start, end)
        occupied |= tokens

    matched_keys = set(matches) & schema.key_args
    kept_keys = set(kept) & schema.key_args

    def negative(reason: str, max_distance: int | None = None) -> LabeledInstance:
        return LabeledInstance(
            sentence_id=sentence.id,
            event_type=schema.event_type,
            entry_id="",
            sequence=LabelSequence(tags=tuple([OUTSIDE] * n)),
            positive=False,
            reason=reason,
            spans={},
            max_key_distance=max_distance,
            diagnostics=diagnostics,
        )

    if not matched_keys:
        return negative("trivial")
    if kept_keys != schema.key_args:
        return negative("partial")

    key_spans = [kept[p] for p in sorted(schema.key_args)]
    max_distance = 0
    for i in range(len(key_spans)):
        for j in range(i + 1, len(key_spans)):
            max_distance = max(max_distance, dep_distance(sentence, key_spans[i], key_spans[j]))
    if cfg.max_dep_distance is not None and max_distance > cfg.max_dep_distance:
        return negative("distance", max_distance)

    tags = [OUTSIDE] * n
    for prop, (start, end) in kept.items():
        role = role_label(schema.event_type, prop)
        tags[start] = f"B-{role}"
        for i in range(start + 1, end):
            tags[i] = f"I-{role}"
    return LabeledInstance(
        sentence_id=sentence.id,
        event_type=schema.event_type,
        entry_id="",
        sequence=LabelSequence(tags=tuple(tags)),
        positive=True,
        spans=dict(kept),
        max_key_distance=max_distance,
        diagnostics=diagnostics,
    )


def _merge_positive_instances(
    sentence: ParsedSentence,
    instances: list[LabeledInstance],
    schemas: Mapping[str, EventSchema],
    diagnostics: list[str],
) -> dict:
    """Fold per-entry positives for one sentence into a single record.

    Span conflicts across event types keep the first (type-ordered) role
    and are logged; such shared spans stay recoverable per type through
    the record's event_types list.
    """
    instances = sorted(instances, key=lambda inst: (inst.event_type, inst.entry_id))
    n = len(sentence)
    kept: list[tuple[str, str, tuple[int, int]]] = []  # (event_type, prop, span)
    occupied: set[int] = set()
    for inst in instances:
        schema = schemas[inst.event_type]
        order = sorted(
            inst.spans, key=lambda p: (-schema.importance.get(p, NEG_INF), p)
        )
        for prop in order:
            start, end = inst.spans[prop]
            tokens = set(range(start, end))
            if tokens & occupied:
                diagnostics.append(
                    f"merge-overlap: dropped {inst.event_type}:{prop} span "
                    f"[{start},{end}) in {sentence.id}"
                )
                continue
            kept.append((inst.event_type, prop, (start, end)))
            occupied |= tokens
    tags = [OUTSIDE] * n
    for event_type, prop, (start, end) in kept:
        role = role_label(event_type, prop)
        tags[start] = f"B-{role}"
        for i in range(start + 1, end):
            tags[i] = f"I-{role}"
    return {
        "sentence_id": sentence.id,
        "tokens": sentence.surfaces,
        "labels": tags,
        "event_types": sorted({inst.event_type for inst in instances}),
        "polarity": "positive",
    }


def generate_dataset(
    tables: Sequence[EventTable],
    corpus: Sequence[ParsedSentence],
    cfg: GenerationConfig,
    strategy: Strategy = Strategy.IMP_TIME,
    seed: int = 0,
    stats: ImportanceStats | None = None,
) -> tuple[list[dict], dict]:
    """Run matching and labeling over every sentence x entry pair.

    Emits every positive record plus negatives: all trivial negatives and
    seeded samples from the partial-match and distance-violation pools,
    sized by the config ratios relative to the positive count. Returns the
    records in corpus order together with a statistics report.
    """
    for sentence in corpus:
        violations = validate_sentence(sentence)
        if violations:
            raise ValueError(f"sentence {sentence.id}: {violations[0]}")
    if stats is None:
        stats = collect_stats(tables)
    schemas = {
        table.event_type: select_key_args(table, stats, strategy) for table in tables
    }

    diagnostics: list[str] = []
    positive_records: dict[str, dict] = {}
    sentence_reason: dict[str, tuple[str, int | None]] = {}
    trigger_counts: dict[str, dict[str, int]] = {}
    positive_instances = 0
    reason_rank = {"distance": 0, "partial": 1, "trivial": 2}

    for sentence in corpus:
        instances: list[LabeledInstance] = []
        best_reason: tuple[str, int | None] | None = None
        for table in tables:
            schema = schemas[table.event_type]
            for entry in table.entries:
                spans = find_role_spans(sentence, entry, schema, cfg)
                inst = label_sentence(sentence, spans, schema, cfg)
                inst.entry_id = entry.id
                diagnostics.extend(inst.diagnostics)
                if inst.positive:
                    instances.append(inst)
                    key_spans = [inst.spans[p] for p in sorted(schema.key_args)]
                    token = trigger_candidate(sentence, key_spans)
                    per_type = trigger_counts.setdefault(table.event_type, {})
                    per_type[token.normalized] = per_type.get(token.normalized, 0) + 1
                else:
                    cand = (inst.reason or "trivial", inst.max_key_distance)
                    if best_reason is None or reason_rank[cand[0]] < reason_rank[best_reason[0]]:
                        best_reason = cand
        if instances:
            positive_instances += len(instances)
            positive_records[sentence.id] = _merge_positive_instances(
                sentence, instances, schemas, diagnostics
            )
        else:
            sentence_reason[sentence.id] = best_reason or ("trivial", None)

    pools: dict[str, list[str]] = {"partial": [], "distance": [], "trivial": []}
    for sentence in corpus:
        if sentence.id in sentence_reason:
            pools[sentence_reason[sentence.id][0]].append(sentence.id)

    n_pos = len(positive_records)
    rng = random.Random(seed)

    def sample(pool: list[str], ratio: float) -> set[str]:
        k = min(len(pool), int(round(ratio * n_pos)))
        return set(rng.sample(pool, k))

    chosen = sample(pools["partial"], cfg.partial_negative_ratio)
    chosen |= sample(pools["distance"], cfg.violation_negative_ratio)
    chosen |= set(pools["trivial"])

    records: list[dict] = []
    for sentence in corpus:
        if sentence.id in positive_records:
            records.append(positive_records[sentence.id])
        elif sentence.id in chosen:
            reason, max_distance = sentence_reason[sentence.id]
            rec = {
                "sentence_id": sentence.id,
                "tokens": sentence.surfaces,
                "labels": [OUTSIDE] * len(sentence),
                "event_types": [],
                "polarity": "negative",
                "reason": reason,
            }
            if reason == "distance" and max_distance is not None:
                rec["max_key_distance"] = max_distance
            records.append(rec)

    per_type: dict[str, int] = {}
    multi = 0
    args_total = 0
    events_total = 0
    for rec in positive_records.values():
        types = rec["event_types"]
        if len(types) >= 2:
            multi += 1
        for t in types:
            per_type[t] = per_type.get(t, 0) + 1
        events_total += len(types)
        args_total += sum(1 for tag in rec["labels"] if tag.startswith("B-"))

    report = {
        "strategy": strategy.value,
        "seed": seed,
        "sentences": len(corpus),
        "records": len(records),
        "positives": n_pos,
        "positive_instances": positive_instances,
        "negatives": {
            "emitted": len(records) - n_pos,
            "partial": len(chosen & set(pools["partial"])),
            "distance": len(chosen & set(pools["distance"])),
            "trivial": len(pools["trivial"]),
            "pool_sizes": {k: len(v) for k, v in pools.items()},
        },
        "positive_percentage": (100.0 * n_pos / len(records)) if records else 0.0,
        "events": events_total,
        "per_type": dict(sorted(per_type.items())),
        "multi_type_fraction": (multi / n_pos) if n_pos else 0.0,
        "arguments_per_event": (args_total / events_total) if events_total else 0.0,
        "trigger_candidates": {
            t: [
                {"token": tok, "share": count / sum(counts.values())}
                for tok, count in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:5]
            ]
            for t, counts in sorted(trigger_counts.items())
        },
        "schemas": [schemas[t].to_dict() for t in sorted(schemas)],
        "diagnostics": diagnostics,
    }
    return records, report


def read_dataset(path: str) -> list[dict]:
    return list(read_jsonl(path))


def write_dataset(path: str, records: Sequence[Mapping], header: Mapping | None = None) -> None:
    write_jsonl(path, records, header=header)
