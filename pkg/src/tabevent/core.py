"""Shared domain types: sentences, event tables, label sets, mentions.

Everything here is immutable after construction so values can be shared
freely between parallel workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

OUTSIDE = "O"


def normalize_surface(surface: str) -> str:
    """Case-fold and collapse internal whitespace. No stemming."""
    return " ".join(surface.casefold().split())


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    normalized: str = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "normalized", normalize_surface(self.surface))


@dataclass(frozen=True)
class ParsedSentence:
    """A tokenized sentence with a dependency tree (root head = -1)."""

    id: str
    tokens: tuple[Token, ...]
    dep_head: tuple[int, ...]
    dep_label: tuple[str, ...] | None = None

    @classmethod
    def build(
        cls,
        sentence_id: str,
        surfaces: Sequence[str],
        dep_head: Sequence[int],
        dep_label: Sequence[str] | None = None,
    ) -> "ParsedSentence":
        tokens = tuple(Token(i, s) for i, s in enumerate(surfaces))
        return cls(
            id=sentence_id,
            tokens=tokens,
            dep_head=tuple(int(h) for h in dep_head),
            dep_label=tuple(dep_label) if dep_label is not None else None,
        )

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def normalized(self) -> list[str]:
        return [t.normalized for t in self.tokens]

    def to_dict(self) -> dict:
        rec: dict = {
            "id": self.id,
            "tokens": list(self.surfaces),
            "dep_head": list(self.dep_head),
        }
        if self.dep_label is not None:
            rec["dep_label"] = list(self.dep_label)
        return rec

    @classmethod
    def from_dict(cls, rec: Mapping) -> "ParsedSentence":
        return cls.build(
            str(rec["id"]),
            rec["tokens"],
            rec["dep_head"],
            rec.get("dep_label"),
        )


def validate_sentence(s: ParsedSentence) -> list[str]:
    """Return a list of invariant violations; empty means the tree is valid.

    Diagnostics are returned, never raised. One violation is reported per
    defect (a cycle is a single violation naming its members).
    """
    violations: list[str] = []
    n = len(s.tokens)
    if len(s.dep_head) != n:
        violations.append(
            f"length: dep_head has {len(s.dep_head)} entries for {n} tokens"
        )
        return violations
    if s.dep_label is not None and len(s.dep_label) != n:
        violations.append(
            f"length: dep_label has {len(s.dep_label)} entries for {n} tokens"
        )
    for pos, tok in enumerate(s.tokens):
        if tok.index != pos:
            violations.append(f"index: token at position {pos} has index {tok.index}")

    roots = [i for i, h in enumerate(s.dep_head) if h == -1]
    if len(roots) != 1:
        violations.append(f"root: expected exactly one root, found tokens {roots}")
    for i, h in enumerate(s.dep_head):
        if h < -1 or h >= n:
            violations.append(f"head: token {i} has out-of-range head {h}")

    # Walk each token towards the root; any revisit on the current walk is a
    # new cycle, reported once with all of its members.
    OK, ON_CYCLE, UNSEEN = 1, 2, 0
    status = [UNSEEN] * n
    for start in range(n):
        if status[start] != UNSEEN:
            continue
        path: list[int] = []
        seen_at: dict[int, int] = {}
        cur = start
        while True:
            if cur == -1:
                for p in path:
                    status[p] = OK
                break
            if cur < 0 or cur >= n:
                for p in path:
                    status[p] = OK  # out-of-range already reported above
                break
            if status[cur] != UNSEEN:
                mark = status[cur]
                for p in path:
                    status[p] = mark if mark == ON_CYCLE else OK
                break
            if cur in seen_at:
                members = sorted(path[seen_at[cur]:])
                violations.append(f"cycle: tokens {members} form a dependency cycle")
                for p in path:
                    status[p] = ON_CYCLE
                break
            seen_at[cur] = len(path)
            path.append(cur)
            cur = s.dep_head[cur]
    return violations


@dataclass(frozen=True)
class TableEntry:
    """One row of an event table: property name -> surface forms."""

    id: str
    values: Mapping[str, tuple[str, ...]]

    def to_dict(self) -> dict:
        return {"id": self.id, "values": {p: list(v) for p, v in self.values.items()}}

    @classmethod
    def from_dict(cls, rec: Mapping) -> "TableEntry":
        values = {str(p): tuple(str(x) for x in v) for p, v in rec["values"].items()}
        return cls(id=str(rec["id"]), values=values)


@dataclass(frozen=True)
class EventTable:
    event_type: str
    properties: tuple[str, ...]
    time_properties: tuple[str, ...]
    entries: tuple[TableEntry, ...]

    def __post_init__(self) -> None:
        if len(set(self.properties)) != len(self.properties):
            raise ValueError(f"table {self.event_type}: duplicate property names")
        unknown_time = set(self.time_properties) - set(self.properties)
        if unknown_time:
            raise ValueError(
                f"table {self.event_type}: time_properties {sorted(unknown_time)} "
                "are not listed properties"
            )
        for entry in self.entries:
            extra = set(entry.values) - set(self.properties)
            if extra:
                raise ValueError(
                    f"table {self.event_type}: entry {entry.id} has unknown "
                    f"properties {sorted(extra)}"
                )
            for prop, vals in entry.values.items():
                if not vals:
                    raise ValueError(
                        f"table {self.event_type}: entry {entry.id} has an empty "
                        f"value list for {prop}"
                    )

    def to_dict(self) -> dict:
        return {
            "event_type": self.event_type,
            "properties": list(self.properties),
            "time_properties": list(self.time_properties),
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "EventTable":
        return cls(
            event_type=str(rec["event_type"]),
            properties=tuple(str(p) for p in rec["properties"]),
            time_properties=tuple(str(p) for p in rec.get("time_properties", [])),
            entries=tuple(TableEntry.from_dict(e) for e in rec["entries"]),
        )


@dataclass(frozen=True)
class EventSchema:
    """Key / non-key partition of a table's properties with importance scores."""

    event_type: str
    key_args: frozenset[str]
    nonkey_args: frozenset[str]
    importance: Mapping[str, float]

    def __post_init__(self) -> None:
        if self.key_args & self.nonkey_args:
            raise ValueError(
                f"schema {self.event_type}: key and non-key arguments overlap"
            )
        if not self.key_args:
            raise ValueError(f"schema {self.event_type}: key argument set is empty")

    def to_dict(self) -> dict:
        imp = {
            p: (None if v == float("-inf") else v)
            for p, v in sorted(self.importance.items())
        }
        return {
            "event_type": self.event_type,
            "key_args": sorted(self.key_args),
            "nonkey_args": sorted(self.nonkey_args),
            "importance": imp,
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "EventSchema":
        imp = {
            str(p): (float("-inf") if v is None else float(v))
            for p, v in rec.get("importance", {}).items()
        }
        return cls(
            event_type=str(rec["event_type"]),
            key_args=frozenset(rec["key_args"]),
            nonkey_args=frozenset(rec.get("nonkey_args", [])),
            importance=imp,
        )


class LabelSet:
    """BIO tag inventory plus per-event-type key-argument groups.

    Tag order is O first, then B-role/I-role pairs in the given role order;
    the order fixes tag indices and therefore decoding tie-breaks.
    """

    def __init__(
        self,
        roles: Sequence[str],
        groups: Mapping[str, Iterable[str]] | None = None,
    ):
        self.roles: tuple[str, ...] = tuple(roles)
        if len(set(self.roles)) != len(self.roles):
            raise ValueError("duplicate role names in label set")
        labels = [OUTSIDE]
        for role in self.roles:
            labels.append(f"B-{role}")
            labels.append(f"I-{role}")
        self.labels: tuple[str, ...] = tuple(labels)
        self._index = {tag: i for i, tag in enumerate(self.labels)}
        self.groups: dict[str, frozenset[str]] = {}
        role_set = set(self.roles)
        for event_type, group_roles in sorted((groups or {}).items()):
            rs = frozenset(group_roles)
            missing = rs - role_set
            if missing:
                raise ValueError(
                    f"group {event_type} references unknown roles {sorted(missing)}"
                )
            self.groups[event_type] = rs

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, LabelSet)
            and self.roles == other.roles
            and self.groups == other.groups
        )

    def index(self, tag: str) -> int:
        if tag not in self._index:
            raise ValueError(f"unknown tag: {tag!r}")
        return self._index[tag]

    def __contains__(self, tag: str) -> bool:
        return tag in self._index

    @staticmethod
    def role_of(tag: str) -> str | None:
        """Role carried by a B-/I- tag, or None for the outside tag."""
        if tag == OUTSIDE:
            return None
        return tag[2:]

    @staticmethod
    def b_tag(role: str) -> str:
        return f"B-{role}"

    @staticmethod
    def i_tag(role: str) -> str:
        return f"I-{role}"

    def to_dict(self) -> dict:
        return {
            "roles": list(self.roles),
            "groups": {t: sorted(rs) for t, rs in sorted(self.groups.items())},
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "LabelSet":
        return cls(rec["roles"], rec.get("groups", {}))


@dataclass(frozen=True)
class LabelSequence:
    tags: tuple[str, ...]
    score: float | None = None

    def __len__(self) -> int:
        return len(self.tags)


def bio_wellformed(tags: Sequence[str], label_set: LabelSet) -> bool:
    """True iff no I-role tag starts the sequence or follows a foreign tag."""
    if len(tags) == 0:
        raise ValueError("empty tag sequence")
    prev: str | None = None
    for tag in tags:
        if tag not in label_set:
            raise ValueError(f"unknown tag: {tag!r}")
        if tag.startswith("I-"):
            role = tag[2:]
            if prev not in (f"B-{role}", f"I-{role}"):
                return False
        prev = tag
    return True


def spans_from_tags(tags: Sequence[str]) -> list[tuple[str, int, int]]:
    """Extract (role, start, end) spans from BIO tags.

    Tolerant reading: an I-role with no live span of that role opens one, so
    malformed decoder output still yields usable spans.
    """
    spans: list[tuple[str, int, int]] = []
    open_role: str | None = None
    start = 0
    for i, tag in enumerate(tags):
        if tag == OUTSIDE:
            if open_role is not None:
                spans.append((open_role, start, i))
                open_role = None
            continue
        role = tag[2:]
        if tag.startswith("B-") or role != open_role:
            if open_role is not None:
                spans.append((open_role, start, i))
            open_role = role
            start = i
    if open_role is not None:
        spans.append((open_role, start, len(tags)))
    return spans


@dataclass(frozen=True)
class Argument:
    role: str
    start: int
    end: int

    def to_dict(self, surfaces: Sequence[str] | None = None) -> dict:
        rec: dict = {"role": self.role, "span": [self.start, self.end]}
        if surfaces is not None:
            rec["text"] = " ".join(surfaces[self.start:self.end])
        return rec


@dataclass(frozen=True)
class EventMention:
    event_type: str
    arguments: tuple[Argument, ...]
    positive: bool = True

    def __post_init__(self) -> None:
        roles = [a.role for a in self.arguments]
        if len(set(roles)) != len(roles):
            raise ValueError(f"mention {self.event_type}: duplicate argument roles")
        spans = sorted((a.start, a.end) for a in self.arguments)
        for (s1, e1), (s2, _) in zip(spans, spans[1:]):
            if s2 < e1:
                raise ValueError(
                    f"mention {self.event_type}: overlapping argument spans"
                )


# ---------------------------------------------------------------------------
# File formats. Corpus files are JSONL with one sentence per line; table
# files hold either one table object or a list of them. JSONL outputs may
# start with a {"_header": ...} line which readers skip.
# ---------------------------------------------------------------------------

def read_jsonl(path: str) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if isinstance(rec, dict) and "_header" in rec:
                continue
            yield rec


def write_jsonl(path: str, records: Iterable[Mapping], header: Mapping | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(json.dumps({"_header": dict(header)}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_corpus(path: str) -> list[ParsedSentence]:
    sentences = []
    for rec in read_jsonl(path):
        try:
            sentences.append(ParsedSentence.from_dict(rec))
        except KeyError as exc:
            raise ValueError(f"{path}: corpus record missing field {exc}") from exc
    return sentences


def write_corpus(path: str, sentences: Iterable[ParsedSentence], header: Mapping | None = None) -> None:
    write_jsonl(path, (s.to_dict() for s in sentences), header=header)


def read_tables(path: str) -> list[EventTable]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    if isinstance(payload, dict):
        payload = [payload]
    return [EventTable.from_dict(rec) for rec in payload]


def write_tables(path: str, tables: Sequence[EventTable]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([t.to_dict() for t in tables], fh, indent=2)
        fh.write("\n")
