"""Exact constrained sequence decoding with key-argument co-occurrence.

The decoder maximizes the same objective as Viterbi but over the feasible
set defined by four constraints:

  C1  one label per token (implicit: we search label sequences directly),
  C2  adjacent choices chain consistently (implicit for sequences),
  C3  an I-role label must follow B-role or I-role of the same role,
  C4  per event type, either every key role of the type has a B- tag in
      the sequence or none of them does.

C1-C3 are enforced by construction of the transition lattice; C4 is
resolved by branch-and-bound with an admissible bound from the
unconstrained suffix Viterbi scores. Enumeration of next-best solutions
uses no-good cuts that each exclude exactly one full assignment.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from . import crf
from .core import LabelSequence, LabelSet

# Slack for float comparisons between the DP accumulation and the canonical
# left-to-right rescoring of a finished path.
_EPS = 1e-9

_BRUTE_FORCE_LIMIT = 10**7


@dataclass
class DecodeProblem:
    """Inputs to constrained decoding over one sentence."""

    emissions: np.ndarray
    transitions: np.ndarray
    labels: LabelSet
    lambda_factor: float = 0.5
    max_solutions: int = 10

    def __post_init__(self) -> None:
        self.emissions = np.asarray(self.emissions, dtype=np.float64)
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        n_labels = len(self.labels)
        if self.emissions.ndim != 2 or self.emissions.shape[1] != n_labels:
            raise ValueError(
                f"emissions shape {self.emissions.shape} does not match "
                f"{n_labels} labels"
            )
        if self.transitions.shape != (n_labels, n_labels):
            raise ValueError(
                f"transitions shape {self.transitions.shape} does not match "
                f"{n_labels} labels"
            )
        if not (np.isfinite(self.lambda_factor) and self.lambda_factor >= 0):
            raise ValueError("lambda_factor must be non-negative and finite")
        if self.max_solutions < 1:
            raise ValueError("max_solutions must be at least 1")

    @property
    def n(self) -> int:
        return self.emissions.shape[0]


@dataclass
class MultiDecodeResult:
    sequences: list[LabelSequence]
    truncated: bool = False


def transition_lattice(labels: LabelSet) -> tuple[np.ndarray, np.ndarray]:
    """(start_ok, allowed) boolean masks implementing the C3 rules."""
    L = len(labels)
    start_ok = np.ones(L, dtype=bool)
    allowed = np.ones((L, L), dtype=bool)
    for j, tag in enumerate(labels.labels):
        if tag.startswith("I-"):
            role = tag[2:]
            start_ok[j] = False
            for i, prev in enumerate(labels.labels):
                allowed[i, j] = prev in (f"B-{role}", f"I-{role}")
    return start_ok, allowed


def check_constraints(tags, labels: LabelSet) -> list[str]:
    """Independent C1-C4 checker over a finished tag sequence.

    Deliberately a direct scan of the tags, sharing nothing with the
    decoder's lattice construction. Empty result means feasible.
    """
    tags = [t for t in tags]
    violations: list[str] = []
    for i, tag in enumerate(tags):
        if tag not in labels:
            violations.append(f"C1: unknown tag {tag!r} at position {i}")
    if violations:
        return violations
    prev = None
    for i, tag in enumerate(tags):
        if tag.startswith("I-"):
            role = tag[2:]
            if prev not in (f"B-{role}", f"I-{role}"):
                violations.append(f"C3: I-{role} at position {i} has no live {role} span")
        prev = tag
    begun = {t[2:] for t in tags if t.startswith("B-")}
    for event_type, group in sorted(labels.groups.items()):
        present = group & begun
        if present and present != group:
            missing = sorted(group - present)
            violations.append(
                f"C4: event type {event_type} has key roles {sorted(present)} "
                f"without {missing}"
            )
    return violations


def _group_masks(labels: LabelSet) -> tuple[np.ndarray, list[int]]:
    """Per-label began-role bit and per-group role bitmask.

    Roles are numbered by position in labels.roles; only B- tags set bits.
    """
    role_bit = {role: 1 << i for i, role in enumerate(labels.roles)}
    label_bits = np.zeros(len(labels), dtype=np.int64)
    for j, tag in enumerate(labels.labels):
        if tag.startswith("B-"):
            label_bits[j] = role_bit[tag[2:]]
    group_masks = []
    for _, group in sorted(labels.groups.items()):
        mask = 0
        for role in group:
            mask |= role_bit[role]
        group_masks.append(mask)
    return label_bits, group_masks


def _groups_ok(begun: int, group_masks: list[int]) -> bool:
    for mask in group_masks:
        part = begun & mask
        if part and part != mask:
            return False
    return True


def _groups_can_finish(begun: int, group_masks: list[int], remaining: int) -> bool:
    # Every missing role of a started group still needs one position for its
    # B- tag, and distinct roles need distinct positions.
    for mask in group_masks:
        part = begun & mask
        if part and part != mask:
            missing = mask & ~part
            if missing.bit_count() > remaining:
                return False
    return True


def _search(
    prob: DecodeProblem, excluded: frozenset[tuple[int, ...]]
) -> tuple[list[int], float] | None:
    """Best-first branch-and-bound over token positions.

    Returns the optimal feasible (path, canonical score) outside `excluded`,
    or None when every feasible sequence is excluded. Ties between
    co-optimal paths resolve like Viterbi: smallest label index at the
    latest differing position.
    """
    P, A = prob.emissions, prob.transitions
    n, L = P.shape
    start_ok, allowed = transition_lattice(prob.labels)
    label_bits, group_masks = _group_masks(prob.labels)

    # suffix[t][l]: best achievable continuation score from position t+1..n-1
    # given label l at position t, ignoring C4 (admissible bound).
    neg_inf = float("-inf")
    suffix = np.zeros((n, L))
    for t in range(n - 2, -1, -1):
        cont = A + (P[t + 1] + suffix[t + 1])[None, :]
        cont = np.where(allowed, cont, neg_inf)
        suffix[t] = cont.max(axis=1)

    # Search nodes hold (label, parent id); begun-role bitmasks ride in a
    # parallel store keyed by node id.
    nodes: list[tuple[int, int]] = []
    begun_of: dict[int, int] = {}
    heap: list[tuple[float, int, int, int, float, int]] = []
    counter = 0
    for l in range(L):
        if not start_ok[l]:
            continue
        g = float(P[0, l])
        f = g + float(suffix[0, l])
        nodes.append((l, -1))
        nid = len(nodes) - 1
        begun_of[nid] = int(label_bits[l])
        heapq.heappush(heap, (-f, counter, 0, l, g, nid))
        counter += 1

    best_score: float | None = None
    best_paths: list[tuple[int, ...]] = []

    def reconstruct(node_id: int) -> tuple[int, ...]:
        out = []
        while node_id != -1:
            label, node_id = nodes[node_id]
            out.append(label)
        out.reverse()
        return tuple(out)

    while heap:
        neg_f, _, t, l, g, nid = heapq.heappop(heap)
        f = -neg_f
        if best_score is not None and f < best_score - _EPS:
            break
        begun = begun_of.pop(nid)
        if t == n - 1:
            if not _groups_ok(begun, group_masks):
                continue
            path = reconstruct(nid)
            if path in excluded:
                continue
            canonical = crf.seq_score(P, A, list(path))
            if best_score is None or canonical > best_score:
                best_score = canonical
                best_paths = [path]
            elif canonical == best_score:
                best_paths.append(path)
            continue
        remaining = n - t - 2  # positions strictly after t+1
        for nl in range(L):
            if not allowed[l, nl]:
                continue
            ng = g + float(A[l, nl]) + float(P[t + 1, nl])
            nf = ng + float(suffix[t + 1, nl])
            if best_score is not None and nf < best_score - _EPS:
                continue
            nbegun = begun | int(label_bits[nl])
            if not _groups_can_finish(nbegun, group_masks, remaining):
                continue
            nodes.append((nl, nid))
            new_id = len(nodes) - 1
            begun_of[new_id] = nbegun
            heapq.heappush(heap, (-nf, counter, t + 1, nl, ng, new_id))
            counter += 1

    if best_score is None:
        return None
    winner = min(best_paths, key=lambda p: tuple(reversed(p)))
    return list(winner), best_score


def _to_sequence(prob: DecodeProblem, path: list[int], score: float) -> LabelSequence:
    return LabelSequence(tags=tuple(prob.labels.labels[i] for i in path), score=score)


def ilp_decode(prob: DecodeProblem) -> LabelSequence:
    """Optimal feasible label sequence under C1-C4."""
    result = _search(prob, frozenset())
    if result is None:
        raise RuntimeError("no feasible sequence; the all-O sequence should exist")
    path, score = result
    return _to_sequence(prob, path, score)


def ilp_decode_multi(prob: DecodeProblem) -> MultiDecodeResult:
    """Enumerate near-optimal feasible sequences for multi-typed events.

    Solves repeatedly, each round excluding all previous assignments with a
    no-good cut, and stops before the first solution whose gap to the best
    exceeds lambda_factor * sentence length. Scores are non-increasing.
    """
    first = _search(prob, frozenset())
    if first is None:
        raise RuntimeError("no feasible sequence; the all-O sequence should exist")
    threshold = prob.lambda_factor * prob.n
    paths = [first]
    excluded = {tuple(first[0])}
    truncated = False
    while True:
        nxt = _search(prob, frozenset(excluded))
        if nxt is None:
            break
        if first[1] - nxt[1] > threshold:
            break
        if len(paths) >= prob.max_solutions:
            truncated = True
            break
        paths.append(nxt)
        excluded.add(tuple(nxt[0]))
    return MultiDecodeResult(
        sequences=[_to_sequence(prob, p, s) for p, s in paths],
        truncated=truncated,
    )


def _enumerate_feasible(
    prob: DecodeProblem, excluded: frozenset[tuple[int, ...]]
) -> tuple[np.ndarray, np.ndarray]:
    """All feasible label index sequences (rows) with vectorized scores."""
    P, A = prob.emissions, prob.transitions
    n, L = P.shape
    total = L**n
    if total > _BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"instance too large for brute force: {L}^{n} > {_BRUTE_FORCE_LIMIT}"
        )
    start_ok, allowed = transition_lattice(prob.labels)
    label_bits, group_masks = _group_masks(prob.labels)

    powers = L ** np.arange(n - 1, -1, -1, dtype=np.int64)
    seqs = (np.arange(total, dtype=np.int64)[:, None] // powers[None, :]) % L

    ok = start_ok[seqs[:, 0]].copy()
    for i in range(n - 1):
        ok &= allowed[seqs[:, i], seqs[:, i + 1]]
    bits = np.zeros(total, dtype=np.int64)
    for i in range(n):
        bits |= label_bits[seqs[:, i]]
    for mask in group_masks:
        part = bits & mask
        ok &= (part == 0) | (part == mask)
    for path in excluded:
        ok &= ~(seqs == np.asarray(path, dtype=np.int64)[None, :]).all(axis=1)

    seqs = seqs[ok]
    scores = P[np.arange(n)[None, :], seqs].sum(axis=1)
    if n > 1:
        scores = scores + A[seqs[:, :-1], seqs[:, 1:]].sum(axis=1)
    return seqs, scores


def brute_force_decode(
    prob: DecodeProblem,
    ranking: bool = False,
    excluded: frozenset[tuple[int, ...]] = frozenset(),
):
    """Exhaustive feasible-set oracle.

    Returns the best feasible LabelSequence, or with ranking=True the full
    feasible list sorted by descending canonical score (ties in the same
    latest-position order the branch-and-bound uses).
    """
    P, A = prob.emissions, prob.transitions
    seqs, scores = _enumerate_feasible(prob, excluded)
    if seqs.shape[0] == 0:
        if ranking:
            return []
        return None
    if ranking:
        rescored = [
            (crf.seq_score(P, A, list(row)), tuple(int(v) for v in row))
            for row in seqs
        ]
        rescored.sort(key=lambda item: (-item[0], tuple(reversed(item[1]))))
        return [_to_sequence(prob, list(path), s) for s, path in rescored]
    # Rescore only the near-optimal rows canonically, then tie-break.
    top = scores.max()
    candidates = [
        (crf.seq_score(P, A, list(row)), tuple(int(v) for v in row))
        for row in seqs[scores >= top - 1e-6]
    ]
    best = max(s for s, _ in candidates)
    winner = min(
        (path for s, path in candidates if s == best),
        key=lambda p: tuple(reversed(p)),
    )
    return _to_sequence(prob, list(winner), best)
