"""Randomized brute-force verification suites.

Each check pits a production code path against an independent oracle:
exhaustive enumeration for decoding and the partition function, central
finite differences for gradients. The CLI `oracle` subcommand and the
acceptance tests both run these.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import crf, ilp, neural
from .core import LabelSet


@dataclass
class OracleReport:
    name: str
    trials: int
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "ok" if self.ok else f"FAILED ({len(self.failures)} mismatches)"
        return f"{self.name}: {self.trials} trials, {status}"


def random_label_set(rng: np.random.Generator, max_labels: int = 5, n_groups: int = 2) -> LabelSet:
    """Random BIO label set with key-argument groups, at most max_labels tags."""
    max_roles = max(1, (max_labels - 1) // 2)
    n_roles = int(rng.integers(1, max_roles + 1))
    roles = [f"r{i}" for i in range(n_roles)]
    groups = {}
    for g in range(int(rng.integers(1, n_groups + 1))):
        size = int(rng.integers(1, n_roles + 1))
        chosen = rng.choice(n_roles, size=size, replace=False)
        groups[f"t{g}"] = {roles[int(i)] for i in chosen}
    return LabelSet(roles, groups)


def random_problem(
    rng: np.random.Generator,
    max_len: int = 6,
    max_labels: int = 5,
    n_groups: int = 2,
) -> ilp.DecodeProblem:
    labels = random_label_set(rng, max_labels=max_labels, n_groups=n_groups)
    n = int(rng.integers(1, max_len + 1))
    P = rng.normal(size=(n, len(labels)))
    A = rng.normal(size=(len(labels), len(labels)))
    return ilp.DecodeProblem(P, A, labels)


def check_ilp(trials: int = 500, seed: int = 0) -> OracleReport:
    """ilp_decode must match the exhaustive feasible-set argmax exactly."""
    rng = np.random.default_rng(seed)
    report = OracleReport("ilp-vs-brute-force", trials)
    for trial in range(trials):
        prob = random_problem(rng)
        got = ilp.ilp_decode(prob)
        want = ilp.brute_force_decode(prob)
        if got.score != want.score or got.tags != want.tags:
            report.failures.append(
                f"trial {trial}: branch-and-bound {got.score} {got.tags} vs "
                f"brute force {want.score} {want.tags}"
            )
    return report


def check_viterbi(trials: int = 500, seed: int = 0) -> OracleReport:
    """Unconstrained Viterbi must match exhaustive argmax, ties included."""
    rng = np.random.default_rng(seed)
    report = OracleReport("viterbi-vs-enumeration", trials)
    for trial in range(trials):
        n = int(rng.integers(1, 7))
        L = int(rng.integers(1, 6))
        P = rng.normal(size=(n, L))
        A = rng.normal(size=(L, L))
        path, score = crf.viterbi(P, A)
        best_score = float("-inf")
        best_path: tuple[int, ...] | None = None
        for cand in itertools.product(range(L), repeat=n):
            s = crf.seq_score(P, A, list(cand))
            key = tuple(reversed(cand))
            if s > best_score or (
                s == best_score and key < tuple(reversed(best_path))
            ):
                best_score = s
                best_path = cand
        if tuple(path) != best_path or score != best_score:
            report.failures.append(
                f"trial {trial}: viterbi {score} {path} vs enumeration "
                f"{best_score} {list(best_path)}"
            )
    return report


def check_partition(trials: int = 200, seed: int = 0, rel_tol: float = 1e-9) -> OracleReport:
    """Forward-algorithm log partition vs the brute-force log-sum."""
    rng = np.random.default_rng(seed)
    report = OracleReport("partition-vs-enumeration", trials)
    for trial in range(trials):
        n = int(rng.integers(1, 7))
        L = int(rng.integers(1, 5))
        P = rng.normal(size=(n, L))
        A = rng.normal(size=(L, L))
        got = crf.log_partition(P, A)
        scores = np.array(
            [crf.seq_score(P, A, list(c)) for c in itertools.product(range(L), repeat=n)]
        )
        m = scores.max()
        want = float(m + np.log(np.exp(scores - m).sum()))
        rel = abs(got - want) / max(1.0, abs(want))
        if rel > rel_tol:
            report.failures.append(f"trial {trial}: {got} vs {want} (rel {rel:.2e})")
    return report


def check_crf_gradients(seeds: int = 10, abs_tol: float = 1e-5) -> OracleReport:
    """NLL gradients for P and A vs central finite differences."""
    report = OracleReport("crf-gradients", seeds)
    eps = 1e-5
    for seed in range(seeds):
        rng = np.random.default_rng(1000 + seed)
        n, L = 4, 3
        P = rng.normal(size=(n, L))
        A = rng.normal(size=(L, L))
        gold = [int(g) for g in rng.integers(0, L, size=n)]
        _, dP, dA = crf.nll_loss_and_grads(P, A, gold)

        def loss_at(P_, A_):
            alpha_loss, _, _ = crf.nll_loss_and_grads(P_, A_, gold)
            return alpha_loss

        worst = 0.0
        for mat, grad, which in ((P, dP, "P"), (A, dA, "A")):
            it = np.nditer(mat, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = mat[idx]
                mat[idx] = orig + eps
                hi = loss_at(P, A)
                mat[idx] = orig - eps
                lo = loss_at(P, A)
                mat[idx] = orig
                numeric = (hi - lo) / (2 * eps)
                worst = max(worst, abs(numeric - grad[idx]))
                it.iternext()
        if worst > abs_tol:
            report.failures.append(f"seed {seed}: max abs error {worst:.3e}")
    return report


def check_blstm_gradients(seeds: int = 10, rel_tol: float = 1e-3) -> OracleReport:
    """All network parameter gradients vs central finite differences.

    The loss is sum(P * R) for a fixed random R, which makes dLoss/dP = R
    and exercises backward() in isolation. Dropout is off so the loss is a
    smooth deterministic function of the parameters.
    """
    report = OracleReport("blstm-gradients", seeds)
    eps = 1e-4
    for seed in range(seeds):
        rng = np.random.default_rng(2000 + seed)
        use_keyargs = seed % 2 == 1
        vocab = {neural.UNK: 0, "a": 1, "b": 2, "c": 3, "d": 4}
        cfg = neural.ModelConfig(
            vocab=vocab,
            num_labels=3,
            embed_dim=5,
            lstm_hidden=4,
            keyarg_embed_dim=3 if use_keyargs else 0,
            num_keyarg_labels=4 if use_keyargs else 0,
            dropout_rate=0.0,
        )
        params = neural.init_params(cfg, rng)
        token_ids = [int(t) for t in rng.integers(0, len(vocab), size=4)]
        keyarg_ids = (
            [int(k) for k in rng.integers(0, 4, size=4)] if use_keyargs else None
        )
        R = rng.normal(size=(4, cfg.num_labels))

        P, cache = neural.forward(token_ids, params, cfg, keyarg_ids=keyarg_ids)
        grads = neural.backward(cache, R)

        def loss() -> float:
            out, _ = neural.forward(token_ids, params, cfg, keyarg_ids=keyarg_ids)
            return float((out * R).sum())

        worst = 0.0
        for name in sorted(params):
            mat = params[name]
            it = np.nditer(mat, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = mat[idx]
                mat[idx] = orig + eps
                hi = loss()
                mat[idx] = orig - eps
                lo = loss()
                mat[idx] = orig
                numeric = (hi - lo) / (2 * eps)
                analytic = grads[name][idx]
                denom = max(abs(numeric), abs(analytic), 1e-3)
                worst = max(worst, abs(numeric - analytic) / denom)
                it.iternext()
        if worst > rel_tol:
            report.failures.append(f"seed {seed}: max rel error {worst:.3e}")
    return report


CHECKS = {
    "ilp": check_ilp,
    "viterbi": check_viterbi,
    "partition": check_partition,
    "crf-gradients": check_crf_gradients,
    "blstm-gradients": check_blstm_gradients,
}


def run_checks(names, trials: int | None = None, seed: int = 0) -> list[OracleReport]:
    reports = []
    for name in names:
        if name not in CHECKS:
            raise ValueError(f"unknown check {name!r}; choose from {sorted(CHECKS)}")
        fn = CHECKS[name]
        kwargs: dict = {}
        if name in ("ilp", "viterbi", "partition"):
            kwargs["seed"] = seed
            if trials is not None:
                kwargs["trials"] = trials
        elif trials is not None:
            kwargs["seeds"] = trials
        reports.append(fn(**kwargs))
    return reports
