"""Deterministic cross-validation fold plans.

Speaker-independent mode assigns whole speakers to K folds with a greedy
heuristic that keeps each fold's tone proportions close to the global
ones (exactly balanced group partitions are NP-hard, so the achieved
divergence is reported, never assumed). Dialect-independent mode holds out
entire dialects, optionally enumerating fixed-size training combinations.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from .corpus import ToneToken

SPEAKER_MODE = "speaker_independent"
DIALECT_MODE = "dialect_independent"
DEFAULT_SEED = 42


class FoldError(Exception):
    pass


@dataclass
class FoldPlan:
    mode: str
    k: int
    seed: int
    group_map: dict[str, int]
    assignment: dict[str, int]
    # (test_fold, train_folds) pairs; None means plain leave-one-fold-out
    instances: tuple[tuple[int, tuple[int, ...]], ...] | None = None

    def evaluation_instances(self) -> list[tuple[int, tuple[int, ...]]]:
        if self.instances is not None:
            return list(self.instances)
        return [(f, tuple(g for g in range(self.k) if g != f)) for f in range(self.k)]

    def group_of(self, token: ToneToken) -> str:
        return token.speaker_id if self.mode == SPEAKER_MODE else token.dialect


@dataclass
class FoldStats:
    counts: dict[int, dict[str, int]]  # fold -> tone -> tokens
    divergence: dict[int, float]  # fold -> L1 distance to global proportions

    @property
    def total(self) -> int:
        return sum(sum(c.values()) for c in self.counts.values())

    @property
    def max_divergence(self) -> float:
        return max(self.divergence.values()) if self.divergence else 0.0


@dataclass
class PlanValidation:
    stats: FoldStats | None
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def _l1_divergence(counts: Counter, total: int, global_props: dict[str, float]) -> float:
    return sum(abs(counts.get(c, 0) / total - p) for c, p in global_props.items())


def build_speaker_folds(tokens: list[ToneToken], k: int = 4, seed: int = DEFAULT_SEED) -> FoldPlan:
    """Greedy stratified assignment of speakers to k folds.

    Speakers are taken in descending token count (ties shuffled by seed);
    each goes to the fold minimizing, lexicographically: number of still
    empty folds, total L1 divergence of fold tone proportions from global
    proportions, resulting fold size, fold index. Every fold must end up
    with every tone class present globally.
    """
    if k < 2:
        raise FoldError(f"need k >= 2, got {k}")
    by_speaker: dict[str, list[ToneToken]] = {}
    for tok in tokens:
        by_speaker.setdefault(tok.speaker_id, []).append(tok)
    if len(by_speaker) < k:
        raise FoldError(f"{len(by_speaker)} speakers cannot fill {k} folds")

    global_counts = Counter(t.tone for t in tokens)
    total = len(tokens)
    global_props = {c: n / total for c, n in global_counts.items()}

    speakers = list(by_speaker)
    random.Random(seed).shuffle(speakers)
    speakers.sort(key=lambda s: -len(by_speaker[s]))  # stable: ties stay shuffled

    fold_counts = [Counter() for _ in range(k)]
    fold_sizes = [0] * k
    group_map: dict[str, int] = {}
    for spk in speakers:
        spk_counts = Counter(t.tone for t in by_speaker[spk])
        spk_size = len(by_speaker[spk])
        best: tuple | None = None
        for f in range(k):
            sizes = list(fold_sizes)
            sizes[f] += spk_size
            empties = sum(1 for s in sizes if s == 0)
            divergence = 0.0
            for g in range(k):
                if sizes[g] == 0:
                    continue
                counts = fold_counts[g] + spk_counts if g == f else fold_counts[g]
                divergence += _l1_divergence(counts, sizes[g], global_props)
            key = (empties, divergence, sizes[f], f)
            if best is None or key < best:
                best = key
        f = best[3]
        group_map[spk] = f
        fold_counts[f] += spk_counts
        fold_sizes[f] += spk_size

    for f in range(k):
        missing = [c for c in sorted(global_counts) if fold_counts[f][c] == 0]
        if missing:
            raise FoldError(
                f"fold {f} has no tokens of class(es) {', '.join(missing)}; "
                f"a stratified {k}-fold speaker partition is not attainable"
            )

    assignment = {t.token_id: group_map[t.speaker_id] for t in tokens}
    return FoldPlan(SPEAKER_MODE, k, seed, group_map, assignment)


def build_dialect_folds(
    tokens: list[ToneToken],
    train_dialect_count: int | None = None,
    seed: int = DEFAULT_SEED,
) -> FoldPlan:
    """Leave-one-dialect-out folds; with train_dialect_count, every
    evaluation instance trains on exactly that many of the other dialects
    (all combinations enumerated)."""
    dialects = sorted({t.dialect for t in tokens})
    if len(dialects) < 2:
        raise FoldError(f"need >= 2 dialects, got {dialects}")
    k = len(dialects)
    group_map = {d: i for i, d in enumerate(dialects)}
    assignment = {t.token_id: group_map[t.dialect] for t in tokens}
    instances = None
    if train_dialect_count is not None:
        if not 1 <= train_dialect_count < k:
            raise FoldError(
                f"train_dialect_count {train_dialect_count} must be in [1, {k - 1}] "
                f"for {k} dialects"
            )
        if train_dialect_count < k - 1:
            instances = tuple(
                (f, combo)
                for f in range(k)
                for combo in combinations([g for g in range(k) if g != f], train_dialect_count)
            )
    return FoldPlan(DIALECT_MODE, k, seed, group_map, assignment, instances)


def validate_plan(plan: FoldPlan, tokens: list[ToneToken]) -> PlanValidation:
    """Recompute every plan invariant from scratch."""
    violations: list[str] = []
    counts: dict[int, Counter] = {f: Counter() for f in range(plan.k)}
    group_folds: dict[str, set[int]] = {}
    token_ids = set()
    for tok in tokens:
        token_ids.add(tok.token_id)
        fold = plan.assignment.get(tok.token_id)
        if fold is None:
            violations.append(f"unassigned token {tok.token_id!r}")
            continue
        if not 0 <= fold < plan.k:
            violations.append(f"token {tok.token_id!r} assigned to invalid fold {fold}")
            continue
        counts[fold][tok.tone] += 1
        group_folds.setdefault(plan.group_of(tok), set()).add(fold)
    for tid in plan.assignment:
        if tid not in token_ids:
            violations.append(f"plan references unknown token {tid!r}")
    for group, folds in sorted(group_folds.items()):
        if len(folds) > 1:
            violations.append(f"group {group!r} split across folds {sorted(folds)}")
        mapped = plan.group_map.get(group)
        if mapped is not None and folds != {mapped}:
            violations.append(f"group {group!r} tokens in folds {sorted(folds)}, group_map says {mapped}")
    if plan.mode == SPEAKER_MODE:
        classes = sorted({t.tone for t in tokens})
        for f in range(plan.k):
            for c in classes:
                if counts[f][c] == 0:
                    violations.append(f"fold {f} has no tokens of class {c!r}")
    if violations:
        return PlanValidation(None, violations)

    total = len(tokens)
    global_props = {c: n / total for c, n in Counter(t.tone for t in tokens).items()}
    stats = FoldStats(
        counts={f: dict(sorted(counts[f].items())) for f in range(plan.k)},
        divergence={
            f: _l1_divergence(counts[f], sum(counts[f].values()), global_props) if counts[f] else 0.0
            for f in range(plan.k)
        },
    )
    return PlanValidation(stats, [])


def save_plan(plan: FoldPlan, path: str | Path) -> None:
    doc: dict = {
        "mode": plan.mode,
        "k": plan.k,
        "seed": plan.seed,
        "groups": plan.group_map,
        "tokens": plan.assignment,
    }
    if plan.instances is not None:
        doc["instances"] = [[test, list(train)] for test, train in plan.instances]
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_plan(path: str | Path) -> FoldPlan:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    instances = None
    if "instances" in doc:
        instances = tuple((int(test), tuple(int(g) for g in train)) for test, train in doc["instances"])
    return FoldPlan(
        mode=doc["mode"],
        k=int(doc["k"]),
        seed=int(doc["seed"]),
        group_map={str(g): int(f) for g, f in doc["groups"].items()},
        assignment={str(t): int(f) for t, f in doc["tokens"].items()},
        instances=instances,
    )
