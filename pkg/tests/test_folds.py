import random
from collections import Counter

import pytest

from toneprobe.corpus import ToneToken
from toneprobe.folds import (
    FoldError,
    build_dialect_folds,
    build_speaker_folds,
    load_plan,
    save_plan,
    validate_plan,
)


def make_tokens(speaker_mixes, dialect_of=None):
    """speaker_mixes: {speaker: {tone: count}} -> flat token list."""
    tokens = []
    for spk in speaker_mixes:
        dialect = (dialect_of or {}).get(spk, "d0")
        i = 0
        for tone, count in speaker_mixes[spk].items():
            for _ in range(count):
                tokens.append(ToneToken(f"{spk}#%03d" % i, f"u_{spk}", spk, dialect, tone, 0.0, 0.1))
                i += 1
    return tokens


def symmetric_corpus(n_speakers=8, per_class=5, classes=("A", "B", "C")):
    return make_tokens({f"s{i}": {c: per_class for c in classes} for i in range(n_speakers)})


def random_corpus(rng, n_speakers, classes):
    mixes = {f"s{i}": {c: rng.randint(1, 20) for c in classes} for i in range(n_speakers)}
    return make_tokens(mixes)


def test_symmetric_corpus_two_speakers_per_fold_zero_divergence():
    tokens = symmetric_corpus()
    plan = build_speaker_folds(tokens, k=4, seed=1)
    per_fold = Counter(plan.group_map.values())
    assert sorted(per_fold.values()) == [2, 2, 2, 2]
    validation = validate_plan(plan, tokens)
    assert validation.ok
    assert all(d == 0.0 for d in validation.stats.divergence.values())


def test_four_speakers_one_per_fold():
    tokens = symmetric_corpus(n_speakers=4)
    plan = build_speaker_folds(tokens, k=4, seed=9)
    assert sorted(plan.group_map.values()) == [0, 1, 2, 3]


def test_fewer_speakers_than_k():
    tokens = symmetric_corpus(n_speakers=3)
    with pytest.raises(FoldError, match="3 speakers"):
        build_speaker_folds(tokens, k=4, seed=0)


def test_greedy_beats_best_of_random_assignments():
    rng = random.Random(314)
    tokens = random_corpus(rng, 20, ("A", "B", "C", "D"))
    plan = build_speaker_folds(tokens, k=4, seed=42)
    greedy_max = validate_plan(plan, tokens).stats.max_divergence

    speakers = sorted({t.speaker_id for t in tokens})
    best_random = float("inf")
    for _ in range(1000):
        group_map = {s: rng.randrange(4) for s in speakers}
        if len(set(group_map.values())) < 4:
            continue
        by_fold = [Counter() for _ in range(4)]
        for t in tokens:
            by_fold[group_map[t.speaker_id]][t.tone] += 1
        total = len(tokens)
        props = {c: n / total for c, n in Counter(t.tone for t in tokens).items()}
        worst = max(
            sum(abs(f.get(c, 0) / sum(f.values()) - p) for c, p in props.items()) for f in by_fold
        )
        best_random = min(best_random, worst)
    assert greedy_max <= best_random


def test_speaker_plan_deterministic_serialization(tmp_path):
    tokens = symmetric_corpus(n_speakers=10)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_plan(build_speaker_folds(tokens, k=4, seed=7), a)
    save_plan(build_speaker_folds(tokens, k=4, seed=7), b)
    assert a.read_bytes() == b.read_bytes()
    assert load_plan(a) == load_plan(b)
    save_plan(build_speaker_folds(tokens, k=4, seed=8), b)
    assert a.read_bytes() != b.read_bytes()  # seed recorded in the plan


def test_speaker_plan_class_coverage_failure():
    # one class held by a single speaker: some fold must lack it
    mixes = {f"s{i}": {"A": 3} for i in range(8)}
    mixes["s0"] = {"A": 3, "B": 2}
    tokens = make_tokens(mixes)
    with pytest.raises(FoldError, match="class"):
        build_speaker_folds(tokens, k=4, seed=0)


def dialect_corpus(dialects, speakers_per=2, classes=("A", "B")):
    mixes, dialect_of = {}, {}
    for d in dialects:
        for j in range(speakers_per):
            spk = f"{d}_s{j}"
            mixes[spk] = {c: 4 for c in classes}
            dialect_of[spk] = d
    return make_tokens(mixes, dialect_of)


def test_dialect_paper_mode_three_dialects():
    tokens = dialect_corpus(["chungli", "changki", "mongsen"])
    plan = build_dialect_folds(tokens, train_dialect_count=2)
    instances = plan.evaluation_instances()
    assert len(instances) == 3
    assert all(len(train) == 2 for _, train in instances)
    assert {test for test, _ in instances} == {0, 1, 2}


def test_dialect_default_two_dialects():
    tokens = dialect_corpus(["north", "south"])
    plan = build_dialect_folds(tokens)
    assert plan.evaluation_instances() == [(0, (1,)), (1, (0,))]


def test_dialect_four_dialects_pairs():
    tokens = dialect_corpus(["a", "b", "c", "d"])
    plan = build_dialect_folds(tokens, train_dialect_count=2)
    instances = plan.evaluation_instances()
    assert len(instances) == 12  # 4 test dialects x C(3,2) training pairs
    assert len(set(instances)) == 12


def test_dialect_errors():
    tokens = dialect_corpus(["only"])
    with pytest.raises(FoldError, match="2 dialects"):
        build_dialect_folds(tokens)
    tokens = dialect_corpus(["a", "b", "c"])
    with pytest.raises(FoldError, match="train_dialect_count"):
        build_dialect_folds(tokens, train_dialect_count=3)


def test_validate_plan_detects_split_group():
    tokens = symmetric_corpus(n_speakers=4)
    plan = build_speaker_folds(tokens, k=4, seed=0)
    victim = tokens[0]
    plan.assignment[victim.token_id] = (plan.assignment[victim.token_id] + 1) % 4
    validation = validate_plan(plan, tokens)
    assert not validation.ok
    assert any(victim.speaker_id in v and "split" in v for v in validation.violations)


def test_validate_plan_detects_unassigned():
    tokens = symmetric_corpus(n_speakers=4)
    plan = build_speaker_folds(tokens, k=4, seed=0)
    del plan.assignment[tokens[0].token_id]
    validation = validate_plan(plan, tokens)
    assert any("unassigned" in v for v in validation.violations)


def test_validate_plan_counts_sum():
    tokens = symmetric_corpus(n_speakers=8)
    plan = build_speaker_folds(tokens, k=4, seed=3)
    validation = validate_plan(plan, tokens)
    assert validation.ok
    assert validation.stats.total == len(tokens)


def test_random_corpora_partition_and_coverage():
    rng = random.Random(2718)
    for trial in range(30):
        n_speakers = rng.randint(5, 50)
        classes = tuple("ABCDE"[: rng.randint(2, 5)])
        tokens = random_corpus(rng, n_speakers, classes)
        plan = build_speaker_folds(tokens, k=4, seed=trial)
        validation = validate_plan(plan, tokens)
        assert validation.ok, validation.violations
        assert set(plan.assignment) == {t.token_id for t in tokens}
