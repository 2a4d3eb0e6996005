import csv
import random
from datetime import date, datetime, timezone

import pytest
from conftest import WordTokenizer, make_point

from snipforge.curation import (
    apply_review_verdicts,
    dedup_exact,
    dedup_near,
    jaccard,
    read_review_verdicts,
    sample_for_manual_review,
    validate_point,
)
from snipforge.models import LanguageTag, LexicalProfile, TimeWindow, ValidationReason

WINDOW = TimeWindow(start=date(2022, 1, 1), end=date(2022, 12, 31))
WORDS = [f"w{index}" for index in range(60)]


def _points_from_codes(codes: list[str]):
    return [make_point(fun_name=f"f{index}", code=code) for index, code in enumerate(codes)]


def _random_codes(count: int, seed: int) -> list[str]:
    rng = random.Random(seed)
    codes = []
    for index in range(count):
        if codes and index % 10 == 0:
            # near copy of an earlier method: one word swapped
            words = rng.choice(codes).split()
            words[rng.randrange(len(words))] = rng.choice(WORDS)
            codes.append(" ".join(words))
        else:
            codes.append(" ".join(rng.sample(WORDS, rng.randint(5, 15))))
    return codes


def _greedy_oracle(codes: list[str], threshold: float) -> list[int]:
    kept: list[int] = []
    for index, code in enumerate(codes):
        words = set(code.split())
        if all(jaccard(words, set(codes[other].split())) < threshold for other in kept):
            kept.append(index)
    return kept


# -------------------------Jaccard------------------------- #


def test_jaccard_properties():
    a, b = {1, 2, 3}, {2, 3, 4, 5}

    assert jaccard(a, a) == 1.0
    assert jaccard(a, b) == jaccard(b, a) == pytest.approx(2 / 5)
    assert jaccard(a, {7, 8}) == 0.0
    assert jaccard(set(), set()) == 1.0
    assert jaccard([1, 1, 2], [2, 2, 1]) == 1.0


def test_jaccard_over_random_sets():
    rng = random.Random(7)
    for _ in range(10_000):
        a = {rng.randrange(30) for _ in range(rng.randint(0, 12))}
        b = {rng.randrange(30) for _ in range(rng.randint(0, 12))}

        similarity = jaccard(a, b)
        assert 0.0 <= similarity <= 1.0
        assert similarity == jaccard(b, a)
        assert jaccard(a, a) == 1.0
        assert (similarity == 1.0) == (a == b)


# -------------------------Exact------------------------- #


def test_exact_dedup_keeps_first_of_each_group():
    points = _points_from_codes(["def a():\n    pass", "def a():   \n    pass  ", "def b():\n    pass"])

    kept, report = dedup_exact(points)

    assert [point.fun_name for point in kept] == ["f0", "f2"]
    assert report.input_count == 3
    assert report.exact_removed == 1


# -------------------------Near------------------------- #


def test_near_dedup_drops_similar_points_in_input_order():
    points = _points_from_codes(["a b c d e", "a b c d f", "x y z"])

    kept, report = dedup_near(points, 0.6, tokenizer=WordTokenizer())

    # a b c d e vs a b c d f: 4 / 6 = 0.67
    assert [point.fun_name for point in kept] == ["f0", "f2"]
    assert report.near_removed == 1
    assert report.threshold == 0.6


def test_near_dedup_threshold_is_inclusive():
    points = _points_from_codes(["a b c d", "a b c e"])  # 3 / 5

    kept_at, _ = dedup_near(points, 0.6, tokenizer=WordTokenizer())
    kept_above, _ = dedup_near(points, 0.61, tokenizer=WordTokenizer())

    assert len(kept_at) == 1
    assert len(kept_above) == 2


def test_near_dedup_matches_greedy_oracle():
    codes = _random_codes(500, seed=11)
    expected = _greedy_oracle(codes, 0.7)
    points = _points_from_codes(codes)

    pairwise, _ = dedup_near(points, 0.7, tokenizer=WordTokenizer(), exact_limit=1000)
    indexed, report = dedup_near(points, 0.7, tokenizer=WordTokenizer(), exact_limit=10)

    assert [point.fun_name for point in pairwise] == [f"f{index}" for index in expected]
    assert indexed == pairwise
    assert report.near_removed == 500 - len(expected)
    assert report.near_removed >= 1


@pytest.mark.parametrize("exact_limit", [1000, 10])
def test_near_dedup_is_idempotent(exact_limit):
    points = _points_from_codes(_random_codes(500, seed=11))

    kept, _ = dedup_near(points, 0.7, tokenizer=WordTokenizer(), exact_limit=exact_limit)
    again, report = dedup_near(kept, 0.7, tokenizer=WordTokenizer(), exact_limit=exact_limit)

    assert again == kept
    assert report.near_removed == 0


def test_kept_points_are_pairwise_dissimilar():
    tokenizer = WordTokenizer()
    kept, _ = dedup_near(_points_from_codes(_random_codes(200, seed=3)), 0.5, tokenizer=tokenizer, exact_limit=0)

    token_sets = [set(point.code.split()) for point in kept]
    for index, tokens in enumerate(token_sets):
        for other in token_sets[index + 1 :]:
            assert jaccard(tokens, other) < 0.5


def test_minhash_index_still_catches_identical_token_sets():
    codes = ["a b c d e f", "x y z w", "f e d c b a", "x y z w"]

    kept, _ = dedup_near(_points_from_codes(codes), 0.8, tokenizer=WordTokenizer(), exact_limit=0, index="minhash")

    assert [point.fun_name for point in kept] == ["f0", "f1"]


def test_near_dedup_of_nothing():
    kept, report = dedup_near([], 0.7, tokenizer=WordTokenizer())

    assert kept == []
    assert report.duplicate_pct == 0.0


@pytest.mark.parametrize("threshold", [0.0, -0.1, 1.5])
def test_near_dedup_rejects_out_of_range_threshold(threshold):
    with pytest.raises(ValueError):
        dedup_near([], threshold, tokenizer=WordTokenizer())


# -------------------------Validation------------------------- #


def test_valid_point_passes(point):
    result = validate_point(point, WINDOW, require_doc=True)

    assert result.passed
    assert result.point_id == point.point_id


def test_point_outside_window_fails():
    late = make_point(committer_date=datetime(2023, 1, 1, 0, 0, tzinfo=timezone.utc))

    assert validate_point(late, WINDOW).reasons == (ValidationReason.OUT_OF_WINDOW,)


@pytest.mark.parametrize("n_words, passed", [(3, False), (4, True)])
def test_docstring_word_threshold(n_words, passed):
    point = make_point(doc_profile=LexicalProfile(n_words=n_words, vocab_size=n_words, n_whitespaces=n_words - 1))

    assert validate_point(point, WINDOW, require_doc=True).passed is passed
    assert validate_point(point, WINDOW, require_doc=False).passed


def test_unknown_language_fails_only_when_docs_are_required():
    point = make_point(doc_language=LanguageTag(code="und", confidence=0.4))

    assert validate_point(point, WINDOW, require_doc=True).reasons == (ValidationReason.LANGUAGE_UNKNOWN,)
    assert validate_point(point, WINDOW).passed


def test_empty_code_fails():
    assert ValidationReason.EMPTY_CODE in validate_point(make_point(nloc=0), WINDOW).reasons


# -------------------------Manual review------------------------- #


def test_review_sample_is_seeded_and_bounded(tmp_path):
    points = _points_from_codes([f"code {index}" for index in range(50)])

    first = sample_for_manual_review(points, n=10, seed=5)
    second = sample_for_manual_review(points, n=10, seed=5)
    everything = sample_for_manual_review(points, n=100, seed=5)

    assert first == second
    assert len({point.point_id for point in first}) == 10
    assert everything == points


def test_review_sample_skips_short_docstrings():
    points = [make_point(fun_name="short", docstring="Too short."), make_point(fun_name="long")]

    assert [point.fun_name for point in sample_for_manual_review(points, n=5, min_doc_words=3)] == ["long"]


def test_worksheet_roundtrip_applies_rejections(tmp_path):
    points = _points_from_codes([f"code {index}" for index in range(4)])
    worksheet = tmp_path / "review" / "sheet.csv"
    sample_for_manual_review(points, n=4, seed=0, worksheet=worksheet)

    with open(worksheet, encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    verdicts = {points[0].point_id: "reject", points[1].point_id: "Accept", points[2].point_id: "maybe"}
    for row in rows:
        row["verdict"] = verdicts.get(row["point_id"], "")
    with open(worksheet, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)

    assert read_review_verdicts(worksheet) == {points[0].point_id: "reject", points[1].point_id: "accept"}
    kept, rejected = apply_review_verdicts(points, worksheet)
    assert rejected == [points[0].point_id]
    assert kept == points[1:]
