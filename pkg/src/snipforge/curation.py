"""Exact and near deduplication, validation, and manual review sampling."""

import csv
import logging
import math
import random
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from datasketch import MinHash, MinHashLSH

from snipforge import constants
from snipforge.errors import ExportError
from snipforge.models import DataPoint, DedupReport, TimeWindow, ValidationReason, ValidationResult
from snipforge.utils import count_words, strip_line_ends

logger = logging.getLogger(__name__)

WORKSHEET_COLUMNS = ["point_id", "repository", "fun_name", "docstring", "code", "verdict", "reviewer", "notes"]
ACCEPT = "accept"
REJECT = "reject"


class TokenEncoder(Protocol):
    def encode_ids(self, text: str) -> list[int]: ...


# -------------------------Exact------------------------- #


def dedup_exact(points: Sequence[DataPoint]) -> tuple[list[DataPoint], DedupReport]:
    """Keep the first point of every group whose code matches once trailing whitespace is stripped."""
    seen: set[str] = set()
    kept = []
    for point in points:
        key = strip_line_ends(point.code)
        if key in seen:
            continue
        seen.add(key)
        kept.append(point)

    report = DedupReport(input_count=len(points), exact_removed=len(points) - len(kept))
    logger.info("Exact dedup: %d -> %d", len(points), len(kept))
    return kept, report


# -------------------------Near------------------------- #


def jaccard(tokens_a: Iterable[int], tokens_b: Iterable[int]) -> float:
    """|A & B| / |A | B|, with two empty sets counted as identical."""
    set_a = tokens_a if isinstance(tokens_a, (set, frozenset)) else set(tokens_a)
    set_b = tokens_b if isinstance(tokens_b, (set, frozenset)) else set(tokens_b)
    if not set_a and not set_b:
        return 1.0
    union = len(set_a | set_b)
    return len(set_a & set_b) / union


def _prefix_length(size: int, threshold: float) -> int:
    # Two sets reaching the threshold share a token within these prefixes
    return max(size - math.ceil(threshold * size - 1e-9) + 1, 1)


class _PrefixIndex:
    """Exact candidate index: sets are ordered rarest token first and indexed by their prefix."""

    def __init__(self, token_sets: Sequence[frozenset[int]], threshold: float):
        frequency = Counter(token for tokens in token_sets for token in tokens)
        self._rank = {token: (count, token) for token, count in frequency.items()}
        self._threshold = threshold
        self._postings: dict[int, list[int]] = defaultdict(list)

    def _prefix(self, tokens: frozenset[int]) -> list[int]:
        ordered = sorted(tokens, key=lambda token: self._rank.get(token, (0, token)))
        return ordered[: _prefix_length(len(ordered), self._threshold)]

    def candidates(self, tokens: frozenset[int]) -> set[int]:
        found: set[int] = set()
        for token in self._prefix(tokens):
            found.update(self._postings.get(token, ()))
        return found

    def add(self, slot: int, tokens: frozenset[int]) -> None:
        for token in self._prefix(tokens):
            self._postings[token].append(slot)


class _MinHashIndex:
    """Approximate candidate index over MinHash LSH bands."""

    def __init__(self, threshold: float, num_perm: int = 128):
        self._lsh = MinHashLSH(threshold=threshold, num_perm=num_perm)
        self._num_perm = num_perm

    def _signature(self, tokens: frozenset[int]) -> MinHash:
        minhash = MinHash(num_perm=self._num_perm, seed=1)
        for token in sorted(tokens):
            minhash.update(str(token).encode("utf-8"))
        return minhash

    def candidates(self, tokens: frozenset[int]) -> set[int]:
        return {int(key) for key in self._lsh.query(self._signature(tokens))}

    def add(self, slot: int, tokens: frozenset[int]) -> None:
        self._lsh.insert(str(slot), self._signature(tokens))


def dedup_near(
    points: Sequence[DataPoint],
    threshold: float = constants.SIMILARITY_THRESHOLD,
    *,
    tokenizer: TokenEncoder,
    exact_limit: int = constants.EXACT_PAIRWISE_LIMIT,
    index: str = "prefix",
) -> tuple[list[DataPoint], DedupReport]:
    """Greedily drop points too similar to an already kept point.

    Points are visited in input order; a point is dropped when the Jaccard
    similarity of its BPE token set with any kept point's set reaches the
    threshold. Up to exact_limit points every kept point is compared;
    beyond it a candidate index narrows the comparisons, and every
    candidate is still verified with the exact similarity.

    Args:
        points: Points in mining order.
        threshold: Similarity in (0, 1] at which a point counts as a duplicate.
        tokenizer: Anything with encode_ids(text) -> list of token ids.
        exact_limit: Largest input compared against every kept point.
        index: "prefix" (exact) or "minhash" (approximate recall) above exact_limit.

    Returns:
        The kept points and the report.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")

    token_sets = [frozenset(tokenizer.encode_ids(point.code)) for point in points]
    kept_slots: list[int] = []

    if len(points) <= exact_limit:
        for slot, tokens in enumerate(token_sets):
            if all(jaccard(tokens, token_sets[other]) < threshold for other in kept_slots):
                kept_slots.append(slot)
    else:
        logger.info("Near dedup over %d points uses the %s candidate index", len(points), index)
        candidate_index = _MinHashIndex(threshold) if index == "minhash" else _PrefixIndex(token_sets, threshold)
        kept_empty = False
        for slot, tokens in enumerate(token_sets):
            if not tokens:
                if kept_empty:
                    continue
                kept_empty = True
                kept_slots.append(slot)
                continue
            candidates = candidate_index.candidates(tokens)
            if any(jaccard(tokens, token_sets[other]) >= threshold for other in candidates):
                continue
            candidate_index.add(slot, tokens)
            kept_slots.append(slot)

    kept = [points[slot] for slot in kept_slots]
    report = DedupReport(input_count=len(points), near_removed=len(points) - len(kept), threshold=threshold)
    logger.info("Near dedup at %.2f: %d -> %d", threshold, len(points), len(kept))
    return kept, report


# -------------------------Validation------------------------- #


def validate_point(
    point: DataPoint,
    window: TimeWindow,
    require_doc: bool = False,
    min_doc_words: int = constants.MIN_DOCSTRING_WORDS,
) -> ValidationResult:
    reasons = []
    if not window.contains(point.committer_date):
        reasons.append(ValidationReason.OUT_OF_WINDOW)
    if require_doc and point.doc_profile.n_words <= min_doc_words:
        reasons.append(ValidationReason.SHORT_DOCSTRING)
    if require_doc and not point.doc_language.is_known:
        reasons.append(ValidationReason.LANGUAGE_UNKNOWN)
    if point.nloc == 0:
        reasons.append(ValidationReason.EMPTY_CODE)
    return ValidationResult(point_id=point.point_id, reasons=tuple(reasons))


# -------------------------Manual review------------------------- #


def sample_for_manual_review(
    points: Sequence[DataPoint],
    n: int = constants.REVIEW_SAMPLE_SIZE,
    seed: int = 0,
    worksheet: str | Path | None = None,
    min_doc_words: int = 0,
) -> list[DataPoint]:
    """Draw a uniform sample without replacement and write the review worksheet.

    Args:
        points: Candidate points.
        n: Sample size; all candidates are returned when n exceeds their number.
        seed: Sampling seed.
        worksheet: CSV path for the worksheet; None writes nothing.
        min_doc_words: Only docstrings with more words than this are sampled (0 means all).

    Returns:
        The sampled points.
    """
    if n < 0:
        raise ValueError("n must be >= 0")

    pool = list(points)
    if min_doc_words:
        pool = [point for point in pool if count_words(point.docstring) > min_doc_words]
    sample = pool if n >= len(pool) else random.Random(seed).sample(pool, n)

    if worksheet is not None:
        write_review_worksheet(sample, worksheet)
    return sample


def write_review_worksheet(points: Sequence[DataPoint], path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=WORKSHEET_COLUMNS)
            writer.writeheader()
            for point in points:
                writer.writerow(
                    {
                        "point_id": point.point_id,
                        "repository": point.repository,
                        "fun_name": point.fun_name,
                        "docstring": point.docstring or "",
                        "code": point.code,
                        "verdict": "",
                        "reviewer": "",
                        "notes": "",
                    }
                )
    except OSError as e:
        raise ExportError(f"Cannot write review worksheet {path}: {e}")
    logger.info("Wrote review worksheet with %d point(s) to %s", len(points), path)
    return path


def read_review_verdicts(worksheet: str | Path) -> dict[str, str]:
    """Read point_id -> verdict from a filled-in worksheet, skipping unreviewed rows."""
    verdicts = {}
    with open(worksheet, "r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            verdict = (row.get("verdict") or "").strip().lower()
            if not verdict:
                continue
            if verdict not in (ACCEPT, REJECT):
                logger.warning("Ignoring unknown verdict %r for point %s", verdict, row.get("point_id"))
                continue
            verdicts[row["point_id"]] = verdict
    return verdicts


def apply_review_verdicts(
    points: Sequence[DataPoint], worksheet: str | Path
) -> tuple[list[DataPoint], list[str]]:
    """Remove the points a reviewer rejected.

    Returns:
        The remaining points and the rejected point ids (sorted).
    """
    verdicts = read_review_verdicts(worksheet)
    rejected = {point_id for point_id, verdict in verdicts.items() if verdict == REJECT}
    kept = [point for point in points if point.point_id not in rejected]
    logger.info("Review verdicts: %d reviewed, %d rejected", len(verdicts), len(rejected))
    return kept, sorted(rejected)
