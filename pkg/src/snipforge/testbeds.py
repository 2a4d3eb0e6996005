"""Testbed construction: filters, RandomCut mutation, dedup and capped sampling."""

import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, Sequence

from snipforge.config import CurationConfig, TestbedConfig
from snipforge.curation import TokenEncoder, dedup_exact, dedup_near
from snipforge.errors import EmptyTestbed, Ineligible
from snipforge.models import CutPair, DataPoint, DedupReport, Task, Testbed, TestbedName
from snipforge.syntax import first_definition, parse
from snipforge.utils import count_words, dedent_from_first_line, derive_seed

logger = logging.getLogger(__name__)

TASK_BY_TESTBED = {
    TestbedName.RANDOM_CUT: Task.CODE_COMPLETION,
    TestbedName.WITH_DOCSTRING: Task.CODE_COMPLETION,
    TestbedName.FROM_DOCSTRING: Task.CODE_COMPLETION,
    TestbedName.RAW_DATA: Task.CODE_COMPLETION,
    TestbedName.FROM_COMMIT: Task.COMMIT_GENERATION,
    TestbedName.SUMMARIZATION_GEN: Task.CODE_SUMMARIZATION,
    TestbedName.VULNERABILITY_SPAN: Task.VULNERABILITY_DETECTION,
    TestbedName.RAW_DATA_DOCSTRING: Task.CODE_GENERATION,
}

# Template sequences rendered for each testbed; "+" joins the steps of a multi-step prompt
DESIGNATED_TEMPLATES: dict[TestbedName, list[str]] = {
    TestbedName.RANDOM_CUT: ["P1", "P1+P8"],
    TestbedName.WITH_DOCSTRING: ["P2"],
    TestbedName.FROM_DOCSTRING: ["P3", "P3+P6", "P3+P8"],
    TestbedName.FROM_COMMIT: ["P4", "P5"],
    TestbedName.SUMMARIZATION_GEN: ["P6"],
    TestbedName.VULNERABILITY_SPAN: [],
    TestbedName.RAW_DATA: [],
    TestbedName.RAW_DATA_DOCSTRING: [],
}

MUTATED_TESTBEDS = frozenset({TestbedName.RANDOM_CUT, TestbedName.WITH_DOCSTRING, TestbedName.FROM_COMMIT})


# -------------------------Mutation------------------------- #


def signature_end_line(code: str) -> int:
    """1-based line of the ':' closing the def header (multi-line parameter lists included)."""
    definition = first_definition(parse(dedent_from_first_line(code)).root_node)
    if definition is None:
        return 1
    for child in definition.children:
        if child.type == ":":
            return child.start_point[0] + 1
    return 1


def random_cut(code: str, seed: int, snippet_id: str = "", first_line: bool = False) -> CutPair:
    """Truncate a method at a line after its signature.

    The cut line is drawn uniformly from the lines after the signature
    (first_line=True always cuts right after it). The prefix holds every
    line before the cut and the suffix the rest, line endings included, so
    prefix + suffix == code.

    Raises:
        Ineligible: Fewer than two lines follow the signature.
    """
    lines = code.splitlines(keepends=True)
    header_end = signature_end_line(code)
    last_line = len(lines)
    if last_line - header_end < 2:
        raise Ineligible(f"Method needs two lines after its signature, has {max(last_line - header_end, 0)}")

    if first_line:
        cut_line = header_end + 1
    else:
        cut_line = random.Random(seed).randint(header_end + 1, last_line)

    return CutPair(
        snippet_id=snippet_id,
        prefix="".join(lines[: cut_line - 1]),
        expected_suffix="".join(lines[cut_line - 1 :]),
        cut_line=cut_line,
        seed=seed,
    )


def _is_cuttable(point: DataPoint) -> bool:
    lines = point.code.splitlines()
    return len(lines) - signature_end_line(point.code) >= 2


# -------------------------Filters------------------------- #


def _filter_for(name: TestbedName, config: TestbedConfig) -> Callable[[DataPoint], bool]:
    def long_enough(point: DataPoint) -> bool:
        return point.token_count > config.min_tokens or len(point.code) > config.min_chars

    def described(text: str | None) -> bool:
        text = (text or "").strip()
        return count_words(text) > config.description_min_words or len(text) > config.description_min_chars

    filters = {
        TestbedName.RANDOM_CUT: lambda p: long_enough(p) and _is_cuttable(p),
        TestbedName.WITH_DOCSTRING: lambda p: long_enough(p) and p.doc_valid and _is_cuttable(p),
        TestbedName.FROM_DOCSTRING: lambda p: p.doc_valid,
        TestbedName.FROM_COMMIT: lambda p: bool(p.docstring) and described(p.commit_message) and _is_cuttable(p),
        TestbedName.SUMMARIZATION_GEN: lambda p: bool(p.docstring) and described(p.docstring),
        TestbedName.VULNERABILITY_SPAN: lambda p: bool(p.vuln_spans),
        TestbedName.RAW_DATA: lambda p: True,
        TestbedName.RAW_DATA_DOCSTRING: lambda p: p.doc_valid and p.doc_language.is_known,
    }
    return filters[name]


def testbed_filter(name: TestbedName | str, config: TestbedConfig) -> Callable[[DataPoint], bool]:
    """The eligibility predicate of a testbed."""
    return _filter_for(TestbedName(name), config)


# -------------------------Build------------------------- #


def build_testbed(
    name: TestbedName | str,
    points: Sequence[DataPoint],
    config: TestbedConfig,
    seed: int,
    *,
    tokenizer: TokenEncoder,
    curation: CurationConfig | None = None,
) -> Testbed:
    """Filter, mutate, dedupe and sample points into one testbed.

    Args:
        name: Testbed name.
        points: Enriched points (vulnerability-mapped for VulnerabilitySpan).
        config: Testbed settings (cap, thresholds, cut mode).
        seed: This testbed's seed; cuts use a per-point seed derived from it.
        tokenizer: BPE encoder for near dedup.
        curation: Dedup settings (threshold, exact limit, index).

    Raises:
        EmptyTestbed: The filter eliminated every point.
    """
    name = TestbedName(name)
    curation = curation or CurationConfig()
    keep = _filter_for(name, config)
    eligible = [point for point in points if keep(point)]
    logger.info("%s: %d of %d point(s) pass the filter", name, len(eligible), len(points))
    if not eligible:
        raise EmptyTestbed(str(name))

    if name in MUTATED_TESTBEDS:
        eligible = [
            replace(
                point,
                mutation=random_cut(
                    point.code,
                    derive_seed(seed, point.point_id),
                    snippet_id=point.point_id,
                    first_line=config.cut_mode == "first-line",
                ),
            )
            for point in eligible
        ]

    unique, exact_report = dedup_exact(eligible)
    unique, near_report = dedup_near(
        unique,
        curation.threshold,
        tokenizer=tokenizer,
        exact_limit=curation.exact_limit,
        index=curation.near_index,
    )
    report = DedupReport(
        input_count=len(eligible),
        exact_removed=exact_report.exact_removed,
        near_removed=near_report.near_removed,
        threshold=curation.threshold,
    )

    if name == TestbedName.SUMMARIZATION_GEN and config.summarization_longest_first:
        ranked = sorted(range(len(unique)), key=lambda index: -len(unique[index].docstring or ""))
        chosen = sorted(ranked[: config.max_size])
    elif len(unique) > config.max_size:
        chosen = sorted(random.Random(seed).sample(range(len(unique)), config.max_size))
    else:
        chosen = list(range(len(unique)))

    return Testbed(
        name=name,
        task=TASK_BY_TESTBED[name],
        points=tuple(unique[index] for index in chosen),
        report=report,
        seed=seed,
        max_size=config.max_size,
    )


def build_testbeds(
    points: Sequence[DataPoint],
    config: TestbedConfig,
    master_seed: int,
    *,
    tokenizer: TokenEncoder,
    curation: CurationConfig | None = None,
    workers: int = 4,
) -> tuple[dict[str, Testbed], list[str]]:
    """Build every configured testbed independently.

    Each testbed gets a child seed derived from (master seed, name).

    Returns:
        The built testbeds by name and the names that came out empty.
    """

    def _build(name: str) -> Testbed | None:
        try:
            return build_testbed(
                name, points, config, derive_seed(master_seed, name), tokenizer=tokenizer, curation=curation
            )
        except EmptyTestbed as e:
            logger.warning("%s", e)
            return None

    with ThreadPoolExecutor(max_workers=max(min(workers, len(config.names)), 1)) as executor:
        results = list(executor.map(_build, config.names))

    built = {name: testbed for name, testbed in zip(config.names, results) if testbed is not None}
    empty = [name for name, testbed in zip(config.names, results) if testbed is None]
    return built, empty
