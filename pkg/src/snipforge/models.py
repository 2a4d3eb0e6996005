"""Value types shared by the pipeline stages.

A data point grows through the stages: mining produces a RawSnippet
(identification), enrichment turns it into a DataPoint (documentation,
syntax and software metrics), scanning attaches VulnSpans, testbed
construction attaches a CutPair, and prompt rendering links PromptRecords.
All types are immutable; stages derive updated copies with
dataclasses.replace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from enum import StrEnum
from typing import Any

from snipforge.utils import generate_point_id


class Task(StrEnum):
    CODE_COMPLETION = "code_completion"
    CODE_GENERATION = "code_generation"
    COMMIT_GENERATION = "commit_generation"
    CODE_SUMMARIZATION = "code_summarization"
    VULNERABILITY_DETECTION = "vulnerability_detection"


class TestbedName(StrEnum):
    __test__ = False  # not a pytest test class

    RANDOM_CUT = "RandomCut"
    WITH_DOCSTRING = "WithDocString"
    FROM_DOCSTRING = "FromDocString"
    FROM_COMMIT = "FromCommit"
    SUMMARIZATION_GEN = "SummarizationGen"
    VULNERABILITY_SPAN = "VulnerabilitySpan"
    RAW_DATA = "RawData"
    RAW_DATA_DOCSTRING = "RawDataDocstring"


class ValidationReason(StrEnum):
    OUT_OF_WINDOW = "OutOfWindow"
    SHORT_DOCSTRING = "ShortDocstring"
    LANGUAGE_UNKNOWN = "LanguageUnknown"
    EMPTY_CODE = "EmptyCode"


def parse_datetime(value: str | datetime) -> datetime:
    if isinstance(value, datetime):
        parsed = value
    else:
        parsed = datetime.fromisoformat(value)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


# -------------------------Mining------------------------- #


@dataclass(frozen=True)
class TimeWindow:
    """Inclusive range of UTC calendar dates."""

    start: date
    end: date

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"Window start {self.start} is after window end {self.end}")

    def contains(self, moment: datetime | date) -> bool:
        if isinstance(moment, datetime):
            moment = parse_datetime(moment).date()
        return self.start <= moment <= self.end

    @classmethod
    def parse(cls, text: str) -> TimeWindow:
        """Parse a window written as ``START..END`` (ISO dates)."""
        start, sep, end = text.partition("..")
        if not sep:
            raise ValueError(f"Window '{text}' must be written as START..END")
        return cls(start=date.fromisoformat(start.strip()), end=date.fromisoformat(end.strip()))

    def __str__(self) -> str:
        return f"{self.start.isoformat()}..{self.end.isoformat()}"


@dataclass(frozen=True)
class CommitMeta:
    commit_id: str
    author_date: datetime
    committer_date: datetime
    message: str
    changed_files: tuple[str, ...] = ()


@dataclass(frozen=True)
class RawSnippet:
    """A method newly added by a commit (identification dimension)."""

    commit_id: str
    repository: str
    path: str
    file_name: str
    fun_name: str
    commit_message: str
    code: str
    signature: str
    committer_date: datetime
    start_line: int
    end_line: int
    docstring: str | None = None

    @property
    def point_id(self) -> str:
        return generate_point_id(self.commit_id, self.path, self.fun_name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "point_id": self.point_id,
            "commit_id": self.commit_id,
            "repository": self.repository,
            "path": self.path,
            "file_name": self.file_name,
            "fun_name": self.fun_name,
            "commit_message": self.commit_message,
            "committer_date": self.committer_date.isoformat(),
            "start_line": self.start_line,
            "end_line": self.end_line,
            "signature": self.signature,
            "code": self.code,
            "docstring": self.docstring,
        }

    @staticmethod
    def _snippet_kwargs(data: dict[str, Any]) -> dict[str, Any]:
        return {
            "commit_id": data["commit_id"],
            "repository": data["repository"],
            "path": data["path"],
            "file_name": data["file_name"],
            "fun_name": data["fun_name"],
            "commit_message": data["commit_message"],
            "code": data["code"],
            "signature": data["signature"],
            "committer_date": parse_datetime(data["committer_date"]),
            "start_line": int(data["start_line"]),
            "end_line": int(data["end_line"]),
            "docstring": data.get("docstring"),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RawSnippet:
        return cls(**cls._snippet_kwargs(data))


# -------------------------Features------------------------- #


@dataclass(frozen=True)
class SyntaxSummary:
    n_ast_errors: int
    n_ast_levels: int
    n_ast_nodes: int


@dataclass(frozen=True)
class LexicalProfile:
    n_words: int
    vocab_size: int
    n_whitespaces: int


EMPTY_PROFILE = LexicalProfile(n_words=0, vocab_size=0, n_whitespaces=0)


@dataclass(frozen=True)
class LanguageTag:
    code: str
    confidence: float

    @property
    def is_known(self) -> bool:
        return self.code != "und"


UNDETERMINED = LanguageTag(code="und", confidence=0.0)


# -------------------------Vulnerability------------------------- #


@dataclass(frozen=True, order=True)
class VulnSpan:
    """A scanner finding rebased onto a snippet's own line numbers (1-based)."""

    start_line: int
    start_col: int
    end_line: int
    end_col: int
    rule_id: str
    cwe_id: str
    message: str = field(default="", compare=False)

    @property
    def key(self) -> tuple[str, int, int, int, int]:
        return (self.rule_id, self.start_line, self.start_col, self.end_line, self.end_col)

    def to_dict(self) -> dict[str, Any]:
        return {
            "cwe_id": self.cwe_id,
            "rule_id": self.rule_id,
            "start_line": self.start_line,
            "start_col": self.start_col,
            "end_line": self.end_line,
            "end_col": self.end_col,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> VulnSpan:
        return cls(
            start_line=int(data["start_line"]),
            start_col=int(data["start_col"]),
            end_line=int(data["end_line"]),
            end_col=int(data["end_col"]),
            rule_id=data["rule_id"],
            cwe_id=data["cwe_id"],
            message=data.get("message", ""),
        )


# -------------------------Mutation------------------------- #


@dataclass(frozen=True)
class CutPair:
    """A method truncated after its signature; prefix + expected_suffix == code."""

    snippet_id: str
    prefix: str
    expected_suffix: str
    cut_line: int
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "snippet_id": self.snippet_id,
            "prefix": self.prefix,
            "expected_suffix": self.expected_suffix,
            "cut_line": self.cut_line,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CutPair:
        return cls(
            snippet_id=data["snippet_id"],
            prefix=data["prefix"],
            expected_suffix=data["expected_suffix"],
            cut_line=int(data["cut_line"]),
            seed=int(data["seed"]),
        )


# -------------------------Data point------------------------- #


@dataclass(frozen=True, kw_only=True)
class DataPoint(RawSnippet):
    """A RawSnippet with every feature dimension attached."""

    doc_profile: LexicalProfile
    doc_language: LanguageTag
    doc_valid: bool
    code_profile: LexicalProfile
    syntax: SyntaxSummary
    token_count: int
    nloc: int
    complexity: int
    n_identifiers: int
    vuln_spans: tuple[VulnSpan, ...] = ()
    mutation: CutPair | None = None

    @property
    def snippet(self) -> RawSnippet:
        return RawSnippet(**RawSnippet._snippet_kwargs(RawSnippet.to_dict(self)))

    def to_dict(self) -> dict[str, Any]:
        record = super().to_dict()
        record.update(
            {
                # documentation
                "doc_n_words": self.doc_profile.n_words,
                "doc_vocab_size": self.doc_profile.vocab_size,
                "doc_n_whitespaces": self.doc_profile.n_whitespaces,
                "language": self.doc_language.code,
                "language_confidence": self.doc_language.confidence,
                "doc_valid": self.doc_valid,
                # syntax
                "n_ast_errors": self.syntax.n_ast_errors,
                "n_ast_levels": self.syntax.n_ast_levels,
                "n_ast_nodes": self.syntax.n_ast_nodes,
                "n_words": self.code_profile.n_words,
                "vocab_size": self.code_profile.vocab_size,
                "n_whitespaces": self.code_profile.n_whitespaces,
                "token_count": self.token_count,
                # software metrics
                "nloc": self.nloc,
                "complexity": self.complexity,
                "n_identifiers": self.n_identifiers,
                # vulnerabilities and mutation
                "vuln_spans": [span.to_dict() for span in self.vuln_spans],
                "mutation": self.mutation.to_dict() if self.mutation else None,
            }
        )
        return record

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DataPoint:
        mutation = data.get("mutation")
        return cls(
            **RawSnippet._snippet_kwargs(data),
            doc_profile=LexicalProfile(
                n_words=int(data["doc_n_words"]),
                vocab_size=int(data["doc_vocab_size"]),
                n_whitespaces=int(data["doc_n_whitespaces"]),
            ),
            doc_language=LanguageTag(code=data["language"], confidence=float(data["language_confidence"])),
            doc_valid=bool(data["doc_valid"]),
            code_profile=LexicalProfile(
                n_words=int(data["n_words"]),
                vocab_size=int(data["vocab_size"]),
                n_whitespaces=int(data["n_whitespaces"]),
            ),
            syntax=SyntaxSummary(
                n_ast_errors=int(data["n_ast_errors"]),
                n_ast_levels=int(data["n_ast_levels"]),
                n_ast_nodes=int(data["n_ast_nodes"]),
            ),
            token_count=int(data["token_count"]),
            nloc=int(data["nloc"]),
            complexity=int(data["complexity"]),
            n_identifiers=int(data["n_identifiers"]),
            vuln_spans=tuple(VulnSpan.from_dict(span) for span in data.get("vuln_spans") or ()),
            mutation=CutPair.from_dict(mutation) if mutation else None,
        )


# -------------------------Curation------------------------- #


@dataclass(frozen=True)
class DedupReport:
    input_count: int
    exact_removed: int = 0
    near_removed: int = 0
    threshold: float = 1.0

    @property
    def duplicate_pct(self) -> float:
        if self.input_count == 0:
            return 0.0
        return 100.0 * (self.exact_removed + self.near_removed) / self.input_count

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_count": self.input_count,
            "exact_removed": self.exact_removed,
            "near_removed": self.near_removed,
            "threshold": self.threshold,
            "duplicate_pct": round(self.duplicate_pct, 4),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DedupReport:
        return cls(
            input_count=int(data["input_count"]),
            exact_removed=int(data.get("exact_removed", 0)),
            near_removed=int(data.get("near_removed", 0)),
            threshold=float(data.get("threshold", 1.0)),
        )


@dataclass(frozen=True)
class ValidationResult:
    point_id: str
    reasons: tuple[ValidationReason, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.reasons


# -------------------------Testbeds and prompts------------------------- #


@dataclass(frozen=True)
class Testbed:
    __test__ = False  # not a pytest test class

    name: TestbedName
    task: Task
    points: tuple[DataPoint, ...]
    report: DedupReport
    seed: int
    max_size: int

    def __post_init__(self):
        if len(self.points) > self.max_size:
            raise ValueError(f"Testbed {self.name} holds {len(self.points)} points, above max_size {self.max_size}")


@dataclass(frozen=True)
class PromptRecord:
    point_id: str
    task: Task
    template_ids: tuple[str, ...]
    steps: tuple[str, ...]
    expected_output: str
    catalog_version: str = ""

    def __post_init__(self):
        if len(self.steps) != len(self.template_ids):
            raise ValueError("A prompt record needs exactly one rendered step per template id")

    def to_dict(self) -> dict[str, Any]:
        return {
            "point_id": self.point_id,
            "task": str(self.task),
            "template_ids": list(self.template_ids),
            "steps": list(self.steps),
            "expected_output": self.expected_output,
            "catalog_version": self.catalog_version,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PromptRecord:
        return cls(
            point_id=data["point_id"],
            task=Task(data["task"]),
            template_ids=tuple(data["template_ids"]),
            steps=tuple(data["steps"]),
            expected_output=data["expected_output"],
            catalog_version=data.get("catalog_version", ""),
        )
