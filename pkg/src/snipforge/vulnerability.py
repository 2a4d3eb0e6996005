"""Static-analysis findings mapped onto mined methods."""

import logging
import re
import tempfile
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path, PurePosixPath
from typing import Any, Iterable, Sequence
from urllib.parse import unquote, urlparse

from snipforge.errors import SarifMalformed
from snipforge.gateways.codeql import CodeQL
from snipforge.models import DataPoint, VulnSpan

logger = logging.getLogger(__name__)

_CWE_TAG = re.compile(r"^external/cwe/cwe-0*(\d+)$", re.IGNORECASE)
DEFAULT_CWE_LIST = "cwe_top25_2021.txt"


@dataclass(frozen=True)
class RawFinding:
    """A scanner result located in absolute file coordinates (1-based, end column exclusive)."""

    rule_id: str
    cwe_id: str
    path: str
    start_line: int
    start_col: int
    end_line: int
    end_col: int | None  # None: through the end of end_line
    message: str = ""


def load_cwe_list(path: str | Path | None = None) -> set[str]:
    """Load a CWE list file (one "CWE-N" per line, '#' comments); None loads the bundled 2021 top 25."""
    if path is None:
        text = resources.files("snipforge").joinpath("data", DEFAULT_CWE_LIST).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")

    cwes = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            cwes.add(_normalize_cwe(line))
    return cwes


def _normalize_cwe(value: str) -> str:
    number = value.upper().removeprefix("CWE-").lstrip("0") or "0"
    return f"CWE-{number}"


# -------------------------SARIF------------------------- #


def _rule_cwes(run: dict[str, Any]) -> dict[str, list[str]]:
    tool = run.get("tool") or {}
    components = [tool.get("driver") or {}, *(tool.get("extensions") or [])]
    cwes: dict[str, list[str]] = {}
    for component in components:
        for rule in component.get("rules") or []:
            tags = (rule.get("properties") or {}).get("tags") or []
            found = []
            for tag in tags:
                match = _CWE_TAG.match(str(tag))
                if match:
                    found.append(f"CWE-{match.group(1)}")
            if rule.get("id"):
                cwes.setdefault(rule["id"], found)
    return cwes


def _relative_path(uri: str, source_root: Path | None) -> str:
    parsed = urlparse(uri)
    path = unquote(parsed.path) if parsed.scheme in ("file", "") else uri
    if source_root is not None and Path(path).is_absolute():
        try:
            return Path(path).resolve().relative_to(source_root.resolve()).as_posix()
        except ValueError:
            return Path(path).as_posix()
    return PurePosixPath(path).as_posix().removeprefix("./")


def parse_sarif(
    document: dict[str, Any],
    source_root: str | Path | None = None,
    cwe_filter: Iterable[str] | None = None,
) -> list[RawFinding]:
    """Extract findings from a SARIF 2.1.0 document.

    Args:
        document: The parsed SARIF JSON.
        source_root: Root the scan ran on; absolute artifact paths are made relative to it.
        cwe_filter: Keep only rules tagged with one of these CWE ids; None keeps every tagged rule.

    Raises:
        SarifMalformed: The document lacks the SARIF structure this parser needs.
    """
    if not isinstance(document, dict) or not isinstance(document.get("runs"), list):
        raise SarifMalformed("SARIF document has no 'runs' list")
    allowed = {_normalize_cwe(cwe) for cwe in cwe_filter} if cwe_filter is not None else None
    root = Path(source_root) if source_root is not None else None

    findings = []
    for run in document["runs"]:
        if not isinstance(run, dict):
            raise SarifMalformed("SARIF run is not an object")
        rule_cwes = _rule_cwes(run)
        for result in run.get("results") or []:
            rule_id = result.get("ruleId") or (result.get("rule") or {}).get("id")
            if not rule_id:
                raise SarifMalformed("SARIF result without a rule id")
            cwes = [cwe for cwe in rule_cwes.get(rule_id, []) if allowed is None or cwe in allowed]
            if not cwes:
                continue
            message = (result.get("message") or {}).get("text", "")

            for location in result.get("locations") or []:
                physical = location.get("physicalLocation") or {}
                uri = (physical.get("artifactLocation") or {}).get("uri")
                region = physical.get("region") or {}
                if not uri or "startLine" not in region:
                    logger.warning("Skipping a %s location without file or start line", rule_id)
                    continue
                start_line = int(region["startLine"])
                findings.append(
                    RawFinding(
                        rule_id=rule_id,
                        cwe_id=cwes[0],
                        path=_relative_path(uri, root),
                        start_line=start_line,
                        start_col=int(region.get("startColumn", 1)),
                        end_line=int(region.get("endLine", start_line)),
                        end_col=int(region["endColumn"]) if "endColumn" in region else None,
                        message=message,
                    )
                )
    return findings


def run_scan(
    source_root: str | Path,
    suite: str,
    cwe_filter: Iterable[str] | None = None,
    work_dir: str | Path | None = None,
) -> list[RawFinding]:
    """Build a scanner database over source_root, analyze it and parse the findings.

    Raises:
        ScannerMissing: The scanner executable is not available.
        ScanFailed: A scanner command exited non-zero (stderr attached).
        SarifMalformed: The scanner's output could not be parsed.
    """
    cwe_filter = load_cwe_list() if cwe_filter is None else cwe_filter
    with tempfile.TemporaryDirectory(prefix="snipforge-scan-", dir=work_dir) as scratch:
        database = CodeQL.database_create(Path(scratch) / "db", source_root)
        document = CodeQL.database_analyze(database, suite, Path(scratch) / "results.sarif")
    findings = parse_sarif(document, source_root=source_root, cwe_filter=cwe_filter)
    logger.info("Scan of %s produced %d finding(s)", source_root, len(findings))
    return findings


# -------------------------Mapping------------------------- #


def _rebase(finding: RawFinding, point: DataPoint) -> VulnSpan | None:
    if finding.start_line > point.end_line or finding.end_line < point.start_line:
        return None

    lines = point.code.split("\n")
    last_line = len(lines)

    if finding.start_line < point.start_line:
        start_line, start_col = 1, 1
    else:
        start_line, start_col = finding.start_line - point.start_line + 1, finding.start_col

    if finding.end_line > point.end_line:
        end_line = last_line
        end_col = len(lines[-1]) + 1
    else:
        end_line = finding.end_line - point.start_line + 1
        end_col = finding.end_col if finding.end_col is not None else len(lines[end_line - 1]) + 1

    if (end_line, end_col) < (start_line, start_col):
        end_line, end_col = start_line, start_col
    return VulnSpan(
        start_line=start_line,
        start_col=start_col,
        end_line=end_line,
        end_col=end_col,
        rule_id=finding.rule_id,
        cwe_id=finding.cwe_id,
        message=finding.message,
    )


def map_findings(findings: Sequence[RawFinding], points: Sequence[DataPoint]) -> tuple[list[DataPoint], int]:
    """Attach findings to the methods whose line range they intersect.

    Coordinates are rebased so line 1 is the method's def line; spans
    straddling a method boundary are clipped to the method. Spans already on
    a point are kept and merged.

    Returns:
        The points (in input order) and the number of findings that hit no method.
    """
    by_path: dict[str, list[int]] = {}
    for index, point in enumerate(points):
        by_path.setdefault(point.path, []).append(index)

    spans: dict[int, dict[tuple, VulnSpan]] = {
        index: {span.key: span for span in point.vuln_spans} for index, point in enumerate(points)
    }
    dropped = 0
    for finding in findings:
        attached = False
        for index in by_path.get(finding.path, []):
            span = _rebase(finding, points[index])
            if span is None:
                continue
            attached = True
            existing = spans[index].get(span.key)
            # Equal keys keep the smallest message so the result does not depend on finding order
            if existing is None or span.message < existing.message:
                spans[index][span.key] = span
        if not attached:
            dropped += 1

    updated = [
        replace(point, vuln_spans=tuple(sorted(spans[index].values()))) if spans[index] else point
        for index, point in enumerate(points)
    ]
    if dropped:
        logger.debug("%d finding(s) outside every mined method", dropped)
    return updated, dropped
