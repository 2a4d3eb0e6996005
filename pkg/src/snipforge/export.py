"""JSONL exports of data points, testbeds and prompt datasets."""

import json
import logging
from pathlib import Path
from typing import Any, Iterable

from snipforge.errors import ExportError
from snipforge.models import DataPoint, PromptRecord, Testbed

logger = logging.getLogger(__name__)

TESTBED_DIR = "testbeds"
PROMPT_DIR = "prompts"
POINTS_FILE = "points.jsonl"
MANIFEST_FILE = "run_manifest.json"
TIMINGS_FILE = "run_timings.json"


def _dumps(record: dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(records: Iterable[dict[str, Any]], path: str | Path) -> Path:
    """Write one JSON object per line (UTF-8, sorted keys, "\\n" line ends).

    Raises:
        ExportError: The file cannot be written.
    """
    path = Path(path)
    count = 0
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for record in records:
                f.write(_dumps(record))
                f.write("\n")
                count += 1
    except OSError as e:
        raise ExportError(f"Cannot write {path}: {e}")
    logger.debug("Wrote %d record(s) to %s", count, path)
    return path


def load_jsonl(path: str | Path) -> list[dict[str, Any]]:
    """Read back a file written by write_jsonl."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
    except (OSError, json.JSONDecodeError) as e:
        raise ExportError(f"Cannot read {path}: {e}")


def write_json(data: dict[str, Any], path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(data, f, sort_keys=True, ensure_ascii=False, indent=2)
            f.write("\n")
    except OSError as e:
        raise ExportError(f"Cannot write {path}: {e}")
    return path


# -------------------------Artifacts------------------------- #


def export_points(points: Iterable[DataPoint], output_dir: str | Path) -> Path:
    """Export every enriched point with all its features."""
    return write_jsonl((point.to_dict() for point in points), Path(output_dir) / POINTS_FILE)


def testbed_path(output_dir: str | Path, name: str) -> Path:
    return Path(output_dir) / TESTBED_DIR / f"{name}.jsonl"


def prompt_path(output_dir: str | Path, name: str) -> Path:
    return Path(output_dir) / PROMPT_DIR / f"{name}.jsonl"


def export_testbed(testbed: Testbed | None, output_dir: str | Path, name: str | None = None) -> Path:
    """Export a testbed's points in testbed order.

    A None testbed (filtered empty) still produces its file, with zero lines.
    """
    if testbed is None and name is None:
        raise ValueError("An empty testbed export needs its name")
    name = str(testbed.name) if testbed is not None else name
    points = testbed.points if testbed is not None else ()
    path = write_jsonl((point.to_dict() for point in points), testbed_path(output_dir, name))
    logger.info("Exported testbed %s (%d point(s)) to %s", name, len(points), path)
    return path


def export_prompts(name: str, records: Iterable[PromptRecord], output_dir: str | Path) -> Path:
    records = list(records)
    path = write_jsonl((record.to_dict() for record in records), prompt_path(output_dir, name))
    logger.info("Exported %d prompt(s) for %s to %s", len(records), name, path)
    return path
