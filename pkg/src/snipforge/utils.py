import hashlib
import json
import re
from typing import Any

_WORD_PATTERN = re.compile(r"[^ \t\r\n]+")
WHITESPACE_CHARS = frozenset(" \t\r\n")


def stable_hash(*parts: Any, length: int = 16) -> str:
    """Hash the given parts into a short hex digest that is stable across runs.

    Args:
        parts: Values joined with a NUL separator before hashing.
        length: Number of hex characters to keep.

    Returns:
        Hex digest prefix.
    """
    payload = "\x00".join(str(part) for part in parts)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:length]


def generate_point_id(commit_id: str, path: str, fun_name: str) -> str:
    """Generate the id of a data point from its composite key."""
    return stable_hash(commit_id, path, fun_name)


def derive_seed(master_seed: int, *labels: Any) -> int:
    """Derive an independent child seed from a master seed and labels.

    Args:
        master_seed: The run's master seed.
        labels: Anything naming the consumer (testbed name, point id, ...).

    Returns:
        A non-negative 63-bit integer seed.
    """
    digest = hashlib.sha256(f"{master_seed}:{':'.join(str(label) for label in labels)}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def canonical_json(data: Any) -> str:
    """Serialize data as JSON with sorted keys and no insignificant whitespace."""
    return json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def split_words(text: str) -> list[str]:
    """Split text into maximal runs of non-whitespace characters."""
    return _WORD_PATTERN.findall(text)


def count_words(text: str | None) -> int:
    """Count whitespace-delimited words, treating None as empty."""
    if not text:
        return 0
    return len(split_words(text))


def strip_line_ends(text: str) -> str:
    """Strip trailing whitespace from every line of text."""
    return "\n".join(line.rstrip() for line in text.splitlines())


def dedent_from_first_line(code: str) -> str:
    """Remove the first line's indentation from every line that carries it.

    Unlike textwrap.dedent this leaves under-indented lines (for example the
    continuation lines of a multi-line string) untouched, so a method nested
    in a class comes back as a top-level definition.

    Args:
        code: Source text whose first line is the definition header.

    Returns:
        The re-indented source.
    """
    lines = code.splitlines(keepends=True)
    if not lines:
        return code
    first = lines[0]
    indent = first[: len(first) - len(first.lstrip(" \t"))]
    if not indent:
        return code
    return "".join(line[len(indent) :] if line.startswith(indent) else line for line in lines)
