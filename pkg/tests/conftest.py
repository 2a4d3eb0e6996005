import json
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import pytest
from git import Actor, Repo
from tokenizers import pre_tokenizers

from snipforge.discovery import LocalRepo
from snipforge.models import (
    CutPair,
    DataPoint,
    LanguageTag,
    LexicalProfile,
    SyntaxSummary,
)

FIXTURES = Path(__file__).parent / "fixtures"
AUTHOR = Actor("Fixture Author", "author@example.com")

CORE_V1 = """def alpha(x):
    return x + 1


def beta(y):
    return y * 2
"""

CORE_V2 = """def alpha(x):
    # shifted by one
    return x + 1


def beta(y):
    return y * 2
"""

CORE_V3 = """def alpha(x):
    # shifted by one
    return (x + 1)


def beta(y):
    return y * 2
"""

CORE_V4 = (
    CORE_V3
    + '''

def gamma(values):
    """Return the mean of a non-empty list of numbers.

    Raises ZeroDivisionError on an empty list.
    """
    total = sum(values)
    return total / len(values)
'''
)

CORE_V5 = (
    CORE_V4
    + """

def delta(a, b):
    return a - b
"""
)

UTIL_V1 = """def helper(items):
    total = 0
    for item in items:
        total += item
    return total
"""

UTIL_V2 = """def assist(items):
    total = 0
    for item in items:
        total += item
    return total
"""

WIDGET_V1 = """class Widget:
    def __init__(self, width):
        self.width = width

    def render(self):
        return "#" * self.width
"""

WIDGET_V2 = (
    WIDGET_V1
    + """
    def resize(self, width, limit=80):
        def clamp(value):
            return max(1, min(value, limit))

        self.width = clamp(width)
        return self.width
"""
)

NEW_MOD = """def one():
    return 1


def two(a, b):
    if a > b:
        return a - b
    return b - a


def three(items):
    result = []
    for item in items:
        if item:
            result.append(item)
    return result
"""

BROKEN = """def broken(x:
    return x
"""

# (date, message, files written)
FIXTURE_COMMITS = [
    ("2021-03-01", "Add core module", {"core.py": CORE_V1}),
    ("2021-06-01", "Add helper", {"util.py": UTIL_V1}),
    ("2021-09-01", "Document alpha", {"core.py": CORE_V2}),
    ("2021-12-15", "Add widget", {"widget.py": WIDGET_V1}),
    ("2022-01-10", "Add the new module with three small functions for the fixture", {"new_mod.py": NEW_MOD}),
    ("2022-02-20", "Parenthesize alpha", {"core.py": CORE_V3}),
    ("2022-03-15", "Rename helper to assist", {"util.py": UTIL_V2}),
    ("2022-05-01", "Let widgets be resized within a limit", {"widget.py": WIDGET_V2}),
    ("2022-07-04", "Add readme", {"README.md": "# fixture\n"}),
    ("2022-09-09", "Add gamma, the mean of a list of numbers, with documentation", {"core.py": CORE_V4}),
    ("2022-11-30", "Add a file that does not parse", {"broken.py": BROKEN}),
    ("2023-02-01", "Add delta", {"core.py": CORE_V5}),
]

MINED_IN_WINDOW = ["one", "two", "three", "assist", "Widget.resize", "Widget.resize.clamp", "gamma"]


def _git_date(day: str) -> str:
    moment = datetime.fromisoformat(day).replace(hour=12, tzinfo=timezone.utc)
    return f"{int(moment.timestamp())} +0000"


def build_fixture_repo(path: Path) -> Repo:
    repo = Repo.init(path)
    for day, message, files in FIXTURE_COMMITS:
        for name, content in files.items():
            (path / name).write_text(content, encoding="utf-8")
        repo.index.add(list(files))
        repo.index.commit(
            message,
            author=AUTHOR,
            committer=AUTHOR,
            author_date=_git_date(day),
            commit_date=_git_date(day),
        )
    return repo


@pytest.fixture(scope="session")
def fixture_repo_path(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("fixture_repo")
    build_fixture_repo(path)
    return path


@pytest.fixture(scope="session")
def fixture_repo(fixture_repo_path) -> LocalRepo:
    repo = Repo(fixture_repo_path)
    return LocalRepo(full_name="local/fixture_repo", workdir=fixture_repo_path, head_commit=repo.head.commit.hexsha)


# -------------------------Tokenizers------------------------- #


def byte_level_vocab(merges: list[str]) -> dict[str, int]:
    vocab = {symbol: index for index, symbol in enumerate(sorted(pre_tokenizers.ByteLevel.alphabet()))}
    for merge in merges:
        vocab.setdefault(merge.replace(" ", ""), len(vocab))
    return vocab


@pytest.fixture(scope="session")
def bpe_model_path(tmp_path_factory) -> Path:
    """Byte-level BPE model whose only merges build the token 'def'."""
    merges = ["d e", "de f"]
    path = tmp_path_factory.mktemp("bpe") / "model.json"
    path.write_text(json.dumps({"vocab": byte_level_vocab(merges), "merges": merges}), encoding="utf-8")
    return path


class WordTokenizer:
    """Maps each whitespace-separated word to a stable id."""

    def __init__(self):
        self._ids: dict[str, int] = {}

    def encode_ids(self, text: str) -> list[int]:
        return [self._ids.setdefault(word, len(self._ids)) for word in text.split()]


@pytest.fixture
def word_tokenizer() -> WordTokenizer:
    return WordTokenizer()


class StubIdentifier:
    def __init__(self, ranked: list[tuple[str, float]] | None = None):
        self.ranked = ranked

    def rank(self, text: str) -> list[tuple[str, float]]:
        if self.ranked is not None:
            return self.ranked
        return [("en", 0.99)] if any(ch.isalpha() for ch in text) else []


@pytest.fixture
def stub_identifier() -> StubIdentifier:
    return StubIdentifier()


# -------------------------Points------------------------- #

CLAMP_CODE = '''def clamp(value, low, high):
    """Clamp value into the closed range [low, high]."""
    if value < low:
        return low
    return min(value, high)'''

CLAMP_PREFIX = 'def clamp(value, low, high):\n    """Clamp value into the closed range [low, high]."""\n'


def make_point(**overrides) -> DataPoint:
    """A fully enriched point; keyword overrides replace any field."""
    base = DataPoint(
        commit_id="c0ffee" * 6 + "abcd",
        repository="acme/tools",
        path="src/tools/numeric.py",
        file_name="numeric.py",
        fun_name="clamp",
        commit_message="Add clamp helper for bounded values\n",
        code=CLAMP_CODE,
        signature="def clamp(value, low, high):",
        committer_date=datetime(2022, 6, 1, 9, 30, tzinfo=timezone.utc),
        start_line=10,
        end_line=14,
        docstring="Clamp value into the closed range [low, high].",
        doc_profile=LexicalProfile(n_words=8, vocab_size=8, n_whitespaces=7),
        doc_language=LanguageTag(code="en", confidence=0.99),
        doc_valid=True,
        code_profile=LexicalProfile(n_words=25, vocab_size=19, n_whitespaces=40),
        syntax=SyntaxSummary(n_ast_errors=0, n_ast_levels=6, n_ast_nodes=24),
        token_count=120,
        nloc=5,
        complexity=2,
        n_identifiers=5,
    )
    return replace(base, **overrides)


def with_cut(point: DataPoint, cut_line: int = 3) -> DataPoint:
    lines = point.code.splitlines(keepends=True)
    return replace(
        point,
        mutation=CutPair(
            snippet_id=point.point_id,
            prefix="".join(lines[: cut_line - 1]),
            expected_suffix="".join(lines[cut_line - 1 :]),
            cut_line=cut_line,
            seed=7,
        ),
    )


@pytest.fixture
def point() -> DataPoint:
    return make_point()
