"""Commit windowing and new-method extraction."""

import inspect
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import timezone
from pathlib import PurePosixPath

from snipforge.discovery import LocalRepo
from snipforge.gateways.git import Git
from snipforge.models import CommitMeta, RawSnippet, TimeWindow
from snipforge.syntax import first_definition, iter_definitions, node_text, parse
from snipforge.utils import dedent_from_first_line

logger = logging.getLogger(__name__)

_STRING_PREFIX = re.compile(r"^[rRbBuUfF]*")
_QUOTES = ('"""', "'''", '"', "'")


@dataclass
class MiningStats:
    commits: int = 0
    files_scanned: int = 0
    snippets: int = 0
    skipped: Counter = field(default_factory=Counter)  # reason -> file versions skipped

    def merge(self, other: "MiningStats") -> "MiningStats":
        self.commits += other.commits
        self.files_scanned += other.files_scanned
        self.snippets += other.snippets
        self.skipped.update(other.skipped)
        return self

    @property
    def files_skipped(self) -> int:
        return sum(self.skipped.values())

    def to_dict(self) -> dict:
        return {
            "commits": self.commits,
            "files_scanned": self.files_scanned,
            "files_skipped": self.files_skipped,
            "skipped": dict(sorted(self.skipped.items())),
            "snippets": self.snippets,
        }


# -------------------------Commits------------------------- #


def list_window_commits(repo: LocalRepo, window: TimeWindow) -> list[CommitMeta]:
    """List the non-merge commits whose committer date falls inside the window.

    Args:
        repo: A materialized repository with full history.
        window: Inclusive range of UTC dates.

    Returns:
        Commits reachable from HEAD, oldest first.

    Raises:
        RepoUnreadable: The history cannot be walked.
    """
    git_repo = Git.open_repo(repo.workdir)
    commits = []
    for commit in Git.iter_commits(repo=git_repo):
        committed = commit.committed_datetime.astimezone(timezone.utc)
        if not window.contains(committed):
            continue
        commits.append(
            CommitMeta(
                commit_id=commit.hexsha,
                author_date=commit.authored_datetime.astimezone(timezone.utc),
                committer_date=committed,
                message=commit.message,
                changed_files=tuple(after for _, after in Git.file_changes(commit)),
            )
        )

    # History comes newest first; the stable sort keeps topological order on equal dates
    commits.reverse()
    commits.sort(key=lambda meta: meta.committer_date)
    logger.debug("%s: %d commit(s) in window %s", repo.full_name, len(commits), window)
    return commits


# -------------------------Methods------------------------- #


def extract_docstring(method_source: str) -> str | None:
    """Return the leading string literal of a method body, quote-stripped and dedented.

    Comments before the string are skipped; anything else before it means
    there is no docstring.
    """
    tree = parse(dedent_from_first_line(method_source))
    definition = first_definition(tree.root_node)
    if definition is None:
        return None
    body = definition.child_by_field_name("body")
    if body is None:
        return None

    for statement in body.named_children:
        if statement.type == "comment":
            continue
        if statement.type != "expression_statement" or statement.named_child_count != 1:
            return None
        literal = statement.named_children[0]
        if literal.type != "string":
            return None
        return _strip_string_literal(node_text(literal))
    return None


def _strip_string_literal(literal: str) -> str:
    text = _STRING_PREFIX.sub("", literal, count=1)
    for quote in _QUOTES:
        if text.startswith(quote) and text.endswith(quote) and len(text) >= 2 * len(quote):
            text = text[len(quote) : -len(quote)]
            break
    return inspect.cleandoc(text)


def _decode(data: bytes | None) -> str | None:
    if data is None:
        return None
    return data.decode("utf-8")


def extract_new_methods(
    repo: LocalRepo,
    commit: CommitMeta,
    strict_parse: bool = True,
    stats: MiningStats | None = None,
) -> list[RawSnippet]:
    """Extract the methods a commit adds, by qualified-name set difference.

    A method is new when its dotted name exists in the after version of a
    changed Python file and not in the before version. Code is taken
    verbatim from the after version, from the def line to the last body line.

    Args:
        repo: The materialized repository.
        commit: A commit from list_window_commits.
        strict_parse: Skip file versions that contain syntax errors.
        stats: Counter updated with scanned and skipped files.

    Returns:
        One RawSnippet per new method, in file then source order.
    """
    stats = stats if stats is not None else MiningStats()
    git_repo = Git.open_repo(repo.workdir)
    git_commit = Git.get_commit(repo=git_repo, commit_id=commit.commit_id)
    parent = git_commit.parents[0] if git_commit.parents else None
    wanted = set(commit.changed_files)

    snippets: list[RawSnippet] = []
    for before_path, after_path in Git.file_changes(git_commit):
        if after_path not in wanted or not after_path.endswith(".py"):
            continue
        stats.files_scanned += 1

        try:
            after_text = _decode(Git.read_blob(git_commit, after_path))
            before_text = _decode(Git.read_blob(parent, before_path)) if parent and before_path else None
        except UnicodeDecodeError:
            logger.warning("Skipping %s at %s: not valid UTF-8", after_path, commit.commit_id[:10])
            stats.skipped["decode"] += 1
            continue
        if after_text is None:
            continue

        after_tree = parse(after_text)
        before_tree = parse(before_text) if before_text is not None else None
        if strict_parse and (after_tree.root_node.has_error or (before_tree and before_tree.root_node.has_error)):
            logger.warning("Skipping %s at %s: syntax errors", after_path, commit.commit_id[:10])
            stats.skipped["syntax"] += 1
            continue

        before_names = {d.qualified_name for d in iter_definitions(before_tree.root_node)} if before_tree else set()
        lines = after_text.split("\n")
        seen: set[str] = set()
        for definition in iter_definitions(after_tree.root_node):
            name = definition.qualified_name
            if name in seen:
                continue
            seen.add(name)
            if name in before_names:
                continue

            colon = definition.header_colon
            header_end = colon.end_byte if colon is not None else definition.node.end_byte
            signature = after_tree.root_node.text[definition.node.start_byte : header_end].decode("utf-8")
            code = "\n".join(lines[definition.start_row : definition.end_row + 1])
            snippets.append(
                RawSnippet(
                    commit_id=commit.commit_id,
                    repository=repo.full_name,
                    path=after_path,
                    file_name=PurePosixPath(after_path).name,
                    fun_name=name,
                    commit_message=commit.message,
                    code=code,
                    signature=signature,
                    committer_date=commit.committer_date,
                    start_line=definition.start_row + 1,
                    end_line=definition.end_row + 1,
                    docstring=extract_docstring(code),
                )
            )

    stats.snippets += len(snippets)
    return snippets


def mine_repository(
    repo: LocalRepo, window: TimeWindow, strict_parse: bool = True
) -> tuple[list[RawSnippet], MiningStats]:
    """Mine every new method of a repository inside the window, commit by commit."""
    stats = MiningStats()
    snippets: list[RawSnippet] = []
    for commit in list_window_commits(repo, window):
        stats.commits += 1
        snippets.extend(extract_new_methods(repo, commit, strict_parse=strict_parse, stats=stats))

    logger.info(
        "%s: %d new method(s) from %d commit(s), %d file version(s) skipped",
        repo.full_name,
        len(snippets),
        stats.commits,
        stats.files_skipped,
    )
    return snippets, stats
