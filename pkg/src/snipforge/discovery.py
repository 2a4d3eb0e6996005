"""Repository discovery: host search queries, search paging and local clones."""

import logging
import re
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from typing import Any

from snipforge import constants
from snipforge.errors import CloneFailed, CorruptCache, SnipforgeError
from snipforge.gateways.git import Git
from snipforge.gateways.github import GitHub
from snipforge.models import parse_datetime

logger = logging.getLogger(__name__)

_CLAUSE_PATTERNS = {
    "language": re.compile(r"^language:(?P<value>\S+)$"),
    "fork": re.compile(r"^fork:(?P<value>true|false)$"),
    "size": re.compile(r"^size:>=(?P<value>\d+)$"),
    "pushed": re.compile(r"^pushed:>(?P<value>\d{4}-\d{2}-\d{2})$"),
    "stars": re.compile(r"^stars:>(?P<value>\d+)$"),
}


@dataclass(frozen=True)
class RepoQuery:
    language: str = constants.DEFAULT_LANGUAGE
    fork_allowed: bool = False
    min_size_kb: int = constants.DEFAULT_MIN_SIZE_KB
    pushed_after: date = date.fromisoformat(constants.DEFAULT_PUSHED_AFTER)
    min_stars: int = constants.DEFAULT_MIN_STARS
    max_results: int = constants.DEFAULT_MAX_REPOS

    def __post_init__(self):
        if not self.language or any(ch.isspace() for ch in self.language):
            raise ValueError(f"language must be a single non-empty word, got {self.language!r}")
        if self.min_size_kb < 0 or self.min_stars < 0:
            raise ValueError("min_size_kb and min_stars must be >= 0")
        if self.max_results <= 0:
            raise ValueError("max_results must be > 0")
        if not isinstance(self.pushed_after, date):
            raise ValueError("pushed_after must be a date")

    @classmethod
    def from_config(cls, config) -> "RepoQuery":
        """Build a query from a DiscoveryConfig section."""
        return cls(
            language=config.language,
            fork_allowed=config.fork_allowed,
            min_size_kb=config.min_size_kb,
            pushed_after=date.fromisoformat(config.pushed_after),
            min_stars=config.min_stars,
            max_results=config.max_results,
        )


@dataclass(frozen=True)
class RepoRef:
    full_name: str
    clone_url: str
    stars: int
    size_kb: int
    default_branch: str
    pushed_at: datetime

    def __post_init__(self):
        if self.full_name.count("/") != 1 or self.full_name.startswith("/") or self.full_name.endswith("/"):
            raise ValueError(f"full_name must be owner/name, got {self.full_name!r}")

    @classmethod
    def from_payload(cls, item: dict[str, Any]) -> "RepoRef":
        return cls(
            full_name=item["full_name"],
            clone_url=item["clone_url"],
            stars=int(item.get("stargazers_count", 0)),
            size_kb=int(item.get("size", 0)),
            default_branch=item.get("default_branch") or "main",
            pushed_at=parse_datetime(item["pushed_at"].replace("Z", "+00:00")),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "full_name": self.full_name,
            "clone_url": self.clone_url,
            "stars": self.stars,
            "size_kb": self.size_kb,
            "default_branch": self.default_branch,
            "pushed_at": self.pushed_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RepoRef":
        return cls(
            full_name=data["full_name"],
            clone_url=data["clone_url"],
            stars=int(data["stars"]),
            size_kb=int(data["size_kb"]),
            default_branch=data["default_branch"],
            pushed_at=parse_datetime(data["pushed_at"]),
        )


@dataclass(frozen=True)
class LocalRepo:
    full_name: str
    workdir: Path
    head_commit: str


# -------------------------Query------------------------- #


def build_search_query(config: RepoQuery) -> str:
    """Serialize a query into the host's search syntax.

    Clause order is fixed: language, fork, size, pushed, stars.
    """
    return " ".join(
        [
            f"language:{config.language}",
            f"fork:{'true' if config.fork_allowed else 'false'}",
            f"size:>={config.min_size_kb}",
            f"pushed:>{config.pushed_after.isoformat()}",
            f"stars:>{config.min_stars}",
        ]
    )


def parse_search_query(text: str, max_results: int = constants.DEFAULT_MAX_REPOS) -> RepoQuery:
    """Parse a query string produced by build_search_query.

    Args:
        text: Host query string with the five clauses.
        max_results: Carried over, since the host query does not encode it.

    Raises:
        ValueError: A clause is unknown, repeated, malformed or missing.
    """
    values: dict[str, str] = {}
    for clause in text.split():
        for name, pattern in _CLAUSE_PATTERNS.items():
            match = pattern.match(clause)
            if match:
                if name in values:
                    raise ValueError(f"Clause '{name}' appears twice in query {text!r}")
                values[name] = match.group("value")
                break
        else:
            raise ValueError(f"Unknown or malformed clause {clause!r} in query {text!r}")

    missing = [name for name in _CLAUSE_PATTERNS if name not in values]
    if missing:
        raise ValueError(f"Query {text!r} is missing clauses: {', '.join(missing)}")

    return RepoQuery(
        language=values["language"],
        fork_allowed=values["fork"] == "true",
        min_size_kb=int(values["size"]),
        pushed_after=date.fromisoformat(values["pushed"]),
        min_stars=int(values["stars"]),
        max_results=max_results,
    )


def _with_star_range(query: RepoQuery, upper: int | None) -> str:
    """The query string restricted to one star bucket (upper bound inclusive)."""
    text = build_search_query(query)
    if upper is None:
        return text
    return text.replace(f"stars:>{query.min_stars}", f"stars:{query.min_stars + 1}..{upper}")


def _violations(item: dict[str, Any], query: RepoQuery) -> list[str]:
    """Names of the query clauses a host result does not satisfy."""
    violated = []
    language = item.get("language")
    if language is not None and language.lower() != query.language.lower():
        violated.append("language")
    if not query.fork_allowed and item.get("fork"):
        violated.append("fork")
    if int(item.get("size", 0)) < query.min_size_kb:
        violated.append("size")
    pushed_at = item.get("pushed_at")
    if not pushed_at or parse_datetime(pushed_at.replace("Z", "+00:00")).date() <= query.pushed_after:
        violated.append("pushed")
    if int(item.get("stargazers_count", 0)) <= query.min_stars:
        violated.append("stars")
    return violated


# -------------------------Search------------------------- #


def search_repositories(
    query: str,
    page_limit: int,
    max_results: int = constants.DEFAULT_MAX_REPOS,
    per_page: int = constants.SEARCH_PAGE_SIZE,
) -> list[RepoRef]:
    """Search the host for repositories matching a query string.

    Pages are fetched sequentially. When one query reaches the host's result
    cap, the search continues in a lower star bucket, so results beyond the
    cap are not silently truncated. Every result is re-checked against the
    query clauses; violators are dropped with a warning.

    Args:
        query: Host query string (see build_search_query).
        page_limit: Maximum number of pages fetched over all buckets.
        max_results: Maximum number of refs returned.
        per_page: Page size requested from the host.

    Returns:
        Matching refs sorted by stars descending (ties by full_name).
    """
    parsed = parse_search_query(query, max_results=max_results)
    collected: dict[str, RepoRef] = {}
    pages_used = 0
    upper: int | None = None

    while pages_used < page_limit and len(collected) < max_results:
        bucket_query = _with_star_range(parsed, upper)
        bucket_seen = 0
        lowest_stars: int | None = None
        total_count = 0
        page = 1

        while pages_used < page_limit:
            payload = GitHub.search_repositories_page(query=bucket_query, page=page, per_page=per_page)
            pages_used += 1
            items = payload["items"]
            total_count = payload["total_count"]

            for item in items:
                bucket_seen += 1
                stars = int(item.get("stargazers_count", 0))
                lowest_stars = stars if lowest_stars is None else min(lowest_stars, stars)
                violated = _violations(item, parsed)
                if violated:
                    logger.warning(
                        "Dropping %s: violates %s clause(s)", item.get("full_name", "<unknown>"), ", ".join(violated)
                    )
                    continue
                ref = RepoRef.from_payload(item)
                collected.setdefault(ref.full_name, ref)

            if not items or bucket_seen >= min(total_count, constants.SEARCH_RESULT_CAP):
                break
            page += 1

        cap_binds = total_count > constants.SEARCH_RESULT_CAP and bucket_seen >= constants.SEARCH_RESULT_CAP
        if not cap_binds or lowest_stars is None:
            break

        # Next bucket starts at the lowest star count seen; equal-star repos are deduplicated by name
        next_upper = lowest_stars if lowest_stars != upper else lowest_stars - 1
        if next_upper <= parsed.min_stars:
            break
        logger.info("Search cap reached, continuing with stars <= %d", next_upper)
        upper = next_upper

    refs = sorted(collected.values(), key=lambda ref: (-ref.stars, ref.full_name))
    logger.info("Search returned %d repositories in %d page(s)", min(len(refs), max_results), pages_used)
    return refs[:max_results]


# -------------------------Materialize------------------------- #


def _cache_path(ref: RepoRef, cache_dir: str | Path) -> Path:
    return Path(cache_dir) / ref.full_name.replace("/", "__")


def materialize_repository(ref: RepoRef, cache_dir: str | Path) -> LocalRepo:
    """Clone a repository with full history, or fetch it if already cached.

    Raises:
        CloneFailed: Cloning or fetching failed (network, permissions).
        CorruptCache: The cache directory exists but is not a repository.
    """
    workdir = _cache_path(ref, cache_dir)
    try:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CloneFailed(f"Cannot create cache directory {cache_dir}: {e}")

    if workdir.exists() and any(workdir.iterdir()):
        repo = Git.open_repo(workdir)
        Git.fetch(repo=repo, branch=ref.default_branch)
    else:
        repo = Git.clone(ref.clone_url, workdir)

    return LocalRepo(full_name=ref.full_name, workdir=workdir, head_commit=repo.head.commit.hexsha)


def materialize_all(
    refs: list[RepoRef], cache_dir: str | Path, workers: int = 4
) -> tuple[list[LocalRepo], dict[str, SnipforgeError]]:
    """Materialize several repositories concurrently.

    Returns:
        The local repositories (in the order of refs) and the failures keyed by full_name.
    """
    results: dict[str, LocalRepo] = {}
    failures: dict[str, SnipforgeError] = {}

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as executor:
        futures = {executor.submit(materialize_repository, ref, cache_dir): ref for ref in refs}
        for future in as_completed(futures):
            ref = futures[future]
            try:
                results[ref.full_name] = future.result()
            except (CloneFailed, CorruptCache) as e:
                logger.warning("Skipping %s: %s", ref.full_name, e)
                failures[ref.full_name] = e

    return [results[ref.full_name] for ref in refs if ref.full_name in results], failures
