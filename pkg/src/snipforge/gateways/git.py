import logging
from functools import wraps
from pathlib import Path
from typing import Iterator

import git
from git import GitCommandError, InvalidGitRepositoryError, NoSuchPathError, Repo

from snipforge.errors import CloneFailed, CorruptCache, RepoUnreadable

logger = logging.getLogger(__name__)


class Git:
    @staticmethod
    def resolve_repo(func):
        @wraps(func)
        def wrapper(*args, repo: Repo | None = None, workdir: str | Path | None = None, **kwargs):
            if repo is None and workdir is None:
                raise ValueError("Either repo or workdir must be provided")
            if repo is None:
                repo = Git.open_repo(workdir)
            return func(*args, repo=repo, **kwargs)

        return wrapper

    @staticmethod
    def open_repo(workdir: str | Path) -> Repo:
        """Open an existing working copy.

        Raises:
            CorruptCache: The directory exists but holds no git repository.
            RepoUnreadable: The directory does not exist.
        """
        try:
            return Repo(workdir)
        except InvalidGitRepositoryError:
            raise CorruptCache(f"'{workdir}' exists but is not a git repository")
        except NoSuchPathError:
            raise RepoUnreadable(f"'{workdir}' does not exist")

    # -------------------------Clone------------------------- #

    @staticmethod
    def clone(clone_url: str, workdir: str | Path) -> Repo:
        """Clone the full history of a repository (never shallow)."""
        logger.info("Cloning %s into %s", clone_url, workdir)
        try:
            return Repo.clone_from(clone_url, str(workdir))
        except (GitCommandError, OSError) as e:
            raise CloneFailed(f"Failed to clone {clone_url}: {e}")

    @resolve_repo
    @staticmethod
    def fetch(*, repo: Repo, branch: str | None = None) -> Repo:
        """Fetch from origin and fast-forward the working copy to the remote branch."""
        logger.info("Fetching %s", repo.working_dir)
        try:
            if not repo.remotes:
                return repo
            origin = repo.remotes.origin
            origin.fetch()
            if branch and f"origin/{branch}" in [ref.name for ref in origin.refs]:
                repo.git.reset("--hard", f"origin/{branch}")
        except (GitCommandError, OSError) as e:
            raise CloneFailed(f"Failed to fetch into {repo.working_dir}: {e}")
        return repo

    # -------------------------Read------------------------- #

    @resolve_repo
    @staticmethod
    def iter_commits(*, repo: Repo, rev: str = "HEAD") -> Iterator[git.Commit]:
        """Iterate non-merge commits reachable from rev."""
        try:
            yield from repo.iter_commits(rev, no_merges=True)
        except (GitCommandError, ValueError) as e:
            raise RepoUnreadable(f"Cannot walk history of {repo.working_dir}: {e}")

    @resolve_repo
    @staticmethod
    def get_commit(*, repo: Repo, commit_id: str) -> git.Commit:
        try:
            return repo.commit(commit_id)
        except (GitCommandError, ValueError, git.BadName) as e:
            raise RepoUnreadable(f"Unknown commit {commit_id} in {repo.working_dir}: {e}")

    @staticmethod
    def read_blob(commit: git.Commit, path: str) -> bytes | None:
        """Read a file as of a commit, or None if it does not exist there."""
        try:
            return (commit.tree / path).data_stream.read()
        except KeyError:
            return None

    @staticmethod
    def list_files(commit: git.Commit) -> list[str]:
        """List every file path in a commit's tree."""
        return sorted(item.path for item in commit.tree.traverse() if item.type == "blob")

    @staticmethod
    def file_changes(commit: git.Commit) -> list[tuple[str | None, str]]:
        """List the files a commit adds, modifies or renames against its first parent.

        Returns:
            (before_path, after_path) pairs sorted by after_path; before_path is
            None for added files. Deleted files are left out.
        """
        if not commit.parents:
            return [(None, path) for path in Git.list_files(commit)]

        changes = []
        for diff in commit.parents[0].diff(commit):
            if diff.deleted_file or diff.b_path is None:
                continue
            before = None if diff.new_file else diff.a_path
            changes.append((before, diff.b_path))
        return sorted(changes, key=lambda change: change[1])

    # -------------------------Snapshot------------------------- #

    @resolve_repo
    @staticmethod
    def write_snapshot(*, repo: Repo, commit_id: str, paths: list[str], dest: str | Path) -> Path:
        """Write the after-version of the given files at a commit under dest.

        Args:
            repo: The repository (injected by decorator from workdir).
            commit_id: Commit whose file versions are written.
            paths: Repository-relative file paths.
            dest: Target directory; created if missing.

        Returns:
            The destination directory.
        """
        commit = Git.get_commit(repo=repo, commit_id=commit_id)
        dest = Path(dest)
        for path in paths:
            data = Git.read_blob(commit, path)
            if data is None:
                logger.warning("File %s missing at commit %s, not written to snapshot", path, commit_id[:10])
                continue
            target = dest / path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        return dest
