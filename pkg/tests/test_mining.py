from datetime import date

import pytest
from conftest import CORE_V2, MINED_IN_WINDOW, NEW_MOD, build_fixture_repo

from snipforge.discovery import LocalRepo
from snipforge.errors import RepoUnreadable
from snipforge.gateways.git import Git
from snipforge.mining import extract_docstring, extract_new_methods, list_window_commits, mine_repository
from snipforge.models import TimeWindow

WINDOW = TimeWindow(start=date(2022, 1, 1), end=date(2022, 12, 31))


def test_list_window_commits_keeps_in_window_commits_oldest_first(fixture_repo):
    commits = list_window_commits(fixture_repo, WINDOW)

    assert len(commits) == 7
    assert [meta.committer_date.date().isoformat() for meta in commits] == [
        "2022-01-10",
        "2022-02-20",
        "2022-03-15",
        "2022-05-01",
        "2022-07-04",
        "2022-09-09",
        "2022-11-30",
    ]
    assert commits[0].changed_files == ("new_mod.py",)


def test_window_bounds_are_inclusive(fixture_repo):
    commits = list_window_commits(fixture_repo, TimeWindow(start=date(2022, 1, 10), end=date(2022, 1, 10)))

    assert len(commits) == 1


def test_empty_window_yields_no_commits(fixture_repo):
    assert list_window_commits(fixture_repo, TimeWindow(start=date(2020, 1, 1), end=date(2020, 12, 31))) == []


def test_mine_repository_finds_exactly_the_new_methods(fixture_repo):
    snippets, stats = mine_repository(fixture_repo, WINDOW)

    assert [snippet.fun_name for snippet in snippets] == MINED_IN_WINDOW
    assert stats.commits == 7
    assert stats.skipped["syntax"] == 1
    assert stats.snippets == 7


def test_lenient_parse_reads_every_file(fixture_repo):
    snippets, stats = mine_repository(fixture_repo, WINDOW, strict_parse=False)

    assert stats.files_skipped == 0
    assert set(MINED_IN_WINDOW) <= {snippet.fun_name for snippet in snippets}


def test_snippet_code_spans_def_line_to_last_body_line(fixture_repo):
    snippets, _ = mine_repository(fixture_repo, WINDOW)
    by_name = {snippet.fun_name: snippet for snippet in snippets}

    resize = by_name["Widget.resize"]
    assert resize.code.splitlines()[0] == "    def resize(self, width, limit=80):"
    assert resize.code.splitlines()[-1] == "        return self.width"
    assert resize.signature == "def resize(self, width, limit=80):"
    assert resize.path == "widget.py"
    assert resize.start_line == 8
    assert resize.end_line == 13

    clamp = by_name["Widget.resize.clamp"]
    assert clamp.start_line == 9
    assert clamp.end_line == 10


def test_docstring_and_commit_metadata_are_captured(fixture_repo):
    snippets, _ = mine_repository(fixture_repo, WINDOW)
    gamma = next(snippet for snippet in snippets if snippet.fun_name == "gamma")

    assert gamma.docstring == (
        "Return the mean of a non-empty list of numbers.\n\nRaises ZeroDivisionError on an empty list."
    )
    assert gamma.commit_message.startswith("Add gamma")
    assert gamma.committer_date.date() == date(2022, 9, 9)
    assert gamma.repository == "local/fixture_repo"
    assert gamma.file_name == "core.py"


def test_rename_counts_as_new_method(fixture_repo):
    commits = list_window_commits(fixture_repo, WINDOW)
    rename = next(meta for meta in commits if meta.message.startswith("Rename"))

    assert [snippet.fun_name for snippet in extract_new_methods(fixture_repo, rename)] == ["assist"]


def test_modified_method_is_not_new(fixture_repo):
    commits = list_window_commits(fixture_repo, WINDOW)
    edit = next(meta for meta in commits if meta.message.startswith("Parenthesize"))

    assert extract_new_methods(fixture_repo, edit) == []


def test_mining_twice_gives_identical_results(fixture_repo):
    first, _ = mine_repository(fixture_repo, WINDOW)
    second, _ = mine_repository(fixture_repo, WINDOW)

    assert first == second


def test_same_history_gives_same_point_ids(tmp_path, fixture_repo):
    clone_path = tmp_path / "fixture_repo"
    clone_path.mkdir()
    build_fixture_repo(clone_path)
    copy = LocalRepo(full_name="local/fixture_repo", workdir=clone_path, head_commit="")

    original, _ = mine_repository(fixture_repo, WINDOW)
    rebuilt, _ = mine_repository(copy, WINDOW)

    assert [snippet.point_id for snippet in original] == [snippet.point_id for snippet in rebuilt]


def test_missing_repository_is_unreadable(tmp_path):
    with pytest.raises(RepoUnreadable):
        list_window_commits(LocalRepo("a/b", tmp_path / "missing", ""), WINDOW)


@pytest.mark.parametrize(
    "source, expected",
    [
        ('def f():\n    """Single line."""\n    return 1', "Single line."),
        ("def f():\n    '''Other quotes.'''\n    return 1", "Other quotes."),
        ('def f():\n    r"""Raw \\d string."""\n    return 1', "Raw \\d string."),
        ('def f():\n    # leading comment\n    """After a comment."""\n    return 1', "After a comment."),
        ('def f():\n    x = 1\n    """Not a docstring."""\n    return x', None),
        ("def f():\n    return 1", None),
        (
            '    def method(self):\n        """Indented\n\n        body text.\n        """\n        pass',
            "Indented\n\nbody text.",
        ),
    ],
)
def test_extract_docstring(source, expected):
    assert extract_docstring(source) == expected


def test_snapshot_holds_file_versions_as_of_the_commit(tmp_path, fixture_repo):
    first = list_window_commits(fixture_repo, WINDOW)[0]

    dest = Git.write_snapshot(
        workdir=fixture_repo.workdir,
        commit_id=first.commit_id,
        paths=["new_mod.py", "core.py", "not_there.py"],
        dest=tmp_path / "snapshot",
    )

    assert (dest / "new_mod.py").read_text(encoding="utf-8") == NEW_MOD
    assert (dest / "core.py").read_text(encoding="utf-8") == CORE_V2
    assert not (dest / "not_there.py").exists()
