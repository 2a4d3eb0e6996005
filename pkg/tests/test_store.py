from datetime import datetime, timezone

import pytest
from conftest import make_point, with_cut
from sqlalchemy import create_engine, text

from snipforge.discovery import RepoRef
from snipforge.errors import BadFilter, SchemaMismatch
from snipforge.models import DedupReport, LexicalProfile, PromptRecord, Task, Testbed, TestbedName, VulnSpan
from snipforge.store import Store

SPAN = VulnSpan(3, 8, 3, 20, "py/sql-injection", "CWE-89", "Query built from user-controlled sources.")


@pytest.fixture
def store(tmp_path):
    with Store(tmp_path / "store.db") as store:
        yield store


def _three_points():
    return [
        make_point(),
        make_point(
            fun_name="wide",
            committer_date=datetime(2022, 3, 1, tzinfo=timezone.utc),
            doc_profile=LexicalProfile(n_words=14, vocab_size=12, n_whitespaces=13),
            vuln_spans=(SPAN,),
        ),
        make_point(fun_name="bare", docstring=None, doc_valid=False, doc_profile=LexicalProfile(0, 0, 0)),
    ]


# -------------------------Points------------------------- #


def test_upsert_is_idempotent(store):
    points = _three_points()

    store.upsert_points(points)
    store.upsert_points(points)

    assert store.count("snippets") == 3
    assert store.count("documentation") == 3
    assert store.count("vulnerabilities") == 1


def test_points_roundtrip(store):
    points = _three_points()
    store.upsert_points(points)

    loaded = store.query_points()

    # commit date order: wide (March) comes first
    assert [point.fun_name for point in loaded] == ["wide", "bare", "clamp"]
    assert {point.point_id: point for point in loaded} == {point.point_id: point for point in points}


def test_composite_key_updates_in_place(store):
    store.upsert_points([make_point()])
    store.upsert_points([make_point(code="def clamp(value, low, high):\n    return value")])

    (point,) = store.query_points()
    assert store.count("snippets") == 1
    assert point.code == "def clamp(value, low, high):\n    return value"


def test_raw_snippets_wait_for_enrichment(store):
    raw = make_point(fun_name="raw").snippet
    store.upsert_points([make_point(), raw])

    assert [snippet.fun_name for snippet in store.load_snippets()] == ["clamp", "raw"]
    assert store.load_snippets(only_unenriched=True) == [raw]
    assert [point.fun_name for point in store.query_points()] == ["clamp"]


def test_spans_accumulate_unless_replaced(store):
    other = VulnSpan(1, 1, 1, 10, "py/path-injection", "CWE-22")
    store.upsert_points([make_point(vuln_spans=(SPAN,))])
    store.upsert_points([make_point(vuln_spans=(other,))])

    assert store.query_points()[0].vuln_spans == (other, SPAN)

    store.upsert_points([make_point(vuln_spans=(other,))], replace_spans=True)
    assert store.query_points()[0].vuln_spans == (other,)


def test_status_survives_upsert(store):
    point = make_point()
    store.upsert_points([point])
    store.set_status({point.point_id: "kept"})

    store.upsert_points([point])

    assert store.status_counts() == {"kept": 1}
    assert len(store.query_points("status = kept")) == 1


def test_unknown_status_is_rejected(store):
    with pytest.raises(ValueError):
        store.set_status({"abc": "maybe"})


# -------------------------Filters------------------------- #


@pytest.mark.parametrize(
    "expression, expected",
    [
        ("doc_n_words > 10", ["wide"]),
        ("doc_n_words > 10 AND doc_n_words < 5", []),
        ("", ["wide", "bare", "clamp"]),
        ("has_vuln = true", ["wide"]),
        ("has_vuln = false", ["bare", "clamp"]),
        ("doc_valid != true", ["bare"]),
        ("committed_after = 2022-05-01", ["bare", "clamp"]),
        ("committed_before = 2022-03-01 and language = en", ["wide"]),
        ("committed = 2022-06-01 AND nloc >= 5", ["bare", "clamp"]),
        ("language_confidence > 0.5", ["wide", "bare", "clamp"]),
        ("repository = 'acme/tools'", ["wide", "bare", "clamp"]),
    ],
)
def test_query_filters(store, expression, expected):
    store.upsert_points(_three_points())

    assert [point.fun_name for point in store.query_points(expression)] == expected


@pytest.mark.parametrize(
    "expression",
    ["stars > 5", "doc_n_words >> 3", "doc_n_words > many", "has_vuln > 1", "has_vuln = maybe", "committed = soon"],
)
def test_bad_filters(store, expression):
    with pytest.raises(BadFilter):
        store.query_points(expression)


# -------------------------Repositories------------------------- #


def test_repositories_roundtrip(store, tmp_path):
    pushed_at = datetime(2022, 5, 1, tzinfo=timezone.utc)
    ref = RepoRef("acme/tools", "https://github.com/acme/tools.git", 1500, 40000, "main", pushed_at)
    store.upsert_repositories([ref])
    store.upsert_repositories([ref])
    store.set_local_repository("acme/tools", tmp_path / "clone", "abc123")

    assert store.list_repositories() == [(ref, str(tmp_path / "clone"), "abc123")]


# -------------------------Testbeds and prompts------------------------- #


def test_testbed_roundtrip(store):
    cut = with_cut(make_point(), 3)
    plain = make_point(fun_name="bare")
    store.upsert_points([cut, plain])
    testbed = Testbed(
        name=TestbedName.RANDOM_CUT,
        task=Task.CODE_COMPLETION,
        points=(plain, cut),
        report=DedupReport(input_count=3, exact_removed=1),
        seed=42,
        max_size=10,
    )

    store.save_testbed(testbed)
    store.save_testbed(testbed)

    assert store.list_testbeds() == ["RandomCut"]
    assert store.load_testbed("RandomCut") == testbed


def test_missing_testbed(store):
    with pytest.raises(KeyError):
        store.load_testbed("RandomCut")


def test_prompts_roundtrip(store):
    records = [
        PromptRecord("p1", Task.CODE_COMPLETION, ("P1",), ("Complete:\nécrire",), "suffix", "1.0"),
        PromptRecord(
            "p1", Task.CODE_COMPLETION, ("P1", "P8"), ("Complete:", "Refine.\n{prior_answer}"), "suffix", "1.0"
        ),
    ]

    store.save_prompts("RandomCut", records)
    store.save_prompts("RandomCut", records[:1])

    assert store.load_prompts("RandomCut") == records[:1]
    assert store.load_prompts("WithDocString") == []


# -------------------------Meta and schema------------------------- #


def test_meta_roundtrip(store):
    store.set_meta("counts", {"mined": 7})

    assert store.get_meta("counts") == {"mined": 7}
    assert store.get_meta("absent", "fallback") == "fallback"


def test_reopen_keeps_data(tmp_path):
    path = tmp_path / "store.db"
    with Store(path) as store:
        store.upsert_points([make_point()])

    with Store(path) as store:
        assert store.count() == 1


def test_foreign_database_is_rejected(tmp_path):
    path = tmp_path / "other.db"
    engine = create_engine(f"sqlite:///{path}")
    with engine.begin() as connection:
        connection.execute(text("CREATE TABLE users (id INTEGER PRIMARY KEY)"))
    engine.dispose()

    with pytest.raises(SchemaMismatch):
        Store(path)


def test_other_schema_version_is_rejected(tmp_path):
    path = tmp_path / "store.db"
    Store(path).close()
    engine = create_engine(f"sqlite:///{path}")
    with engine.begin() as connection:
        connection.execute(text("UPDATE meta SET value = '0' WHERE key = 'schema_version'"))
    engine.dispose()

    with pytest.raises(SchemaMismatch):
        Store(path)
