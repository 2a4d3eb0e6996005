"""Relational store for mined snippets, their features, testbeds and prompts.

The store is one SQLite file. Tables mirror the data point dimensions and
are linked by point_id, the short hash of (commit_id, path, fun_name).
See docs/schema.md for the column reference.
"""

import json
import logging
import re
import threading
from contextlib import contextmanager
from dataclasses import replace
from datetime import date
from pathlib import Path
from typing import Any, Generator, Iterable, Sequence

from sqlalchemy import (
    Boolean,
    Float,
    ForeignKey,
    Integer,
    String,
    Text,
    UniqueConstraint,
    create_engine,
    delete,
    event,
    exists,
    func,
    inspect,
    select,
    update,
)
from sqlalchemy.dialects.sqlite import insert
from sqlalchemy.exc import OperationalError
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column, sessionmaker

from snipforge.discovery import RepoRef
from snipforge.errors import BadFilter, SchemaMismatch, StoreLocked
from snipforge.models import (
    CutPair,
    DataPoint,
    DedupReport,
    PromptRecord,
    RawSnippet,
    Task,
    Testbed,
    TestbedName,
    VulnSpan,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
PENDING = "pending"
CURATION_STATUSES = ("pending", "kept", "exact_duplicate", "near_duplicate", "invalid", "rejected")


class Base(DeclarativeBase):
    pass


# -------------------------Tables------------------------- #


class MetaRow(Base):
    __tablename__ = "meta"

    key: Mapped[str] = mapped_column(String, primary_key=True)
    value: Mapped[str] = mapped_column(Text)


class RepositoryRow(Base):
    __tablename__ = "repositories"

    full_name: Mapped[str] = mapped_column(String, primary_key=True)
    clone_url: Mapped[str] = mapped_column(String)
    stars: Mapped[int] = mapped_column(Integer)
    size_kb: Mapped[int] = mapped_column(Integer)
    default_branch: Mapped[str] = mapped_column(String)
    pushed_at: Mapped[str] = mapped_column(String)
    workdir: Mapped[str | None] = mapped_column(String, nullable=True)
    head_commit: Mapped[str | None] = mapped_column(String, nullable=True)


class SnippetRow(Base):
    """Identification dimension plus curation status."""

    __tablename__ = "snippets"
    __table_args__ = (UniqueConstraint("commit_id", "path", "fun_name"),)

    point_id: Mapped[str] = mapped_column(String, primary_key=True)
    commit_id: Mapped[str] = mapped_column(String, index=True)
    repository: Mapped[str] = mapped_column(String, index=True)
    path: Mapped[str] = mapped_column(String)
    file_name: Mapped[str] = mapped_column(String)
    fun_name: Mapped[str] = mapped_column(String)
    commit_message: Mapped[str] = mapped_column(Text)
    committer_date: Mapped[str] = mapped_column(String)
    committed_on: Mapped[str] = mapped_column(String, index=True)
    start_line: Mapped[int] = mapped_column(Integer)
    end_line: Mapped[int] = mapped_column(Integer)
    signature: Mapped[str] = mapped_column(Text)
    code: Mapped[str] = mapped_column(Text)
    docstring: Mapped[str | None] = mapped_column(Text, nullable=True)
    status: Mapped[str] = mapped_column(String, default=PENDING, index=True)
    scanned: Mapped[bool] = mapped_column(Boolean, default=False)


class DocumentationRow(Base):
    __tablename__ = "documentation"

    point_id: Mapped[str] = mapped_column(ForeignKey("snippets.point_id", ondelete="CASCADE"), primary_key=True)
    doc_n_words: Mapped[int] = mapped_column(Integer, index=True)
    doc_vocab_size: Mapped[int] = mapped_column(Integer)
    doc_n_whitespaces: Mapped[int] = mapped_column(Integer)
    language: Mapped[str] = mapped_column(String, index=True)
    language_confidence: Mapped[float] = mapped_column(Float)
    doc_valid: Mapped[bool] = mapped_column(Boolean)


class SyntaxRow(Base):
    __tablename__ = "syntax"

    point_id: Mapped[str] = mapped_column(ForeignKey("snippets.point_id", ondelete="CASCADE"), primary_key=True)
    n_ast_errors: Mapped[int] = mapped_column(Integer)
    n_ast_levels: Mapped[int] = mapped_column(Integer)
    n_ast_nodes: Mapped[int] = mapped_column(Integer)
    n_words: Mapped[int] = mapped_column(Integer)
    vocab_size: Mapped[int] = mapped_column(Integer)
    n_whitespaces: Mapped[int] = mapped_column(Integer)
    token_count: Mapped[int] = mapped_column(Integer, index=True)


class MetricsRow(Base):
    __tablename__ = "metrics"

    point_id: Mapped[str] = mapped_column(ForeignKey("snippets.point_id", ondelete="CASCADE"), primary_key=True)
    nloc: Mapped[int] = mapped_column(Integer)
    complexity: Mapped[int] = mapped_column(Integer)
    n_identifiers: Mapped[int] = mapped_column(Integer)


class VulnerabilityRow(Base):
    __tablename__ = "vulnerabilities"
    __table_args__ = (UniqueConstraint("point_id", "rule_id", "start_line", "start_col", "end_line", "end_col"),)

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    point_id: Mapped[str] = mapped_column(ForeignKey("snippets.point_id", ondelete="CASCADE"), index=True)
    cwe_id: Mapped[str] = mapped_column(String)
    rule_id: Mapped[str] = mapped_column(String)
    start_line: Mapped[int] = mapped_column(Integer)
    start_col: Mapped[int] = mapped_column(Integer)
    end_line: Mapped[int] = mapped_column(Integer)
    end_col: Mapped[int] = mapped_column(Integer)
    message: Mapped[str] = mapped_column(Text, default="")


class TestbedRow(Base):
    __tablename__ = "testbeds"
    __test__ = False  # not a pytest test class

    name: Mapped[str] = mapped_column(String, primary_key=True)
    task: Mapped[str] = mapped_column(String)
    seed: Mapped[int] = mapped_column(Integer)
    max_size: Mapped[int] = mapped_column(Integer)
    report: Mapped[str] = mapped_column(Text)


class MutationRow(Base):
    """Testbed membership, with the snippet mutation when the testbed cuts methods."""

    __tablename__ = "mutations"

    testbed: Mapped[str] = mapped_column(ForeignKey("testbeds.name", ondelete="CASCADE"), primary_key=True)
    point_id: Mapped[str] = mapped_column(ForeignKey("snippets.point_id", ondelete="CASCADE"), primary_key=True)
    position: Mapped[int] = mapped_column(Integer)
    prefix: Mapped[str | None] = mapped_column(Text, nullable=True)
    expected_suffix: Mapped[str | None] = mapped_column(Text, nullable=True)
    cut_line: Mapped[int | None] = mapped_column(Integer, nullable=True)
    seed: Mapped[int | None] = mapped_column(Integer, nullable=True)


class PromptRow(Base):
    __tablename__ = "prompts"
    __table_args__ = (UniqueConstraint("testbed", "point_id", "sequence"),)

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    testbed: Mapped[str] = mapped_column(String, index=True)
    point_id: Mapped[str] = mapped_column(ForeignKey("snippets.point_id", ondelete="CASCADE"))
    sequence: Mapped[str] = mapped_column(String)
    position: Mapped[int] = mapped_column(Integer)
    task: Mapped[str] = mapped_column(String)
    template_ids: Mapped[str] = mapped_column(Text)
    steps: Mapped[str] = mapped_column(Text)
    expected_output: Mapped[str] = mapped_column(Text)
    catalog_version: Mapped[str] = mapped_column(String)


# -------------------------Filters------------------------- #

_CLAUSE = re.compile(r"^\s*(?P<field>\w+)\s*(?P<op><=|>=|!=|=|<|>)\s*(?P<value>.+?)\s*$")
_AND = re.compile(r"\s+AND\s+", re.IGNORECASE)

_NUMERIC_FIELDS = {
    "doc_n_words": DocumentationRow.doc_n_words,
    "n_words": SyntaxRow.n_words,
    "vocab_size": SyntaxRow.vocab_size,
    "token_count": SyntaxRow.token_count,
    "n_ast_errors": SyntaxRow.n_ast_errors,
    "n_ast_levels": SyntaxRow.n_ast_levels,
    "n_ast_nodes": SyntaxRow.n_ast_nodes,
    "nloc": MetricsRow.nloc,
    "complexity": MetricsRow.complexity,
    "n_identifiers": MetricsRow.n_identifiers,
    "language_confidence": DocumentationRow.language_confidence,
}
_TEXT_FIELDS = {
    "language": DocumentationRow.language,
    "status": SnippetRow.status,
    "repository": SnippetRow.repository,
    "committed": SnippetRow.committed_on,
}
_BOOL_FIELDS = ("has_vuln", "doc_valid")


def _compare(column, op: str, value):
    return {
        "=": column == value,
        "!=": column != value,
        "<": column < value,
        "<=": column <= value,
        ">": column > value,
        ">=": column >= value,
    }[op]


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered not in ("true", "false"):
        raise BadFilter(f"Expected true or false, got {text!r}")
    return lowered == "true"


def _parse_date(text: str) -> str:
    try:
        return date.fromisoformat(text).isoformat()
    except ValueError:
        raise BadFilter(f"Expected an ISO date, got {text!r}")


def parse_filter(expression: str | None) -> list:
    """Translate "field op value AND ..." into SQLAlchemy conditions.

    Raises:
        BadFilter: Unknown field, bad operator or value.
    """
    if expression is None or not expression.strip():
        return []

    conditions = []
    for clause in _AND.split(expression.strip()):
        match = _CLAUSE.match(clause)
        if not match:
            raise BadFilter(f"Cannot parse filter clause {clause!r}")
        field, op, raw = match.group("field"), match.group("op"), match.group("value").strip("'\"")

        if field in _NUMERIC_FIELDS:
            try:
                value = float(raw) if "." in raw else int(raw)
            except ValueError:
                raise BadFilter(f"Field {field} needs a number, got {raw!r}")
            conditions.append(_compare(_NUMERIC_FIELDS[field], op, value))
        elif field in _TEXT_FIELDS:
            value = _parse_date(raw) if field == "committed" else raw
            conditions.append(_compare(_TEXT_FIELDS[field], op, value))
        elif field in ("committed_after", "committed_before"):
            if op != "=":
                raise BadFilter(f"Field {field} only takes '='")
            bound = _parse_date(raw)
            column = SnippetRow.committed_on
            conditions.append(column >= bound if field == "committed_after" else column <= bound)
        elif field in _BOOL_FIELDS:
            if op not in ("=", "!="):
                raise BadFilter(f"Field {field} only takes '=' or '!='")
            wanted = _parse_bool(raw) == (op == "=")
            if field == "has_vuln":
                has_vuln = exists().where(VulnerabilityRow.point_id == SnippetRow.point_id)
                conditions.append(has_vuln if wanted else ~has_vuln)
            else:
                conditions.append(DocumentationRow.doc_valid == wanted)
        else:
            raise BadFilter(f"Unknown filter field {field!r}")
    return conditions


# -------------------------Store------------------------- #


class Store:
    """Single-writer store over one SQLite file; readers may run concurrently."""

    def __init__(self, path: str | Path, timeout: float = 5.0):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.engine = create_engine(f"sqlite:///{self.path}", connect_args={"timeout": timeout})
        event.listen(self.engine, "connect", _set_sqlite_pragmas)
        self._session_factory = sessionmaker(bind=self.engine, autoflush=False, expire_on_commit=False)
        self._write_lock = threading.Lock()
        self._check_schema()

    def _check_schema(self) -> None:
        try:
            tables = set(inspect(self.engine).get_table_names())
            if tables and "meta" not in tables:
                raise SchemaMismatch(f"{self.path} is not a snipforge store")
            if "meta" in tables:
                with self._session_factory() as session:
                    row = session.get(MetaRow, "schema_version")
                if row is None or row.value != SCHEMA_VERSION:
                    found = row.value if row else "none"
                    raise SchemaMismatch(f"{self.path} has schema version {found}, expected {SCHEMA_VERSION}")
            Base.metadata.create_all(self.engine)
            with self.transaction() as session:
                session.merge(MetaRow(key="schema_version", value=SCHEMA_VERSION))
        except OperationalError as e:
            raise _translate(e, self.path)

    def close(self) -> None:
        self.engine.dispose()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @contextmanager
    def transaction(self) -> Generator[Session, None, None]:
        """Serialized write transaction: commits on success, rolls back on error."""
        with self._write_lock:
            session = self._session_factory()
            try:
                yield session
                session.commit()
            except OperationalError as e:
                session.rollback()
                raise _translate(e, self.path)
            except Exception:
                session.rollback()
                raise
            finally:
                session.close()

    @contextmanager
    def reading(self) -> Generator[Session, None, None]:
        session = self._session_factory()
        try:
            yield session
        except OperationalError as e:
            raise _translate(e, self.path)
        finally:
            session.close()

    # -------------------------Meta------------------------- #

    def set_meta(self, key: str, value: Any) -> None:
        with self.transaction() as session:
            session.merge(MetaRow(key=key, value=json.dumps(value, sort_keys=True)))

    def get_meta(self, key: str, default: Any = None) -> Any:
        with self.reading() as session:
            row = session.get(MetaRow, key)
        return json.loads(row.value) if row is not None else default

    # -------------------------Repositories------------------------- #

    def upsert_repositories(self, refs: Iterable[RepoRef]) -> int:
        rows = [ref.to_dict() for ref in refs]
        if not rows:
            return 0
        statement = insert(RepositoryRow).values(rows)
        statement = statement.on_conflict_do_update(
            index_elements=["full_name"],
            set_={key: statement.excluded[key] for key in rows[0] if key != "full_name"},
        )
        with self.transaction() as session:
            session.execute(statement)
        return len(rows)

    def set_local_repository(self, full_name: str, workdir: str | Path, head_commit: str) -> None:
        with self.transaction() as session:
            row = session.get(RepositoryRow, full_name)
            if row is not None:
                row.workdir = str(workdir)
                row.head_commit = head_commit

    def list_repositories(self) -> list[tuple[RepoRef, str | None, str | None]]:
        """Every discovered repository with its local workdir and head (None before cloning)."""
        with self.reading() as session:
            rows = session.scalars(select(RepositoryRow).order_by(RepositoryRow.full_name)).all()
        return [
            (
                RepoRef.from_dict(
                    {
                        "full_name": row.full_name,
                        "clone_url": row.clone_url,
                        "stars": row.stars,
                        "size_kb": row.size_kb,
                        "default_branch": row.default_branch,
                        "pushed_at": row.pushed_at,
                    }
                ),
                row.workdir,
                row.head_commit,
            )
            for row in rows
        ]

    # -------------------------Points------------------------- #

    def upsert_points(self, points: Sequence[RawSnippet], replace_spans: bool = False) -> int:
        """Insert or update points keyed by (commit_id, path, fun_name).

        Enriched points also write their documentation, syntax and metrics
        rows. Vulnerability spans are added to the stored ones, or replace
        them when replace_spans is set (which also marks the points scanned).

        Returns:
            The number of points written.

        Raises:
            StoreLocked: Another writer holds the store.
        """
        if not points:
            return 0

        with self.transaction() as session:
            for point in points:
                record = point.to_dict()
                snippet = {
                    key: record[key]
                    for key in (
                        "point_id",
                        "commit_id",
                        "repository",
                        "path",
                        "file_name",
                        "fun_name",
                        "commit_message",
                        "committer_date",
                        "start_line",
                        "end_line",
                        "signature",
                        "code",
                        "docstring",
                    )
                }
                snippet["committed_on"] = point.committer_date.date().isoformat()
                _upsert(session, SnippetRow, snippet, ["point_id"])

                if not isinstance(point, DataPoint):
                    continue
                _upsert(
                    session,
                    DocumentationRow,
                    {
                        "point_id": point.point_id,
                        "doc_n_words": point.doc_profile.n_words,
                        "doc_vocab_size": point.doc_profile.vocab_size,
                        "doc_n_whitespaces": point.doc_profile.n_whitespaces,
                        "language": point.doc_language.code,
                        "language_confidence": point.doc_language.confidence,
                        "doc_valid": point.doc_valid,
                    },
                    ["point_id"],
                )
                _upsert(
                    session,
                    SyntaxRow,
                    {
                        "point_id": point.point_id,
                        "n_ast_errors": point.syntax.n_ast_errors,
                        "n_ast_levels": point.syntax.n_ast_levels,
                        "n_ast_nodes": point.syntax.n_ast_nodes,
                        "n_words": point.code_profile.n_words,
                        "vocab_size": point.code_profile.vocab_size,
                        "n_whitespaces": point.code_profile.n_whitespaces,
                        "token_count": point.token_count,
                    },
                    ["point_id"],
                )
                _upsert(
                    session,
                    MetricsRow,
                    {
                        "point_id": point.point_id,
                        "nloc": point.nloc,
                        "complexity": point.complexity,
                        "n_identifiers": point.n_identifiers,
                    },
                    ["point_id"],
                )

                if replace_spans:
                    session.execute(delete(VulnerabilityRow).where(VulnerabilityRow.point_id == point.point_id))
                    session.execute(
                        update(SnippetRow).where(SnippetRow.point_id == point.point_id).values(scanned=True)
                    )
                for span in point.vuln_spans:
                    statement = insert(VulnerabilityRow).values(point_id=point.point_id, **span.to_dict())
                    session.execute(statement.on_conflict_do_nothing())

        logger.debug("Upserted %d point(s) into %s", len(points), self.path)
        return len(points)

    def count(self, table: str = "snippets") -> int:
        model = Base.metadata.tables[table]
        with self.reading() as session:
            return session.execute(select(func.count()).select_from(model)).scalar_one()

    def load_snippets(self, only_unenriched: bool = False) -> list[RawSnippet]:
        """Mined snippets in commit date, path, fun_name order."""
        query = select(SnippetRow)
        if only_unenriched:
            query = query.where(~exists().where(SyntaxRow.point_id == SnippetRow.point_id))
        query = query.order_by(SnippetRow.committer_date, SnippetRow.path, SnippetRow.fun_name)
        with self.reading() as session:
            rows = session.scalars(query).all()
        return [RawSnippet.from_dict(_snippet_dict(row)) for row in rows]

    def query_points(self, expression: str | None = None) -> list[DataPoint]:
        """Enriched points matching a filter expression.

        Args:
            expression: Clauses "field op value" joined by AND; empty means every point.

        Returns:
            Points ordered by commit date, then path, then fun_name.

        Raises:
            BadFilter: The expression cannot be parsed.
        """
        conditions = parse_filter(expression)
        query = (
            select(SnippetRow, DocumentationRow, SyntaxRow, MetricsRow)
            .join(DocumentationRow, DocumentationRow.point_id == SnippetRow.point_id)
            .join(SyntaxRow, SyntaxRow.point_id == SnippetRow.point_id)
            .join(MetricsRow, MetricsRow.point_id == SnippetRow.point_id)
            .where(*conditions)
            .order_by(SnippetRow.committer_date, SnippetRow.path, SnippetRow.fun_name)
        )
        with self.reading() as session:
            rows = session.execute(query).all()
            spans = self._spans_for(session, [snippet.point_id for snippet, *_ in rows])
        return [_point_from_rows(*row, spans.get(row[0].point_id, [])) for row in rows]

    def _spans_for(self, session: Session, point_ids: list[str]) -> dict[str, list[dict]]:
        spans: dict[str, list[dict]] = {}
        for start in range(0, len(point_ids), 500):
            chunk = point_ids[start : start + 500]
            for row in session.scalars(select(VulnerabilityRow).where(VulnerabilityRow.point_id.in_(chunk))):
                spans.setdefault(row.point_id, []).append(
                    VulnSpan(
                        start_line=row.start_line,
                        start_col=row.start_col,
                        end_line=row.end_line,
                        end_col=row.end_col,
                        rule_id=row.rule_id,
                        cwe_id=row.cwe_id,
                        message=row.message,
                    ).to_dict()
                )
        return {point_id: sorted(items, key=_span_sort_key) for point_id, items in spans.items()}

    def set_status(self, statuses: dict[str, str]) -> None:
        """Record the curation outcome per point id."""
        for status in set(statuses.values()):
            if status not in CURATION_STATUSES:
                raise ValueError(f"Unknown curation status {status!r}")
        with self.transaction() as session:
            for point_id, status in statuses.items():
                row = session.get(SnippetRow, point_id)
                if row is not None:
                    row.status = status

    def status_counts(self) -> dict[str, int]:
        with self.reading() as session:
            statuses = session.scalars(select(SnippetRow.status)).all()
        counts: dict[str, int] = {}
        for status in statuses:
            counts[status] = counts.get(status, 0) + 1
        return dict(sorted(counts.items()))

    # -------------------------Testbeds------------------------- #

    def save_testbed(self, testbed: Testbed) -> None:
        """Replace the stored testbed of the same name, members and mutations included."""
        with self.transaction() as session:
            session.execute(delete(MutationRow).where(MutationRow.testbed == str(testbed.name)))
            session.merge(
                TestbedRow(
                    name=str(testbed.name),
                    task=str(testbed.task),
                    seed=testbed.seed,
                    max_size=testbed.max_size,
                    report=json.dumps(testbed.report.to_dict(), sort_keys=True),
                )
            )
            for position, point in enumerate(testbed.points):
                mutation = point.mutation
                session.add(
                    MutationRow(
                        testbed=str(testbed.name),
                        point_id=point.point_id,
                        position=position,
                        prefix=mutation.prefix if mutation else None,
                        expected_suffix=mutation.expected_suffix if mutation else None,
                        cut_line=mutation.cut_line if mutation else None,
                        seed=mutation.seed if mutation else None,
                    )
                )

    def list_testbeds(self) -> list[str]:
        with self.reading() as session:
            return list(session.scalars(select(TestbedRow.name).order_by(TestbedRow.name)).all())

    def load_testbed(self, name: str) -> Testbed:
        with self.reading() as session:
            row = session.get(TestbedRow, name)
            if row is None:
                raise KeyError(f"No testbed named {name!r} in {self.path}")
            members = session.scalars(
                select(MutationRow).where(MutationRow.testbed == name).order_by(MutationRow.position)
            ).all()

        points_by_id = {point.point_id: point for point in self.query_points()}
        points = []
        for member in members:
            point = points_by_id[member.point_id]
            if member.prefix is not None:
                point = _with_mutation(point, member)
            points.append(point)
        return Testbed(
            name=TestbedName(row.name),
            task=Task(row.task),
            points=tuple(points),
            report=DedupReport.from_dict(json.loads(row.report)),
            seed=row.seed,
            max_size=row.max_size,
        )

    # -------------------------Prompts------------------------- #

    def save_prompts(self, testbed: str, records: Sequence[PromptRecord]) -> int:
        """Replace the stored prompt records of a testbed."""
        with self.transaction() as session:
            session.execute(delete(PromptRow).where(PromptRow.testbed == testbed))
            for position, record in enumerate(records):
                session.add(
                    PromptRow(
                        testbed=testbed,
                        point_id=record.point_id,
                        sequence="+".join(record.template_ids),
                        position=position,
                        task=str(record.task),
                        template_ids=json.dumps(list(record.template_ids)),
                        steps=json.dumps(list(record.steps), ensure_ascii=False),
                        expected_output=record.expected_output,
                        catalog_version=record.catalog_version,
                    )
                )
        return len(records)

    def load_prompts(self, testbed: str) -> list[PromptRecord]:
        with self.reading() as session:
            rows = session.scalars(
                select(PromptRow).where(PromptRow.testbed == testbed).order_by(PromptRow.position)
            ).all()
        return [
            PromptRecord(
                point_id=row.point_id,
                task=Task(row.task),
                template_ids=tuple(json.loads(row.template_ids)),
                steps=tuple(json.loads(row.steps)),
                expected_output=row.expected_output,
                catalog_version=row.catalog_version,
            )
            for row in rows
        ]


# -------------------------Helpers------------------------- #


def _set_sqlite_pragmas(dbapi_connection, _record) -> None:
    cursor = dbapi_connection.cursor()
    cursor.execute("PRAGMA foreign_keys=ON")
    cursor.execute("PRAGMA journal_mode=WAL")
    cursor.close()


def _translate(error: OperationalError, path: Path) -> Exception:
    if "locked" in str(error).lower() or "busy" in str(error).lower():
        return StoreLocked(f"Store {path} is locked by another writer")
    return error


def _upsert(session: Session, model, values: dict[str, Any], keys: list[str]) -> None:
    statement = insert(model).values(**values)
    statement = statement.on_conflict_do_update(
        index_elements=keys,
        set_={key: statement.excluded[key] for key in values if key not in keys},
    )
    session.execute(statement)


def _span_sort_key(span: dict) -> tuple:
    return (span["start_line"], span["start_col"], span["end_line"], span["end_col"], span["rule_id"], span["cwe_id"])


def _snippet_dict(row: SnippetRow) -> dict[str, Any]:
    return {
        "commit_id": row.commit_id,
        "repository": row.repository,
        "path": row.path,
        "file_name": row.file_name,
        "fun_name": row.fun_name,
        "commit_message": row.commit_message,
        "committer_date": row.committer_date,
        "start_line": row.start_line,
        "end_line": row.end_line,
        "signature": row.signature,
        "code": row.code,
        "docstring": row.docstring,
    }


def _point_from_rows(
    snippet: SnippetRow, doc: DocumentationRow, syntax: SyntaxRow, metrics: MetricsRow, spans: list[dict]
) -> DataPoint:
    record = _snippet_dict(snippet)
    record.update(
        {
            "doc_n_words": doc.doc_n_words,
            "doc_vocab_size": doc.doc_vocab_size,
            "doc_n_whitespaces": doc.doc_n_whitespaces,
            "language": doc.language,
            "language_confidence": doc.language_confidence,
            "doc_valid": doc.doc_valid,
            "n_ast_errors": syntax.n_ast_errors,
            "n_ast_levels": syntax.n_ast_levels,
            "n_ast_nodes": syntax.n_ast_nodes,
            "n_words": syntax.n_words,
            "vocab_size": syntax.vocab_size,
            "n_whitespaces": syntax.n_whitespaces,
            "token_count": syntax.token_count,
            "nloc": metrics.nloc,
            "complexity": metrics.complexity,
            "n_identifiers": metrics.n_identifiers,
            "vuln_spans": spans,
            "mutation": None,
        }
    )
    return DataPoint.from_dict(record)


def _with_mutation(point: DataPoint, member: MutationRow) -> DataPoint:
    return replace(
        point,
        mutation=CutPair(
            snippet_id=point.point_id,
            prefix=member.prefix,
            expected_suffix=member.expected_suffix,
            cut_line=member.cut_line,
            seed=member.seed,
        ),
    )
