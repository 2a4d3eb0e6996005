"""Stage orchestration over the store.

Every stage reads its inputs from the store and writes its outputs back, so
stages can be run one at a time from the CLI or chained by run_all. Stage
counts and tool versions are kept in the store's meta table and end up in
the run manifest written by the export stage.
"""

import logging
import tempfile
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from snipforge import __version__
from snipforge.config import SnipforgeConfig
from snipforge.credentials import resolve_token
from snipforge.curation import (
    apply_review_verdicts,
    dedup_exact,
    dedup_near,
    sample_for_manual_review,
    validate_point,
)
from snipforge.discovery import (
    LocalRepo,
    RepoQuery,
    RepoRef,
    build_search_query,
    materialize_all,
    search_repositories,
)
from snipforge.errors import (
    CorruptCache,
    RepoUnreadable,
    SarifMalformed,
    ScanFailed,
    ScannerMissing,
    SnipforgeError,
    VocabMissing,
)
from snipforge.export import (
    MANIFEST_FILE,
    TIMINGS_FILE,
    export_points,
    export_prompts,
    export_testbed,
    write_json,
)
from snipforge.features import BpeTokenizer, LangdetectIdentifier, LanguageIdentifier, enrich
from snipforge.gateways.codeql import CodeQL
from snipforge.gateways.git import Git
from snipforge.gateways.github import GitHub
from snipforge.mining import MiningStats, mine_repository
from snipforge.models import DataPoint, RawSnippet, TestbedName
from snipforge.prompts import load_catalog, render_testbed
from snipforge.store import Store
from snipforge.syntax import grammar_version
from snipforge.testbeds import DESIGNATED_TEMPLATES, build_testbeds
from snipforge.utils import stable_hash
from snipforge.vulnerability import load_cwe_list, map_findings, run_scan

logger = logging.getLogger(__name__)

STAGES = ("discover", "mine", "enrich", "curate", "scan", "testbed", "prompts", "export")
LOCAL_OWNER = "local"


@dataclass
class RunManifest:
    """What a run produced, from which configuration and with which tools.

    Stage timings are kept out of the manifest (see run_timings.json) so two
    runs with the same configuration and seed write identical manifests.
    """

    run_id: str
    config_hash: str
    seed: int
    counts: dict[str, Any] = field(default_factory=dict)
    testbeds: dict[str, dict[str, Any]] = field(default_factory=dict)
    tool_versions: dict[str, str] = field(default_factory=dict)

    @classmethod
    def for_config(cls, config: SnipforgeConfig, **kwargs) -> "RunManifest":
        config_hash = config.config_hash()
        return cls(run_id=stable_hash(config_hash, config.seed), config_hash=config_hash, seed=config.seed, **kwargs)

    def funnel_violations(self) -> list[str]:
        """Funnel count pairs that are out of order (a later stage holding more points than an earlier one)."""
        order = ["mined", "enriched", "deduplicated", "validated", "kept"]
        present = [name for name in order if name in self.counts]
        violations = []
        for earlier, later in zip(present, present[1:]):
            if self.counts[later] > self.counts[earlier]:
                violations.append(f"{later} ({self.counts[later]}) > {earlier} ({self.counts[earlier]})")
        return violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "counts": dict(sorted(self.counts.items())),
            "testbeds": dict(sorted(self.testbeds.items())),
            "tool_versions": dict(sorted(self.tool_versions.items())),
        }


@dataclass
class StageOutcome:
    stage: str
    counts: dict[str, Any] = field(default_factory=dict)
    partial: bool = False
    note: str = ""


class Pipeline:
    """Runs the stages of one configuration against one store."""

    def __init__(
        self,
        config: SnipforgeConfig,
        store: Store,
        *,
        tokenizer: BpeTokenizer | None = None,
        identifier: LanguageIdentifier | None = None,
    ):
        self.config = config
        self.store = store
        self._tokenizer = tokenizer
        self._identifier = identifier

    # -------------------------Shared------------------------- #

    @property
    def tokenizer(self) -> BpeTokenizer:
        if self._tokenizer is None:
            path = self.config.features.tokenizer_path
            if path is None:
                raise VocabMissing("No tokenizer model configured (features.tokenizer_path)")
            self._tokenizer = BpeTokenizer.from_file(path)
        return self._tokenizer

    @property
    def identifier(self) -> LanguageIdentifier:
        if self._identifier is None:
            self._identifier = LangdetectIdentifier(seed=self.config.seed)
        return self._identifier

    def _record(self, outcome: StageOutcome, seconds: float) -> StageOutcome:
        counts = self.store.get_meta("counts", {})
        counts.update(outcome.counts)
        self.store.set_meta("counts", counts)
        timings = self.store.get_meta("timings", {})
        timings[outcome.stage] = round(seconds, 3)
        self.store.set_meta("timings", timings)
        partial = set(self.store.get_meta("partial_stages", []))
        if outcome.partial:
            partial.add(outcome.stage)
        else:
            partial.discard(outcome.stage)
        self.store.set_meta("partial_stages", sorted(partial))
        logger.info("Stage %s done in %.2fs: %s", outcome.stage, seconds, outcome.counts)
        return outcome

    def run(self, stage: str) -> StageOutcome:
        if stage not in STAGES:
            raise ValueError(f"Unknown stage '{stage}'. Allowed: {', '.join(STAGES)}")
        started = time.perf_counter()
        outcome = getattr(self, f"_{stage}")()
        return self._record(outcome, time.perf_counter() - started)

    def run_all(self) -> list[StageOutcome]:
        return [self.run(stage) for stage in STAGES]

    # -------------------------Discover------------------------- #

    def _discover(self) -> StageOutcome:
        settings = self.config.discovery
        if settings.repos:
            registered = self._register_local(settings.repos)
            return StageOutcome("discover", {"repositories": len(registered), "cloned": len(registered)})

        token = resolve_token(settings.token_env)
        if settings.require_token:
            token.validate()
        GitHub.set_api_url(settings.api_url)
        GitHub.set_token(token.token)
        GitHub.set_timeout(settings.timeout)
        GitHub.set_retry_policy(max_retries=settings.max_retries, max_retry_wait=settings.max_retry_wait)

        query = build_search_query(RepoQuery.from_config(settings))
        refs = search_repositories(query, page_limit=settings.page_limit, max_results=settings.max_results)
        self.store.upsert_repositories(refs)

        local, failures = materialize_all(refs, settings.cache_dir, workers=settings.clone_workers)
        for repo in local:
            self.store.set_local_repository(repo.full_name, repo.workdir, repo.head_commit)
        return StageOutcome(
            "discover",
            {"repositories": len(refs), "cloned": len(local)},
            partial=bool(failures),
            note=f"{len(failures)} clone(s) failed" if failures else "",
        )

    def _register_local(self, directories: list[str]) -> list[LocalRepo]:
        """Register existing working copies so they are mined in place."""
        local = []
        refs = []
        for directory in directories:
            workdir = Path(directory).resolve()
            if not workdir.is_dir():
                raise ValueError(f"Repository directory '{directory}' does not exist")
            git_repo = Git.open_repo(workdir)
            head = git_repo.head.commit
            full_name = f"{LOCAL_OWNER}/{workdir.name}"
            refs.append(
                RepoRef(
                    full_name=full_name,
                    clone_url=str(workdir),
                    stars=0,
                    size_kb=0,
                    default_branch=git_repo.active_branch.name if not git_repo.head.is_detached else "HEAD",
                    pushed_at=head.committed_datetime.astimezone(timezone.utc),
                )
            )
            local.append(LocalRepo(full_name=full_name, workdir=workdir, head_commit=head.hexsha))

        self.store.upsert_repositories(refs)
        for repo in local:
            self.store.set_local_repository(repo.full_name, repo.workdir, repo.head_commit)
        return local

    def local_repositories(self) -> list[LocalRepo]:
        return [
            LocalRepo(full_name=ref.full_name, workdir=Path(workdir), head_commit=head or "")
            for ref, workdir, head in self.store.list_repositories()
            if workdir is not None
        ]

    # -------------------------Mine------------------------- #

    def _mine(self) -> StageOutcome:
        settings = self.config.mining
        repos = self.local_repositories()
        if not repos:
            logger.warning("No local repositories to mine; run discover first")

        def _mine_one(repo: LocalRepo) -> tuple[list[RawSnippet], MiningStats]:
            try:
                return mine_repository(repo, settings.window, strict_parse=settings.strict_parse)
            except SnipforgeError as e:
                logger.warning("Skipping %s: %s", repo.full_name, e)
                stats = MiningStats()
                stats.skipped["repository"] += 1
                return [], stats

        total = MiningStats()
        with ThreadPoolExecutor(max_workers=max(min(settings.workers, len(repos)), 1)) as executor:
            for snippets, stats in executor.map(_mine_one, repos):
                total.merge(stats)
                self.store.upsert_points(snippets)

        self.store.set_meta("mining_stats", total.to_dict())
        return StageOutcome("mine", {"commits": total.commits, "mined": self.store.count("snippets")})

    # -------------------------Enrich------------------------- #

    def _enrich(self) -> StageOutcome:
        snippets = self.store.load_snippets(only_unenriched=True)
        tokenizer = self.tokenizer
        points = [enrich(snippet, self.config.features, tokenizer, self.identifier) for snippet in snippets]
        self.store.upsert_points(points)
        self.store.set_meta("tokenizer_hash", tokenizer.model_hash)
        return StageOutcome("enrich", {"enriched": self.store.count("syntax")})

    # -------------------------Curate------------------------- #

    def _curate(self) -> StageOutcome:
        settings = self.config.curation
        points = self.store.query_points()

        exact_unique, exact_report = dedup_exact(points)
        unique, near_report = dedup_near(
            exact_unique,
            settings.threshold,
            tokenizer=self.tokenizer,
            exact_limit=settings.exact_limit,
            index=settings.near_index,
        )
        unique_ids = {point.point_id for point in unique}
        exact_kept = {point.point_id for point in exact_unique}

        window = self.config.mining.window
        valid = [
            point
            for point in unique
            if validate_point(point, window, settings.require_doc, self.config.features.min_doc_words).passed
        ]

        rejected: list[str] = []
        worksheet = Path(settings.review_worksheet) if settings.review_worksheet else None
        if worksheet is not None and worksheet.exists():
            valid, rejected = apply_review_verdicts(valid, worksheet)
        elif worksheet is not None:
            sample_for_manual_review(
                valid,
                settings.review_sample,
                seed=self.config.seed,
                worksheet=worksheet,
                min_doc_words=settings.review_min_doc_words,
            )

        statuses = {}
        valid_ids = {point.point_id for point in valid}
        rejected_ids = set(rejected)
        for point in points:
            if point.point_id not in exact_kept:
                statuses[point.point_id] = "exact_duplicate"
            elif point.point_id not in unique_ids:
                statuses[point.point_id] = "near_duplicate"
            elif point.point_id in rejected_ids:
                statuses[point.point_id] = "rejected"
            elif point.point_id in valid_ids:
                statuses[point.point_id] = "kept"
            else:
                statuses[point.point_id] = "invalid"
        self.store.set_status(statuses)

        return StageOutcome(
            "curate",
            {
                "exact_removed": exact_report.exact_removed,
                "near_removed": near_report.near_removed,
                "deduplicated": len(unique),
                "validated": len(valid),
                "rejected": len(rejected),
                "kept": self.store.status_counts().get("kept", 0),
            },
        )

    # -------------------------Scan------------------------- #

    def _scan(self) -> StageOutcome:
        settings = self.config.scan
        if not settings.enabled:
            return StageOutcome("scan", {"scanned": 0}, note="disabled")

        CodeQL.set_executable(settings.codeql_path, settings.timeout)
        try:
            version = CodeQL.version()
        except ScannerMissing as e:
            logger.warning("Skipping vulnerability scan: %s", e)
            self.store.set_meta("scanner_version", "unavailable")
            return StageOutcome("scan", {"scanned": 0}, partial=True, note=str(e))
        self.store.set_meta("scanner_version", version)

        cwe_filter = load_cwe_list(settings.cwe_list)
        workdirs = {repo.full_name: repo.workdir for repo in self.local_repositories()}
        groups: dict[tuple[str, str], list[DataPoint]] = defaultdict(list)
        for point in self.store.query_points("status = kept"):
            groups[(point.repository, point.commit_id)].append(point)

        def _scan_group(key: tuple[str, str]) -> tuple[list[DataPoint], bool]:
            repository, commit_id = key
            points = groups[key]
            if repository not in workdirs:
                logger.warning("No working copy for %s, not scanned", repository)
                return [], False
            paths = sorted({point.path for point in points})
            with tempfile.TemporaryDirectory(prefix="snipforge-snapshot-") as snapshot:
                try:
                    Git.write_snapshot(workdir=workdirs[repository], commit_id=commit_id, paths=paths, dest=snapshot)
                    findings = run_scan(snapshot, settings.suite, cwe_filter)
                except (RepoUnreadable, CorruptCache, ScanFailed, SarifMalformed) as e:
                    logger.warning("Scan of %s at %s failed: %s", repository, commit_id[:10], e)
                    return [], False
            mapped, _ = map_findings(findings, points)
            return mapped, True

        scanned: list[DataPoint] = []
        failed = 0
        with ThreadPoolExecutor(max_workers=max(settings.workers, 1)) as executor:
            for mapped, ok in executor.map(_scan_group, sorted(groups)):
                if ok:
                    scanned.extend(mapped)
                else:
                    failed += 1
        self.store.upsert_points(scanned, replace_spans=True)

        return StageOutcome(
            "scan",
            {"scanned": len(scanned), "with_vulnerabilities": sum(1 for point in scanned if point.vuln_spans)},
            partial=failed > 0,
            note=f"{failed} snapshot(s) failed" if failed else "",
        )

    # -------------------------Testbeds------------------------- #

    def _testbed(self) -> StageOutcome:
        settings = self.config.testbeds
        points = self.store.query_points("status = kept")
        built, empty = build_testbeds(
            points,
            settings,
            self.config.seed,
            tokenizer=self.tokenizer,
            curation=self.config.curation,
        )
        for testbed in built.values():
            self.store.save_testbed(testbed)
        self.store.set_meta("empty_testbeds", sorted(empty))
        counts = {f"testbed.{name}": len(testbed.points) for name, testbed in built.items()}
        counts.update({f"testbed.{name}": 0 for name in empty})
        return StageOutcome("testbed", counts, partial=bool(empty))

    # -------------------------Prompts------------------------- #

    def _prompts(self) -> StageOutcome:
        settings = self.config.prompts
        catalog = load_catalog(settings.catalog_path)
        empty = set(self.store.get_meta("empty_testbeds", []))
        counts = {}
        for name in self.config.testbeds.names:
            if name in empty or name not in self.store.list_testbeds():
                continue
            sequences = settings.sequences or DESIGNATED_TEMPLATES[TestbedName(name)]
            if not sequences:
                continue
            testbed = self.store.load_testbed(name)
            records, skipped = render_testbed(
                testbed, sequences, catalog=catalog, language=self.config.features.language_name
            )
            self.store.save_prompts(name, records)
            counts[f"prompts.{name}"] = len(records)
            if skipped:
                counts[f"prompts_skipped.{name}"] = skipped
        self.store.set_meta("catalog_version", catalog.version)
        return StageOutcome("prompts", counts)

    # -------------------------Export------------------------- #

    def _export(self) -> StageOutcome:
        output_dir = Path(self.config.store.output_dir)
        export_points(self.store.query_points(), output_dir)

        stored = set(self.store.list_testbeds())
        testbeds = {}
        for name in self.config.testbeds.names:
            if name in stored:
                testbed = self.store.load_testbed(name)
                export_testbed(testbed, output_dir)
                entry = {"size": len(testbed.points), "status": "ok", "dedup": testbed.report.to_dict()}
                prompts = self.store.load_prompts(name)
                if prompts:
                    export_prompts(name, prompts, output_dir)
                    entry["prompts"] = len(prompts)
                testbeds[name] = entry
            else:
                export_testbed(None, output_dir, name=name)
                testbeds[name] = {"size": 0, "status": "EmptyTestbed"}

        manifest = self.manifest(testbeds)
        violations = manifest.funnel_violations()
        if violations:
            logger.warning("Inconsistent funnel counts: %s", "; ".join(violations))
        write_json(manifest.to_dict(), output_dir / MANIFEST_FILE)
        write_json(
            {"timings": self.store.get_meta("timings", {}), "written_at": _now()},
            output_dir / TIMINGS_FILE,
        )
        return StageOutcome("export", note=str(output_dir))

    def manifest(self, testbeds: dict[str, dict[str, Any]] | None = None) -> RunManifest:
        counts = {
            key: value
            for key, value in self.store.get_meta("counts", {}).items()
            if not key.startswith(("testbed.", "prompts"))
        }
        return RunManifest.for_config(
            self.config,
            counts=counts,
            testbeds=testbeds or {},
            tool_versions={
                "snipforge": __version__,
                "grammar": grammar_version(),
                "scanner": self.store.get_meta("scanner_version", "not run"),
                "tokenizer": self.store.get_meta("tokenizer_hash", ""),
                "catalog": self.store.get_meta("catalog_version", ""),
            },
        )

    def partial_stages(self) -> list[str]:
        return self.store.get_meta("partial_stages", [])


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")

