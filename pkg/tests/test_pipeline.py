import json
import shutil
import stat

import pytest
from conftest import StubIdentifier

from snipforge.config import (
    DiscoveryConfig,
    FeatureConfig,
    MiningConfig,
    ScanConfig,
    SnipforgeConfig,
    StoreConfig,
)
from snipforge.errors import VocabMissing
from snipforge.export import MANIFEST_FILE, POINTS_FILE, TIMINGS_FILE, load_jsonl
from snipforge.gateways.codeql import CodeQL
from snipforge.models import TestbedName
from snipforge.pipeline import STAGES, Pipeline, RunManifest
from snipforge.store import Store

EMPTY_SARIF = {"runs": [{"tool": {"driver": {"name": "CodeQL"}}, "results": []}]}


@pytest.fixture(autouse=True)
def reset_scanner():
    yield
    CodeQL.set_executable()


@pytest.fixture
def empty_codeql(tmp_path):
    """A scanner stand-in that reports no findings."""
    sarif = tmp_path / "empty.sarif"
    sarif.write_text(json.dumps(EMPTY_SARIF), encoding="utf-8")
    script = tmp_path / "codeql"
    script.write_text(
        "#!/bin/sh\n"
        'if [ "$1" = version ]; then echo "2.15.0"; exit 0; fi\n'
        'for arg in "$@"; do\n'
        '  case "$arg" in --output=*) cp "' + str(sarif) + '" "${arg#--output=}";; esac\n'
        "done\n",
        encoding="utf-8",
    )
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    return script


def _config(root, fixture_repo_path, bpe_model_path, codeql=None, **overrides) -> SnipforgeConfig:
    return SnipforgeConfig(
        seed=7,
        discovery=DiscoveryConfig(repos=[str(fixture_repo_path)]),
        mining=MiningConfig(window_start="2022-01-01", window_end="2022-12-31", workers=1),
        features=FeatureConfig(tokenizer_path=str(bpe_model_path)),
        scan=ScanConfig(codeql_path=str(codeql or root / "no-such-codeql")),
        store=StoreConfig(path=str(root / "store.db"), output_dir=str(root / "out")),
        **overrides,
    )


def _run_everything(config: SnipforgeConfig):
    with Store(config.store.path) as store:
        pipeline = Pipeline(config, store, identifier=StubIdentifier())
        outcomes = pipeline.run_all()
        return outcomes, pipeline.manifest(), store.status_counts()


# -------------------------End to end------------------------- #


def test_full_run_over_the_fixture_repository(tmp_path, fixture_repo_path, bpe_model_path):
    config = _config(tmp_path, fixture_repo_path, bpe_model_path)

    outcomes, manifest, statuses = _run_everything(config)

    assert [outcome.stage for outcome in outcomes] == list(STAGES)
    assert manifest.counts["mined"] == 7
    assert manifest.counts["enriched"] == 7
    assert manifest.funnel_violations() == []
    assert sum(statuses.values()) == 7
    assert manifest.counts["kept"] == statuses["kept"] <= manifest.counts["validated"]
    assert manifest.tool_versions["scanner"] == "unavailable"
    assert manifest.tool_versions["tokenizer"]

    out = tmp_path / "out"
    for name in TestbedName:
        assert (out / "testbeds" / f"{name.value}.jsonl").exists()
    assert len(load_jsonl(out / POINTS_FILE)) == 7
    written = json.loads((out / MANIFEST_FILE).read_text(encoding="utf-8"))
    assert set(written["testbeds"]) == {name.value for name in TestbedName}
    assert written["testbeds"]["VulnerabilitySpan"] == {"size": 0, "status": "EmptyTestbed"}
    assert "timings" in json.loads((out / TIMINGS_FILE).read_text(encoding="utf-8"))


def test_missing_scanner_marks_the_scan_partial(tmp_path, fixture_repo_path, bpe_model_path):
    config = _config(tmp_path, fixture_repo_path, bpe_model_path)

    outcomes, _, _ = _run_everything(config)

    scan = next(outcome for outcome in outcomes if outcome.stage == "scan")
    assert scan.partial
    assert "not found" in scan.note


def test_scan_with_a_working_scanner(tmp_path, fixture_repo_path, bpe_model_path, empty_codeql):
    config = _config(tmp_path, fixture_repo_path, bpe_model_path, codeql=empty_codeql)

    outcomes, manifest, statuses = _run_everything(config)

    scan = next(outcome for outcome in outcomes if outcome.stage == "scan")
    assert not scan.partial
    assert scan.counts["scanned"] == statuses.get("kept", 0)
    assert scan.counts["with_vulnerabilities"] == 0
    assert manifest.tool_versions["scanner"] == "2.15.0"


def test_runs_with_the_same_seed_write_identical_files(tmp_path, fixture_repo_path, bpe_model_path):
    first = _config(tmp_path / "a", fixture_repo_path, bpe_model_path)
    second = _config(tmp_path / "b", fixture_repo_path, bpe_model_path)
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()

    _run_everything(first)
    _run_everything(second)

    out_a, out_b = tmp_path / "a" / "out", tmp_path / "b" / "out"
    produced = sorted(
        path.relative_to(out_a) for path in out_a.rglob("*") if path.is_file() and path.name != TIMINGS_FILE
    )
    assert produced
    for relative in produced:
        assert (out_a / relative).read_bytes() == (out_b / relative).read_bytes(), relative


# -------------------------Stages------------------------- #


def test_mining_twice_is_idempotent(tmp_path, fixture_repo_path, bpe_model_path):
    config = _config(tmp_path, fixture_repo_path, bpe_model_path)

    with Store(config.store.path) as store:
        pipeline = Pipeline(config, store, identifier=StubIdentifier())
        pipeline.run("discover")
        first = pipeline.run("mine")
        second = pipeline.run("mine")

        assert first.counts["mined"] == second.counts["mined"] == 7
        assert [repo.full_name for repo in pipeline.local_repositories()] == [f"local/{fixture_repo_path.name}"]


def test_enrich_without_a_tokenizer_fails(tmp_path, fixture_repo_path):
    config = _config(tmp_path, fixture_repo_path, bpe_model_path=None)
    config.features = FeatureConfig()

    with Store(config.store.path) as store:
        pipeline = Pipeline(config, store, identifier=StubIdentifier())
        pipeline.run("discover")
        pipeline.run("mine")
        with pytest.raises(VocabMissing):
            pipeline.run("enrich")


def test_unknown_stage(tmp_path, fixture_repo_path, bpe_model_path):
    config = _config(tmp_path, fixture_repo_path, bpe_model_path)

    with Store(config.store.path) as store:
        with pytest.raises(ValueError):
            Pipeline(config, store).run("publish")


def test_partial_stages_are_remembered(tmp_path, fixture_repo_path, bpe_model_path):
    config = _config(tmp_path, fixture_repo_path, bpe_model_path)

    with Store(config.store.path) as store:
        pipeline = Pipeline(config, store, identifier=StubIdentifier())
        for stage in ("discover", "mine", "enrich", "curate", "scan"):
            pipeline.run(stage)

        assert pipeline.partial_stages() == ["scan"]



def test_unreadable_working_copy_only_fails_its_own_scan(tmp_path, fixture_repo_path, bpe_model_path, empty_codeql):
    working_copy = tmp_path / "working_copy"
    shutil.copytree(fixture_repo_path, working_copy)
    config = _config(tmp_path, working_copy, bpe_model_path, codeql=empty_codeql)

    with Store(config.store.path) as store:
        pipeline = Pipeline(config, store, identifier=StubIdentifier())
        for stage in ("discover", "mine", "enrich", "curate"):
            pipeline.run(stage)
        shutil.rmtree(working_copy)

        scan = pipeline.run("scan")

    assert scan.partial
    assert "snapshot(s) failed" in scan.note
    assert scan.counts["scanned"] == 0

# -------------------------Manifest------------------------- #


def test_funnel_violations():
    manifest = RunManifest(run_id="r", config_hash="h", seed=0, counts={"mined": 5, "enriched": 6, "validated": 2})

    assert manifest.funnel_violations() == ["enriched (6) > mined (5)"]


def test_manifest_identity_follows_the_configuration():
    base = RunManifest.for_config(SnipforgeConfig())

    assert base.run_id == RunManifest.for_config(SnipforgeConfig()).run_id
    assert base.run_id != RunManifest.for_config(SnipforgeConfig(seed=1)).run_id
    assert list(base.to_dict()) == ["run_id", "config_hash", "seed", "counts", "testbeds", "tool_versions"]
