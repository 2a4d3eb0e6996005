import csv
import json

import pytest
import toml
from click.testing import CliRunner

from snipforge import __version__
from snipforge.config import load_config
from snipforge.gateways.codeql import CodeQL
from snipforge.main import PARTIAL_EXIT_CODE, cli
from snipforge.store import Store
from snipforge.utils import derive_seed


@pytest.fixture(autouse=True)
def reset_scanner():
    yield
    CodeQL.set_executable()


@pytest.fixture
def config_file(tmp_path, fixture_repo_path, bpe_model_path):
    path = tmp_path / "snipforge.toml"
    path.write_text(
        toml.dumps(
            {
                "seed": 3,
                "discovery": {"repos": [str(fixture_repo_path)]},
                "mining": {"window_start": "2022-01-01", "window_end": "2022-12-31"},
                "features": {"tokenizer_path": str(bpe_model_path)},
                "scan": {"codeql_path": str(tmp_path / "no-such-codeql")},
                "store": {"path": str(tmp_path / "store.db"), "output_dir": str(tmp_path / "out")},
            }
        ),
        encoding="utf-8",
    )
    return path


def test_version():
    result = CliRunner().invoke(cli, ["--version"])

    assert result.exit_code == 0
    assert __version__ in result.output


def test_all_exits_partial_without_a_scanner(config_file, tmp_path):
    result = CliRunner().invoke(cli, ["--config", str(config_file), "all", "--output-dir", str(tmp_path / "elsewhere")])

    assert result.exit_code == PARTIAL_EXIT_CODE, result.output
    assert "[ok] mine: commits=7, mined=7" in result.output
    assert "[partial] scan" in result.output
    manifest = json.loads((tmp_path / "elsewhere" / "run_manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 3


def test_stages_can_run_one_at_a_time(config_file, tmp_path):
    runner = CliRunner()
    base = ["--config", str(config_file), "--store", str(tmp_path / "other.db")]

    discovered = runner.invoke(cli, [*base, "discover"])
    mined = runner.invoke(cli, [*base, "mine", "--window", "2022-09-01..2022-12-31"])

    assert discovered.exit_code == 0, discovered.output
    assert "repositories=1" in discovered.output
    assert "mined=1" in mined.output
    assert (tmp_path / "other.db").exists()


def test_bad_window_is_a_usage_error(config_file):
    result = CliRunner().invoke(cli, ["--config", str(config_file), "mine", "--window", "2022-01-01"])

    assert result.exit_code == 2
    assert "--window" in result.output


def test_unknown_testbed_name(config_file):
    result = CliRunner().invoke(cli, ["--config", str(config_file), "testbed", "--name", "Everything"])

    assert result.exit_code == 2
    assert "Everything" in result.output


def test_invalid_config_is_reported(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[curation]\nthreshold = 7\n", encoding="utf-8")

    result = CliRunner().invoke(cli, ["--config", str(path), "curate"])

    assert result.exit_code == 1
    assert "Error loading config file" in result.output


def test_missing_tokenizer_is_reported(config_file, tmp_path):
    data = toml.load(config_file)
    del data["features"]
    config_file.write_text(toml.dumps(data), encoding="utf-8")
    runner = CliRunner()
    runner.invoke(cli, ["--config", str(config_file), "mine", "--repos", data["discovery"]["repos"][0]])

    result = runner.invoke(cli, ["--config", str(config_file), "enrich"])

    assert result.exit_code == 1
    assert "tokenizer" in result.output



def test_curate_draws_the_requested_review_sample(config_file, tmp_path):
    runner = CliRunner()
    base = ["--config", str(config_file)]
    runner.invoke(cli, [*base, "all"])

    def _sampled(name: str, size: int, seed: int) -> list[str]:
        worksheet = tmp_path / name
        args = ["curate", "--worksheet", str(worksheet), "--review-sample", str(size), "--seed", str(seed)]
        result = runner.invoke(cli, [*base, *args])
        assert result.exit_code == 0, result.output
        with open(worksheet, encoding="utf-8", newline="") as f:
            return [row["point_id"] for row in csv.DictReader(f)]

    assert len(_sampled("two.csv", 2, 5)) == 2
    assert _sampled("again.csv", 2, 5) == _sampled("two.csv", 2, 5)
    assert len(_sampled("one.csv", 1, 5)) == 1


def test_testbed_seed_overrides_the_config(config_file, tmp_path):
    runner = CliRunner()
    base = ["--config", str(config_file)]
    runner.invoke(cli, [*base, "all"])

    result = runner.invoke(cli, [*base, "testbed", "--name", "RandomCut", "--seed", "11"])

    assert result.exit_code == 0, result.output
    with Store(str(tmp_path / "store.db")) as store:
        assert store.load_testbed("RandomCut").seed == derive_seed(11, "RandomCut")


def test_prompts_for_one_testbed_and_chosen_templates(config_file, tmp_path):
    runner = CliRunner()
    base = ["--config", str(config_file)]
    runner.invoke(cli, [*base, "all"])

    args = ["prompts", "--testbed", "RandomCut", "--templates", "P1", "--templates", "P1+P8"]
    result = runner.invoke(cli, [*base, *args])

    assert result.exit_code == 0, result.output
    assert "prompts.RandomCut=" in result.output
    assert "prompts.FromCommit" not in result.output
    with Store(str(tmp_path / "store.db")) as store:
        records = store.load_prompts("RandomCut")
    assert records
    assert {record.template_ids for record in records} == {("P1",), ("P1", "P8")}


def test_prompts_with_an_unknown_template(config_file):
    runner = CliRunner()
    base = ["--config", str(config_file)]
    runner.invoke(cli, [*base, "all"])

    result = runner.invoke(cli, [*base, "prompts", "--testbed", "RandomCut", "--templates", "P99"])

    assert result.exit_code == 1
    assert "P99" in result.output

# -------------------------Configure------------------------- #


def test_configure_writes_a_valid_file(tmp_path):
    path = tmp_path / "snipforge.toml"
    answers = ["3", "2022-01-01", "2022-06-30", "500", "50", "MY_TOKEN", "", "", "n"]

    result = CliRunner().invoke(cli, ["configure", "--config", str(path)], input="\n".join(answers) + "\n")

    assert result.exit_code == 0, result.output
    assert "Configuration saved" in result.output
    config = load_config(str(path))
    assert config.seed == 3
    assert str(config.mining.window) == "2022-01-01..2022-06-30"
    assert config.discovery.min_stars == 500
    assert config.discovery.token_env == "MY_TOKEN"
    assert config.scan.enabled is False


def test_configure_keeps_existing_values(tmp_path):
    path = tmp_path / "snipforge.toml"
    path.write_text('seed = 9\n[curation]\nthreshold = 0.8\n[mining]\nwindow_start = "2022-03-01"\n', encoding="utf-8")

    result = CliRunner().invoke(cli, ["configure", "--config", str(path)], input="\n" * 10)

    assert result.exit_code == 0, result.output
    config = load_config(str(path))
    assert config.seed == 9
    assert config.mining.window_start == "2022-03-01"
    assert config.curation.threshold == 0.8
    assert config.scan.enabled is True
