"""
snipforge - mine recent methods and forge LLM evaluation testbeds

This module provides the CLI entry point. Each subcommand runs one pipeline
stage against the store, so a run can be resumed stage by stage; `all` runs
every stage in order. It also includes interactive configuration setup.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict

import click
import toml

from snipforge import __version__
from snipforge.config import (
    ALLOWED_CUT_MODES,
    CONFIG_FILE_PATH,
    SnipforgeConfig,
    load_config,
    merge_config_with_cli_args,
    save_config,
)
from snipforge.errors import SnipforgeError
from snipforge.models import TestbedName, TimeWindow
from snipforge.pipeline import STAGES, Pipeline, StageOutcome
from snipforge.store import Store

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
PARTIAL_EXIT_CODE = 2


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT, force=True)
    # Per-request logs of the HTTP client drown the stage progress
    logging.getLogger("httpx").setLevel(logging.WARNING)


def _load(ctx: click.Context, **sections: Dict[str, Any]) -> SnipforgeConfig:
    """Load the config file and apply per-section CLI overrides (None means not given)."""
    try:
        config = load_config(ctx.obj["config"])
        for section, overrides in sections.items():
            config = merge_config_with_cli_args(config, None if section == "root" else section, **overrides)
        if ctx.obj["store"]:
            config = merge_config_with_cli_args(config, "store", path=ctx.obj["store"])
    except (TypeError, ValueError) as e:
        raise click.ClickException(str(e))
    return config


def _echo_outcome(outcome: StageOutcome) -> None:
    counts = ", ".join(f"{key}={value}" for key, value in sorted(outcome.counts.items()))
    status = "partial" if outcome.partial else "ok"
    line = f"[{status}] {outcome.stage}"
    if counts:
        line += f": {counts}"
    if outcome.note:
        line += f" ({outcome.note})"
    click.echo(line)


def _run(ctx: click.Context, stages: tuple[str, ...], config: SnipforgeConfig) -> None:
    try:
        with Store(config.store.path) as store:
            pipeline = Pipeline(config, store)
            outcomes = []
            for stage in stages:
                outcome = pipeline.run(stage)
                _echo_outcome(outcome)
                outcomes.append(outcome)
    except (ValueError, SnipforgeError) as e:
        raise click.ClickException(str(e))

    if any(outcome.partial for outcome in outcomes):
        ctx.exit(PARTIAL_EXIT_CODE)


def _window(value: str | None) -> dict[str, Any]:
    if value is None:
        return {}
    try:
        window = TimeWindow.parse(value)
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--window")
    return {"window_start": window.start.isoformat(), "window_end": window.end.isoformat()}


def _read_query_config(path: str) -> Dict[str, Any]:
    """Search settings from a file holding either a [discovery] table or its bare keys."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f) if path.endswith(".json") else toml.load(f)
    except Exception as e:
        raise click.ClickException(f"Error loading query config {path}: {e}")
    return data.get("discovery", data)


# -------------------------Configure------------------------- #


def _load_existing_config(config_path: Path) -> Dict[str, Any]:
    """Load existing configuration from file if it exists."""
    if not config_path.exists():
        return {}

    try:
        with open(config_path, "r", encoding="utf-8") as f:
            config = toml.load(f)
        click.echo(f"Found existing configuration at {config_path}")
        click.echo()
        return config
    except Exception:
        return {}


def _prompt_for_value(prompt_text: str, current_value: Any = "", value_type: type = str) -> Any:
    """Helper function to prompt for a configuration value."""
    value = click.prompt(
        prompt_text,
        default=current_value,
        show_default=current_value not in ("", None),
        type=value_type,
    )
    return value.strip() if isinstance(value, str) else value


def _section_header(title: str) -> None:
    click.echo()
    click.echo(title)
    click.echo("-" * len(title))


def _configure_mining(existing: Dict[str, Any]) -> Dict[str, Any]:
    _section_header("Mining window:")
    defaults = SnipforgeConfig().mining
    start = _prompt_for_value("Window start (YYYY-MM-DD)", existing.get("window_start", defaults.window_start))
    end = _prompt_for_value("Window end (YYYY-MM-DD)", existing.get("window_end", defaults.window_end))
    return {"window_start": start, "window_end": end}


def _configure_discovery(existing: Dict[str, Any]) -> Dict[str, Any]:
    _section_header("Repository discovery:")
    defaults = SnipforgeConfig().discovery
    config = {
        "min_stars": _prompt_for_value("Minimum stars", existing.get("min_stars", defaults.min_stars), int),
        "max_results": _prompt_for_value(
            "Maximum repositories", existing.get("max_results", defaults.max_results), int
        ),
        "token_env": _prompt_for_value(
            "Environment variable holding the API token", existing.get("token_env", defaults.token_env)
        ),
    }
    repos = _prompt_for_value(
        "Local repositories to mine instead of searching (comma separated)", ",".join(existing.get("repos", []))
    )
    if repos:
        config["repos"] = [repo.strip() for repo in repos.split(",") if repo.strip()]
    return config


def _configure_tools(existing: Dict[str, Any]) -> tuple[Dict[str, Any], Dict[str, Any]]:
    _section_header("Tools:")
    features = dict(existing.get("features", {}))
    tokenizer = _prompt_for_value("BPE tokenizer model file", features.get("tokenizer_path", ""))
    if tokenizer:
        features["tokenizer_path"] = tokenizer

    scan = dict(existing.get("scan", {}))
    scan["enabled"] = click.confirm("Run the vulnerability scanner?", default=scan.get("enabled", True))
    if scan["enabled"]:
        scan["codeql_path"] = _prompt_for_value("Scanner executable", scan.get("codeql_path", "codeql"))
    return features, scan


def _validate_and_save_config(config: Dict[str, Any], config_path: Path) -> None:
    """Validate and save the configuration."""
    click.echo()

    try:
        SnipforgeConfig.from_dict(config)
        click.echo("✓ Configuration validated successfully!")
    except (TypeError, ValueError) as e:
        click.echo(f"✗ Configuration validation failed: {e}")
        if not click.confirm("Save configuration anyway?"):
            click.echo("Configuration cancelled.")
            return

    click.echo()
    try:
        save_config(config, config_path)
        click.echo(f"✓ Configuration saved to {config_path}")
    except Exception as e:
        click.echo(f"✗ Failed to save configuration: {e}")


# -------------------------CLI------------------------- #


@click.group()
@click.version_option(version=__version__, prog_name="snipforge")
@click.option(
    "--config",
    type=click.Path(exists=True, readable=True, path_type=str),
    help=f"Path to configuration file (default: ./{CONFIG_FILE_PATH})",
    default=None,
)
@click.option("--store", type=str, help="Path to the store file (overrides store.path)", default=None)
@click.option("--verbose", "-v", is_flag=True, help="Log debug detail")
@click.pass_context
def cli(ctx: click.Context, config: str | None = None, store: str | None = None, verbose: bool = False):
    """Mine new methods from git history and build evaluation testbeds."""
    _configure_logging(verbose)
    ctx.obj = {"config": config, "store": store}


@cli.command()
@click.option(
    "--query-config",
    type=click.Path(exists=True, readable=True, path_type=str),
    help="TOML/JSON file with search settings (keys of the [discovery] section)",
    default=None,
)
@click.option("--cache-dir", type=str, help="Where repositories are cloned", default=None)
@click.option("--max-repos", type=int, help="Maximum number of repositories", default=None)
@click.option("--repos", multiple=True, help="Local working copy to mine in place (repeatable); skips the search")
@click.pass_context
def discover(ctx, query_config: str | None, cache_dir: str | None, max_repos: int | None, repos: tuple[str, ...]):
    """Search the code host and clone matching repositories."""
    overrides: Dict[str, Any] = {}
    if query_config:
        overrides.update(_read_query_config(query_config))
    overrides.update({"cache_dir": cache_dir, "max_results": max_repos, "repos": list(repos) or None})
    _run(ctx, ("discover",), _load(ctx, discovery=overrides))


@cli.command()
@click.option("--window", type=str, help="Commit window as START..END (ISO dates, inclusive)", default=None)
@click.option("--repos", multiple=True, help="Local working copy to register before mining (repeatable)")
@click.option("--strict-parse/--lenient-parse", default=None, help="Skip files with syntax errors (default: strict)")
@click.pass_context
def mine(ctx, window: str | None, repos: tuple[str, ...], strict_parse: bool | None):
    """Extract the methods added by commits inside the window."""
    config = _load(
        ctx,
        mining={**_window(window), "strict_parse": strict_parse},
        discovery={"repos": list(repos) or None},
    )
    _run(ctx, ("discover", "mine") if repos else ("mine",), config)


@cli.command()
@click.option("--tokenizer", type=click.Path(exists=True, path_type=str), help="BPE model file", default=None)
@click.option("--language-threshold", type=float, help="Docstring language confidence threshold", default=None)
@click.pass_context
def enrich(ctx, tokenizer: str | None, language_threshold: float | None):
    """Compute documentation, syntax and metric features of mined methods."""
    config = _load(ctx, features={"tokenizer_path": tokenizer, "language_threshold": language_threshold})
    _run(ctx, ("enrich",), config)


@cli.command()
@click.option("--threshold", type=float, help="Near-duplicate Jaccard threshold", default=None)
@click.option("--worksheet", type=str, help="Review worksheet CSV (written if missing, else applied)", default=None)
@click.option("--require-doc/--no-require-doc", default=None, help="Require a valid docstring to keep a method")
@click.option("--review-sample", type=click.IntRange(min=0), help="Methods drawn for review", default=None)
@click.option("--seed", type=int, help="Master seed", default=None)
@click.pass_context
def curate(
    ctx,
    threshold: float | None,
    worksheet: str | None,
    require_doc: bool | None,
    review_sample: int | None,
    seed: int | None,
):
    """Deduplicate, validate and sample methods for manual review."""
    config = _load(
        ctx,
        root={"seed": seed},
        curation={
            "threshold": threshold,
            "review_worksheet": worksheet,
            "require_doc": require_doc,
            "review_sample": review_sample,
        },
    )
    _run(ctx, ("curate",), config)


@cli.command()
@click.option("--codeql", "codeql_path", type=str, help="Scanner executable", default=None)
@click.option("--suite", type=str, help="Query suite", default=None)
@click.option("--cwe-list", type=click.Path(exists=True, path_type=str), help="CWE list file", default=None)
@click.pass_context
def scan(ctx, codeql_path: str | None, suite: str | None, cwe_list: str | None):
    """Scan kept methods and attach vulnerability spans."""
    config = _load(ctx, scan={"codeql_path": codeql_path, "suite": suite, "cwe_list": cwe_list})
    _run(ctx, ("scan",), config)


@cli.command()
@click.option(
    "--name",
    "names",
    multiple=True,
    type=click.Choice([name.value for name in TestbedName]),
    help="Testbed to build (repeatable; default: all configured)",
)
@click.option("--max-size", type=int, help="Cap on points per testbed", default=None)
@click.option("--cut-mode", type=click.Choice(ALLOWED_CUT_MODES), help="Where RandomCut truncates", default=None)
@click.option("--seed", type=int, help="Master seed (each testbed derives its own from it)", default=None)
@click.pass_context
def testbed(ctx, names: tuple[str, ...], max_size: int | None, cut_mode: str | None, seed: int | None):
    """Build testbeds from the kept methods."""
    config = _load(
        ctx,
        root={"seed": seed},
        testbeds={"names": list(names) or None, "max_size": max_size, "cut_mode": cut_mode},
    )
    _run(ctx, ("testbed",), config)


@cli.command()
@click.option(
    "--testbed",
    "testbeds",
    multiple=True,
    type=click.Choice([name.value for name in TestbedName]),
    help="Testbed to render prompts for (repeatable; default: every built testbed)",
)
@click.option(
    "--templates", "sequences", multiple=True, help='Template sequence such as "P1" or "P1+P8" (repeatable)'
)
@click.option("--catalog", type=click.Path(exists=True, path_type=str), help="Template catalog file", default=None)
@click.pass_context
def prompts(ctx, testbeds: tuple[str, ...], sequences: tuple[str, ...], catalog: str | None):
    """Render prompts for built testbeds."""
    config = _load(
        ctx,
        testbeds={"names": list(testbeds) or None},
        prompts={"sequences": list(sequences) or None, "catalog_path": catalog},
    )
    _run(ctx, ("prompts",), config)


@cli.command()
@click.option("--output-dir", type=str, help="Directory for JSONL files and the run manifest", default=None)
@click.pass_context
def export(ctx, output_dir: str | None):
    """Write points, testbeds, prompts and the run manifest as JSONL/JSON."""
    _run(ctx, ("export",), _load(ctx, store={"output_dir": output_dir}))


@cli.command(name="all")
@click.option("--output-dir", type=str, help="Directory for JSONL files and the run manifest", default=None)
@click.option("--seed", type=int, help="Master seed", default=None)
@click.pass_context
def run_all(ctx, output_dir: str | None, seed: int | None):
    """Run every stage in order."""
    _run(ctx, STAGES, _load(ctx, root={"seed": seed}, store={"output_dir": output_dir}))


@cli.command()
@click.option(
    "--config",
    type=click.Path(path_type=str),
    help=f"Path to configuration file (default: ./{CONFIG_FILE_PATH})",
    default=None,
)
def configure(config: str | None = None):
    """Interactive configuration setup for snipforge"""
    config_path = Path(config) if config else CONFIG_FILE_PATH

    click.echo("snipforge Configuration Setup")
    click.echo("=" * 29)
    click.echo("Leave fields empty to use defaults or skip optional settings.")
    click.echo()

    existing_config = _load_existing_config(config_path)
    new_config = dict(existing_config)

    new_config["seed"] = _prompt_for_value("Master seed", existing_config.get("seed", 0), int)
    new_config["mining"] = {**existing_config.get("mining", {}), **_configure_mining(existing_config.get("mining", {}))}
    new_config["discovery"] = {
        **existing_config.get("discovery", {}),
        **_configure_discovery(existing_config.get("discovery", {})),
    }
    new_config["features"], new_config["scan"] = _configure_tools(existing_config)

    _validate_and_save_config(new_config, config_path)


if __name__ == "__main__":
    cli()
