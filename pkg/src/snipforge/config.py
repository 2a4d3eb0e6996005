"""Configuration management for snipforge.

One TOML (or JSON) file holds every tunable of a run: the mining window, the
thresholds, seeds and tool paths. Each pipeline stage reads its own
section; CLI flags override file values.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from datetime import date
from pathlib import Path
from typing import Any, Optional

import toml

from snipforge import constants
from snipforge.models import TestbedName, TimeWindow
from snipforge.utils import canonical_json

CONFIG_FILE_PATH = Path("snipforge.toml")
ALLOWED_CUT_MODES = ["random", "first-line"]
ALLOWED_NEAR_INDEXES = ["prefix", "minhash"]


@dataclass
class DiscoveryConfig:
    """Host search settings."""

    language: str = constants.DEFAULT_LANGUAGE
    fork_allowed: bool = False
    min_size_kb: int = constants.DEFAULT_MIN_SIZE_KB
    pushed_after: str = constants.DEFAULT_PUSHED_AFTER
    min_stars: int = constants.DEFAULT_MIN_STARS
    max_results: int = constants.DEFAULT_MAX_REPOS
    page_limit: int = 10
    api_url: str = constants.GITHUB_API_URL
    token_env: str = constants.DEFAULT_TOKEN_ENV
    require_token: bool = True
    max_retries: int = 3
    max_retry_wait: float = 60.0
    timeout: float = 30.0
    cache_dir: str = constants.DEFAULT_CACHE_DIR
    clone_workers: int = 4
    repos: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._validate()

    def _validate(self):
        date.fromisoformat(self.pushed_after)
        if self.min_size_kb < 0 or self.min_stars < 0:
            raise ValueError("min_size_kb and min_stars must be >= 0")
        if self.max_results <= 0:
            raise ValueError("max_results must be > 0")
        if self.page_limit <= 0:
            raise ValueError("page_limit must be > 0")


@dataclass
class MiningConfig:
    """Commit window and extraction settings."""

    window_start: str = constants.DEFAULT_WINDOW_START
    window_end: str = constants.DEFAULT_WINDOW_END
    strict_parse: bool = True
    workers: int = 4

    def __post_init__(self):
        self._validate()

    def _validate(self):
        # TimeWindow rejects malformed dates and start > end
        TimeWindow(start=date.fromisoformat(self.window_start), end=date.fromisoformat(self.window_end))

    @property
    def window(self) -> TimeWindow:
        return TimeWindow(start=date.fromisoformat(self.window_start), end=date.fromisoformat(self.window_end))


@dataclass
class FeatureConfig:
    """Feature extraction settings."""

    tokenizer_path: Optional[str] = None
    language_threshold: float = constants.LANGUAGE_CONFIDENCE_THRESHOLD
    min_doc_words: int = constants.MIN_DOCSTRING_WORDS
    language_name: str = constants.DEFAULT_LANGUAGE

    def __post_init__(self):
        if not 0.0 <= self.language_threshold <= 1.0:
            raise ValueError(f"language_threshold must lie in [0, 1], got {self.language_threshold}")


@dataclass
class CurationConfig:
    """Dedup, validation and manual review settings."""

    threshold: float = constants.SIMILARITY_THRESHOLD
    exact_limit: int = constants.EXACT_PAIRWISE_LIMIT
    near_index: str = "prefix"
    require_doc: bool = False
    review_sample: int = constants.REVIEW_SAMPLE_SIZE
    review_min_doc_words: int = 0
    review_worksheet: Optional[str] = None

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in (0, 1], got {self.threshold}")
        if self.near_index not in ALLOWED_NEAR_INDEXES:
            raise ValueError(f"Invalid near_index '{self.near_index}'. Allowed: {', '.join(ALLOWED_NEAR_INDEXES)}")
        if self.review_sample < 0:
            raise ValueError("review_sample must be >= 0")


@dataclass
class ScanConfig:
    """Static analysis scanner settings."""

    enabled: bool = True
    codeql_path: str = "codeql"
    suite: str = constants.DEFAULT_CODEQL_SUITE
    cwe_list: Optional[str] = None  # None means the bundled 2021 top-25 list
    workers: int = constants.DEFAULT_SCAN_WORKERS
    timeout: float = 1800.0


@dataclass
class TestbedConfig:
    """Testbed construction settings."""

    __test__ = False  # not a pytest test class

    names: list[str] = field(default_factory=lambda: [name.value for name in TestbedName])
    max_size: int = constants.TESTBED_MAX_SIZE
    cut_mode: str = "random"
    min_tokens: int = constants.RANDOM_CUT_MIN_TOKENS
    min_chars: int = constants.RANDOM_CUT_MIN_CHARS
    description_min_words: int = constants.DESCRIPTION_MIN_WORDS
    description_min_chars: int = constants.DESCRIPTION_MIN_CHARS
    summarization_longest_first: bool = False

    def __post_init__(self):
        for name in self.names:
            TestbedName(name)
        if self.cut_mode not in ALLOWED_CUT_MODES:
            raise ValueError(f"Invalid cut_mode '{self.cut_mode}'. Allowed: {', '.join(ALLOWED_CUT_MODES)}")
        if self.max_size <= 0:
            raise ValueError("max_size must be > 0")


@dataclass
class PromptConfig:
    """Prompt rendering settings."""

    catalog_path: Optional[str] = None  # None means the bundled catalog
    sequences: list[str] = field(default_factory=list)  # empty means each testbed's designated templates


@dataclass
class StoreConfig:
    """Store and export locations."""

    path: str = constants.DEFAULT_STORE_PATH
    output_dir: str = constants.DEFAULT_OUTPUT_DIR


@dataclass
class SnipforgeConfig:
    """Root configuration of a snipforge run."""

    seed: int = 0
    discovery: DiscoveryConfig = field(default_factory=DiscoveryConfig)
    mining: MiningConfig = field(default_factory=MiningConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    curation: CurationConfig = field(default_factory=CurationConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    testbeds: TestbedConfig = field(default_factory=TestbedConfig)
    prompts: PromptConfig = field(default_factory=PromptConfig)
    store: StoreConfig = field(default_factory=StoreConfig)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        """Hash of the canonical JSON form of this configuration.

        Output locations (store path, output and cache directories) are left
        out: they decide where a run writes, not what it produces.
        """
        data = self.to_dict()
        data.pop("store")
        data["discovery"].pop("cache_dir")
        return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SnipforgeConfig":
        return _build(cls, data)


def _build(config_class: type, data: dict[str, Any]):
    """Build a config dataclass from a dict, ignoring keys it does not know."""
    valid_fields = {config_field.name: config_field for config_field in fields(config_class)}
    kwargs = {}
    for key, value in data.items():
        if key not in valid_fields:
            continue
        field_type = valid_fields[key].type
        if isinstance(value, dict) and isinstance(field_type, type) and is_dataclass(field_type):
            kwargs[key] = _build(field_type, value)
        else:
            kwargs[key] = value
    return config_class(**kwargs)


def load_config(config_file_path: Optional[str] = None) -> SnipforgeConfig:
    """Load configuration from a TOML or JSON file."""
    if config_file_path:
        config_path = Path(config_file_path)
    else:
        config_path = CONFIG_FILE_PATH

    if not config_path.exists():
        return SnipforgeConfig()

    try:
        with open(config_path, "r", encoding="utf-8") as f:
            if config_path.suffix == ".json":
                config_data = json.load(f)
            else:
                config_data = toml.load(f)

        return SnipforgeConfig.from_dict(config_data)

    except Exception as e:
        raise ValueError(f"Error loading config file {config_path}: {e}")


def save_config(config: SnipforgeConfig | dict[str, Any], config_path: Path) -> None:
    """Write a configuration file (TOML, or JSON by suffix), dropping unset optional values."""

    def _prune(value: Any) -> Any:
        if isinstance(value, dict):
            return {key: _prune(item) for key, item in value.items() if item is not None}
        return value

    data = config.to_dict() if isinstance(config, SnipforgeConfig) else config
    with open(config_path, "w", encoding="utf-8") as f:
        if config_path.suffix == ".json":
            json.dump(_prune(data), f, indent=2, sort_keys=True)
        else:
            toml.dump(_prune(data), f)


def merge_config_with_cli_args(config: SnipforgeConfig, section: Optional[str] = None, **cli_args) -> SnipforgeConfig:
    """Merge a config section (or the root when section is None) with CLI arguments, giving priority to CLI args."""
    merged = config.to_dict()
    target = merged[section] if section else merged

    # Override with CLI args where provided (not None)
    for key, value in cli_args.items():
        if value is not None:
            target[key] = value

    return SnipforgeConfig.from_dict(merged)
