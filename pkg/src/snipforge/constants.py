# Discovery
DEFAULT_LANGUAGE = "Python"
DEFAULT_MIN_SIZE_KB = 30000
DEFAULT_PUSHED_AFTER = "2021-12-31"
DEFAULT_MIN_STARS = 1000
DEFAULT_MAX_REPOS = 200
SEARCH_PAGE_SIZE = 100  # Maximum per_page accepted by the search endpoint
SEARCH_RESULT_CAP = 1000  # The search endpoint never returns more than this per query
DEFAULT_TOKEN_ENV = "GITHUB_TOKEN"
GITHUB_API_URL = "https://api.github.com"

# Mining window
DEFAULT_WINDOW_START = "2022-01-01"
DEFAULT_WINDOW_END = "2023-01-01"

# Feature thresholds
LANGUAGE_CONFIDENCE_THRESHOLD = 0.9
MIN_DOCSTRING_WORDS = 3  # A docstring is valid when it has more than this many words
NO_LINGUISTIC_CONTENT = "zxx"  # ISO 639-2 tag for text with nothing to identify

# Curation
SIMILARITY_THRESHOLD = 0.7
EXACT_PAIRWISE_LIMIT = 50000  # Above this, near-dedup goes through a candidate index
REVIEW_SAMPLE_SIZE = 960

# Testbeds
RANDOM_CUT_MIN_TOKENS = 10
RANDOM_CUT_MIN_CHARS = 100
DESCRIPTION_MIN_WORDS = 10
DESCRIPTION_MIN_CHARS = 50
TESTBED_MAX_SIZE = 5000

# Scanner
DEFAULT_CODEQL_SUITE = "codeql/python-queries:codeql-suites/python-security-extended.qls"
DEFAULT_SCAN_WORKERS = 2

# Output
DEFAULT_STORE_PATH = "snipforge.db"
DEFAULT_OUTPUT_DIR = "out"
DEFAULT_CACHE_DIR = ".snipforge-cache"
