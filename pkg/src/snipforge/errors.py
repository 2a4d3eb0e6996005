"""Exceptions raised across snipforge.

Every failure a stage can report has its own class so callers (and the CLI)
can tell a skipped stage from a broken run.
"""


class SnipforgeError(Exception):
    """Base exception for snipforge errors."""


# -------------------------Discovery------------------------- #


class HostError(SnipforgeError):
    """A request against the code host failed."""

    def __init__(self, message: str, request: str | None = None):
        self.request = request
        if request:
            message = f"{message} ({request})"
        super().__init__(message)


class RateLimited(HostError):
    """The host kept rate limiting after the allowed retry budget."""


class AuthMissing(HostError):
    """No API token available, or the host rejected it."""


class HostUnreachable(HostError):
    """The host could not be reached at all."""


class CloneFailed(SnipforgeError):
    """Cloning or fetching a repository failed."""


class CorruptCache(SnipforgeError):
    """A cache directory exists but is not a git repository."""


# -------------------------Mining------------------------- #


class RepoUnreadable(SnipforgeError):
    """The local repository could not be read."""


# -------------------------Features------------------------- #


class VocabMissing(SnipforgeError):
    """The BPE tokenizer model file is missing or malformed."""


class DetectorUnavailable(SnipforgeError):
    """The language identifier could not be loaded."""


# -------------------------Vulnerability------------------------- #


class ScannerMissing(SnipforgeError):
    """The static-analysis scanner executable is not available."""


class ScanFailed(SnipforgeError):
    """The scanner exited with a non-zero status."""

    def __init__(self, message: str, stderr: str = ""):
        self.stderr = stderr
        super().__init__(f"{message}: {stderr.strip()}" if stderr.strip() else message)


class SarifMalformed(SnipforgeError):
    """The scanner output is not valid SARIF."""


# -------------------------Testbeds------------------------- #


class Ineligible(SnipforgeError):
    """A method is too short to be cut."""


class EmptyTestbed(SnipforgeError):
    """A testbed filter eliminated every point."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Testbed '{name}' is empty after filtering")


# -------------------------Prompts------------------------- #


class MissingSlot(SnipforgeError):
    """A data point lacks a value a template needs."""

    def __init__(self, slot: str, template_id: str | None = None):
        self.slot = slot
        self.template_id = template_id
        where = f" for template {template_id}" if template_id else ""
        super().__init__(f"Missing slot '{slot}'{where}")


class TemplateUnknown(SnipforgeError):
    """The template id is not in the catalog."""


class InvalidSequence(SnipforgeError):
    """A multi-step template sequence is not composable."""


# -------------------------Store------------------------- #


class StoreLocked(SnipforgeError):
    """Another writer holds the store."""


class SchemaMismatch(SnipforgeError):
    """The store was written by an incompatible schema version."""


class BadFilter(SnipforgeError):
    """A query filter expression could not be parsed."""


class ExportError(SnipforgeError):
    """Writing an export file failed."""
