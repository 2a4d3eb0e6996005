import json
import logging
import os
import shutil
import subprocess
from pathlib import Path

from snipforge.errors import SarifMalformed, ScanFailed, ScannerMissing

logger = logging.getLogger(__name__)


class CodeQL:
    # Class-level variables to store the executable location and limits
    _executable = "codeql"
    _timeout: float | None = None

    @classmethod
    def set_executable(cls, executable: str = "codeql", timeout: float | None = None) -> None:
        """Set the scanner executable (a name on PATH or a path).

        Args:
            executable: Scanner command or path.
            timeout: Per-command timeout in seconds, None for no limit.
        """
        cls._executable = executable
        cls._timeout = timeout

    @classmethod
    def resolve_executable(cls) -> str:
        """Return the full path of the scanner.

        Raises:
            ScannerMissing: The executable is neither on PATH nor an existing file.
        """
        found = shutil.which(cls._executable)
        if found:
            return found
        if Path(cls._executable).is_file() and os.access(cls._executable, os.X_OK):
            return cls._executable
        raise ScannerMissing(f"Scanner executable '{cls._executable}' not found")

    @classmethod
    def _run_codeql_command(cls, command_args: list[str]) -> str:
        """Run a scanner command with proper error handling.

        Args:
            command_args: List of command arguments (without the executable)

        Returns:
            The command output as a string

        Raises:
            ScannerMissing: If the executable cannot be found
            ScanFailed: If the command fails with non-zero exit code or times out
        """
        command = [cls.resolve_executable(), *command_args]
        logger.debug("Running %s", " ".join(command))

        try:
            result = subprocess.run(command, capture_output=True, text=True, check=True, timeout=cls._timeout)
            return result.stdout
        except subprocess.CalledProcessError as e:
            raise ScanFailed(f"'{' '.join(command_args[:2])}' exited with status {e.returncode}", stderr=e.stderr or "")
        except subprocess.TimeoutExpired as e:
            stderr = e.stderr.decode() if isinstance(e.stderr, bytes) else (e.stderr or "")
            raise ScanFailed(f"'{' '.join(command_args[:2])}' timed out after {cls._timeout}s", stderr=stderr)

    # -------------------------Version------------------------- #

    @classmethod
    def version(cls) -> str:
        """Return the scanner's version string."""
        output = cls._run_codeql_command(["version", "--format=terse"])
        return output.strip()

    # -------------------------Database------------------------- #

    @classmethod
    def database_create(cls, database: str | Path, source_root: str | Path, language: str = "python") -> Path:
        """Build a scanner database over a source tree.

        Args:
            database: Directory where the database is created (overwritten).
            source_root: Root of the sources to extract.
            language: Extractor language.

        Returns:
            The database directory.
        """
        logger.info("Creating scanner database for %s", source_root)
        cls._run_codeql_command(
            [
                "database",
                "create",
                str(database),
                f"--language={language}",
                f"--source-root={source_root}",
                "--overwrite",
            ]
        )
        return Path(database)

    @classmethod
    def database_analyze(cls, database: str | Path, suite: str, output: str | Path) -> dict:
        """Run a query suite over a database and load the SARIF result.

        Args:
            database: Database directory from database_create.
            suite: Query suite id or path.
            output: Where the SARIF file is written.

        Returns:
            The parsed SARIF document.
        """
        logger.info("Analyzing %s with suite %s", database, suite)
        cls._run_codeql_command(
            [
                "database",
                "analyze",
                str(database),
                suite,
                "--format=sarif-latest",
                f"--output={output}",
            ]
        )
        try:
            with open(output, "r", encoding="utf-8") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise SarifMalformed(f"Cannot read SARIF output {output}: {e}")
