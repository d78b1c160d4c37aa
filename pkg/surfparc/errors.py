"""
Error hierarchy for surfparc.

Every failure the library raises on purpose derives from ParcellationError, so
the CLI can turn it into a single machine-parsable line and a stable exit code.
"""
from typing import Dict, List, Optional


class ParcellationError(ValueError):
    """Base class for all expected failures."""

    exit_code = 1

    def one_line(self) -> str:
        message = str(self).replace('\n', ' ').replace('"', "'")
        return f'error kind={type(self).__name__} code={self.exit_code} message="{message}"'


class ConfigError(ParcellationError):
    """Invalid run configuration or CLI option combination."""

    exit_code = 3


class DataError(ParcellationError):
    """Unreadable or inconsistent input files."""

    exit_code = 4


class MeshError(DataError):
    """Mesh violates a structural invariant (range, degeneracy, connectivity)."""


class DatasetError(DataError):
    """Aggregated per-subject load failures."""

    def __init__(self, failures: Dict[str, List[str]]):
        self.failures = failures
        parts = []
        for subject_id, messages in failures.items():
            parts.append(f"{subject_id}: {'; '.join(messages)}")
        super().__init__(f"{len(failures)} subject(s) failed to load: " + ' | '.join(parts))


class NumericError(ParcellationError):
    """Non-finite values or losses."""

    exit_code = 5

    def __init__(self, message: str, diagnostics: Optional[Dict] = None):
        self.diagnostics = diagnostics or {}
        if self.diagnostics:
            details = ', '.join(f'{k}={v}' for k, v in self.diagnostics.items())
            message = f'{message} ({details})'
        super().__init__(message)


class ContractViolation(ParcellationError):
    """A caller broke an operation precondition (shape, range, normalization)."""

    exit_code = 6
