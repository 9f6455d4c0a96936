"""Exception hierarchy shared by the library modules and the CLI.

Library code raises these; only app.py catches them and turns them into
JSON error payloads and exit codes.
"""
from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ANALYSIS = 2
EXIT_RESOURCE = 3


class WorkbenchError(Exception):
    """Base class for every error the workbench reports."""

    exit_code = EXIT_ANALYSIS

    def to_dict(self) -> dict:
        return {'success': False, 'error': str(self), 'kind': type(self).__name__}


class UsageError(WorkbenchError, ValueError):
    """Bad arguments, mismatched operands, or an unusable spec."""

    exit_code = EXIT_USAGE


class SpecParseError(UsageError):
    """Cipher-spec or polynomial text that cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, col: Optional[int] = None,
                 source: Optional[str] = None):
        self.line = line
        self.col = col
        self.source = source
        where = ""
        if source:
            where += source
        if line is not None:
            where += f":{line}"
            if col is not None:
                where += f":{col}"
        super().__init__(f"{where}: {message}" if where else message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update({'line': self.line, 'col': self.col})
        return d


class PolicyError(UsageError):
    """A designer limit (e.g. the 2^18 keystream bound) would be exceeded."""


class AnalysisError(WorkbenchError):
    """The mathematics failed: no annihilators, inconsistent system, ..."""

    exit_code = EXIT_ANALYSIS


class InconsistentSystemError(AnalysisError):
    """Linearized system has no solution (wrong keystream or a bug)."""


class ResourceError(WorkbenchError, MemoryError):
    """An operation would exceed the configured memory budget."""

    exit_code = EXIT_RESOURCE

    def __init__(self, message: str, required_bytes: Optional[int] = None,
                 cap_bytes: Optional[int] = None, advice: str = ""):
        self.required_bytes = required_bytes
        self.cap_bytes = cap_bytes
        self.advice = advice
        text = message
        if required_bytes is not None:
            text += f" (needs {required_bytes / 2**30:.2f} GiB"
            if cap_bytes is not None:
                text += f", cap {cap_bytes / 2**30:.2f} GiB"
            text += ")"
        if advice:
            text += f"; {advice}"
        super().__init__(text)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update({'required_bytes': self.required_bytes, 'cap_bytes': self.cap_bytes,
                  'advice': self.advice})
        return d
