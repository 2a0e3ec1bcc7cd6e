from typing import Optional


# ============================================================
# 🛑 BASE ERROR
# ============================================================
class TinyKVError(Exception):
    """Base error. `exit_code` is what the CLI exits with when it escapes."""

    exit_code = 2

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(TinyKVError):
    exit_code = 2


class VerificationError(TinyKVError):
    exit_code = 1


# ============================================================
# 📐 DATA ERRORS
# ============================================================
class ShapeError(TinyKVError, ValueError):
    pass


class EmptyPageError(TinyKVError, ValueError):
    pass


class EmptyCacheError(TinyKVError, ValueError):
    pass


class EmptyInputError(TinyKVError, ValueError):
    pass


class PageIndexError(TinyKVError, IndexError):
    pass


class BudgetError(TinyKVError, ValueError):
    pass


class DomainError(TinyKVError, ValueError):
    pass


class NumericError(TinyKVError, ValueError):
    pass


class NormalizationError(TinyKVError, ValueError):
    pass


class LifecycleError(TinyKVError, RuntimeError):
    pass


class SimulationError(TinyKVError, RuntimeError):
    pass


# ============================================================
# 📄 TRACE FILE ERRORS
# ============================================================
class TraceParseError(TinyKVError, ValueError):
    def __init__(self, detail: str, line: int):
        super().__init__(f"line {line}: {detail}")
        self.line = line


class TraceFormatError(TinyKVError, ValueError):
    def __init__(self, detail: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {detail}" if line is not None else detail)
        self.line = line
