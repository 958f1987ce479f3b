"""Exception hierarchy.

Every error carries a short machine-readable ``code`` used by the CLI when
reporting failures as ``code: message``.
"""


class HdftsError(Exception):
    code = "error"


class ConfigError(HdftsError, ValueError):
    code = "config_error"


class IngestError(HdftsError):
    code = "ingest_error"


class ParseError(HdftsError, ValueError):
    code = "parse_error"


class DomainError(HdftsError, ValueError):
    code = "domain_error"


class InsufficientDataError(HdftsError):
    code = "insufficient_data"


class DegenerateSpectrumError(HdftsError):
    code = "degenerate_spectrum"


class UnderdeterminedDesignError(HdftsError):
    code = "underdetermined_design"


class SingularDesignError(HdftsError):
    code = "singular_design"


class CoverageError(HdftsError):
    code = "coverage_error"


class StageError(HdftsError):
    """Wraps a failure inside the fitting pipeline with the stage that raised it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.code = getattr(cause, "code", "error")
        super().__init__(f"[{stage}] {cause}")
