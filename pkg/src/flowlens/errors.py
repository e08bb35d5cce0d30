"""Exception hierarchy shared by every stage of the pipeline."""


class FlowlensError(Exception):
    """Base class; the CLI maps these to exit code 1 unless noted."""


class ConfigError(FlowlensError, ValueError):
    """Invalid configuration or hyperparameter (CLI exit code 2)."""


class SizeError(FlowlensError, ValueError):
    pass


class DataError(FlowlensError, ValueError):
    pass


class ShapeError(FlowlensError, ValueError):
    pass


class EvaluationError(FlowlensError, ValueError):
    pass


class ExplanationError(FlowlensError, ValueError):
    pass


class ArchiveError(FlowlensError):
    pass


class VersionError(ArchiveError):
    pass
