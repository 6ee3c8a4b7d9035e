"""Exception hierarchy shared across the package."""


class DistMarketError(Exception):
    """Base class for every error raised by distmarket."""


class ModelValidationError(DistMarketError):
    """A LinearProgram is malformed (dangling variable id, duplicate term, bad bounds)."""


class UnboundedError(DistMarketError):
    """An LP (or the root relaxation of a MIP) has an unbounded objective."""


class SolverError(DistMarketError):
    """The LP backend stopped without a usable status."""


class InfeasibleError(DistMarketError):
    """A market stage has no feasible solution."""


class ScenarioError(DistMarketError):
    """A scenario directory could not be loaded or failed validation."""


class ScheduleStructureError(DistMarketError):
    """A schedule does not cover the assets or horizon of its microgrid."""


class AwardError(DistMarketError):
    """The ISO award cannot be disaggregated against the submitted bids."""


class StageError(DistMarketError):
    """Wraps a failure inside a pipeline stage, tagging which stage failed."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
