"""Exception hierarchy shared by every planning stage."""


class PlanningError(Exception):
    """Base class for all errors raised by vnfmig."""


class InvalidReferenceError(PlanningError, KeyError):
    """Unknown node, link or agent id."""

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return Exception.__str__(self)


class DegenerateQueryError(PlanningError, ValueError):
    pass


class InvalidParameterError(PlanningError, ValueError):
    pass


class InfeasibleShareError(PlanningError):
    """Load is routed over a link that grants the agent no bandwidth."""


class EmptyPlanError(PlanningError):
    """An agent ships none of its state."""


class UnboundedCongestionError(PlanningError):
    """A link is fully consumed, so its queue cost diverges."""


class IncompletePlanError(PlanningError):
    pass


class NoCandidateError(PlanningError):
    """No node can host the agent under the current resource pool."""


class InfeasibleDecodeError(PlanningError):
    pass


class OracleTooLargeError(PlanningError):
    pass


class InfeasibleAllocationError(PlanningError):
    pass


class UnreachableDestinationError(PlanningError):
    pass


class ZeroCapacityError(PlanningError):
    pass


class BudgetExceededError(PlanningError):
    pass


class NumericalError(PlanningError):
    pass


class PhaseError(PlanningError):
    """Wraps an error raised inside one pipeline phase."""

    def __init__(self, phase: str, cause: Exception):
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")
        self.phase = phase
        self.cause = cause
