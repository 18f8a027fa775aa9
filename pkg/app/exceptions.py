from typing import Any, Dict, List, Optional

EXIT_SCHEMA = 2
EXIT_SIMULATION = 3
EXIT_COMPUTATION = 4


class SubsidyError(Exception):
    """Base error. `exit_code` is what the CLI returns when this escapes a command."""

    exit_code = EXIT_COMPUTATION
    kind = "computation_error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        payload = {"error": self.kind, "message": self.message, "exit_code": self.exit_code}
        if self.details:
            payload["details"] = self.details
        return payload


class ConfigError(SubsidyError):
    exit_code = EXIT_SCHEMA
    kind = "schema_error"


class SimulationError(SubsidyError):
    exit_code = EXIT_SIMULATION
    kind = "simulation_error"


class ComputationError(SubsidyError):
    exit_code = EXIT_COMPUTATION
    kind = "computation_error"


class DomainError(ComputationError):
    kind = "domain_error"


class QuadratureError(ComputationError):
    kind = "quadrature_error"


class BracketError(ComputationError):
    kind = "bracket_error"


class RankDeficiencyError(ComputationError):
    kind = "rank_deficiency"

    def __init__(self, message: str, column: int):
        super().__init__(message, {"column": column})
        self.column = column


class SeparationError(ComputationError):
    kind = "separation"

    def __init__(self, message: str, trace: Optional[List[float]] = None):
        super().__init__(message, {"trace": trace or []})
        self.trace = trace or []


class ConvergenceError(ComputationError):
    kind = "non_convergence"

    def __init__(self, message: str, trace: Optional[List[float]] = None):
        super().__init__(message, {"trace": trace or []})
        self.trace = trace or []


class InfeasibleError(ComputationError):
    kind = "infeasible"


class UnboundedError(ComputationError):
    kind = "unbounded"


class InvertibilityError(ComputationError):
    kind = "invertibility"


class AssumptionError(ComputationError):
    """A solver precondition (shape, concavity, cost form) does not hold."""

    kind = "assumption_failure"


class CrossingError(AssumptionError):
    kind = "crossing_violation"


class MissingCellError(ComputationError):
    kind = "missing_cell"


class OffSupportError(ComputationError):
    kind = "off_support"


class EmptySetError(ComputationError):
    kind = "empty_identified_set"


class InsufficientDataError(ComputationError):
    kind = "insufficient_data"
