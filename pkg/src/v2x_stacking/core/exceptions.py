class V2XError(Exception):
    """Base exception for v2x-stacking errors."""
    pass

class ValidationError(V2XError):
    """Raised when a domain value or configuration is invalid."""
    pass

class DataError(V2XError):
    """Raised when trace, price or forecast files cannot be ingested."""
    pass

class SchemaError(DataError):
    """Raised when a CSV file does not carry the expected columns."""
    pass

class TraceGapError(DataError):
    """Raised when a trace file misses a slot for some prosumer and day."""

    def __init__(self, prosumer_id: str, day: int, slot: int):
        self.prosumer_id = prosumer_id
        self.day = day
        self.slot = slot
        super().__init__(f"Missing slot {slot} for prosumer '{prosumer_id}' on day {day}")

class NegativeValueError(DataError):
    """Raised when a trace file carries negative power values."""
    pass

class NetworkError(V2XError):
    """Raised when a topology is malformed or a node is unknown."""
    pass

class SolverError(V2XError):
    """Raised when an optimization problem cannot be solved."""
    pass

class InfeasibleProblemError(SolverError):
    """Raised when the QP subsolver detects primal infeasibility."""

    def __init__(self, message: str, certificate: float | None = None):
        self.certificate = certificate
        super().__init__(message)

class IterationLimitError(SolverError):
    """Raised when the QP subsolver or branch-and-bound hits its iteration budget."""
    pass

class ForecastError(V2XError):
    """Raised when a forecast cannot be produced or scored."""
    pass

class InsufficientHistoryError(ForecastError):
    """Raised when a forecaster needs more history than is available."""
    pass

class MetricError(V2XError):
    """Raised when a metric is undefined for its inputs."""
    pass
