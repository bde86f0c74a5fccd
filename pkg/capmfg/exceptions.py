"""
[API] Contains exceptions that may be exposed to the library client.
"""

from typing import Any, List, Optional


class CapMfgException(Exception):
    pass


class ValidationError:
    """Single violated invariant: offending field, message and a sampled witness (if any)."""

    def __init__(self, field: str, message: str, witness: Any = None) -> None:
        self.field = field
        self.message = message
        self.witness = witness

    def __repr__(self) -> str:
        if self.witness is None:
            return "{field}: {message}".format(field=self.field, message=self.message)
        return "{field}: {message} (witness: {witness})".format(field=self.field, message=self.message,
                                                                witness=self.witness)

    def __str__(self) -> str:
        return self.__repr__()

    def __eq__(self, o) -> bool:
        if not isinstance(o, ValidationError):
            return False
        return (self.field, self.message) == (o.field, o.message)

    def __hash__(self) -> int:
        return hash((self.field, self.message))


class ParamsValidationException(CapMfgException):
    """Raised with the full list of violated invariants (never only the first one)."""

    def __init__(self, errors: List[ValidationError]) -> None:
        super().__init__('; '.join(str(e) for e in errors))
        self.errors = errors


class NotConfiguredScenarioException(CapMfgException):
    pass


class ScenarioFileException(CapMfgException):
    pass


class MeasureInvariantException(CapMfgException):
    pass


class SupportSizeExceededException(CapMfgException):
    """Combined support is above the exact solver cap - caller is expected to subsample."""

    def __init__(self, size: int, cap: int) -> None:
        super().__init__('combined support {} exceeds exact solver cap {}'.format(size, cap))
        self.size = size
        self.cap = cap


class GridMismatchException(CapMfgException):
    pass


class NonFiniteStateException(CapMfgException):
    def __init__(self, message: str, step: Optional[int] = None, atoms: Optional[List[int]] = None) -> None:
        super().__init__('{} (step={}, atoms={})'.format(message, step, (atoms or [])[:10]))
        self.step = step
        self.atoms = atoms or []


class CflViolationException(CapMfgException):
    def __init__(self, cfl: float, required_n_time: int) -> None:
        super().__init__('explicit Hamiltonian part violates CFL bound (cfl={:.4g} > 0.9); '
                         'use n_time >= {}'.format(cfl, required_n_time))
        self.cfl = cfl
        self.required_n_time = required_n_time


class LinearSolveFailedException(CapMfgException):
    pass


class HorizonViolationException(CapMfgException):
    def __init__(self, horizon: float, t_max: float) -> None:
        super().__init__('horizon T={:.6g} exceeds admissible T_max={:.6g}'.format(horizon, t_max))
        self.horizon = horizon
        self.t_max = t_max


class MemoizedComputationFailedException(CapMfgException):
    pass
