"""Result records and error types shared by the estimators."""

from dataclasses import dataclass, field
from typing import Any, Dict


class EstimatorError(ValueError):
    """Invalid estimator input: degenerate time steps, tau = 0, nonpositive targets."""


class InfeasibleTargetError(EstimatorError):
    """The requested accuracy cannot be reached with the given settings."""


@dataclass(frozen=True)
class EstimateReport:
    value: float
    variance: float
    bias_bound: float
    total_shots: int
    mse: float = field(init=False)

    def __post_init__(self):
        if self.variance < 0 or self.bias_bound < 0:
            raise EstimatorError(
                f"variance ({self.variance}) and bias bound ({self.bias_bound}) must be nonnegative"
            )
        object.__setattr__(self, "mse", self.variance + self.bias_bound ** 2)

    @property
    def error(self) -> float:
        """Root mean squared error."""
        return self.mse ** 0.5

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "variance": self.variance,
            "bias_bound": self.bias_bound,
            "mse": self.mse,
            "total_shots": self.total_shots,
        }
