"""
Experiment configuration.

Configs are JSON files validated by ``ExperimentConfig``. Units: MeV for
deuteron energies, radians for angles, 1/MeV for time steps. Process-level
settings (worker count, output directory, log level) come from the
environment, optionally through a ``.env`` file.
"""

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import psutil
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from sqpe_estimators.deuteron import deuteron
from sqpe_estimators.operators import ObservableExpansion, PureState, eigenstate

EXPERIMENTS = (
    "oa_curve",
    "sqpe_linear",
    "sqpe_cubic",
    "conditions_eigen",
    "conditions_variance",
    "noise_budget",
    "readout_demo",
    "trotter_scan",
    "vqe_demo",
    "channel_ptm",
)
ExperimentName = Literal[
    "oa_curve", "sqpe_linear", "sqpe_cubic", "conditions_eigen", "conditions_variance",
    "noise_budget", "readout_demo", "trotter_scan", "vqe_demo", "channel_ptm",
]


class ConfigError(ValueError):
    """Unreadable or invalid experiment config."""


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TermSpec(_Block):
    weight: float = Field(gt=0)
    phase: float = 0.0
    string: str


class ObservableSpec(_Block):
    identity_coeff: float = 0.0
    terms: List[TermSpec] = Field(min_length=1)

    def build(self) -> ObservableExpansion:
        return ObservableExpansion.from_dict(self.model_dump())


class ThetaState(_Block):
    theta: float


class AmplitudeState(_Block):
    amplitudes: List[Tuple[float, float]] = Field(min_length=2)


def _default_schedule() -> List[int]:
    return [int(round(10 ** (4 + k / 8))) for k in range(33)]


class OAParams(_Block):
    eps_r: float = Field(0.01, gt=0)
    shot_schedule: List[int] = Field(default_factory=_default_schedule, min_length=1)

    @field_validator("shot_schedule")
    @classmethod
    def _increasing(cls, v: List[int]) -> List[int]:
        if min(v) < 1 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("shot_schedule must be strictly increasing positive integers")
        return v


class SqpeParams(_Block):
    eps_r: float = Field(0.01, gt=0)
    # linear runs: one run per time step; null means tau_opt
    tau: Optional[float] = Field(None, gt=0)
    tau_scales: List[float] = Field(default_factory=lambda: [1.0, 0.5])
    include_inverse_norm: bool = True
    m1_bound: Optional[float] = None
    initial_shots: int = Field(1000, ge=1)
    growth: float = Field(1.02, gt=1.0)
    linear_shot_cap: int = Field(10 ** 8, ge=1)
    # cubic runs
    block_size: int = Field(40, ge=2)
    bias_mode: Literal["A1", "A2", "exact"] = "A1"
    shot_split: Literal["even", "optimal"] = "optimal"
    tau_max: Optional[float] = Field(0.5, gt=0)
    initial_max: float = Field(0.1, gt=0)
    cubic_shot_cap: int = Field(10 ** 6, ge=2)
    compare_exact: bool = True


class NoiseParams(_Block):
    eps_r: float = Field(0.01, gt=0)
    flip_probabilities: List[float] = Field(
        default_factory=lambda: [0.0865, 0.08, 0.0382, 0.3567, 0.2715]
    )
    scan_points: int = Field(32, ge=2)
    precomputed_calibration: int = Field(10 ** 7, ge=1)
    demo_shots: int = Field(10 ** 6, ge=2)

    @field_validator("flip_probabilities")
    @classmethod
    def _below_half(cls, v: List[float]) -> List[float]:
        if any(not 0.0 <= p < 0.5 for p in v):
            raise ValueError("flip probabilities must lie in [0, 0.5)")
        return v


class ConditionsParams(_Block):
    grid: int = Field(64, ge=16)
    K_range: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    eps_r: float = Field(0.01, gt=0)


class TrotterParams(_Block):
    taus: List[float] = Field(default_factory=lambda: [0.0879, 0.2, 0.4])
    eps_values: List[float] = Field(default_factory=lambda: [0.021174, 2.1174e-3, 2.1174e-4])
    orders: List[int] = Field(default_factory=lambda: [0, 1, 2])
    with_exact: bool = False


class VqeParams(_Block):
    shots_per_eval: int = Field(1000, ge=1)
    theta0: float = math.pi / 2
    xatol: float = Field(1e-3, gt=0)
    fatol: float = Field(1e-1, gt=0)
    maxiter: int = Field(50, ge=1)


class ChannelParams(_Block):
    taus: List[float] = Field(default_factory=lambda: [0.1, 0.2, 0.4])
    depolarizing: float = Field(0.5, ge=0.0, le=1.0)


class ExperimentConfig(_Block):
    schema_version: Literal[1] = 1
    experiment: ExperimentName
    observable: Union[Literal["deuteron"], ObservableSpec] = "deuteron"
    state: Union[Literal["ground"], ThetaState, AmplitudeState] = "ground"
    seeds: List[int] = Field(min_length=1)
    oa: OAParams = Field(default_factory=OAParams)
    sqpe: SqpeParams = Field(default_factory=SqpeParams)
    noise: NoiseParams = Field(default_factory=NoiseParams)
    conditions: ConditionsParams = Field(default_factory=ConditionsParams)
    trotter: TrotterParams = Field(default_factory=TrotterParams)
    vqe: VqeParams = Field(default_factory=VqeParams)
    channel: ChannelParams = Field(default_factory=ChannelParams)

    def build_observable(self) -> ObservableExpansion:
        if self.observable == "deuteron":
            return deuteron().observable
        return self.observable.build()

    def build_state(self, obs: ObservableExpansion) -> PureState:
        if self.state == "ground":
            return eigenstate(obs, 0)
        if isinstance(self.state, ThetaState):
            return PureState.from_angle(self.state.theta)
        return PureState.normalized([complex(re, im) for re, im in self.state.amplitudes])

    @property
    def is_deuteron(self) -> bool:
        return self.observable == "deuteron"


def _describe_validation(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        field = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{field}: {item['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config: {_describe_validation(e)}") from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return parse_config(data)


@dataclass(frozen=True)
class Environment:
    workers: int
    output_dir: str
    log_level: str


def load_environment() -> Environment:
    load_dotenv()
    default_workers = psutil.cpu_count(logical=False) or 1
    try:
        workers = int(os.getenv("SQPE_WORKERS", default_workers))
    except ValueError:
        raise ConfigError(f"SQPE_WORKERS must be an integer, got {os.getenv('SQPE_WORKERS')!r}")
    return Environment(
        workers=max(1, workers),
        output_dir=os.getenv("SQPE_OUTPUT_DIR", "results"),
        log_level=os.getenv("SQPE_LOG_LEVEL", "INFO").upper(),
    )
