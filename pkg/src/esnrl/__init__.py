"""Echo State Network value learning with one-step greedy policy improvement."""

__version__ = "0.1.0"

from ._accel import get_backend, set_backend, use_backend  # noqa: E402
from .errors import (  # noqa: E402
    ActionError,
    ConfigError,
    DivergenceError,
    DomainError,
    ESNRLError,
    InitError,
    NumericalError,
    ParameterError,
    SingularityError,
    StiffnessError,
)
from .linalg import RngStream  # noqa: E402
from .reservoir import ReservoirParams, ReservoirTrajectory, StructuredInitSpec  # noqa: E402
from .value_learning import ValueModel  # noqa: E402
from .environments import Experience  # noqa: E402

__all__ = [
    "__version__",
    "get_backend",
    "set_backend",
    "use_backend",
    "RngStream",
    "ReservoirParams",
    "ReservoirTrajectory",
    "StructuredInitSpec",
    "ValueModel",
    "Experience",
    "ESNRLError",
    "ParameterError",
    "SingularityError",
    "InitError",
    "ActionError",
    "DomainError",
    "NumericalError",
    "StiffnessError",
    "DivergenceError",
    "ConfigError",
]
