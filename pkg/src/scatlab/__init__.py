"""Truncated P(phi)_2 scattering operators, propagators and evolution semigroups."""

__version__ = "0.1.0"

from .errors import ScatlabError  # noqa: E402
from .fock import TruncationParams, build_basis  # noqa: E402
from .scattering import ScatteringModel, StepperConfig, local_s_operator  # noqa: E402
from .testfunctions import bump, zero_function  # noqa: E402

__all__ = [
    "__version__",
    "ScatlabError",
    "TruncationParams",
    "build_basis",
    "ScatteringModel",
    "StepperConfig",
    "local_s_operator",
    "bump",
    "zero_function",
]
