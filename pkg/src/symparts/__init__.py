"""Symmetric part detection from multi-scale superpixels treated as deformable discs."""

from .errors import (ContractError, FitError, GenerationError, InputError, ParameterError,
                     SympartsError, TrainingError, VersionError)

__version__ = "0.1.0"

__all__ = ["ContractError", "FitError", "GenerationError", "InputError", "ParameterError",
           "SympartsError", "TrainingError", "VersionError", "__version__"]
