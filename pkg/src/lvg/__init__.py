"""Local variance gamma calibration: exact arbitrage-free interpolation of call prices."""
from .errors import ContractViolation, DataError, LVGError
from .market_data import AdmissiblePrices, admissible_from_arrays, check_strict_admissibility
from .piecewise_exp import LVGSlice
from .smile_interp import Deltas, interpolate_surface
from .surface import NonHomLVGModel, assemble_model, local_variance

__all__ = [
    "AdmissiblePrices",
    "ContractViolation",
    "DataError",
    "Deltas",
    "LVGError",
    "LVGSlice",
    "NonHomLVGModel",
    "admissible_from_arrays",
    "assemble_model",
    "check_strict_admissibility",
    "interpolate_surface",
    "local_variance",
]
