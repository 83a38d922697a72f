"""Frequency-domain compensator synthesis by potential-field parameter flow."""

__version__ = "0.1.0"

from .errors import (ImproperTransferFunction, InvalidSector, NonFiniteState,
                     NotConverged, NumericalFailure, OutOfBounds, PoleOnGrid, SchemaError)
from .lti import (CompensatorChain, FirstOrderSection, FrequencyGrid, Polynomial,
                  RationalTF, TFMatrix, eftf, eval_chain, eval_tf, tf)
from .region import (DiskRegion, GridMaskRegion, HalfPlaneRegion, RegionSpec,
                     disk_from_sector, solve_laplace)
from .flow import (DesignProblem, FlowSettings, ParameterBounds, StopReason,
                   run, run_mimo)
from .simulate import (Saturation, SinusoidalGain, simulate_closed_loop,
                       simulate_mimo_closed_loop, step_metrics)

__all__ = [
    "ImproperTransferFunction", "InvalidSector", "NonFiniteState", "NotConverged",
    "NumericalFailure", "OutOfBounds", "PoleOnGrid", "SchemaError",
    "CompensatorChain", "FirstOrderSection", "FrequencyGrid", "Polynomial", "RationalTF",
    "TFMatrix", "eftf", "eval_chain", "eval_tf", "tf",
    "DiskRegion", "GridMaskRegion", "HalfPlaneRegion", "RegionSpec", "disk_from_sector",
    "solve_laplace",
    "DesignProblem", "FlowSettings", "ParameterBounds", "StopReason", "run", "run_mimo",
    "Saturation", "SinusoidalGain", "simulate_closed_loop", "simulate_mimo_closed_loop",
    "step_metrics",
]
