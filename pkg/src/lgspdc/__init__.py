"""Brightness of Laguerre-Gaussian photon pairs from periodically poled KTP.

Computes the coincidence amplitude of type-0 collinear SPDC projected onto
Laguerre-Gaussian signal and idler modes, the resulting pair-collection
rates, and the focusing parameters that maximize them.
"""

__version__ = "0.1.0"

from .amplitude import (
    AmplitudeRequest,
    AmplitudeResult,
    Method,
    QuadratureSettings,
    evaluate_amplitude,
    spectrum_amplitudes,
)
from .dispersion import (
    CrystalSpec,
    DispersionModel,
    PhaseMismatch,
    default_model,
    reference_crystal,
)
from .lgmodes import FocalConfig, ModeSpec, WaistConfig
from .optimizer import (
    BoundaryHitError,
    ColumnOptimum,
    ModeTable,
    RateSurface,
    RidgePoint,
    SummitPoint,
    TempScanResult,
    crossmode_penalty,
    mode_table,
    opt_fsi_given_fp,
    rate_surface,
    temp_scan,
)
from .rates import (
    Normalization,
    QKernelTable,
    RateResult,
    RateRoute,
    SpectrumResult,
    WaistSurfaceResult,
    pair_rate_direct,
    pair_rate_kernel,
    q_kernel,
    spectrum,
    waist_surface,
)

__all__ = [
    "AmplitudeRequest",
    "AmplitudeResult",
    "BoundaryHitError",
    "ColumnOptimum",
    "CrystalSpec",
    "DispersionModel",
    "FocalConfig",
    "Method",
    "ModeSpec",
    "ModeTable",
    "Normalization",
    "PhaseMismatch",
    "QKernelTable",
    "QuadratureSettings",
    "RateResult",
    "RateRoute",
    "RateSurface",
    "RidgePoint",
    "SpectrumResult",
    "SummitPoint",
    "TempScanResult",
    "WaistConfig",
    "WaistSurfaceResult",
    "crossmode_penalty",
    "default_model",
    "evaluate_amplitude",
    "mode_table",
    "opt_fsi_given_fp",
    "pair_rate_direct",
    "pair_rate_kernel",
    "q_kernel",
    "rate_surface",
    "reference_crystal",
    "spectrum",
    "spectrum_amplitudes",
    "temp_scan",
    "waist_surface",
    "__version__",
]
