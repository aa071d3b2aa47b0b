from .fitting import (
    FinesseResult,
    LorentzianFit,
    OdmrDip,
    OdmrFit,
    detect_peaks,
    double_lorentzian,
    finesse_from_trace,
    fit_double_lorentzian,
    fit_lorentzian,
    fit_lorentzian_xy,
    lorentzian,
    lorentzian_jacobian,
    peak_windows,
)
from .lm import levenberg_marquardt, numeric_jacobian
from .observables import (
    amplification,
    contrast,
    power_for_sensitivity,
    shot_noise_sensitivity,
)

__all__ = [
    "FinesseResult", "LorentzianFit", "OdmrDip", "OdmrFit", "amplification",
    "contrast", "detect_peaks", "double_lorentzian", "finesse_from_trace",
    "fit_double_lorentzian", "fit_lorentzian", "fit_lorentzian_xy",
    "levenberg_marquardt", "lorentzian", "lorentzian_jacobian",
    "numeric_jacobian", "peak_windows", "power_for_sensitivity",
    "shot_noise_sensitivity",
]
