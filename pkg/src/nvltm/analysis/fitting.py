"""Peak detection and Lorentzian fits of cavity scans and ODMR spectra."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks, peak_widths

from ..errors import DegenerateFitError, FitFailure, InsufficientPeaksError
from .lm import levenberg_marquardt

WINDOW_HALF_WIDTHS = 3.0
MIN_WINDOW_SAMPLES = 10
# rms residual above this fraction of the amplitude marks a fit as suspect
RESIDUAL_FLAG = 0.05


@dataclass
class LorentzianFit:
    amplitude: float
    center: float
    fwhm: float
    baseline: float
    covariance: np.ndarray
    residual_norm: float
    iterations: int = 0
    flagged: bool = False

    @property
    def errors(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    def to_dict(self):
        return {"amplitude": self.amplitude, "center": self.center,
                "fwhm": self.fwhm, "baseline": self.baseline,
                "covariance": self.covariance.tolist(),
                "residual_norm": self.residual_norm,
                "iterations": self.iterations, "flagged": self.flagged}


@dataclass
class FinesseResult:
    finesse: float
    fsr: float
    mean_fwhm: float
    uncertainty: float
    peaks: list = None

    def to_dict(self):
        return {"finesse": self.finesse, "fsr": self.fsr,
                "mean_fwhm": self.mean_fwhm, "uncertainty": self.uncertainty,
                "peaks": [p.to_dict() for p in self.peaks or []]}


@dataclass
class OdmrDip:
    contrast: float
    center: float
    width_fwhm: float
    contrast_err: float = 0.0
    width_err: float = 0.0


@dataclass
class OdmrFit:
    dips: list
    baseline: float
    overall_contrast: float
    covariance: np.ndarray
    residual_norm: float

    @property
    def deepest(self):
        return max(self.dips, key=lambda d: d.contrast)

    def to_dict(self):
        return {"dips": [vars(d) for d in self.dips], "baseline": self.baseline,
                "overall_contrast": self.overall_contrast,
                "covariance": self.covariance.tolist(),
                "residual_norm": self.residual_norm}


def lorentzian(x, amplitude, center, fwhm, baseline=0.0):
    return amplitude / (1.0 + (2.0 * (x - center) / fwhm) ** 2) + baseline


def lorentzian_jacobian(x, amplitude, center, fwhm, baseline=0.0):
    """Columns d/d(amplitude, center, fwhm, baseline)."""
    u = 2.0 * (x - center) / fwhm
    q = 1.0 / (1.0 + u * u)
    dq_du = -2.0 * u * q * q
    return np.column_stack([
        q,
        amplitude * dq_du * (-2.0 / fwhm),
        amplitude * dq_du * (-u / fwhm),
        np.ones_like(x),
    ])


def detect_peaks(trace, min_prominence=0.3):
    """Indices of resonance peaks, sorted by position."""
    y = trace.detected_power
    baseline = float(np.median(y))
    span = float(np.max(y)) - baseline
    if span <= 0:
        return []
    level = min_prominence * span
    idx, props = find_peaks(y, height=baseline + level, prominence=level,
                            plateau_size=1)
    return sorted(int(i) for i in props["left_edges"]) if idx.size else []


def peak_windows(trace, peaks):
    """(start, stop) index windows of +-3 estimated FWHM, split at midpoints."""
    if not peaks:
        return []
    y = trace.detected_power
    widths = peak_widths(y, peaks, rel_height=0.5)[0]
    windows = []
    for k, (p, w) in enumerate(zip(peaks, widths)):
        half = max(int(np.ceil(WINDOW_HALF_WIDTHS * max(w, 1.0))), MIN_WINDOW_SAMPLES // 2)
        lo, hi = p - half, p + half + 1
        if k > 0:
            lo = max(lo, (peaks[k - 1] + p) // 2 + 1)
        if k < len(peaks) - 1:
            hi = min(hi, (p + peaks[k + 1]) // 2 + 1)
        windows.append((max(lo, 0), min(hi, y.size)))
    return windows


def _half_max_width(x, y, i_peak, base):
    half = base + 0.5 * (y[i_peak] - base)
    left = i_peak
    while left > 0 and y[left] > half:
        left -= 1
    right = i_peak
    while right < y.size - 1 and y[right] > half:
        right += 1
    return max(x[right] - x[left], 2 * np.min(np.diff(x)))


def fit_lorentzian_xy(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < MIN_WINDOW_SAMPLES:
        raise FitFailure(f"window holds {x.size} samples, need >= {MIN_WINDOW_SAMPLES}")
    i_peak = int(np.argmax(y))
    base0 = float(np.min(y))
    w0 = _half_max_width(x, y, i_peak, base0)
    x_ref, y_ref = x[i_peak], max(float(np.max(np.abs(y))), 1e-300)
    u = (x - x_ref) / w0
    v = y / y_ref

    def resid(p):
        return lorentzian(u, *p) - v

    def jac(p):
        return lorentzian_jacobian(u, *p)

    p0 = np.array([(y[i_peak] - base0) / y_ref, 0.0, 1.0, base0 / y_ref])
    res = levenberg_marquardt(resid, p0, jac=jac)
    a, c, w, b = res.params
    w = abs(w)
    scale = np.array([y_ref, w0, w0, y_ref])
    cov = res.covariance * np.outer(scale, scale)
    rms = np.sqrt(np.mean(res.residuals ** 2))
    flagged = bool(a <= 0 or rms > RESIDUAL_FLAG * abs(a))
    return LorentzianFit(a * y_ref, x_ref + c * w0, w * w0, b * y_ref, cov,
                         res.residual_norm * y_ref, res.iterations, flagged)


def fit_lorentzian(trace, window):
    lo, hi = window
    return fit_lorentzian_xy(trace.positions[lo:hi], trace.detected_power[lo:hi])


def finesse_from_trace(trace, min_prominence=0.3):
    peaks = detect_peaks(trace, min_prominence)
    if len(peaks) < 2:
        raise InsufficientPeaksError(f"found {len(peaks)} peak(s), need >= 2")
    fits = [fit_lorentzian(trace, w) for w in peak_windows(trace, peaks)]
    centers = np.array([f.center for f in fits])
    widths = np.array([f.fwhm for f in fits])
    spacings = np.diff(centers)
    fsr = float(np.mean(spacings))
    mean_fwhm = float(np.mean(widths))
    n = len(fits)
    var_centers = [f.covariance[1, 1] for f in fits]
    var_fsr = (var_centers[0] + var_centers[-1]) / (n - 1) ** 2
    if spacings.size > 1:
        var_fsr += np.var(spacings, ddof=1) / spacings.size
    var_fwhm = sum(f.covariance[2, 2] for f in fits) / n**2
    finesse = fsr / mean_fwhm
    rel = np.sqrt(var_fsr / fsr**2 + var_fwhm / mean_fwhm**2)
    return FinesseResult(finesse, fsr, mean_fwhm, float(finesse * rel), fits)


def _dip(x, contrast, center, fwhm):
    return contrast / (1.0 + (2.0 * (x - center) / fwhm) ** 2)


def double_lorentzian(f, c1, f1, w1, c2, f2, w2, baseline):
    return baseline * (1.0 - _dip(f, c1, f1, w1) - _dip(f, c2, f2, w2))


def _fit_dips(u, v, p0):
    n_dips = (len(p0) - 1) // 3

    def model(p):
        total = np.ones_like(u)
        for k in range(n_dips):
            total -= _dip(u, *p[3 * k:3 * k + 3])
        return p[-1] * total

    def jac(p):
        cols = []
        b = p[-1]
        total = np.ones_like(u)
        for k in range(n_dips):
            c, f0, w = p[3 * k:3 * k + 3]
            lj = lorentzian_jacobian(u, c, f0, w)
            cols.extend([-b * lj[:, 0], -b * lj[:, 1], -b * lj[:, 2]])
            total -= _dip(u, c, f0, w)
        cols.append(total)
        return np.column_stack(cols)

    return levenberg_marquardt(lambda p: model(p) - v, p0, jac=jac), model


def _odmr_fit_from(res, n_dips, f_ref, f_scale, p_ref):
    p = res.params
    scale = np.array([1.0, f_scale, f_scale] * n_dips + [p_ref])
    cov = res.covariance * np.outer(scale, scale)
    dips = []
    for k in range(n_dips):
        c, f0, w = p[3 * k:3 * k + 3]
        dips.append(OdmrDip(float(c), float(f_ref + f0 * f_scale), float(abs(w) * f_scale),
                            float(np.sqrt(max(cov[3 * k, 3 * k], 0))),
                            float(np.sqrt(max(cov[3 * k + 2, 3 * k + 2], 0)))))
    dips.sort(key=lambda d: d.center)
    fine = np.linspace(min(d.center - 3 * d.width_fwhm for d in dips),
                       max(d.center + 3 * d.width_fwhm for d in dips), 4001)
    shape = np.ones_like(fine)
    for d in dips:
        shape -= _dip(fine, d.contrast, d.center, d.width_fwhm)
    overall = float(1.0 - shape.min())
    return OdmrFit(dips, float(p[-1] * p_ref), overall, cov, res.residual_norm * p_ref)


def _linear_start(u, v, u1, u2, w):
    """Baseline and contrasts solving the model exactly for fixed centers and width."""
    design = np.column_stack([np.ones_like(u), -_dip(u, 1.0, u1, w), -_dip(u, 1.0, u2, w)])
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    b = coef[0]
    p0 = np.array([coef[1] / b, u1, w, coef[2] / b, u2, w, b])
    return p0, float(np.sum((design @ coef - v) ** 2))


def _best_double(u, v, pairs, n_polish=3):
    """LM fit from the best linear starts over candidate center pairs.

    Overlapping or noisy dips make single-point guesses unreliable, so
    every pair is tried with a range of trial widths first.
    """
    trials = []
    for u1, u2 in pairs:
        sep = max(abs(u2 - u1), 0.05)
        for w in sep * np.geomspace(0.2, 5.0, 15):
            p0, cost = _linear_start(u, v, u1, u2, w)
            if min(p0[0], p0[3]) > 0 and p0[-1] > 0:
                trials.append((cost, p0))
    trials.sort(key=lambda t: t[0])
    best, last_exc = None, None
    for _, p0 in trials[:n_polish]:
        try:
            res, _ = _fit_dips(u, v, p0)
        except FitFailure as exc:
            last_exc = exc
            continue
        if best is None or res.residual_norm < best.residual_norm:
            best = res
    if best is None:
        raise last_exc or FitFailure("no admissible starting point", 0, {})
    return best


def fit_double_lorentzian(spectrum):
    """Seven-parameter fit of two Lorentzian dips on a shared baseline."""
    f = spectrum.frequencies
    y = spectrum.power
    p_ref = float(np.max(y))
    v = y / p_ref
    edge = max(y.size // 10, 1)
    baseline0 = float(np.median(np.concatenate([v[:edge], v[-edge:]])))
    # smoothing only guides the starting point; the fit uses the raw data
    vs = gaussian_filter1d(v, max(1.0, y.size / 100), mode="nearest")
    depth = baseline0 - vs
    depth_scale = float(depth.max())
    df = float(np.mean(np.diff(f)))
    i0 = int(np.argmax(depth))
    f_ref = float(f[i0])
    inside = np.nonzero(depth >= 0.5 * depth_scale)[0]
    f_scale = max(float((inside[-1] - inside[0] + 1) * df), (f[-1] - f[0]) / 1e4)
    u = (f - f_ref) / f_scale

    def single():
        p0 = np.array([depth_scale / baseline0, 0.0, 1.0, baseline0])
        res, _ = _fit_dips(u, v, p0)
        return _odmr_fit_from(res, 1, f_ref, f_scale, p_ref)

    if not depth_scale > 0:
        raise DegenerateFitError("spectrum shows no dip", fallback=single())
    mins, _ = find_peaks(depth, prominence=0.02 * depth_scale)
    pairs = []
    if mins.size >= 2:
        k1, k2 = sorted(mins[np.argsort(depth[mins])[::-1][:2]])
        pairs.append((u[k1], u[k2]))
    # symmetric pairs about the depth-weighted centre cover unresolved dips
    weight = np.clip(depth - 0.5 * depth_scale, 0.0, None)
    centre = float(np.sum(weight * u) / np.sum(weight))
    pairs.extend((centre - d / 2, centre + d / 2) for d in np.geomspace(0.1, 2.0, 9))
    try:
        res = _best_double(u, v, pairs)
    except FitFailure as exc:
        raise DegenerateFitError(f"double fit failed: {exc}", fallback=single()) from exc
    fit = _odmr_fit_from(res, 2, f_ref, f_scale, p_ref)
    d1, d2 = fit.dips
    if (min(d1.contrast, d2.contrast) <= 0
            or abs(d2.center - d1.center) < 0.05 * min(d1.width_fwhm, d2.width_fwhm)):
        raise DegenerateFitError("double fit collapsed onto a single dip",
                                 fallback=single())
    return fit
