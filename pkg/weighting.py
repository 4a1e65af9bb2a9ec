"""
WEIGHTING
=========
Time-probe functions f(t) and detector sensitivity functions mu(omega).

Natural units (hbar = c = 1): frequencies and inverse times share one unit.
Fourier convention: f_hat(w) = (1/2pi) * integral of exp(-i w t) f(t) dt.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np
from scipy.integrate import quad, trapezoid
from scipy.optimize import brentq

from errors import (
    DomainError,
    IntegrationError,
    ProbeDomainError,
    UnsupportedOperationError,
    ValidationError,
)
from utils.logger import setup_logging

logger = setup_logging(__name__)

ArrayLike = Union[float, np.ndarray]

SQRT_2PI = np.sqrt(2.0 * np.pi)


class ProbeKind(str, Enum):
    LORENTZIAN_SQUARED = "lorentzian_squared"
    GAUSSIAN = "gaussian"
    TABULATED = "tabulated"


class SensitivityKind(str, Enum):
    RECT_BAND = "rect_band"
    GAUSSIAN_BAND = "gaussian_band"
    SHARP_LINE = "sharp_line"


@dataclass(frozen=True, eq=False)
class ProbeFunction:
    """
    Normalized, nonnegative time weighting.

    Tabulated probes are renormalized on construction (divided by the
    trapezoid integral of the table).
    """
    kind: ProbeKind
    t0: float
    times: Optional[np.ndarray] = field(default=None, repr=False)
    values: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'kind', ProbeKind(self.kind))
        if not np.isfinite(self.t0) or self.t0 <= 0:
            raise ValidationError(f"Probe scale t0 must be positive, got {self.t0}")
        if self.kind is ProbeKind.TABULATED and (self.times is None or self.values is None):
            raise ValidationError("Tabulated probe needs times and values")

    @classmethod
    def lorentzian_squared(cls, t0: float) -> 'ProbeFunction':
        return cls(ProbeKind.LORENTZIAN_SQUARED, float(t0))

    @classmethod
    def gaussian(cls, t0: float) -> 'ProbeFunction':
        return cls(ProbeKind.GAUSSIAN, float(t0))

    @classmethod
    def tabulated(cls, times, values, t0: Optional[float] = None) -> 'ProbeFunction':
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValidationError("Probe table needs two equal-length columns")
        if len(times) < 3:
            raise ValidationError("Probe table needs at least 3 rows")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("Probe table times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise IntegrationError("Probe table contains non-finite values")
        if np.any(values < 0):
            raise ValidationError("Probe values must be nonnegative")

        area = trapezoid(values, times)
        if not np.isfinite(area) or area <= 0:
            raise IntegrationError(f"Probe table integral is not a positive finite number ({area})")
        values = values / area
        logger.debug(f"Renormalized probe table by 1/{area:.6g}")

        if t0 is None:
            mean = trapezoid(times * values, times)
            variance = trapezoid((times - mean) ** 2 * values, times)
            t0 = float(np.sqrt(variance))
        times.setflags(write=False)
        values.setflags(write=False)
        return cls(ProbeKind.TABULATED, float(t0), times, values)

    @property
    def is_builtin(self) -> bool:
        return self.kind is not ProbeKind.TABULATED

    def label(self) -> str:
        return f"{self.kind.value}(t0={self.t0:g})"


@dataclass(frozen=True)
class SensitivityFunction:
    """
    Detector frequency weighting.

    bandwidth is the full width for rect_band and the standard deviation
    for gaussian_band; sharp_line is the narrow-band limit and is never sampled.
    """
    kind: SensitivityKind
    omega0: float
    bandwidth: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'kind', SensitivityKind(self.kind))
        if not np.isfinite(self.omega0) or self.omega0 <= 0:
            raise ValidationError(f"Sensitivity center omega0 must be positive, got {self.omega0}")
        if not np.isfinite(self.bandwidth) or self.bandwidth < 0:
            raise ValidationError(f"Sensitivity bandwidth must be nonnegative, got {self.bandwidth}")
        if self.kind is SensitivityKind.SHARP_LINE:
            object.__setattr__(self, 'bandwidth', 0.0)

    @classmethod
    def rect_band(cls, omega0: float, bandwidth: float) -> 'SensitivityFunction':
        return cls(SensitivityKind.RECT_BAND, float(omega0), float(bandwidth))

    @classmethod
    def gaussian_band(cls, omega0: float, bandwidth: float) -> 'SensitivityFunction':
        return cls(SensitivityKind.GAUSSIAN_BAND, float(omega0), float(bandwidth))

    @classmethod
    def sharp_line(cls, omega0: float) -> 'SensitivityFunction':
        return cls(SensitivityKind.SHARP_LINE, float(omega0))

    @property
    def relative_width(self) -> float:
        return self.bandwidth / self.omega0

    def require_narrow(self, max_ratio: float = 0.1):
        if self.relative_width > max_ratio:
            raise DomainError(
                f"Narrow-band reduction needs bandwidth/omega0 <= {max_ratio}, got {self.relative_width:.3g}"
            )

    def support(self) -> Tuple[float, float]:
        """Frequency window outside which mu vanishes (or is below 1e-40)."""
        if self.kind is SensitivityKind.RECT_BAND:
            half = 0.5 * self.bandwidth
            return max(0.0, self.omega0 - half), self.omega0 + half
        if self.kind is SensitivityKind.GAUSSIAN_BAND:
            reach = 12.0 * self.bandwidth
            return max(0.0, self.omega0 - reach), self.omega0 + reach
        raise UnsupportedOperationError("sharp_line sensitivity has no sampled support")

    def label(self) -> str:
        return f"{self.kind.value}(omega0={self.omega0:g}, bw={self.bandwidth:g})"


# Probe operations -------------------------------------------------------

def probe_eval(f: ProbeFunction, t: ArrayLike) -> ArrayLike:
    """Evaluate f(t); vectorized over t."""
    t_arr = np.asarray(t, dtype=float)
    if f.kind is ProbeKind.LORENTZIAN_SQUARED:
        result = (2.0 / np.pi) * f.t0 ** 3 / (t_arr ** 2 + f.t0 ** 2) ** 2
    elif f.kind is ProbeKind.GAUSSIAN:
        result = np.exp(-t_arr ** 2 / (2.0 * f.t0 ** 2)) / (f.t0 * SQRT_2PI)
    else:
        lo, hi = f.times[0], f.times[-1]
        if np.any(t_arr < lo) or np.any(t_arr > hi):
            raise ProbeDomainError(f"t outside the probe table [{lo:g}, {hi:g}]")
        result = np.interp(t_arr, f.times, f.values)
    return float(result) if np.ndim(result) == 0 else result


def probe_norm(f: ProbeFunction) -> float:
    """Integral of f over the real line."""
    if f.kind is ProbeKind.TABULATED:
        area = trapezoid(f.values, f.times)
        if not np.isfinite(area):
            raise IntegrationError("Probe table integral diverges")
        return float(area)

    # Integrate in units of t0 so the integrand shape is scale free.
    half, _ = quad(lambda s: f.t0 * probe_eval(f, f.t0 * s), 0.0, np.inf,
                   epsabs=1e-15, epsrel=1e-13, limit=200)
    return 2.0 * half


def probe_transform(f: ProbeFunction, w: ArrayLike) -> ArrayLike:
    """f_hat(w), the transform of f itself."""
    w_arr = np.asarray(w, dtype=float)
    if f.kind is ProbeKind.LORENTZIAN_SQUARED:
        x = np.abs(w_arr) * f.t0
        result = (1.0 + x) * np.exp(-x) / (2.0 * np.pi)
    elif f.kind is ProbeKind.GAUSSIAN:
        result = np.exp(-0.5 * (w_arr * f.t0) ** 2) / (2.0 * np.pi)
    else:
        import spectral
        return spectral.probe_transform_at(f, w)
    return float(result) if np.ndim(result) == 0 else result


def sqrt_probe_amplitude(f: ProbeFunction, w: ArrayLike) -> ArrayLike:
    """g(w), the transform of sqrt(f); real and even for built-in kinds."""
    w_arr = np.asarray(w, dtype=float)
    if f.kind is ProbeKind.LORENTZIAN_SQUARED:
        result = np.sqrt(f.t0 / (2.0 * np.pi)) * np.exp(-np.abs(w_arr) * f.t0)
    elif f.kind is ProbeKind.GAUSSIAN:
        result = np.sqrt(f.t0 / (np.pi * SQRT_2PI)) * np.exp(-(w_arr * f.t0) ** 2)
    else:
        import spectral
        return spectral.sqrt_transform_at(f, w)
    return float(result) if np.ndim(result) == 0 else result


def sqrt_ft_sq(f: ProbeFunction, w: ArrayLike) -> ArrayLike:
    """|FT(sqrt f)(w)|^2."""
    w_arr = np.asarray(w, dtype=float)
    if f.kind is ProbeKind.LORENTZIAN_SQUARED:
        result = f.t0 / (2.0 * np.pi) * np.exp(-2.0 * np.abs(w_arr) * f.t0)
    elif f.kind is ProbeKind.GAUSSIAN:
        result = f.t0 / (np.pi * SQRT_2PI) * np.exp(-2.0 * (w_arr * f.t0) ** 2)
    else:
        result = np.abs(sqrt_probe_amplitude(f, w_arr)) ** 2
    return float(result) if np.ndim(result) == 0 else result


def half_width(f: ProbeFunction) -> float:
    """Half width at half maximum: positive root of f(t) = f(0)/2."""
    if not f.is_builtin:
        raise UnsupportedOperationError("half_width is defined for built-in probes only")
    target = 0.5 * probe_eval(f, 0.0)
    return brentq(lambda t: probe_eval(f, t) - target, 0.0, 10.0 * f.t0, xtol=1e-14, rtol=1e-14)


def load_probe_table(path: str, t0: Optional[float] = None) -> ProbeFunction:
    """Two whitespace-separated columns (time, value); '#' starts a comment."""
    try:
        data = np.loadtxt(path, comments='#', ndmin=2)
    except (OSError, ValueError) as e:
        raise ValidationError(f"Cannot read probe table {path}: {e}") from e
    if data.shape[1] != 2:
        raise ValidationError(f"Probe table {path} must have exactly two columns")
    logger.info(f"Loaded probe table {path} with {len(data)} rows")
    return ProbeFunction.tabulated(data[:, 0], data[:, 1], t0=t0)


# Sensitivity operations -------------------------------------------------

def sensitivity_eval(mu: SensitivityFunction, w: ArrayLike) -> ArrayLike:
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr < 0):
        raise DomainError("Sensitivity is defined for w >= 0")
    if mu.kind is SensitivityKind.SHARP_LINE:
        raise UnsupportedOperationError("sharp_line sensitivity is resolved analytically, never sampled")
    if mu.kind is SensitivityKind.RECT_BAND:
        half = 0.5 * mu.bandwidth
        result = ((w_arr >= mu.omega0 - half) & (w_arr <= mu.omega0 + half)).astype(float)
    else:
        if mu.bandwidth == 0:
            result = (w_arr == mu.omega0).astype(float)
        else:
            result = np.exp(-(w_arr - mu.omega0) ** 2 / (2.0 * mu.bandwidth ** 2))
    return float(result) if np.ndim(result) == 0 else result


if __name__ == "__main__":
    print("=" * 60)
    print("PROBE FUNCTIONS")
    print("=" * 60)
    for probe in (ProbeFunction.lorentzian_squared(1.0), ProbeFunction.gaussian(1.0)):
        print(f"\n{probe.label()}:")
        print(f"  f(0)        = {probe_eval(probe, 0.0):.6f}")
        print(f"  norm        = {probe_norm(probe):.12f}")
        print(f"  half width  = {half_width(probe):.6f}")
        print(f"  |g(1)|^2    = {sqrt_ft_sq(probe, 1.0):.6e}")
