"""
SPECTRAL ENGINE
===============
Quadrature Fourier transforms, f_hat(w) = (1/2pi) * integral exp(-i w t) f(t) dt.

Sampled functions are integrated by the trapezoid rule on their uniform grid,
with an inverse-square tail model added past each end that has not decayed
to roundoff. Frequency profiles carry a cubic interpolant for downstream
integrands.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.special import sici

from config.settings import settings
from errors import AliasingError, TruncationError, ValidationError
from utils.logger import setup_logging
from weighting import ProbeFunction, ProbeKind, probe_eval

logger = setup_logging(__name__)

CONVENTION = "one-over-two-pi-forward"

# Ends below this fraction of the peak need no tail model.
ROUNDOFF_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """A function tabulated on a uniform time grid."""
    times: np.ndarray
    values: np.ndarray
    label: str = "sampled"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values)
        if times.ndim != 1 or times.shape != values.shape or len(times) < 3:
            raise ValidationError("Sampled function needs matching 1-D times/values with at least 3 points")
        steps = np.diff(times)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValidationError("Sampled function needs a uniform, increasing time grid")
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'values', values)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def scaled(self, factor: complex) -> 'SampledFunction':
        return SampledFunction(self.times, factor * self.values, self.label)

    def __add__(self, other: 'SampledFunction') -> 'SampledFunction':
        if not np.array_equal(self.times, other.times):
            raise ValidationError("Sampled functions must share one grid to be added")
        return SampledFunction(self.times, self.values + other.values, f"{self.label}+{other.label}")


@dataclass(frozen=True, eq=False)
class FrequencyProfile:
    """Complex transform values on a uniform, increasing frequency grid."""
    grid: np.ndarray
    values: np.ndarray
    convention: str = CONVENTION
    _real: CubicSpline = field(init=False, repr=False)
    _imag: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        steps = np.diff(grid)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValidationError("Frequency grid must be uniform and strictly increasing")
        if self.convention != CONVENTION:
            raise ValidationError(f"Unsupported transform convention {self.convention!r}")
        object.__setattr__(self, 'grid', grid)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, '_real', CubicSpline(grid, values.real))
        object.__setattr__(self, '_imag', CubicSpline(grid, values.imag))

    @property
    def span(self) -> float:
        return float(self.grid[-1])

    def evaluate(self, w):
        """Cubic interpolation; zero outside the grid."""
        w_arr = np.asarray(w, dtype=float)
        inside = (w_arr >= self.grid[0]) & (w_arr <= self.grid[-1])
        result = np.where(inside, self._real(w_arr) + 1j * self._imag(w_arr), 0.0)
        return complex(result) if np.ndim(result) == 0 else result

    def power(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def conjugate_symmetry_error(self) -> float:
        """max |g(p) - conj(g(-p))| on a grid symmetric about zero."""
        return float(np.max(np.abs(self.values - np.conj(self.values[::-1]))))

    def to_text(self, path: str):
        table = np.column_stack([self.grid, self.values.real, self.values.imag])
        np.savetxt(path, table, header=f"omega re im  ({self.convention})")
        logger.info(f"Wrote frequency profile with {len(self.grid)} points to {path}")


# Transform --------------------------------------------------------------

def _inverse_square_tail(w: np.ndarray, T: float) -> np.ndarray:
    """Integral over [T, inf) of exp(-i w t) / t^2 for T > 0."""
    aw = np.abs(w)
    x = aw * T
    with np.errstate(divide='ignore', invalid='ignore'):
        si, ci = sici(x)
        c2 = np.cos(x) / T - aw * (0.5 * np.pi - si)
        s2 = np.sign(w) * (np.sin(x) / T - aw * ci)
    c2 = np.where(aw == 0, 1.0 / T, c2)
    s2 = np.where(aw == 0, 0.0, s2)
    return c2 - 1j * s2


def _tail_corrections(fn: SampledFunction, w: np.ndarray, decay_tolerance: float) -> np.ndarray:
    magnitude = np.abs(fn.values)
    peak = magnitude.max()
    correction = np.zeros(w.shape, dtype=complex)
    if peak == 0:
        return correction

    n = len(fn.times)
    for end, inner, sign in ((n - 1, (3 * n) // 4, 1.0), (0, n // 4, -1.0)):
        level = magnitude[end]
        if level <= ROUNDOFF_FLOOR * peak:
            continue
        if level > decay_tolerance * peak:
            raise TruncationError(
                f"{fn.label}: end value is {level / peak:.2e} of the peak (tolerance {decay_tolerance:.0e})"
            )
        T_end, T_in = fn.times[end], fn.times[inner]
        if sign * T_end <= 0 or sign * T_in <= 0 or magnitude[inner] == 0:
            continue

        exponent = np.log(magnitude[inner] / level) / np.log(T_end / T_in)
        if exponent < 1.5:
            raise TruncationError(f"{fn.label}: tail decays like t^-{exponent:.2f}, too slow to integrate")
        if exponent >= 3.0:
            continue

        amplitude = fn.values[end] * T_end ** 2
        correction += amplitude * _inverse_square_tail(sign * w, abs(T_end))
    return correction


def fourier_forward(fn: SampledFunction, w, nyquist_margin: Optional[float] = None,
                    decay_tolerance: Optional[float] = None, chunk: Optional[int] = None):
    """
    (1/2pi) * integral exp(-i w t) fn(t) dt for scalar or array w.

    Raises AliasingError when |w| * dt exceeds pi / nyquist_margin and
    TruncationError when fn has not decayed at the ends of its span.
    """
    if nyquist_margin is None:
        nyquist_margin = settings.get('spectral.nyquist_margin', 4.0)
    if decay_tolerance is None:
        decay_tolerance = settings.get('spectral.decay_tolerance', 1e-3)
    if chunk is None:
        chunk = settings.get('spectral.chunk', 256)

    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    dt = fn.dt
    w_peak = np.max(np.abs(w_arr))
    if w_peak * dt > np.pi / nyquist_margin:
        raise AliasingError(
            f"{fn.label}: frequency {w_peak:g} needs dt <= {np.pi / (nyquist_margin * w_peak):.3g}, have {dt:.3g}"
        )

    weights = np.full(len(fn.times), dt)
    weights[0] = weights[-1] = 0.5 * dt
    weighted = weights * fn.values

    result = np.empty(w_arr.shape, dtype=complex)
    for start in range(0, len(w_arr), chunk):
        block = w_arr[start:start + chunk]
        result[start:start + chunk] = np.exp(-1j * np.outer(block, fn.times)) @ weighted
    result += _tail_corrections(fn, w_arr, decay_tolerance)
    result /= 2.0 * np.pi

    return complex(result[0]) if np.ndim(w) == 0 else result


# Probe sampling ---------------------------------------------------------

def _probe_time_grid(f: ProbeFunction, samples_per_t0: Optional[float] = None) -> np.ndarray:
    samples_per_t0 = samples_per_t0 or settings.get('spectral.samples_per_t0', 16)
    dt = f.t0 / samples_per_t0
    if f.kind is ProbeKind.TABULATED:
        count = int(np.floor((f.times[-1] - f.times[0]) / dt)) + 1
        return f.times[0] + dt * np.arange(count)

    if f.kind is ProbeKind.GAUSSIAN:
        span = settings.get('spectral.gaussian_span', 12.0)
    else:
        span = settings.get('spectral.power_law_span', 200.0)
    half = int(round(span * samples_per_t0))
    steps = np.arange(-half, half + 1)
    return dt * steps


def sample_probe(f: ProbeFunction, samples_per_t0: Optional[float] = None) -> SampledFunction:
    times = _probe_time_grid(f, samples_per_t0)
    return SampledFunction(times, probe_eval(f, times), label=f.label())


def sample_sqrt_probe(f: ProbeFunction, samples_per_t0: Optional[float] = None) -> SampledFunction:
    times = _probe_time_grid(f, samples_per_t0)
    return SampledFunction(times, np.sqrt(probe_eval(f, times)), label=f"sqrt {f.label()}")


def frequency_grid(t0: float, span: Optional[float] = None, points: Optional[int] = None) -> np.ndarray:
    """Odd-sized grid on [-span/t0, span/t0], exactly symmetric, containing 0."""
    span = span or settings.get('spectral.span', 8.0)
    points = points or settings.get('spectral.points', 4097)
    if points % 2 == 0:
        points += 1
    grid = np.linspace(-span / t0, span / t0, points)
    return 0.5 * (grid - grid[::-1])


@lru_cache(maxsize=32)
def _sqrt_profile(f: ProbeFunction, span: float, points: int, samples_per_t0: float) -> FrequencyProfile:
    grid = frequency_grid(f.t0, span, points)
    values = fourier_forward(sample_sqrt_probe(f, samples_per_t0), grid)
    logger.debug(f"Transformed sqrt of {f.label()} on {len(grid)} frequencies")
    return FrequencyProfile(grid, values)


def sqrt_probe_transform(f: ProbeFunction, span: Optional[float] = None, points: Optional[int] = None,
                         samples_per_t0: Optional[float] = None) -> FrequencyProfile:
    """g = FT(sqrt f) on the default symmetric frequency grid."""
    return _sqrt_profile(
        f,
        float(span or settings.get('spectral.span', 8.0)),
        int(points or settings.get('spectral.points', 4097)),
        float(samples_per_t0 or settings.get('spectral.samples_per_t0', 16)),
    )


def sqrt_transform_at(f: ProbeFunction, w):
    """g(w) for tabulated probes, read from the cached profile."""
    return sqrt_probe_transform(f).evaluate(w)


@lru_cache(maxsize=32)
def _probe_profile(f: ProbeFunction) -> FrequencyProfile:
    grid = frequency_grid(f.t0)
    return FrequencyProfile(grid, fourier_forward(sample_probe(f), grid))


def probe_transform_at(f: ProbeFunction, w):
    """f_hat(w) for tabulated probes, read from the cached profile."""
    return _probe_profile(f).evaluate(w)


# Identities -------------------------------------------------------------

def parseval_gap(fn: SampledFunction, profile: FrequencyProfile) -> float:
    """|integral |fn|^2 dt - 2pi integral |FT fn|^2 dw|."""
    time_side = simpson(np.abs(fn.values) ** 2, x=fn.times)
    frequency_side = 2.0 * np.pi * simpson(profile.power(), x=profile.grid)
    return float(abs(time_side - frequency_side))


def _segment_nodes(lo: float, hi: float, step: float) -> np.ndarray:
    count = max(65, int(np.ceil((hi - lo) / step)) + 1)
    if count % 2 == 0:
        count += 1
    return np.linspace(lo, hi, count)


def convolution_identity_check(f: ProbeFunction, p: float, span: Optional[float] = None,
                               points: Optional[int] = None) -> float:
    """
    |integral g(p - w) g(w) dw - f_hat(p)|.

    Both transforms are evaluated directly from samples. The left side is
    integrated by Simpson's rule on segments split where the integrand may
    kink (w = 0 and w = p), over the window |w - p/2| <= span/t0.
    """
    span = span or settings.get('spectral.span', 8.0)
    points = points or settings.get('spectral.points', 4097)
    radius = span / f.t0
    step = 2.0 * radius / (points - 1)

    # Sample finely enough that the largest argument |p|/2 + radius stays resolved.
    reach = (abs(p) / 2.0 + radius) * f.t0
    nyquist_margin = settings.get('spectral.nyquist_margin', 4.0)
    samples_per_t0 = max(settings.get('spectral.samples_per_t0', 16), np.ceil(reach * nyquist_margin / np.pi) + 1)
    root = sample_sqrt_probe(f, samples_per_t0)

    lo, hi = p / 2.0 - radius, p / 2.0 + radius
    cuts = sorted({lo, hi, *[c for c in (0.0, float(p)) if lo < c < hi]})
    lhs = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        nodes = _segment_nodes(a, b, step)
        integrand = fourier_forward(root, p - nodes) * fourier_forward(root, nodes)
        lhs += simpson(integrand, x=nodes)

    rhs = fourier_forward(sample_probe(f, samples_per_t0), p)
    return float(abs(lhs - rhs))


if __name__ == "__main__":
    print("=" * 60)
    print("SPECTRAL CHECKS")
    print("=" * 60)
    for probe in (ProbeFunction.gaussian(1.0), ProbeFunction.lorentzian_squared(1.0)):
        profile = sqrt_probe_transform(probe)
        print(f"\n{probe.label()}:")
        print(f"  |g(0)|^2              = {abs(profile.evaluate(0.0)) ** 2:.10f}")
        print(f"  conjugate symmetry    = {profile.conjugate_symmetry_error():.2e}")
        print(f"  parseval gap          = {parseval_gap(sample_sqrt_probe(probe), profile):.2e}")
        print(f"  convolution (p=1.3)   = {convolution_identity_check(probe, 1.3):.2e}")
