"""
BOUNDS
======
Quantum-inequality bound on the smeared, normal-ordered E^2 and the
resulting squeezing limits.

    delta_max = -C * integral d^3p mu(p)^2 |chi(p)|^2 * K(p)
    K(p)      = integral_0^inf |FT(sqrt f)(w + p)|^2 dw
    vacuum    = (4pi / (2pi)^3) * integral mu(p)^2 p^3 dp

with C = 2 for the electromagnetic field and 1 for a scalar field, and
|chi(p)|^2 = w_p / (2pi)^2 unless the caller supplies another weight.
"""

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq
from scipy.special import erf, erfc

from config.settings import settings
from errors import (
    DomainError,
    InequalityViolationError,
    QIBoundError,
    QuadratureError,
    UnsupportedOperationError,
    ValidationError,
)
from utils.logger import setup_logging
from utils.workers import ordered_map
from weighting import (
    ProbeFunction,
    ProbeKind,
    SensitivityFunction,
    SensitivityKind,
    sensitivity_eval,
    sqrt_ft_sq,
)

logger = setup_logging(__name__)

SQRT_2PI = np.sqrt(2.0 * np.pi)
VACUUM_PREFACTOR = 4.0 * np.pi / (2.0 * np.pi) ** 3


class FieldKind(str, Enum):
    ELECTROMAGNETIC = "electromagnetic"
    SCALAR = "scalar"


POLARIZATION_FACTOR = {FieldKind.ELECTROMAGNETIC: 2.0, FieldKind.SCALAR: 1.0}


class LimitMode(str, Enum):
    PAPER_ERF = "paper_erf"
    DIRECT_INTEGRAL = "direct_integral"


def default_chi_sq(p):
    """|chi(p)|^2 = w_p / (2pi)^2 for a massless field."""
    return p / (2.0 * np.pi) ** 2


@dataclass(frozen=True, eq=False)
class BoundQuery:
    probe: ProbeFunction
    sensitivity: SensitivityFunction
    field_kind: FieldKind = FieldKind.ELECTROMAGNETIC
    chi_sq: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        object.__setattr__(self, 'field_kind', FieldKind(self.field_kind))

    @property
    def polarization_factor(self) -> float:
        return POLARIZATION_FACTOR[self.field_kind]

    def weight(self, p: float) -> float:
        return (self.chi_sq or default_chi_sq)(p)


@dataclass(frozen=True)
class BoundResult:
    """
    delta_max <= 0 and vacuum_e2 >= 0 share energy-density units, unless
    normalized is set (sharp-line sensitivity), in which case both are in
    units of the vacuum value and vacuum_e2 == 1.
    """
    delta_max: float
    vacuum_e2: float
    r_db: float
    quadrature_error: float
    normalized: bool = False

    def as_dict(self) -> dict:
        return {
            'delta_max': self.delta_max,
            'vacuum_e2': self.vacuum_e2,
            'r_db': self.r_db,
            'quadrature_error': self.quadrature_error,
            'normalized': self.normalized,
        }


# Quadrature -------------------------------------------------------------

def _quad(fn, a: float, b: float, rel_tol: float, limit: int, points=None,
          abs_floor: float = 1e-300) -> Tuple[float, float]:
    """Adaptive quadrature that raises instead of returning a poor estimate."""
    extra = {'points': points} if points else {}
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', IntegrationWarning)
        out = quad(fn, a, b, epsabs=0.0, epsrel=rel_tol, limit=limit, full_output=1, **extra)
    value, error = out[0], out[1]
    if len(out) > 3:
        logger.debug(f"quad on [{a:g}, {b:g}]: {out[3]}")
    if not np.isfinite(value) or error > max(abs_floor, 10.0 * rel_tol * abs(value)):
        raise QuadratureError(
            f"Quadrature on [{a:g}, {b:g}] did not converge: value {value:.6g}, error {error:.2g}",
            partial=value, error=error,
        )
    return value, error


def _tolerances(rel_tol: Optional[float], limit: Optional[int]) -> Tuple[float, int]:
    if rel_tol is None:
        rel_tol = settings.get('quadrature.rel_tol', 1e-8)
    if limit is None:
        limit = settings.get('quadrature.limit', 200)
    return rel_tol, limit


def tail_mass(f: ProbeFunction, p: float, rel_tol: Optional[float] = None,
              limit: Optional[int] = None) -> Tuple[float, float]:
    """
    K(p) = integral over w >= 0 of |FT(sqrt f)(w + p)|^2, with its error estimate.

    Integrated in units of t0 after normalizing by the integrand at w = 0,
    mapped onto [0, 1] by u = exp(-w t0).
    """
    rel_tol, limit = _tolerances(rel_tol, limit)
    scale = sqrt_ft_sq(f, p)
    if scale <= 0:
        return 0.0, 0.0

    def integrand(u):
        if u <= 0.0:
            return 0.0
        return sqrt_ft_sq(f, p - np.log(u) / f.t0) / (scale * u)

    points = None
    if f.kind is ProbeKind.TABULATED:
        import spectral
        edge = spectral.sqrt_probe_transform(f).span
        if p >= edge:
            return 0.0, 0.0
        points = [np.exp(-(edge - p) * f.t0)]

    value, error = _quad(integrand, 0.0, 1.0, rel_tol, limit, points=points)
    factor = scale / f.t0
    return value * factor, error * factor


def tail_mass_closed_form(f: ProbeFunction, p):
    """K(p) for built-in probes: erfc(sqrt2 p t0)/4pi or exp(-2 p t0)/4pi, p >= 0."""
    p = np.asarray(p, dtype=float)
    if f.kind is ProbeKind.GAUSSIAN:
        return erfc(np.sqrt(2.0) * p * f.t0) / (4.0 * np.pi)
    if f.kind is ProbeKind.LORENTZIAN_SQUARED:
        return np.exp(-2.0 * p * f.t0) / (4.0 * np.pi)
    raise UnsupportedOperationError("Closed-form tail mass exists for built-in probes only")


# Bounds -----------------------------------------------------------------

def vacuum_fluctuations(mu: SensitivityFunction, rel_tol: Optional[float] = None,
                        limit: Optional[int] = None) -> float:
    """<E^2> in the vacuum restricted by mu: (4pi/(2pi)^3) integral mu^2 p^3 dp."""
    if mu.kind is SensitivityKind.SHARP_LINE:
        raise UnsupportedOperationError("sharp_line vacuum is only meaningful inside ratios")
    rel_tol, limit = _tolerances(rel_tol, limit)
    lo, hi = mu.support()
    if hi <= lo:
        raise DomainError(f"Sensitivity {mu.label()} vanishes identically; vacuum fluctuations are zero")

    value, _ = _quad(lambda p: sensitivity_eval(mu, p) ** 2 * p ** 3, lo, hi, rel_tol, limit)
    vacuum = VACUUM_PREFACTOR * value
    if vacuum <= 0:
        raise DomainError(f"Sensitivity {mu.label()} gives zero vacuum fluctuations")
    return vacuum


def reduction_db(delta: float, vac: float) -> float:
    """10 log10((delta + vac) / vac); -inf at total suppression."""
    if not vac > 0:
        raise DomainError(f"Vacuum fluctuations must be positive, got {vac}")
    ratio = (delta + vac) / vac
    if ratio < -1e-12:
        raise InequalityViolationError(
            f"delta {delta:.6g} lies below minus the vacuum value {vac:.6g}"
        )
    if ratio <= 0:
        return float('-inf')
    return float(10.0 * np.log10(ratio))


def qi_bound(q: BoundQuery, rel_tol: Optional[float] = None, limit: Optional[int] = None) -> BoundResult:
    """Evaluate delta_max, the vacuum value and the dB reduction for one query."""
    rel_tol, limit = _tolerances(rel_tol, limit)
    C = q.polarization_factor
    mu = q.sensitivity

    if mu.kind is SensitivityKind.SHARP_LINE:
        # d^3p integrals cancel between delta_max and the vacuum value.
        w0 = mu.omega0
        K, K_err = tail_mass(q.probe, w0, rel_tol, limit)
        factor = C * (2.0 * np.pi) ** 3 * q.weight(w0) / w0
        delta = -factor * K
        r_db = reduction_db(delta, 1.0) if q.field_kind is FieldKind.ELECTROMAGNETIC else float('nan')
        return BoundResult(delta, 1.0, r_db, factor * K_err, normalized=True)

    vacuum = vacuum_fluctuations(mu, rel_tol, limit)
    inner_rel = [0.0]

    def integrand(p):
        m = sensitivity_eval(mu, p)
        if m == 0.0:
            return 0.0
        K, K_err = tail_mass(q.probe, p, rel_tol, limit)
        if K > 0:
            inner_rel[0] = max(inner_rel[0], K_err / K)
        return p ** 2 * m ** 2 * q.weight(p) * K

    lo, hi = mu.support()
    outer, outer_err = _quad(integrand, lo, hi, rel_tol, limit)
    prefactor = C * 4.0 * np.pi
    delta = -prefactor * outer
    error = prefactor * (outer_err + inner_rel[0] * abs(outer))

    if q.field_kind is FieldKind.ELECTROMAGNETIC:
        r_db = reduction_db(delta, vacuum)
    else:
        r_db = float('nan')
    logger.debug(f"qi_bound {q.probe.label()} / {mu.label()}: delta {delta:.6e}, vacuum {vacuum:.6e}")
    return BoundResult(delta, vacuum, r_db, error)


def closed_form_delta_max(q: BoundQuery) -> float:
    """
    Single-integral form of delta_max for built-in probes, using the
    analytic tail mass. Reference value for qi_bound.
    """
    if q.sensitivity.kind is SensitivityKind.SHARP_LINE:
        raise UnsupportedOperationError("closed_form_delta_max needs a sampled sensitivity")
    lo, hi = q.sensitivity.support()

    def integrand(p):
        return p ** 2 * sensitivity_eval(q.sensitivity, p) ** 2 * q.weight(p) * tail_mass_closed_form(q.probe, p)

    value, _ = quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
    return -q.polarization_factor * 4.0 * np.pi * value


# Narrow-band squeezing limits -------------------------------------------

def _require_positive_tau(tau: float):
    if not np.isfinite(tau) or tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")


def squeezing_limit_paper(tau: float) -> float:
    """10 log10(erf(2 sqrt2 tau)), the published closed form."""
    _require_positive_tau(tau)
    return float(10.0 * np.log10(erf(2.0 * np.sqrt(2.0) * tau)))


def gaussian_aux_check(p: float, t0: float) -> float:
    """(4 t0 / sqrt(2pi)) * integral_0^inf exp(-2 (p + w)^2 t0^2) dw, in [0, 1]."""
    if not t0 > 0:
        raise DomainError(f"t0 must be positive, got {t0}")
    if p < 0:
        raise DomainError(f"p must be nonnegative, got {p}")
    a = p * t0
    value, _ = quad(lambda s: np.exp(-2.0 * (s + a) ** 2), 0.0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    return float(4.0 / SQRT_2PI * value)


def squeezing_limit_integral(tau: float) -> float:
    """
    Narrow-band reduction implied by the gaussian probe:
    10 log10(1 - (4/sqrt(2pi)) integral_0^inf exp(-2 (s + tau)^2) ds).
    Equal to 10 log10(erf(sqrt2 tau)).
    """
    _require_positive_tau(tau)
    remainder = 1.0 - gaussian_aux_check(tau, 1.0)
    if remainder <= 0:
        return float('-inf')
    return float(10.0 * np.log10(remainder))


LIMIT_FUNCTIONS = {
    LimitMode.PAPER_ERF: squeezing_limit_paper,
    LimitMode.DIRECT_INTEGRAL: squeezing_limit_integral,
}


def squeezing_limit(tau: float, mode: LimitMode) -> float:
    return LIMIT_FUNCTIONS[LimitMode(mode)](tau)


def tau_from_period_fraction(fraction: float, convention: str = "direct") -> float:
    """
    tau for a probe lasting `fraction` of one optical period.

    convention "direct" takes tau = fraction; "angular" takes t0 = fraction * 2pi / w0,
    so tau = 2pi * fraction.
    """
    if not fraction > 0:
        raise DomainError(f"Period fraction must be positive, got {fraction}")
    if convention == "direct":
        return float(fraction)
    if convention == "angular":
        return float(2.0 * np.pi * fraction)
    raise ValidationError(f"Unknown period convention {convention!r}")


def max_tau_for_reduction(r_db: float, mode: LimitMode = LimitMode.DIRECT_INTEGRAL) -> float:
    """Largest tau whose squeezing limit still allows a reduction of r_db."""
    if not r_db < 0:
        raise DomainError(f"Reduction must be negative dB, got {r_db}")
    limit_fn = LIMIT_FUNCTIONS[LimitMode(mode)]

    lo, hi = 1e-3, 1.0
    for _ in range(60):
        if limit_fn(lo) < r_db:
            break
        lo *= 1e-2
    else:
        raise DomainError(f"No tau reaches {r_db} dB")
    for _ in range(60):
        if limit_fn(hi) > r_db:
            break
        hi *= 2.0
    else:
        raise DomainError(f"{r_db} dB is indistinguishable from no reduction")

    return float(brentq(lambda t: limit_fn(t) - r_db, lo, hi, xtol=1e-15, rtol=1e-13))


# Sweeps -----------------------------------------------------------------

def _guarded(fn, *args):
    try:
        return fn(*args), None
    except QIBoundError as e:
        return float('nan'), f"{type(e).__name__}: {e}"


def sweep_limits(tau_grid: Iterable[float], mode: LimitMode = LimitMode.DIRECT_INTEGRAL,
                 progress: bool = False) -> pd.DataFrame:
    """One row (tau, r_db, error) per input tau, in input order; failures marked, not dropped."""
    taus = [float(t) for t in tau_grid]
    if not taus:
        raise ValidationError("tau grid is empty")
    limit_fn = LIMIT_FUNCTIONS[LimitMode(mode)]

    rows = ordered_map(lambda t: _guarded(limit_fn, t), taus, progress, desc=f"limit {LimitMode(mode).value}")
    return pd.DataFrame({
        'tau': taus,
        'r_db': [r for r, _ in rows],
        'error': [e for _, e in rows],
    })


def compare_limits(tau_grid: Iterable[float], progress: bool = False) -> pd.DataFrame:
    """Both narrow-band limits side by side, with their gap."""
    paper = sweep_limits(tau_grid, LimitMode.PAPER_ERF, progress)
    direct = sweep_limits(tau_grid, LimitMode.DIRECT_INTEGRAL, progress)
    table = pd.DataFrame({
        'tau': paper['tau'],
        'paper_erf_db': paper['r_db'],
        'direct_integral_db': direct['r_db'],
    })
    table['gap_db'] = table['paper_erf_db'] - table['direct_integral_db']
    table['error'] = [p or d for p, d in zip(paper['error'], direct['error'])]
    return table


def inverse_limits(reductions: Iterable[float]) -> pd.DataFrame:
    rows = []
    for r_db in reductions:
        rows.append({
            'r_db': float(r_db),
            'tau_paper_erf': max_tau_for_reduction(r_db, LimitMode.PAPER_ERF),
            'tau_direct_integral': max_tau_for_reduction(r_db, LimitMode.DIRECT_INTEGRAL),
        })
    return pd.DataFrame(rows, columns=['r_db', 'tau_paper_erf', 'tau_direct_integral'])


def sweep_bounds(tau_grid: Iterable[float], sensitivity: SensitivityFunction,
                 probe_kinds: Sequence[ProbeKind] = (ProbeKind.LORENTZIAN_SQUARED, ProbeKind.GAUSSIAN),
                 field_kind: FieldKind = FieldKind.ELECTROMAGNETIC,
                 progress: bool = False) -> pd.DataFrame:
    """
    qi_bound for each built-in probe with t0 = tau / omega0, next to the
    two narrow-band limits at the same tau.
    """
    taus = [float(t) for t in tau_grid]
    if not taus:
        raise ValidationError("tau grid is empty")
    if sensitivity.kind is not SensitivityKind.SHARP_LINE:
        sensitivity.require_narrow()
    builders = {
        ProbeKind.LORENTZIAN_SQUARED: ProbeFunction.lorentzian_squared,
        ProbeKind.GAUSSIAN: ProbeFunction.gaussian,
    }
    items = [(ProbeKind(kind), tau) for kind in probe_kinds for tau in taus]
    for kind, tau in items:
        _require_positive_tau(tau)

    def evaluate(item):
        kind, tau = item
        t0 = tau / sensitivity.omega0
        row = {'probe': kind.value, 'tau': tau, 't0': t0}
        try:
            result = qi_bound(BoundQuery(builders[kind](t0), sensitivity, field_kind))
            row.update(delta_max=result.delta_max, vacuum_e2=result.vacuum_e2, r_db=result.r_db, error=None)
        except QIBoundError as e:
            row.update(delta_max=np.nan, vacuum_e2=np.nan, r_db=np.nan, error=f"{type(e).__name__}: {e}")
        row['paper_erf_db'] = squeezing_limit_paper(tau)
        row['direct_integral_db'] = squeezing_limit_integral(tau)
        return row

    rows = ordered_map(evaluate, items, progress, desc="bounds")
    columns = ['probe', 'tau', 't0', 'delta_max', 'vacuum_e2', 'r_db', 'paper_erf_db', 'direct_integral_db', 'error']
    return pd.DataFrame(rows, columns=columns)


if __name__ == "__main__":
    print("=" * 60)
    print("SQUEEZING LIMITS")
    print("=" * 60)
    print(compare_limits([0.001, 0.01, 0.1, 1.0]).to_string(index=False))

    print("\n" + "=" * 60)
    print("BOUND, GAUSSIAN PROBE, NARROW RECT BAND")
    print("=" * 60)
    query = BoundQuery(ProbeFunction.gaussian(0.01), SensitivityFunction.rect_band(1.0, 0.001))
    result = qi_bound(query)
    print(f"delta_max  = {result.delta_max:.6e}")
    print(f"vacuum_e2  = {result.vacuum_e2:.6e}")
    print(f"reduction  = {result.r_db:.2f} dB")
