"""
VERIFICATION SUITE
==================
First-principles checks of the fluctuation inequality on the discrete
Fock model:

- the operator identity  sum_w w_w B(w)^dagger B(w) = Delta + sum_m c_m [a_m, a_m^dagger]
- the discrete bound  <Delta> >= -c  over families of states
- negative energy density of vacuum-plus-pair states
- the paraxial agreement of smeared E^2 and B^2
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.optimize import minimize_scalar

from bounds import FieldKind, tail_mass
from config.settings import settings
from errors import (
    AccuracyError,
    DomainError,
    GridCoverageError,
    IdentityViolationError,
    InequalityViolationError,
    UnsupportedOperationError,
    ValidationError,
)
from fock import (
    Component,
    FieldState,
    FockSpace,
    ModeLayout,
    ModeSet,
    StateKind,
    StateSpec,
    Variant,
    b_coefficients,
    build_modes,
    default_chi,
    delta_coefficients,
    expectation,
    make_state,
    normal_ordered_square,
    pair_vector,
    polarization_pair,
    second_moments,
    smeared_delta_operator,
    total_energy,
)
from utils.logger import setup_logging
from utils.workers import ordered_map
from weighting import ProbeFunction, SensitivityFunction, sqrt_ft_sq

logger = setup_logging(__name__)

# Minimum reach of the frequency grid past the highest mode, in units of 1/t0.
MIN_COVERAGE = 8.0


class DecompositionKind(str, Enum):
    SCALAR_A = "scalar_A"
    SCALAR_A_TILDE = "scalar_A_tilde"
    ELECTROMAGNETIC = "electromagnetic"


DECOMPOSITION_SETUP = {
    DecompositionKind.SCALAR_A: (FieldKind.SCALAR, Variant.PLUS),
    DecompositionKind.SCALAR_A_TILDE: (FieldKind.SCALAR, Variant.TILDE),
    DecompositionKind.ELECTROMAGNETIC: (FieldKind.ELECTROMAGNETIC, Variant.PLUS),
}


def default_kind(modes: ModeSet) -> DecompositionKind:
    """The unprimed decomposition matching the mode set's field."""
    if modes.field_kind is FieldKind.SCALAR:
        return DecompositionKind.SCALAR_A
    return DecompositionKind.ELECTROMAGNETIC


@dataclass
class DecompositionReport:
    """
    operator_residual: max |sum w B^dagger B - Delta - sum_m c_m [a_m, a_m^dagger]| on the whole space.
    interior_residual: max |sum w B^dagger B - Delta - c| on states with every occupation below nmax.
    """
    kind: DecompositionKind
    operator_residual: float
    interior_residual: float
    residue_constant: float
    residue_direct: float
    residue_relative_gap: float
    residue_reference: float
    vacuum_residue: float
    mode_residues: np.ndarray = field(repr=False)
    frequency_nodes: np.ndarray = field(repr=False)
    frequency_weights: np.ndarray = field(repr=False)

    def passed(self, tolerance: float) -> bool:
        return (self.operator_residual <= tolerance and self.interior_residual <= tolerance
                and self.residue_relative_gap <= tolerance)

    def summary(self) -> dict:
        return {
            'kind': self.kind.value,
            'operator_residual': self.operator_residual,
            'interior_residual': self.interior_residual,
            'residue_constant': self.residue_constant,
            'vacuum_residue': self.vacuum_residue,
            'residue_relative_gap': self.residue_relative_gap,
            'frequency_nodes': len(self.frequency_nodes),
        }


@dataclass
class InequalityScanReport:
    """Rows (state, kind, delta, bound, margin) sorted by margin."""
    rows: pd.DataFrame
    bound: float
    min_margin: float
    seed: Optional[int] = None


class EpsilonOptimum(NamedTuple):
    eps_star: float
    delta_min: float
    degenerate: bool
    linear: float
    quadratic: float
    pair_norm: float


@dataclass
class EnergyScan:
    table: pd.DataFrame
    total_energy: float

    @property
    def min_rho(self) -> float:
        return float(self.table['rho'].min())


# Frequency quadrature ---------------------------------------------------

def frequency_quadrature(space: FockSpace, f: ProbeFunction, omega_max: Optional[float] = None,
                         panel_width: Optional[float] = None, order: Optional[int] = None,
                         density: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Legendre nodes and weights on [0, omega_max], with panel breaks at
    zero and at every mode frequency.
    """
    panel_width = (panel_width or settings.get('verify.panel_width', 0.5)) / (f.t0 * density)
    order = order or settings.get('verify.panel_order', 24)
    top_mode = float(space.modes.frequencies.max())
    needed = top_mode + MIN_COVERAGE / f.t0
    if omega_max is None:
        tail = settings.get(f'verify.tail_span.{f.kind.value}', 40.0)
        omega_max = top_mode + tail / f.t0
    elif omega_max < needed:
        raise GridCoverageError(
            f"Frequency grid ends at {omega_max:g}; it must reach {needed:g}",
            missing_band=(float(omega_max), float(needed)),
        )

    breaks = np.unique(np.concatenate([[0.0, omega_max], space.modes.frequencies]))
    breaks = breaks[breaks <= omega_max]
    base_nodes, base_weights = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        panels = max(1, int(np.ceil((hi - lo) / panel_width)))
        edges = np.linspace(lo, hi, panels + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            nodes.append(a + half * (base_nodes + 1.0))
            weights.append(half * base_weights)
    return np.concatenate(nodes), np.concatenate(weights)


def residue_constants(space: FockSpace, f: ProbeFunction, chi: np.ndarray,
                      nodes: np.ndarray, weights: np.ndarray,
                      component: Component = Component.ELECTRIC) -> np.ndarray:
    """c_m = w_m |chi_m|^2 |v_m|^2 sum_j w_j |g(w_j + omega_m)|^2, from the direct double sum."""
    modes = space.modes
    chi = modes.expand(chi)
    omega = modes.flat_frequencies
    vectors = modes.field_vectors(component)
    spectrum = sqrt_ft_sq(f, nodes[:, None] + omega[None, :])
    return modes.flat_weights * np.abs(chi) ** 2 * np.sum(vectors ** 2, axis=1) * (weights @ spectrum)


# Decomposition identity -------------------------------------------------

def _max_abs(op: sparse.spmatrix, mask: Optional[np.ndarray] = None) -> float:
    coo = op.tocoo()
    values = coo.data
    if mask is not None:
        keep = mask[coo.row] & mask[coo.col]
        values = values[keep]
    return float(np.max(np.abs(values))) if len(values) else 0.0


def decomposition_check(space: FockSpace, f: ProbeFunction, chi: Optional[np.ndarray] = None,
                        kind: DecompositionKind = DecompositionKind.SCALAR_A,
                        omega_max: Optional[float] = None, density: float = 1.0,
                        tolerance: Optional[float] = None, strict: bool = False) -> DecompositionReport:
    """
    Compare sum_w w_w B^dagger B against Delta on the truncated space.

    The difference is a sum of blocks with disjoint sparsity (the diagonal,
    one block per hop a_m^dagger a_n, one per pair a_m a_n with its adjoint),
    so the max-norm is taken block by block.
    """
    kind = DecompositionKind(kind)
    field_kind, variant = DECOMPOSITION_SETUP[kind]
    if space.modes.field_kind is not field_kind:
        raise ValidationError(f"{kind.value} needs a {field_kind.value} mode set")
    if chi is None:
        chi = default_chi(space.modes)
    chi = space.modes.expand(chi)
    if tolerance is None:
        tolerance = settings.get('verify.operator_tolerance', 1e-8)

    nodes, weights = frequency_quadrature(space, f, omega_max, density=density)
    beta, gamma = b_coefficients(space, f, chi, nodes, variant)

    def gram(x, y):
        return np.einsum('j,jlm,jln->mn', weights, np.conj(x), y)

    G_bb, G_bg, G_gb, G_gg = gram(beta, beta), gram(beta, gamma), gram(gamma, beta), gram(gamma, gamma)
    mode_residues = np.real(np.diag(G_gg))
    c = float(mode_residues.sum())
    X, Y = delta_coefficients(space, f, chi, variant)

    n = space.n_modes
    occupations = space.occupations
    interior = space.interior_mask()

    # Diagonal block.
    lhs = np.zeros(space.dimension, dtype=complex)
    truncation = np.zeros(space.dimension)
    for m in range(n):
        a = space.annihilation(m)
        lhs += G_bb[m, m] * occupations[:, m] + G_gg[m, m] * (a @ a.conj().T).diagonal()
        truncation += mode_residues[m] * space.truncated_commutator(m).diagonal().real
    delta_diag = occupations @ np.real(np.diag(X))
    operator_residual = float(np.max(np.abs(lhs - delta_diag - truncation)))
    interior_residual = float(np.max(np.abs((lhs - delta_diag - c)[interior])))
    vacuum_residue = float(lhs[0].real)

    # Hop blocks a_m^dagger a_n, m != n.
    for m in range(n):
        for k in range(n):
            if m == k:
                continue
            a_m, a_k = space.annihilation(m), space.annihilation(k)
            block = G_bb[m, k] * (a_m.conj().T @ a_k) + G_gg[k, m] * (a_k @ a_m.conj().T)
            single = np.zeros((n, n), dtype=complex)
            single[m, k] = X[m, k]
            difference = block - space.quadratic_form(single, np.zeros((n, n)))
            operator_residual = max(operator_residual, _max_abs(difference))
            interior_residual = max(interior_residual, _max_abs(difference, interior))

    # Pair blocks a_m a_n together with a_m^dagger a_n^dagger.
    for m in range(n):
        for k in range(m, n):
            pairs = [(m, k)] if m == k else [(m, k), (k, m)]
            block = sparse.csr_matrix((space.dimension, space.dimension), dtype=complex)
            single = np.zeros((n, n), dtype=complex)
            for i, j in pairs:
                a_i, a_j = space.annihilation(i), space.annihilation(j)
                block = block + G_gb[i, j] * (a_i @ a_j) + G_bg[i, j] * (a_i.conj().T @ a_j.conj().T)
                single[i, j] = Y[i, j]
            difference = block - space.quadratic_form(np.zeros((n, n)), single)
            operator_residual = max(operator_residual, _max_abs(difference))
            interior_residual = max(interior_residual, _max_abs(difference, interior))

    direct = float(residue_constants(space, f, chi, nodes, weights).sum())
    vectors = space.modes.field_vectors()
    reference = float(sum(
        space.modes.flat_weights[m] * abs(chi[m]) ** 2 * np.dot(vectors[m], vectors[m])
        * tail_mass(f, space.modes.flat_frequencies[m])[0]
        for m in range(n)
    ))

    report = DecompositionReport(
        kind=kind,
        operator_residual=operator_residual,
        interior_residual=interior_residual,
        residue_constant=c,
        residue_direct=direct,
        residue_relative_gap=abs(c - direct) / direct if direct else abs(c),
        residue_reference=reference,
        vacuum_residue=vacuum_residue,
        mode_residues=mode_residues,
        frequency_nodes=nodes,
        frequency_weights=weights,
    )
    logger.info(
        f"decomposition {kind.value}: residual {operator_residual:.2e}, interior {interior_residual:.2e}, "
        f"c = {c:.6e} over {len(nodes)} frequencies"
    )
    if strict and not report.passed(tolerance):
        raise IdentityViolationError(
            f"{kind.value} decomposition residual {operator_residual:.2e} exceeds {tolerance:.0e}"
        )
    return report


# Discrete inequality ----------------------------------------------------

def discrete_bound(space: FockSpace, f: ProbeFunction, chi: np.ndarray) -> float:
    """-c, the exact lower bound of <Delta> on the truncated space."""
    nodes, weights = frequency_quadrature(space, f)
    return -float(residue_constants(space, f, chi, nodes, weights).sum())


def inequality_scan(space: FockSpace, f: ProbeFunction, mu: Optional[SensitivityFunction],
                    states: Sequence, x=(0.0, 0.0, 0.0), t_offset: float = 0.0,
                    capacity_tolerance: Optional[float] = None,
                    margin_tolerance: Optional[float] = None,
                    seed: Optional[int] = None, check: bool = False) -> InequalityScanReport:
    """
    <Delta> against the discrete bound for every state; raises
    InequalityViolationError when a margin falls below -margin_tolerance.

    The bound is only exact once the operator decomposition holds. With
    check=True the strict decomposition check runs first, on the same chi,
    and raises IdentityViolationError before any state is evaluated.
    """
    if margin_tolerance is None:
        margin_tolerance = settings.get('verify.margin_tolerance', 1e-9)
    chi = default_chi(space.modes, x, t_offset, mu)
    if check:
        decomposition_check(space, f, chi, kind=default_kind(space.modes), strict=True)
    operator = smeared_delta_operator(space, f, chi=chi)
    bound = discrete_bound(space, f, chi)

    def evaluate(item):
        state = item if isinstance(item, FieldState) else make_state(space, item, capacity_tolerance)
        delta = expectation(state, operator)
        return {'state': state.spec.name, 'kind': state.kind.value, 'delta': delta,
                'bound': bound, 'margin': delta - bound}

    rows = ordered_map(evaluate, list(states), desc="inequality scan")
    table = pd.DataFrame(rows, columns=['state', 'kind', 'delta', 'bound', 'margin'])
    table = table.sort_values('margin', kind='mergesort').reset_index(drop=True)
    min_margin = float(table['margin'].min()) if len(table) else float('nan')
    logger.info(f"inequality scan: {len(table)} states, bound {bound:.6e}, min margin {min_margin:.3e}")

    if min_margin < -margin_tolerance:
        worst = table.iloc[0]
        raise InequalityViolationError(
            f"State {worst['state']} violates the bound: <Delta> = {worst['delta']:.6e} < {bound:.6e}"
        )
    return InequalityScanReport(table, bound, min_margin, seed)


def random_states(space: FockSpace, count: int, rng: np.random.Generator) -> List[StateSpec]:
    """Coherent, squeezed (r <= 1), pair-superposition and random even-sector states in equal shares."""
    n = space.n_modes
    even = space.total_number() % 2 == 0
    specs = []
    for i in range(count):
        family = i % 4
        if family == 0:
            amplitudes = 0.5 * (rng.normal(size=n) + 1j * rng.normal(size=n))
            specs.append(StateSpec(StateKind.COHERENT, amplitudes=tuple(amplitudes), label=f"coherent-{i}"))
        elif family == 1:
            modes = (int(rng.integers(n)),) if n == 1 or rng.random() < 0.5 else tuple(int(m) for m in rng.choice(n, 2, replace=False))
            specs.append(StateSpec(StateKind.SQUEEZED_VACUUM, r=float(rng.uniform(0.0, 1.0)),
                                   theta=float(rng.uniform(0.0, 2.0 * np.pi)), modes=modes, label=f"squeezed-{i}"))
        elif family == 2:
            raw = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            F = 0.5 * (raw + raw.T)
            if space.nmax < 2:
                np.fill_diagonal(F, 0.0)
            norm = np.linalg.norm(F)
            specs.append(StateSpec(StateKind.PAIR_SUPERPOSITION, epsilon=float(rng.uniform(-1.5, 1.5)),
                                   pair_coefficients=F / norm if norm else F, label=f"pair-{i}"))
        else:
            vector = (rng.normal(size=space.dimension) + 1j * rng.normal(size=space.dimension)) * even
            specs.append(StateSpec(StateKind.CUSTOM, vector=vector, label=f"even-{i}"))
    return specs


# Negative energy --------------------------------------------------------

def _check_quadratic_law(operator, vacuum: np.ndarray, pair: np.ndarray, e_max: float, scale: float):
    """The unnormalized <Delta> must be a degree-2 polynomial in epsilon with nonnegative leading term."""
    grid = np.linspace(-e_max, e_max, 7)
    values = np.array([np.vdot(v, operator @ v).real for v in (vacuum + eps * pair for eps in grid)])
    coefficients = np.polyfit(grid, values, 2)
    residual = np.max(np.abs(np.polyval(coefficients, grid) - values))
    if residual > 1e-8 * max(1.0, np.max(np.abs(values))):
        raise AccuracyError(f"<Delta>(epsilon) is not quadratic (fit residual {residual:.2e})")
    if coefficients[0] < -1e-12 * scale * np.vdot(pair, pair).real:
        logger.warning(f"Pair term has negative quadratic coefficient {coefficients[0]:.3e}")


def optimize_epsilon(space: FockSpace, f: ProbeFunction, mu: Optional[SensitivityFunction],
                     F: np.ndarray, x=(0.0, 0.0, 0.0), t_offset: float = 0.0,
                     e_max: Optional[float] = None) -> EpsilonOptimum:
    """
    Minimize <Delta> over real epsilon for N(|0> + epsilon |P>), |P> = sum F_ij a_i^dagger a_j^dagger |0>.

    With b = 2 Re <0|Delta|P>, q = <P|Delta|P> and n = <P|P> the normalized
    expectation is (eps b + eps^2 q) / (1 + eps^2 n); it is minimized by
    bounded scalar search, widening the interval while the optimum sits on its edge.
    """
    F = np.asarray(F, dtype=complex)
    operator = smeared_delta_operator(space, f, x, mu, t_offset)
    vacuum = space.vacuum()
    pair = pair_vector(space, F)
    n = float(np.vdot(pair, pair).real)
    applied = operator @ pair
    b = 2.0 * float(np.vdot(vacuum, applied).real)
    q = float(np.vdot(pair, applied).real)

    scale = max(1e-300, abs(operator).max())
    if n == 0 or abs(b) <= 1e-14 * scale * np.sqrt(max(n, 1.0)):
        logger.warning("Pair term does not couple to the probe; epsilon optimum is degenerate")
        return EpsilonOptimum(0.0, 0.0, True, b, q, n)

    e_max = e_max or 10.0 / np.linalg.norm(F)
    _check_quadratic_law(operator, vacuum, pair, e_max, scale)

    def objective(eps):
        return (eps * b + eps ** 2 * q) / (1.0 + eps ** 2 * n)

    for _ in range(settings.get('verify.epsilon_widenings', 5) + 1):
        result = minimize_scalar(objective, bounds=(-e_max, e_max), method='bounded',
                                 options={'xatol': 1e-12 * e_max})
        if abs(result.x) < 0.999 * e_max:
            break
        e_max *= 10.0
    eps_star = float(result.x)
    logger.info(f"epsilon optimum {eps_star:.6g}, <Delta> = {result.fun:.6e}")
    return EpsilonOptimum(eps_star, float(result.fun), False, b, q, n)


def energy_density_scan(space: FockSpace, state: FieldState, x_grid: Sequence, t_grid: Sequence) -> EnergyScan:
    """Pointwise rho = (<:E^2:> + <:B^2:>)/2 over a (t, x) grid, plus the mode-sum energy."""
    if space.modes.field_kind is not FieldKind.ELECTROMAGNETIC:
        raise UnsupportedOperationError("Energy density needs an electromagnetic mode set")
    moments = second_moments(state)
    rows = []
    for t in t_grid:
        for x in x_grid:
            x = np.asarray(x, dtype=float).reshape(3)
            e2 = normal_ordered_square(state, x, float(t), Component.ELECTRIC, moments)
            b2 = normal_ordered_square(state, x, float(t), Component.MAGNETIC, moments)
            rows.append({'t': float(t), 'x': x[0], 'y': x[1], 'z': x[2], 'e2': e2, 'b2': b2, 'rho': 0.5 * (e2 + b2)})
    table = pd.DataFrame(rows, columns=['t', 'x', 'y', 'z', 'e2', 'b2', 'rho'])
    return EnergyScan(table, total_energy(state, moments))


def pair_demo_setup(omega0: float = 1.0, nmax: int = 2, t0: Optional[float] = None) -> Tuple[FockSpace, ProbeFunction, np.ndarray]:
    """
    Electromagnetic pencil of two momenta (0.9, 1.1) omega0 along z, a short
    gaussian probe and pair coefficients matched to its pair term at the origin.
    """
    layout = ModeLayout(field_kind=FieldKind.ELECTROMAGNETIC, layout="explicit",
                        momenta=((0.0, 0.0, 0.9 * omega0), (0.0, 0.0, 1.1 * omega0)),
                        weights=(0.2 * omega0, 0.2 * omega0))
    space = FockSpace(build_modes(layout), nmax)
    probe = ProbeFunction.gaussian(t0 or 0.05 / omega0)
    _, Y = delta_coefficients(space, probe, default_chi(space.modes))
    F = np.conj(Y)
    return space, probe, F / np.linalg.norm(F)


# Magnetic field ---------------------------------------------------------

def paraxial_factor_check(kx: float, q: float) -> float:
    """
    |[k x e(k)].[p x e(p)] - w_k w_p e(k).e(p)| / (w_k w_p) for
    k = (q, 0, kx), p = (-q, q, kx) and the first polarization of each.
    """
    if not kx > 0 or q < 0:
        raise DomainError("Need kx > 0 and q >= 0")
    if q >= kx:
        raise DomainError(f"Paraxial check needs q < kx, got q={q}, kx={kx}")
    k = np.array([q, 0.0, kx])
    p = np.array([-q, q, kx])
    e_k, e_p = polarization_pair(k)[0], polarization_pair(p)[0]
    w_k, w_p = np.linalg.norm(k), np.linalg.norm(p)
    magnetic = np.dot(np.cross(k, e_k), np.cross(p, e_p))
    return float(abs(magnetic - w_k * w_p * np.dot(e_k, e_p)) / (w_k * w_p))


def paraxial_slope(q: float = 1.0, ratios: Sequence[float] = (10.0, 20.0, 40.0, 80.0)) -> float:
    """Log-log slope of the paraxial deviation against kx at fixed q."""
    kx = q * np.asarray(ratios, dtype=float)
    deviations = np.array([paraxial_factor_check(k, q) for k in kx])
    slope, _ = np.polyfit(np.log(kx), np.log(deviations), 1)
    return float(slope)


def magnetic_vs_electric(space: FockSpace, state: FieldState, f: ProbeFunction,
                         x=(0.0, 0.0, 0.0), mu: Optional[SensitivityFunction] = None,
                         t_offset: float = 0.0) -> Tuple[float, float]:
    """Smeared (<:E^2:>, <:B^2:>)."""
    if space.modes.field_kind is not FieldKind.ELECTROMAGNETIC:
        raise UnsupportedOperationError("magnetic_vs_electric needs an electromagnetic mode set")
    electric = smeared_delta_operator(space, f, x, mu, t_offset, Component.ELECTRIC)
    magnetic = smeared_delta_operator(space, f, x, mu, t_offset, Component.MAGNETIC)
    return expectation(state, electric), expectation(state, magnetic)


if __name__ == "__main__":
    print("=" * 60)
    print("DECOMPOSITION IDENTITY")
    print("=" * 60)
    probe = ProbeFunction.gaussian(1.0)
    scalar = FockSpace(build_modes(ModeLayout(field_kind=FieldKind.SCALAR, count=3)), 6)
    for kind in (DecompositionKind.SCALAR_A, DecompositionKind.SCALAR_A_TILDE):
        report = decomposition_check(scalar, probe, kind=kind)
        print(f"{kind.value:>16}: residual {report.operator_residual:.2e}, c = {report.residue_constant:.6e}")

    print("\n" + "=" * 60)
    print("NEGATIVE ENERGY DENSITY")
    print("=" * 60)
    space, probe, F = pair_demo_setup()
    optimum = optimize_epsilon(space, probe, None, F)
    state = make_state(space, StateSpec(StateKind.PAIR_SUPERPOSITION, epsilon=optimum.eps_star, pair_coefficients=F))
    scan = energy_density_scan(space, state, [(0.0, 0.0, 0.0)], np.linspace(-3.0, 3.0, 13))
    print(f"epsilon*       = {optimum.eps_star:.6f}")
    print(f"<Delta> min    = {optimum.delta_min:.6e}  (bound {discrete_bound(space, probe, default_chi(space.modes)):.6e})")
    print(f"min rho        = {scan.min_rho:.6e}")
    print(f"total energy   = {scan.total_energy:.6e}")
    print(f"paraxial slope = {paraxial_slope():.3f}")
