"""
FOCK MODEL
==========
Discrete-mode, truncated Fock-space model of a free massless field.

Continuum integrals over momentum become weighted sums, with discrete
ladder operators a_i = sqrt(w_i) a(p_i). A flat mode is one (momentum,
polarization) pair; the scalar field has one polarization per momentum,
the electromagnetic field two.

Operators are scipy.sparse CSR matrices on the product basis, mode 0
being the most significant factor of the Kronecker product.
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply
from scipy.special import gammaln

from bounds import FieldKind
from config.settings import settings
from errors import (
    AccuracyError,
    DomainError,
    TruncationCapacityError,
    UnsupportedOperationError,
    ValidationError,
)
from utils.logger import setup_logging
from weighting import (
    ProbeFunction,
    SensitivityFunction,
    probe_norm,
    probe_transform,
    sensitivity_eval,
    sqrt_probe_amplitude,
)

logger = setup_logging(__name__)

REFERENCE_AXES = np.eye(3)
CANONICAL_SIGN = {FieldKind.ELECTROMAGNETIC: -1.0, FieldKind.SCALAR: 1.0}


class Variant(str, Enum):
    PLUS = "plus"
    TILDE = "tilde"


class Component(str, Enum):
    ELECTRIC = "electric"
    MAGNETIC = "magnetic"


class StateKind(str, Enum):
    VACUUM = "vacuum"
    COHERENT = "coherent"
    SQUEEZED_VACUUM = "squeezed_vacuum"
    PAIR_SUPERPOSITION = "pair_superposition"
    CUSTOM = "custom"


# Modes ------------------------------------------------------------------

@dataclass(frozen=True)
class ModeLayout:
    """
    Mode-layout description.

    layout "collinear" places `count` momenta along `direction` with
    magnitudes omega0 * (1 + k * spacing), k centred on zero, each
    weighted by omega0 * spacing (midpoint rule). layout "explicit"
    takes `momenta` and `weights` as given.
    """
    field_kind: FieldKind = FieldKind.SCALAR
    layout: str = "collinear"
    count: int = 3
    omega0: float = 1.0
    spacing: float = 0.05
    direction: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    momenta: Optional[Tuple[Tuple[float, float, float], ...]] = None
    weights: Optional[Tuple[float, ...]] = None

    @classmethod
    def from_dict(cls, raw: dict) -> 'ModeLayout':
        known = {k: v for k, v in raw.items() if k in cls.__dataclass_fields__}
        if 'field' in raw:
            known['field_kind'] = raw['field']
        if 'field_kind' in known:
            known['field_kind'] = FieldKind(known['field_kind'])
        for key in ('direction',):
            if key in known:
                known[key] = tuple(float(v) for v in known[key])
        if known.get('momenta') is not None:
            known['momenta'] = tuple(tuple(float(c) for c in p) for p in known['momenta'])
        if known.get('weights') is not None:
            known['weights'] = tuple(float(w) for w in known['weights'])
        return cls(**known)


@dataclass(frozen=True, eq=False)
class ModeSet:
    momenta: np.ndarray
    weights: np.ndarray
    field_kind: FieldKind
    polarizations: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def polarization_count(self) -> int:
        return 2 if self.field_kind is FieldKind.ELECTROMAGNETIC else 1

    @property
    def momentum_count(self) -> int:
        return len(self.momenta)

    @property
    def mode_count(self) -> int:
        """Flat modes: momenta times polarizations."""
        return self.momentum_count * self.polarization_count

    @property
    def frequencies(self) -> np.ndarray:
        return np.linalg.norm(self.momenta, axis=1)

    def _flatten(self, per_momentum: np.ndarray) -> np.ndarray:
        return np.repeat(per_momentum, self.polarization_count, axis=0)

    @property
    def flat_momenta(self) -> np.ndarray:
        return self._flatten(self.momenta)

    @property
    def flat_weights(self) -> np.ndarray:
        return self._flatten(self.weights)

    @property
    def flat_frequencies(self) -> np.ndarray:
        return self._flatten(self.frequencies)

    def field_vectors(self, component: Component = Component.ELECTRIC) -> np.ndarray:
        """
        Per flat mode, the vector contracted in field products: e for the
        electric field, p_hat x e for the magnetic field, [1] for scalars.
        """
        component = Component(component)
        if self.field_kind is FieldKind.SCALAR:
            if component is Component.MAGNETIC:
                raise UnsupportedOperationError("A scalar field has no magnetic component")
            return np.ones((self.mode_count, 1))
        vectors = self.polarizations.reshape(-1, 3)
        if component is Component.MAGNETIC:
            directions = self.flat_momenta / self.flat_frequencies[:, None]
            vectors = np.cross(directions, vectors)
        return vectors

    def expand(self, per_momentum) -> np.ndarray:
        """Broadcast a per-momentum array to flat modes (flat-length input passes through)."""
        values = np.asarray(per_momentum)
        if len(values) == self.mode_count:
            return values
        if len(values) == self.momentum_count:
            return self._flatten(values)
        raise ValidationError(
            f"Expected {self.momentum_count} or {self.mode_count} per-mode values, got {len(values)}"
        )


def polarization_pair(p: np.ndarray) -> np.ndarray:
    """Two real unit vectors orthogonal to p and to each other; e2 = p_hat x e1."""
    direction = p / np.linalg.norm(p)
    for axis in REFERENCE_AXES:
        e1 = axis - np.dot(axis, direction) * direction
        norm = np.linalg.norm(e1)
        if norm > 1e-6:
            break
    e1 = e1 / norm
    e2 = np.cross(direction, e1)
    return np.stack([e1, e2])


def build_modes(layout: ModeLayout) -> ModeSet:
    kind = FieldKind(layout.field_kind)
    if layout.layout == "collinear":
        if layout.count < 1:
            raise ValidationError("Collinear layout needs at least one mode")
        if layout.omega0 <= 0 or layout.spacing <= 0:
            raise ValidationError("Collinear layout needs positive omega0 and spacing")
        direction = np.asarray(layout.direction, dtype=float)
        if np.linalg.norm(direction) == 0:
            raise DomainError("Layout direction must be nonzero")
        direction = direction / np.linalg.norm(direction)
        offsets = np.arange(layout.count) - 0.5 * (layout.count - 1)
        magnitudes = layout.omega0 * (1.0 + offsets * layout.spacing)
        momenta = magnitudes[:, None] * direction[None, :]
        weights = np.full(layout.count, layout.omega0 * layout.spacing)
    elif layout.layout == "explicit":
        if layout.momenta is None or layout.weights is None:
            raise ValidationError("Explicit layout needs momenta and weights")
        momenta = np.asarray(layout.momenta, dtype=float).reshape(-1, 3)
        weights = np.asarray(layout.weights, dtype=float)
        if len(weights) != len(momenta):
            raise ValidationError("Explicit layout needs one weight per momentum")
    else:
        raise ValidationError(f"Unknown mode layout {layout.layout!r}")

    if np.any(weights <= 0):
        raise ValidationError("Mode weights must be strictly positive")
    if np.any(np.linalg.norm(momenta, axis=1) == 0):
        raise DomainError("Zero momentum breaks the 1/sqrt(2w) normalization")
    if len(np.unique(np.round(momenta, 12), axis=0)) != len(momenta):
        raise ValidationError("Duplicate momenta in mode layout")

    polarizations = None
    if kind is FieldKind.ELECTROMAGNETIC:
        polarizations = np.stack([polarization_pair(p) for p in momenta])

    modes = ModeSet(momenta, weights, kind, polarizations)
    max_modes = settings.get('fock.max_modes', 8)
    if modes.mode_count > max_modes:
        raise ValidationError(f"{modes.mode_count} flat modes exceed the configured maximum {max_modes}")
    return modes


# Fock space -------------------------------------------------------------

class FockSpace:
    """Product of truncated oscillators, each holding 0..nmax quanta."""

    def __init__(self, modes: ModeSet, nmax: int, max_dimension: Optional[int] = None):
        if nmax < 1:
            raise ValidationError(f"nmax must be at least 1, got {nmax}")
        self.modes = modes
        self.nmax = int(nmax)
        self.levels = self.nmax + 1
        self.n_modes = modes.mode_count
        self.dimension = self.levels ** self.n_modes

        if max_dimension is None:
            max_dimension = settings.get('fock.max_dimension', 200000)
        if self.dimension > max_dimension:
            raise ValidationError(
                f"Fock dimension {self.dimension} exceeds the configured maximum {max_dimension}"
            )

        self.strides = self.levels ** np.arange(self.n_modes - 1, -1, -1)
        self.occupations = (np.arange(self.dimension)[:, None] // self.strides[None, :]) % self.levels
        self._single = sparse.diags(np.sqrt(np.arange(1, self.levels)), 1, format='csr', dtype=complex)
        self._ladder: Dict[int, sparse.csr_matrix] = {}
        logger.debug(f"FockSpace: {self.n_modes} modes, nmax {self.nmax}, dimension {self.dimension}")

    def _embed(self, mode: int, op) -> sparse.csr_matrix:
        identity = sparse.identity(self.levels, format='csr', dtype=complex)
        factors = [op if k == mode else identity for k in range(self.n_modes)]
        return reduce(lambda a, b: sparse.kron(a, b, format='csr'), factors)

    def annihilation(self, i: int) -> sparse.csr_matrix:
        if i not in self._ladder:
            self._ladder[i] = self._embed(i, self._single)
        return self._ladder[i]

    def creation(self, i: int) -> sparse.csr_matrix:
        return self.annihilation(i).conj().T.tocsr()

    def number(self, i: int) -> sparse.csr_matrix:
        return sparse.diags(self.occupations[:, i].astype(complex), format='csr')

    def total_number(self) -> np.ndarray:
        return self.occupations.sum(axis=1)

    def commutator(self, i: int, j: Optional[int] = None) -> sparse.csr_matrix:
        """[a_i, a_j^dagger] computed from the ladder matrices."""
        j = i if j is None else j
        a_i, a_j = self.annihilation(i), self.annihilation(j)
        return (a_i @ a_j.conj().T - a_j.conj().T @ a_i).tocsr()

    def top_projector(self, i: int) -> sparse.csr_matrix:
        return sparse.diags((self.occupations[:, i] == self.nmax).astype(complex), format='csr')

    def truncated_commutator(self, i: int) -> sparse.csr_matrix:
        """I - (nmax + 1) * projector onto the top level of mode i."""
        identity = sparse.identity(self.dimension, format='csr', dtype=complex)
        return (identity - self.levels * self.top_projector(i)).tocsr()

    def interior_mask(self) -> np.ndarray:
        """Basis states with every occupation below nmax."""
        return np.all(self.occupations < self.nmax, axis=1)

    def vacuum(self) -> np.ndarray:
        vector = np.zeros(self.dimension, dtype=complex)
        vector[0] = 1.0
        return vector

    def hop(self, m: int, n: int) -> sparse.csr_matrix:
        """a_m^dagger a_n."""
        return (self.creation(m) @ self.annihilation(n)).tocsr()

    def pair(self, m: int, n: int) -> sparse.csr_matrix:
        """a_m a_n."""
        return (self.annihilation(m) @ self.annihilation(n)).tocsr()

    # Quadratic forms are assembled entry-wise from occupation numbers.

    def _hop_entries(self, m: int, n: int):
        occ = self.occupations
        if m == n:
            rows = np.nonzero(occ[:, n] > 0)[0]
            return rows, rows, occ[rows, n].astype(float)
        source = np.nonzero((occ[:, n] > 0) & (occ[:, m] < self.nmax))[0]
        target = source - self.strides[n] + self.strides[m]
        values = np.sqrt(occ[source, n] * (occ[source, m] + 1.0))
        return target, source, values

    def _pair_entries(self, m: int, n: int):
        occ = self.occupations
        if m == n:
            source = np.nonzero(occ[:, n] > 1)[0]
            values = np.sqrt(occ[source, n] * (occ[source, n] - 1.0))
            return source - 2 * self.strides[n], source, values
        source = np.nonzero((occ[:, n] > 0) & (occ[:, m] > 0))[0]
        values = np.sqrt(occ[source, n] * occ[source, m].astype(float))
        return source - self.strides[n] - self.strides[m], source, values

    def _assemble(self, coefficients: np.ndarray, entries) -> sparse.csr_matrix:
        rows, cols, data = [], [], []
        for m, n in zip(*np.nonzero(coefficients)):
            r, c, v = entries(m, n)
            rows.append(r)
            cols.append(c)
            data.append(coefficients[m, n] * v)
        if not rows:
            return sparse.csr_matrix((self.dimension, self.dimension), dtype=complex)
        return sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dimension, self.dimension), dtype=complex,
        )

    def pair_creation(self, F: np.ndarray) -> sparse.csr_matrix:
        """sum F_mn a_m^dagger a_n^dagger."""
        lowering = self._assemble(np.conj(np.asarray(F, dtype=complex)), self._pair_entries)
        return lowering.conj().T.tocsr()

    def quadratic_form(self, X: np.ndarray, Y: np.ndarray) -> sparse.csr_matrix:
        """
        sum X_mn a_m^dagger a_n + sum (Y_mn a_m a_n + conj(Y_mn) a_n^dagger a_m^dagger).
        Hermitian whenever X is.
        """
        X = np.asarray(X, dtype=complex)
        Y = np.asarray(Y, dtype=complex)
        normal = self._assemble(X, self._hop_entries)
        pairs = self._assemble(Y, self._pair_entries)
        return (normal + pairs + pairs.conj().T).tocsr()


# States -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StateSpec:
    """
    Parameters of a field state.

    coherent: `amplitudes`, one complex value per flat mode.
    squeezed_vacuum: z = r * exp(i theta) on `modes` (one mode, or a pair
    for two-mode squeezing).
    pair_superposition: `epsilon` and the symmetric `pair_coefficients` F.
    custom: `vector`, normalized on construction.
    """
    kind: StateKind = StateKind.VACUUM
    amplitudes: Optional[Sequence[complex]] = None
    r: float = 0.0
    theta: float = 0.0
    modes: Tuple[int, ...] = (0,)
    epsilon: float = 0.0
    pair_coefficients: Optional[np.ndarray] = None
    vector: Optional[np.ndarray] = None
    label: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', StateKind(self.kind))
        object.__setattr__(self, 'modes', tuple(int(m) for m in np.atleast_1d(self.modes)))
        if self.r < 0:
            raise ValidationError(f"Squeeze magnitude must be nonnegative, got {self.r}")

    @classmethod
    def from_dict(cls, raw: dict) -> 'StateSpec':
        raw = dict(raw)
        if 'amplitudes' in raw:
            raw['amplitudes'] = tuple(complex(a) for a in raw['amplitudes'])
        if 'pair_coefficients' in raw:
            raw['pair_coefficients'] = np.asarray(raw['pair_coefficients'], dtype=complex)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"Unknown state fields: {sorted(unknown)}")
        return cls(**raw)

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind is StateKind.SQUEEZED_VACUUM:
            return f"squeezed(r={self.r:g}, theta={self.theta:g}, modes={list(self.modes)})"
        if self.kind is StateKind.PAIR_SUPERPOSITION:
            return f"pair(eps={self.epsilon:g})"
        if self.kind is StateKind.COHERENT:
            return "coherent"
        return self.kind.value


@dataclass(frozen=True, eq=False)
class FieldState:
    spec: StateSpec
    space: FockSpace
    vector: np.ndarray

    @property
    def kind(self) -> StateKind:
        return self.spec.kind

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


def _capacity_tolerance(tolerance: Optional[float]) -> float:
    return settings.get('fock.capacity_tolerance', 1e-8) if tolerance is None else tolerance


def _top_population(space: FockSpace, vector: np.ndarray) -> float:
    probabilities = np.abs(vector) ** 2
    at_top = np.any(space.occupations == space.nmax, axis=1)
    return float(probabilities[at_top].sum())


def _coherent_vector(space: FockSpace, amplitudes, tolerance: float) -> np.ndarray:
    amplitudes = np.asarray(amplitudes, dtype=complex)
    if len(amplitudes) != space.n_modes:
        raise ValidationError(f"Need {space.n_modes} coherent amplitudes, got {len(amplitudes)}")
    levels = np.arange(space.levels)
    factors = []
    for alpha in amplitudes:
        if alpha == 0:
            single = np.zeros(space.levels, dtype=complex)
            single[0] = 1.0
        else:
            log_magnitude = -0.5 * abs(alpha) ** 2 + levels * np.log(abs(alpha)) - 0.5 * gammaln(levels + 1)
            single = np.exp(log_magnitude) * np.exp(1j * np.angle(alpha) * levels)
        top = abs(single[-1]) ** 2
        if top > tolerance:
            raise TruncationCapacityError(
                f"Coherent amplitude {alpha:.3g} puts {top:.2e} at the top level (nmax {space.nmax})",
                top_population=top,
            )
        factors.append(single / np.linalg.norm(single))
    return reduce(np.kron, factors)


def squeeze_generator(space: FockSpace, z: complex, modes: Tuple[int, ...]) -> sparse.csr_matrix:
    """(conj(z) a^2 - z a^dagger^2)/2, or conj(z) a_i a_j - z a_i^dagger a_j^dagger for a pair."""
    if len(modes) == 1:
        lowering = 0.5 * np.conj(z) * space.pair(modes[0], modes[0])
    elif len(modes) == 2 and modes[0] != modes[1]:
        lowering = np.conj(z) * space.pair(modes[0], modes[1])
    else:
        raise ValidationError(f"Squeezing acts on one mode or a distinct pair, got {modes}")
    return (lowering - lowering.conj().T).tocsr()


def _squeezed_vector(space: FockSpace, spec: StateSpec, tolerance: float) -> np.ndarray:
    for m in spec.modes:
        if not 0 <= m < space.n_modes:
            raise ValidationError(f"Mode index {m} out of range")
    vacuum = space.vacuum()
    if spec.r == 0:
        return vacuum
    z = spec.r * np.exp(1j * spec.theta)
    vector = expm_multiply(squeeze_generator(space, z, spec.modes), vacuum)
    top = _top_population(space, vector)
    if top > tolerance:
        raise TruncationCapacityError(
            f"Squeeze r={spec.r:g} leaves {top:.2e} at the top level (nmax {space.nmax})",
            top_population=top,
        )
    return vector / np.linalg.norm(vector)


def pair_vector(space: FockSpace, F: np.ndarray) -> np.ndarray:
    """sum_ij F_ij a_i^dagger a_j^dagger |0>, unnormalized."""
    F = np.asarray(F, dtype=complex)
    if F.shape != (space.n_modes, space.n_modes):
        raise ValidationError(f"Pair coefficients must be {space.n_modes}x{space.n_modes}")
    return space.pair_creation(F) @ space.vacuum()


def make_state(space: FockSpace, spec: StateSpec, capacity_tolerance: Optional[float] = None) -> FieldState:
    tolerance = _capacity_tolerance(capacity_tolerance)

    if spec.kind is StateKind.VACUUM:
        vector = space.vacuum()
    elif spec.kind is StateKind.COHERENT:
        vector = _coherent_vector(space, spec.amplitudes, tolerance)
    elif spec.kind is StateKind.SQUEEZED_VACUUM:
        vector = _squeezed_vector(space, spec, tolerance)
    elif spec.kind is StateKind.PAIR_SUPERPOSITION:
        F = np.zeros((space.n_modes, space.n_modes)) if spec.pair_coefficients is None else spec.pair_coefficients
        F = np.asarray(F, dtype=complex)
        if space.nmax < 2 and np.any(np.diag(F) != 0):
            raise TruncationCapacityError("Diagonal pair terms need nmax >= 2", top_population=1.0)
        vector = space.vacuum() + spec.epsilon * pair_vector(space, F)
        vector = vector / np.linalg.norm(vector)
    else:
        if spec.vector is None or len(spec.vector) != space.dimension:
            raise ValidationError(f"Custom state needs a vector of length {space.dimension}")
        vector = np.asarray(spec.vector, dtype=complex)
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise ValidationError("Custom state vector is zero")
        vector = vector / norm

    return FieldState(spec, space, vector)


def odd_probability(state: FieldState) -> float:
    """Probability of an odd total photon number."""
    odd = state.space.total_number() % 2 == 1
    return float(np.sum(np.abs(state.vector[odd]) ** 2))


# Observables ------------------------------------------------------------

def expectation(state: FieldState, op) -> float:
    """<v|op|v> for Hermitian op; raises if op is not Hermitian or the result not real."""
    scale = max(1.0, abs(op).max())
    asymmetry = abs(op - op.conj().T).max() if sparse.issparse(op) else np.max(np.abs(op - op.conj().T))
    if asymmetry > 1e-12 * scale:
        raise ValidationError(f"Operator is not Hermitian (max |M - M^dagger| = {asymmetry:.2e})")
    value = np.vdot(state.vector, op @ state.vector)
    if abs(value.imag) > 1e-12 * scale:
        raise AccuracyError(f"Expectation has imaginary residue {value.imag:.2e}")
    return float(value.real)


def quadrature(space: FockSpace, mode: int, theta: float) -> sparse.csr_matrix:
    """E1(theta) = (a e^{-i theta} + a^dagger e^{i theta}) / 2."""
    a = space.annihilation(mode)
    return (0.5 * (np.exp(-1j * theta) * a + np.exp(1j * theta) * a.conj().T)).tocsr()


def quadrature_variances(state: FieldState, mode: int, theta: float) -> Tuple[float, float]:
    """Variances of E1(theta) and E2(theta) = E1(theta + pi/2)."""
    variances = []
    for phase in (theta, theta + 0.5 * np.pi):
        q = quadrature(state.space, mode, phase)
        mean = expectation(state, q)
        variances.append(max(0.0, expectation(state, (q @ q).tocsr()) - mean ** 2))
    return variances[0], variances[1]


def second_moments(state: FieldState) -> Tuple[np.ndarray, np.ndarray]:
    """N_mn = <a_m^dagger a_n> and M_mn = <a_m a_n>."""
    space = state.space
    lowered = np.column_stack([space.annihilation(m) @ state.vector for m in range(space.n_modes)])
    raised = np.column_stack([space.creation(m) @ state.vector for m in range(space.n_modes)])
    N = lowered.conj().T @ lowered
    M = raised.conj().T @ lowered
    return N, M


def mode_amplitudes(modes: ModeSet, x, t: float, component: Component = Component.ELECTRIC) -> np.ndarray:
    """
    u_m with field(t, x) = sum_m u_m a_m + h.c.:
    u_m = i sqrt(w_m) sqrt(omega_m / 2) / (2pi)^{3/2} * v_m * exp(-i (omega_m t - p_m . x)).
    """
    x = np.asarray(x, dtype=float)
    omega = modes.flat_frequencies
    scale = np.sqrt(modes.flat_weights) * np.sqrt(0.5 * omega) / (2.0 * np.pi) ** 1.5
    phase = np.exp(-1j * (omega * t - modes.flat_momenta @ x))
    return 1j * (scale * phase)[:, None] * modes.field_vectors(component)


def mean_field(state: FieldState, x, t: float, component: Component = Component.ELECTRIC) -> np.ndarray:
    """<field(t, x)>; a 3-vector, or length 1 for a scalar field."""
    space = state.space
    means = np.array([np.vdot(state.vector, space.annihilation(m) @ state.vector) for m in range(space.n_modes)])
    u = mode_amplitudes(space.modes, x, t, component)
    return 2.0 * np.real(means @ u)


def normal_ordered_square(state: FieldState, x, t: float, component: Component = Component.ELECTRIC,
                          moments: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> float:
    """Pointwise <:field . field:> from second moments."""
    N, M = moments if moments is not None else second_moments(state)
    u = mode_amplitudes(state.space.modes, x, t, component)
    aa = np.einsum('ml,nl,mn->', u, u, M)
    hop = np.einsum('ml,nl,mn->', np.conj(u), u, N)
    return float(2.0 * aa.real + 2.0 * hop.real)


def total_energy(state: FieldState, moments: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> float:
    N, _ = moments if moments is not None else second_moments(state)
    return float(np.real(np.diag(N)) @ state.space.modes.flat_frequencies)


# Smeared observable and B operators -------------------------------------

def default_chi(modes: ModeSet, x=(0.0, 0.0, 0.0), t_offset: float = 0.0,
                mu: Optional[SensitivityFunction] = None) -> np.ndarray:
    """chi(p) = sqrt(w_p)/(2pi) * exp(i (p.x - w_p t_offset)) * mu(w_p), per flat mode."""
    x = np.asarray(x, dtype=float)
    omega = modes.flat_frequencies
    chi = np.sqrt(omega) / (2.0 * np.pi) * np.exp(1j * (modes.flat_momenta @ x - omega * t_offset))
    if mu is not None:
        chi = chi * sensitivity_eval(mu, omega)
    return chi


def pair_sign(field_kind: FieldKind, variant: Variant = Variant.PLUS) -> float:
    sign = CANONICAL_SIGN[FieldKind(field_kind)]
    return -sign if Variant(variant) is Variant.TILDE else sign


def _require_normalized(f: ProbeFunction):
    norm = probe_norm(f)
    if abs(norm - 1.0) > 1e-6:
        raise ValidationError(f"Probe {f.label()} is not normalized (integral {norm:.8f})")


def delta_coefficients(space: FockSpace, f: ProbeFunction, chi: np.ndarray,
                       variant: Variant = Variant.PLUS,
                       component: Component = Component.ELECTRIC) -> Tuple[np.ndarray, np.ndarray]:
    """
    (X, Y) of the smeared observable, as consumed by FockSpace.quadratic_form.

    X_kp = s_kp/2 [conj(chi_k) chi_p f_hat(w_p - w_k) + conj(conj(chi_p) chi_k f_hat(w_k - w_p))]
    Y_kp = sign * s_kp/2 * chi_k chi_p f_hat(w_k + w_p)
    s_kp = sqrt(w_k w_p) v_k . v_p
    """
    modes = space.modes
    chi = modes.expand(chi).astype(complex)
    omega = modes.flat_frequencies
    vectors = modes.field_vectors(component)
    s = np.sqrt(np.outer(modes.flat_weights, modes.flat_weights)) * (vectors @ vectors.T)

    difference = omega[None, :] - omega[:, None]
    forward = np.conj(chi)[:, None] * chi[None, :] * probe_transform(f, difference)
    X = 0.5 * s * (forward + forward.conj().T)
    Y = 0.5 * pair_sign(modes.field_kind, variant) * s * np.outer(chi, chi) * probe_transform(f, omega[:, None] + omega[None, :])
    return X, Y


def smeared_delta_operator(space: FockSpace, f: ProbeFunction, x=(0.0, 0.0, 0.0),
                           mu: Optional[SensitivityFunction] = None, t_offset: float = 0.0,
                           component: Component = Component.ELECTRIC,
                           chi: Optional[np.ndarray] = None,
                           variant: Variant = Variant.PLUS) -> sparse.csr_matrix:
    """
    Time-smeared, normal-ordered square of the field at x, probe centred at t_offset.

    A custom chi replaces default_chi entirely (x, t_offset and mu are then unused).
    """
    _require_normalized(f)
    if chi is None:
        chi = default_chi(space.modes, x, t_offset, mu)
    X, Y = delta_coefficients(space, f, chi, variant, component)
    return space.quadratic_form(X, Y)


def b_coefficients(space: FockSpace, f: ProbeFunction, chi: np.ndarray, omegas,
                   variant: Variant = Variant.PLUS,
                   component: Component = Component.ELECTRIC) -> Tuple[np.ndarray, np.ndarray]:
    """
    beta, gamma with B^l(w) = sum_m beta^l_m(w) a_m + gamma^l_m(w) a_m^dagger.
    Arrays are shaped (frequency, component, mode).
    """
    modes = space.modes
    chi = modes.expand(chi).astype(complex)
    omega = modes.flat_frequencies
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    vectors = modes.field_vectors(component)
    root = np.sqrt(modes.flat_weights)

    g_minus = np.conj(sqrt_probe_amplitude(f, w[:, None] - omega[None, :]))
    g_plus = np.conj(sqrt_probe_amplitude(f, w[:, None] + omega[None, :]))
    beta = (root * chi)[None, None, :] * vectors.T[None, :, :] * g_minus[:, None, :]
    gamma = pair_sign(modes.field_kind, variant) * (root * np.conj(chi))[None, None, :] * vectors.T[None, :, :] * g_plus[:, None, :]
    return beta, gamma


def b_operator(space: FockSpace, f: ProbeFunction, chi: np.ndarray, omega: float,
               variant: Variant = Variant.PLUS,
               component: Component = Component.ELECTRIC) -> List[sparse.csr_matrix]:
    """B(omega): three component matrices for the electromagnetic field, one for a scalar."""
    beta, gamma = b_coefficients(space, f, chi, [omega], variant, component)
    operators = []
    for l in range(beta.shape[1]):
        op = sparse.csr_matrix((space.dimension, space.dimension), dtype=complex)
        for m in range(space.n_modes):
            if beta[0, l, m] != 0:
                op = op + beta[0, l, m] * space.annihilation(m)
            if gamma[0, l, m] != 0:
                op = op + gamma[0, l, m] * space.creation(m)
        operators.append(op.tocsr())
    return operators


if __name__ == "__main__":
    print("=" * 60)
    print("FOCK MODEL")
    print("=" * 60)
    modes = build_modes(ModeLayout(field_kind=FieldKind.SCALAR, count=1))
    space = FockSpace(modes, 40)
    for r in (0.2, 0.5, 1.0):
        state = make_state(space, StateSpec(StateKind.SQUEEZED_VACUUM, r=r))
        v1, v2 = quadrature_variances(state, 0, 0.0)
        print(f"r={r:.1f}: var1={v1:.6f} (exact {np.exp(-2 * r) / 4:.6f}), var2={v2:.6f} (exact {np.exp(2 * r) / 4:.6f})")
