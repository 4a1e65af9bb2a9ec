import pytest
import numpy as np
from scipy.integrate import simpson

from bounds import FieldKind
from errors import DomainError, TruncationCapacityError, ValidationError
from fock import (
    Component,
    FockSpace,
    ModeLayout,
    StateKind,
    StateSpec,
    Variant,
    b_operator,
    build_modes,
    default_chi,
    expectation,
    make_state,
    mean_field,
    odd_probability,
    pair_sign,
    pair_vector,
    polarization_pair,
    quadrature_variances,
    smeared_delta_operator,
    total_energy,
)
from weighting import ProbeFunction, probe_eval


@pytest.fixture
def wide_single_mode():
    """One scalar mode at omega = 1 with room for r = 1 squeezing."""
    return FockSpace(build_modes(ModeLayout(field_kind=FieldKind.SCALAR, count=1)), 80)


@pytest.fixture
def em_single_momentum():
    """One momentum along z, both polarizations, nmax 20."""
    return FockSpace(build_modes(ModeLayout(field_kind=FieldKind.ELECTROMAGNETIC, count=1)), 20)


def symmetric_pairs(n):
    F = np.arange(1.0, n * n + 1.0).reshape(n, n)
    F = F + F.T
    return F / np.linalg.norm(F)


class TestModes:
    def test_collinear_layout(self):
        modes = build_modes(ModeLayout(count=3, omega0=1.0, spacing=0.05))
        np.testing.assert_allclose(modes.frequencies, [0.95, 1.0, 1.05], rtol=1e-14)
        np.testing.assert_allclose(modes.momenta[:, :2], 0.0)
        assert modes.weights.sum() == pytest.approx(3 * 0.05, rel=1e-14)

    def test_polarizations_are_orthonormal_and_transverse(self, rng):
        momenta = tuple(tuple(p) for p in rng.normal(size=(4, 3)))
        modes = build_modes(ModeLayout(field_kind=FieldKind.ELECTROMAGNETIC, layout="explicit",
                                       momenta=momenta, weights=(1.0, 1.0, 1.0, 1.0)))
        for p, pair in zip(modes.momenta, modes.polarizations):
            np.testing.assert_allclose(pair @ p, 0.0, atol=1e-12)
            np.testing.assert_allclose(pair @ pair.T, np.eye(2), atol=1e-12)

    def test_polarization_along_axis(self):
        pair = polarization_pair(np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(pair @ [1.0, 0.0, 0.0], 0.0, atol=1e-15)

    def test_duplicate_momenta(self):
        layout = ModeLayout(layout="explicit", momenta=((0, 0, 1), (0, 0, 1)), weights=(1.0, 1.0))
        with pytest.raises(ValidationError):
            build_modes(layout)

    def test_zero_momentum(self):
        layout = ModeLayout(layout="explicit", momenta=((0, 0, 0), (0, 0, 1)), weights=(1.0, 1.0))
        with pytest.raises(DomainError):
            build_modes(layout)

    def test_nonpositive_weight(self):
        layout = ModeLayout(layout="explicit", momenta=((0, 0, 1),), weights=(0.0,))
        with pytest.raises(ValidationError):
            build_modes(layout)

    def test_mode_limit(self):
        with pytest.raises(ValidationError):
            build_modes(ModeLayout(field_kind=FieldKind.ELECTROMAGNETIC, count=5))

    def test_from_dict(self):
        layout = ModeLayout.from_dict({'field': 'electromagnetic', 'count': 2, 'direction': [1, 0, 0]})
        assert layout.field_kind is FieldKind.ELECTROMAGNETIC
        assert build_modes(layout).mode_count == 4


class TestFockSpace:
    def test_truncated_commutator_is_exact(self, scalar_space):
        for i in range(scalar_space.n_modes):
            difference = scalar_space.commutator(i) - scalar_space.truncated_commutator(i)
            assert abs(difference).max() <= 1e-12

    def test_distinct_modes_commute(self, scalar_space):
        assert abs(scalar_space.commutator(0, 2)).max() <= 1e-14

    def test_annihilates_vacuum(self, scalar_space):
        vacuum = scalar_space.vacuum()
        for i in range(scalar_space.n_modes):
            assert np.max(np.abs(scalar_space.annihilation(i) @ vacuum)) == 0.0

    def test_dimension_limit(self):
        modes = build_modes(ModeLayout(count=3))
        with pytest.raises(ValidationError):
            FockSpace(modes, 20, max_dimension=1000)

    def test_quadratic_form_matches_products(self, scalar_space, rng):
        n = scalar_space.n_modes
        X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        X = X + X.conj().T
        Y = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        expected = sum(X[m, k] * scalar_space.hop(m, k) for m in range(n) for k in range(n))
        pairs = sum(Y[m, k] * scalar_space.pair(m, k) for m in range(n) for k in range(n))
        expected = expected + pairs + pairs.conj().T
        assert abs(scalar_space.quadratic_form(X, Y) - expected).max() <= 1e-12


class TestStates:
    def test_zero_parameters_give_vacuum(self, scalar_space):
        vacuum = scalar_space.vacuum()
        pair = make_state(scalar_space, StateSpec(StateKind.PAIR_SUPERPOSITION, epsilon=0.0,
                                                  pair_coefficients=symmetric_pairs(3)))
        squeezed = make_state(scalar_space, StateSpec(StateKind.SQUEEZED_VACUUM, r=0.0))
        np.testing.assert_array_equal(pair.vector, vacuum)
        np.testing.assert_array_equal(squeezed.vector, vacuum)

    @pytest.mark.parametrize("r", [0.2, 0.5, 1.0])
    def test_squeezed_variances(self, wide_single_mode, r):
        state = make_state(wide_single_mode, StateSpec(StateKind.SQUEEZED_VACUUM, r=r))
        reduced, enlarged = quadrature_variances(state, 0, 0.0)
        assert reduced == pytest.approx(np.exp(-2.0 * r) / 4.0, abs=1e-6)
        assert enlarged == pytest.approx(np.exp(2.0 * r) / 4.0, abs=1e-6)

    def test_vacuum_variances(self, single_mode_space):
        state = make_state(single_mode_space, StateSpec())
        np.testing.assert_allclose(quadrature_variances(state, 0, 0.3), (0.25, 0.25), atol=1e-14)

    @pytest.mark.parametrize("theta", np.linspace(0.0, 2.0 * np.pi, 32, endpoint=False))
    def test_variance_product(self, single_mode_space, theta):
        state = make_state(single_mode_space, StateSpec(StateKind.SQUEEZED_VACUUM, r=0.5, theta=1.1))
        v1, v2 = quadrature_variances(state, 0, theta)
        assert v1 * v2 >= 1.0 / 16.0 - 1e-10

    def test_squeeze_phase_rotates_the_ellipse(self, single_mode_space):
        state = make_state(single_mode_space, StateSpec(StateKind.SQUEEZED_VACUUM, r=0.5, theta=1.1))
        reduced, _ = quadrature_variances(state, 0, 0.55)
        assert reduced == pytest.approx(np.exp(-1.0) / 4.0, abs=1e-6)

    def test_capacity(self, scalar_space):
        with pytest.raises(TruncationCapacityError) as info:
            make_state(scalar_space, StateSpec(StateKind.SQUEEZED_VACUUM, r=1.0))
        assert info.value.top_population > 1e-8

    def test_coherent_capacity(self, scalar_space):
        with pytest.raises(TruncationCapacityError):
            make_state(scalar_space, StateSpec(StateKind.COHERENT, amplitudes=(2.0, 0.0, 0.0)))

    def test_diagonal_pairs_need_two_levels(self):
        space = FockSpace(build_modes(ModeLayout(count=2)), 1)
        with pytest.raises(TruncationCapacityError):
            make_state(space, StateSpec(StateKind.PAIR_SUPERPOSITION, epsilon=0.5, pair_coefficients=np.eye(2)))

    @pytest.mark.parametrize("spec", [
        StateSpec(StateKind.PAIR_SUPERPOSITION, epsilon=0.7, pair_coefficients=symmetric_pairs(3)),
        StateSpec(StateKind.SQUEEZED_VACUUM, r=0.1, theta=0.4, modes=(0, 2)),
        StateSpec(StateKind.SQUEEZED_VACUUM, r=0.04, modes=(1,)),
    ])
    def test_even_sector(self, scalar_space, spec):
        state = make_state(scalar_space, spec)
        assert state.norm == pytest.approx(1.0, abs=1e-12)
        assert odd_probability(state) <= 1e-12
        for t in (0.0, 0.7, 2.1):
            assert np.max(np.abs(mean_field(state, (0.0, 0.0, 0.3), t))) <= 1e-12

    def test_squeezing_needs_one_or_two_modes(self, scalar_space):
        with pytest.raises(ValidationError):
            make_state(scalar_space, StateSpec(StateKind.SQUEEZED_VACUUM, r=0.1, modes=(0, 1, 2)))

    def test_custom_vector_is_normalized(self, scalar_space, rng):
        vector = rng.normal(size=scalar_space.dimension)
        state = make_state(scalar_space, StateSpec(StateKind.CUSTOM, vector=vector))
        assert state.norm == pytest.approx(1.0, abs=1e-14)

    def test_from_dict(self):
        spec = StateSpec.from_dict({'kind': 'squeezed_vacuum', 'r': 0.2, 'theta': 0.5, 'modes': [0, 1]})
        assert spec.kind is StateKind.SQUEEZED_VACUUM
        assert spec.modes == (0, 1)
        with pytest.raises(ValidationError):
            StateSpec.from_dict({'kind': 'vacuum', 'squeeze': 1.0})

    def test_negative_squeeze(self):
        with pytest.raises(ValidationError):
            StateSpec(StateKind.SQUEEZED_VACUUM, r=-0.1)


class TestSmearedDelta:
    def test_hermitian_with_zero_vacuum_value(self, scalar_space, builtin_probe):
        op = smeared_delta_operator(scalar_space, builtin_probe, t_offset=0.3)
        assert abs(op - op.conj().T).max() <= 1e-12
        vacuum = make_state(scalar_space, StateSpec())
        assert abs(expectation(vacuum, op)) <= 1e-12

    def test_identity_expectation(self, scalar_space):
        from scipy import sparse
        state = make_state(scalar_space, StateSpec(StateKind.PAIR_SUPERPOSITION, epsilon=0.4,
                                                   pair_coefficients=symmetric_pairs(3)))
        assert expectation(state, sparse.identity(scalar_space.dimension, format='csr')) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_non_hermitian(self, scalar_space):
        state = make_state(scalar_space, StateSpec())
        with pytest.raises(ValidationError):
            expectation(state, scalar_space.annihilation(0))

    def test_rejects_unnormalized_probe(self, scalar_space):
        probe = ProbeFunction('tabulated', 0.5, np.linspace(-1.0, 1.0, 5), np.ones(5))
        with pytest.raises(ValidationError):
            smeared_delta_operator(scalar_space, probe)

    def test_coherent_states_are_nonnegative(self, scalar_space, gaussian_probe):
        state = make_state(scalar_space, StateSpec(StateKind.COHERENT, amplitudes=(0.2, -0.1j, 0.15 + 0.05j)))
        assert expectation(state, smeared_delta_operator(scalar_space, gaussian_probe)) >= -1e-12

    def test_coherent_matches_classical_field(self, em_single_momentum):
        probe = ProbeFunction.gaussian(0.5)
        state = make_state(em_single_momentum, StateSpec(StateKind.COHERENT, amplitudes=(1.5, 0.0)))
        times = np.linspace(-6.0, 6.0, 2401)
        squared = np.array([np.sum(mean_field(state, (0.0, 0.0, 0.0), t) ** 2) for t in times])
        classical = simpson(probe_eval(probe, times) * squared, x=times)
        quantum = expectation(state, smeared_delta_operator(em_single_momentum, probe))
        assert quantum == pytest.approx(classical, rel=1e-8)
        assert quantum > 0.0

    def test_coherent_energy(self, em_single_momentum):
        state = make_state(em_single_momentum, StateSpec(StateKind.COHERENT, amplitudes=(1.5, 0.5j)))
        assert total_energy(state) == pytest.approx(1.0 * (1.5 ** 2 + 0.5 ** 2), rel=1e-8)

    def test_pair_expectation_is_quadratic_in_epsilon(self, scalar_space, gaussian_probe):
        op = smeared_delta_operator(scalar_space, gaussian_probe)
        F = symmetric_pairs(3)
        grid = np.linspace(-1.0, 1.0, 9)
        pair_norm = np.linalg.norm(pair_vector(scalar_space, F)) ** 2
        raw = []
        for eps in grid:
            state = make_state(scalar_space, StateSpec(StateKind.PAIR_SUPERPOSITION, epsilon=eps, pair_coefficients=F))
            raw.append(expectation(state, op) * (1.0 + eps ** 2 * pair_norm))
        raw = np.array(raw)
        coefficients = np.polyfit(grid, raw, 2)
        assert np.max(np.abs(np.polyval(coefficients, grid) - raw)) <= 1e-10
        assert abs(np.polyval(coefficients, 0.0)) <= 1e-12

    def test_squeeze_phase_equals_time_offset(self, single_mode_space, gaussian_probe):
        theta = 0.8
        phased = make_state(single_mode_space, StateSpec(StateKind.SQUEEZED_VACUUM, r=0.3, theta=theta))
        plain = make_state(single_mode_space, StateSpec(StateKind.SQUEEZED_VACUUM, r=0.3))
        direct = expectation(phased, smeared_delta_operator(single_mode_space, gaussian_probe))
        delayed = expectation(plain, smeared_delta_operator(single_mode_space, gaussian_probe, t_offset=-theta / 2.0))
        assert direct == pytest.approx(delayed, rel=1e-10)

    def test_sensitivity_zero_outside_band(self, scalar_space, gaussian_probe):
        from weighting import SensitivityFunction
        mu = SensitivityFunction.rect_band(5.0, 0.1)
        assert abs(smeared_delta_operator(scalar_space, gaussian_probe, mu=mu)).max() == 0.0


class TestBOperator:
    def test_default_chi(self, scalar_space):
        np.testing.assert_allclose(default_chi(scalar_space.modes),
                                   np.sqrt(scalar_space.modes.flat_frequencies) / (2.0 * np.pi), rtol=1e-14)

    def test_vacuum_image_is_one_photon(self, scalar_space, gaussian_probe):
        chi = default_chi(scalar_space.modes)
        (op,) = b_operator(scalar_space, gaussian_probe, chi, 1.2)
        image = op @ scalar_space.vacuum()
        photons = scalar_space.total_number()
        assert np.max(np.abs(image[photons != 1])) == 0.0
        assert np.max(np.abs(image)) > 0.0

    def test_zero_chi(self, em_space, gaussian_probe):
        operators = b_operator(em_space, gaussian_probe, np.zeros(2), 1.0)
        assert len(operators) == 3
        assert all(op.nnz == 0 for op in operators)

    def test_signs(self):
        assert pair_sign(FieldKind.ELECTROMAGNETIC) == -1.0
        assert pair_sign(FieldKind.SCALAR, Variant.TILDE) == -pair_sign(FieldKind.SCALAR)

    def test_scalar_has_no_magnetic_part(self, scalar_space, gaussian_probe):
        from errors import UnsupportedOperationError
        with pytest.raises(UnsupportedOperationError):
            smeared_delta_operator(scalar_space, gaussian_probe, component=Component.MAGNETIC)
