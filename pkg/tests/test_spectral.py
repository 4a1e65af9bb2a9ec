import pytest
import numpy as np

from errors import AliasingError, TruncationError, ValidationError
from spectral import (
    FrequencyProfile,
    SampledFunction,
    convolution_identity_check,
    fourier_forward,
    frequency_grid,
    parseval_gap,
    sample_probe,
    sample_sqrt_probe,
    sqrt_probe_transform,
)
from weighting import ProbeFunction, sqrt_ft_sq


@pytest.fixture
def shared_grid():
    return np.linspace(-20.0, 20.0, 641)


class TestFourierForward:
    def test_gaussian_at_zero(self, gaussian_probe):
        value = fourier_forward(sample_probe(gaussian_probe), 0.0)
        assert isinstance(value, complex)
        assert value == pytest.approx(1.0 / (2.0 * np.pi), abs=1e-12)

    def test_sqrt_gaussian_is_real_and_even(self, gaussian_probe):
        w = np.linspace(0.1, 3.0, 7)
        sampled = sample_sqrt_probe(gaussian_probe)
        plus, minus = fourier_forward(sampled, w), fourier_forward(sampled, -w)
        np.testing.assert_allclose(plus, minus, atol=1e-13)
        assert np.max(np.abs(plus.imag)) < 1e-13

    def test_sqrt_lorentzian_matches_closed_form(self, lorentzian_probe):
        value = fourier_forward(sample_sqrt_probe(lorentzian_probe), 1.0)
        assert abs(value) ** 2 == pytest.approx(np.exp(-2.0) / (2.0 * np.pi), abs=1e-6)

    def test_linearity(self, shared_grid):
        first = SampledFunction(shared_grid, np.exp(-0.5 * shared_grid ** 2))
        second = SampledFunction(shared_grid, np.exp(-shared_grid ** 2 / 8.0))
        w = np.linspace(-3.0, 3.0, 13)
        combined = fourier_forward(first.scaled(2.0) + second.scaled(-0.5j), w)
        expected = 2.0 * fourier_forward(first, w) - 0.5j * fourier_forward(second, w)
        np.testing.assert_allclose(combined, expected, atol=1e-10)

    def test_aliasing(self, gaussian_probe):
        with pytest.raises(AliasingError):
            fourier_forward(sample_probe(gaussian_probe), 100.0)

    def test_non_decaying_input(self, shared_grid):
        with pytest.raises(TruncationError):
            fourier_forward(SampledFunction(shared_grid, np.ones_like(shared_grid)), 0.5)

    def test_zero_decay_tolerance_is_honoured(self, shared_grid):
        slow = SampledFunction(shared_grid, 1.0 / (1.0 + shared_grid ** 2) ** 2)
        fourier_forward(slow, 0.5)
        with pytest.raises(TruncationError):
            fourier_forward(slow, 0.5, decay_tolerance=0.0)

    def test_rejects_irregular_grid(self):
        with pytest.raises(ValidationError):
            SampledFunction(np.array([0.0, 1.0, 3.0]), np.ones(3))

    def test_adding_mismatched_grids(self, shared_grid):
        other = SampledFunction(shared_grid + 1.0, np.zeros_like(shared_grid))
        with pytest.raises(ValidationError):
            SampledFunction(shared_grid, np.zeros_like(shared_grid)) + other


class TestSqrtProfile:
    def test_grid_is_symmetric(self):
        grid = frequency_grid(1.0)
        assert len(grid) % 2 == 1
        assert grid[len(grid) // 2] == 0.0
        np.testing.assert_array_equal(grid, -grid[::-1])

    def test_gaussian_peak(self, gaussian_probe):
        profile = sqrt_probe_transform(gaussian_probe)
        assert abs(profile.evaluate(0.0)) ** 2 == pytest.approx(1.0 / (np.pi * np.sqrt(2.0 * np.pi)), abs=1e-8)

    def test_lorentzian_matches_closed_form(self):
        probe = ProbeFunction.lorentzian_squared(2.0)
        profile = sqrt_probe_transform(probe)
        inside = np.abs(profile.grid) <= 3.0
        np.testing.assert_allclose(profile.power()[inside], sqrt_ft_sq(probe, profile.grid[inside]), atol=1e-6)

    def test_conjugate_symmetry(self, builtin_probe):
        assert sqrt_probe_transform(builtin_probe).conjugate_symmetry_error() <= 1e-9

    def test_parseval(self, gaussian_probe):
        gap = parseval_gap(sample_sqrt_probe(gaussian_probe), sqrt_probe_transform(gaussian_probe))
        assert gap <= 1e-6

    def test_evaluate_outside_grid(self, gaussian_probe):
        profile = sqrt_probe_transform(gaussian_probe)
        assert profile.evaluate(2.0 * profile.span) == 0.0

    def test_tabulated_probe_follows_samples(self, probe_table):
        from weighting import load_probe_table, sqrt_probe_amplitude
        probe = load_probe_table(str(probe_table))
        w = np.array([0.0, 0.5, 1.0])
        np.testing.assert_allclose(np.abs(sqrt_probe_amplitude(probe, w)) ** 2,
                                   sqrt_ft_sq(ProbeFunction.gaussian(1.0), w), rtol=1e-3)

    def test_to_text(self, tmp_path, gaussian_probe):
        path = tmp_path / "profile.txt"
        profile = sqrt_probe_transform(gaussian_probe, points=65)
        profile.to_text(str(path))
        table = np.loadtxt(path)
        assert table.shape == (65, 3)
        np.testing.assert_allclose(table[:, 0], profile.grid)

    def test_rejects_unknown_convention(self):
        with pytest.raises(ValidationError):
            FrequencyProfile(np.linspace(-1.0, 1.0, 5), np.ones(5), convention="unitary")


class TestConvolutionIdentity:
    def test_gaussian_at_zero(self, gaussian_probe):
        assert convolution_identity_check(gaussian_probe, 0.0) <= 1e-6

    def test_lorentzian(self, lorentzian_probe):
        assert convolution_identity_check(lorentzian_probe, 1.3) <= 1e-6

    def test_even_in_p(self, gaussian_probe):
        plus = convolution_identity_check(gaussian_probe, 0.7)
        minus = convolution_identity_check(gaussian_probe, -0.7)
        assert abs(plus - minus) <= 1e-12
