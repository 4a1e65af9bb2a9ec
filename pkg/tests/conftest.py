import pytest
import numpy as np

from bounds import FieldKind
from config.settings import settings
from fock import FockSpace, ModeLayout, build_modes
from weighting import ProbeFunction, SensitivityFunction


@pytest.fixture(autouse=True)
def restore_settings():
    """Tests may merge overrides into the singleton; put the packaged config back."""
    yield
    settings.reset()


@pytest.fixture
def gaussian_probe():
    return ProbeFunction.gaussian(1.0)


@pytest.fixture
def lorentzian_probe():
    return ProbeFunction.lorentzian_squared(1.0)


@pytest.fixture(params=["gaussian", "lorentzian_squared"])
def builtin_probe(request):
    """Both built-in probes at t0 = 1."""
    return ProbeFunction(request.param, 1.0)


@pytest.fixture
def narrow_band():
    return SensitivityFunction.rect_band(1.0, 0.001)


@pytest.fixture
def scalar_space():
    """Three collinear scalar modes around omega0 = 1, nmax 6 (dimension 343)."""
    return FockSpace(build_modes(ModeLayout(field_kind=FieldKind.SCALAR, count=3)), 6)


@pytest.fixture
def single_mode_space():
    return FockSpace(build_modes(ModeLayout(field_kind=FieldKind.SCALAR, count=1)), 40)


@pytest.fixture
def em_space():
    """Two collinear momenta, two polarizations each, nmax 3 (dimension 256)."""
    return FockSpace(build_modes(ModeLayout(field_kind=FieldKind.ELECTROMAGNETIC, count=2)), 3)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def probe_table(tmp_path):
    """Gaussian samples (t0 = 1) written as a two-column text table."""
    times = np.linspace(-10.0, 10.0, 2001)
    values = np.exp(-0.5 * times ** 2) / np.sqrt(2.0 * np.pi)
    path = tmp_path / "probe.txt"
    np.savetxt(path, np.column_stack([times, values]), header="t f")
    return path
