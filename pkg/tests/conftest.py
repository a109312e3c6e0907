import pytest

from lgspdc.dispersion import default_model, reference_crystal


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture(scope="session")
def crystal():
    return reference_crystal(24.5)
