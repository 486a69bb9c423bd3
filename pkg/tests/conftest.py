import hypothesis
import pytest

from molguide.fdtd import FdtdConfig, SlabStructure
from molguide.materials import EmitterPosition, Grid2D, locate_emitter, standard_slot, standard_strip
from molguide.modes import effective_mode_area, group_velocity, solve_modes

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile("default")

@pytest.fixture(scope="session")
def strip():
    return standard_strip()

@pytest.fixture(scope="session")
def slot():
    return standard_slot()

@pytest.fixture(scope="session")
def strip_mode(strip):
    return solve_modes(strip, Grid2D.for_spec(strip))[0]

@pytest.fixture(scope="session")
def slot_mode(slot):
    return solve_modes(slot, Grid2D.for_spec(slot))[0]

@pytest.fixture(scope="session")
def strip_area(strip, strip_mode):
    return effective_mode_area(strip_mode, locate_emitter(strip, EmitterPosition()))

@pytest.fixture(scope="session")
def slot_area(slot, slot_mode):
    return effective_mode_area(slot_mode, locate_emitter(slot, EmitterPosition(in_slot=True)))

@pytest.fixture(scope="session")
def strip_vg(strip):
    return group_velocity(strip, Grid2D.for_spec(strip))

@pytest.fixture(scope="session")
def slot_vg(slot):
    return group_velocity(slot, Grid2D.for_spec(slot))

@pytest.fixture(scope="session")
def fdtd_config():
    return FdtdConfig()

@pytest.fixture(scope="session")
def slab(strip):
    return SlabStructure(strip)
