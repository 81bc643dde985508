import sys
from pathlib import Path
import pytest

# Add the src directory to Python path
src_path = Path(__file__).parent.parent / "src" / "monge_ampere_lab"
sys.path.append(str(src_path))

from helpers.helper import make_rng  # noqa: E402
from models.base.quadrature import GridSpec, QuadratureSpec  # noqa: E402
from models.base.student import StudentConfig  # noqa: E402
from modules.flow.targets import mixture_target, standard_normal  # noqa: E402

CONFIG_DIR = Path(__file__).parent / "configs"


@pytest.fixture
def quad():
    return QuadratureSpec()


@pytest.fixture
def coarse_grid():
    return GridSpec(points=121)


@pytest.fixture
def normal():
    return standard_normal()


@pytest.fixture
def mixture():
    return mixture_target()


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def fast_student():
    """Tiny network and few epochs, for wiring tests rather than accuracy"""
    return StudentConfig(hidden_widths=(4,), epochs=20, lr=1e-2)


@pytest.fixture
def config_dir():
    return CONFIG_DIR
