import numpy as np
import pytest

from glvr.demo import scene_documents, voxel_assets, write_demo_scenes
from glvr.field import AnalyticScene, Box, VoxelField
from glvr.scene import parse_scene


@pytest.fixture(scope="session")
def demo_scenes():
    return {name: parse_scene(doc, name=name) for name, doc in scene_documents().items()}


@pytest.fixture(scope="session")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenes")
    write_demo_scenes(out)
    return out


@pytest.fixture(scope="session")
def voxel_field():
    grid, net = voxel_assets()
    return VoxelField(grid, net)


def slab_field(sigma, length=1.0, color=(0.8, 0.2, 0.1)):
    """A box occupying x in [0, length]; rays along +x see a homogeneous slab."""
    return AnalyticScene([Box(sigma, color, lo=np.array([0.0, -1.0, -1.0]), hi=np.array([length, 1.0, 1.0]))])


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance verdicts collected by test_acceptance, one line per criterion."""
    import sys

    results = None
    for module in list(sys.modules.values()):
        results = getattr(module, "ACCEPTANCE_RESULTS", None)
        if results:
            break
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
