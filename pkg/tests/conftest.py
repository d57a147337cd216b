import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def scene():
    from symparts.data import synth_scene

    return synth_scene(12345, image_id="fixture")


@pytest.fixture(scope="session")
def scene_graph(scene):
    from symparts.segmentation import build_graph, multiscale_discs

    discs = multiscale_discs(scene.raster)
    return discs, build_graph(discs)


@pytest.fixture(scope="session")
def small_model():
    """Affinity model trained on a handful of synthetic scenes (deformable warps)."""
    from symparts.data import synth_scene
    from symparts.pipeline import PipelineConfig, train_model

    scenes = [synth_scene(500 + k, image_id=f"s{k}") for k in range(4)]
    model, diag = train_model(scenes, PipelineConfig(workers=1))
    return model, diag


def rgb_image(arr) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    return np.repeat(arr[..., None], 3, axis=2) if arr.ndim == 2 else arr


# one line per acceptance criterion, echoed after the run
_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
