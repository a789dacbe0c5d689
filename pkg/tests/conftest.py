import pytest

from synth import build_demo_source


@pytest.fixture(scope="session")
def demo_source(tmp_path_factory):
    """A 10-scene keypoint-format source dataset shared across tests."""
    root = tmp_path_factory.mktemp("demo")
    source_path, mapping_path, truths = build_demo_source(root, n_scenes=10, seed=7)
    return {"root": root, "source": source_path, "mapping": mapping_path, "truths": truths}
