import pytest

from avcurator.fixtures import generate_fixture, load_truth
from avcurator.pipeline import run_pipeline


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    generate_fixture(root, seed=7)
    return root


@pytest.fixture(scope="session")
def fixture_run(fixture_root):
    """One full pipeline run over the synthetic corpus, shared by tests that
    only read its outputs."""
    from avcurator.config import PipelineConfig

    config = PipelineConfig.load(fixture_root / "config.toml")
    state = run_pipeline(config, [1, 2, 3, 4])
    return fixture_root, config, state


@pytest.fixture(scope="session")
def fixture_truth(fixture_root):
    return load_truth(fixture_root)
