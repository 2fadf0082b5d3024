import pytest

from lavabridge.demos import generate_demos
from lavabridge.env import LavaBridgeEnv


@pytest.fixture(scope="session")
def demo_archive():
    """A small expert archive shared across test modules."""
    env = LavaBridgeEnv()
    return generate_demos(env, n_transitions=400, seed=7)
