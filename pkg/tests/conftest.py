import numpy as np
import pytest

from gwnav.config import AgentConfig
from gwnav.env import NavigationEnv
from gwnav.phantom import load_bundled, parse_phantom

STRAIGHT_160 = """phantom/1
name straight160
field 220 200
mm_per_px 0.1
root a
node a 20 100
node b 180 100
segment s0 a b
zone s0 proximal
radius s0 8 8
centerline s0 20,100 180,100
goal b end
"""

STRAIGHT_100 = """phantom/1
name straight100
field 220 200
mm_per_px 0.1
root a
node a 20 100
node b 120 100
segment s0 a b
zone s0 proximal
radius s0 8 8
centerline s0 20,100 120,100
goal b end
"""

# symmetric Y: trunk along +x, children at exactly +-45 degrees
FORK_Y = """phantom/1
name fork
field 400 400
mm_per_px 0.1
root a
node a 40 200
node b 160 200
node up 260 100
node dn 260 300
segment s0 a b
zone s0 proximal
radius s0 8 8
centerline s0 40,200 160,200
segment s1 b up
zone s1 proximal
radius s1 6 5
centerline s1 160,200 210,150 260,100
segment s2 b dn
zone s2 proximal
radius s2 6 5
centerline s2 160,200 210,250 260,300
goal up top
goal dn bottom
"""

# trunk continues almost straight (5 deg), side branch at 60 deg
FORK_MAIN_SIDE = """phantom/1
name mainside
field 400 400
mm_per_px 0.1
root a
node a 40 200
node b 160 200
node m 280 210
node s 220 304
segment s0 a b
zone s0 proximal
radius s0 8 8
centerline s0 40,200 160,200
segment s1 b m
zone s1 proximal
radius s1 7 6
centerline s1 160,200 220,205 280,210
segment s2 b s
zone s2 proximal
radius s2 5 4
centerline s2 160,200 190,252 220,304
goal m main
goal s side
"""


@pytest.fixture(scope="session")
def tree():
    return load_bundled()


@pytest.fixture(scope="session")
def straight160():
    return parse_phantom(STRAIGHT_160)


@pytest.fixture(scope="session")
def straight100():
    return parse_phantom(STRAIGHT_100)


@pytest.fixture(scope="session")
def fork_y():
    return parse_phantom(FORK_Y)


@pytest.fixture(scope="session")
def fork_main_side():
    return parse_phantom(FORK_MAIN_SIDE)


@pytest.fixture()
def prox_env(tree):
    return NavigationEnv(tree, active_zones=("proximal",))


@pytest.fixture()
def full_env(tree):
    return NavigationEnv(tree, active_zones=("proximal", "medial", "distal"))


def tiny_agent_config(**overrides) -> AgentConfig:
    """Shrunk network for fast agent tests."""
    defaults = dict(frame_hw=28, conv_spec=((8, 5, 2), (8, 3, 1)), hidden=32,
                    buffer_size=512, batch_size=8)
    defaults.update(overrides)
    return AgentConfig(**defaults)


def random_obs(rng: np.random.Generator, hw: int = 28, stack: int = 4):
    from gwnav.env import Observation
    return Observation(tuple(rng.integers(0, 255, (hw, hw), dtype=np.uint8)
                             for _ in range(stack)))
