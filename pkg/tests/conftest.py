import numpy as np
import pytest

from jenga.blocksworld import Block, BlockScene


def stack2() -> BlockScene:
    """A small block resting on a larger one."""
    return BlockScene(
        (
            Block("bottom", 40, 96, 20, 20, (200, 40, 40)),
            Block("top", 43, 80, 14, 16, (40, 90, 200)),
        )
    )


def chain3() -> BlockScene:
    return BlockScene(
        (
            Block("bottom", 60, 98, 18, 18, (200, 40, 40)),
            Block("middle", 61, 82, 16, 16, (40, 160, 60)),
            Block("top", 62, 68, 14, 14, (40, 90, 200)),
        )
    )


def bridge() -> BlockScene:
    """A slab across two pedestals."""
    return BlockScene(
        (
            Block("p1", 30, 100, 10, 16, (200, 40, 40)),
            Block("p2", 60, 100, 10, 16, (40, 160, 60)),
            Block("slab", 28, 94, 44, 6, (40, 90, 200)),
        )
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
