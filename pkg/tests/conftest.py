import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mapprior._alloctune import tune_malloc
from mapprior.vector_core import ElementType, VectorMap, make_instance
from mapprior.vector_core import compute_directions

tune_malloc()


@pytest.fixture
def two_lane_map() -> VectorMap:
    """Two straight dividers and a boundary, 5 points each."""
    xs = (-1.5, 1.5, 4.0)
    types = (ElementType.LANE_DIVIDER, ElementType.LANE_DIVIDER,
             ElementType.ROAD_BOUNDARY)
    insts = []
    for x, t in zip(xs, types):
        pts = [(x, y) for y in np.linspace(-20.0, 20.0, 5)]
        insts.append(compute_directions(make_instance(pts, t)))
    return VectorMap(tuple(insts), frame="ego", source_tag="ground_truth")
