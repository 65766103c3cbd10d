import math

import numpy as np
import pytest

from planarmin.construct import run_construction
from planarmin.field import builtin
from planarmin.flow import integrate

# Van der Pol (mu = 1) period from scripts/vdp_period_oracle.py
# (scipy DOP853, rtol = atol = 1e-12, section x = 0 with y > 0).
T_VDP = 6.663286859323193
# 0.3 * max |x(t) - (2, 0)| over [0, 50] from (2, 0), same oracle run.
D_VDP_FROM_2_0 = 1.2271685230932077


def star_polygon(rng: np.random.Generator, n: int, with_center: bool = False):
    """Simple polygon: sorted distinct angles, positive radii about a random centre."""
    n = max(n, 3)
    while True:
        th = np.sort(rng.uniform(0, 2 * math.pi, n))
        gaps = np.diff(np.append(th, th[0] + 2 * math.pi))
        # every gap below pi keeps the centre inside and the polygon simple
        if gaps.min() > 1e-9 and gaps.max() < math.pi * (1 - 1e-6):
            break
    r = rng.uniform(0.2, 2.0, n)
    c = rng.uniform(-5, 5, 2)
    V = np.column_stack([c[0] + r * np.cos(th), c[1] + r * np.sin(th)])
    return (V, c) if with_center else V


@pytest.fixture(scope="session")
def center_trace():
    f = builtin("center")
    return run_construction(f, (1.0, 0.0), 6, t_probe=2 * math.pi)


@pytest.fixture(scope="session")
def vdp_seed():
    pre = integrate(builtin("vdp"), (0.1, 0.0), 50.0, 1e-10)
    return pre.at(50.0)


@pytest.fixture(scope="session")
def vdp_trace(vdp_seed):
    return run_construction(builtin("vdp"), vdp_seed, 8, t_probe=50.0)
