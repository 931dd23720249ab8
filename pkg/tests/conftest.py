import os

import numpy as np
import pytest

from varfsi.bodies import BodySystem, BoundaryMesh, RigidBody2D
from varfsi.grid import BoundarySpec, FluidProperties, GridConfig, build_grid

SEED = 20240611
_CRITERIA = pytest.StashKey[list]()


def pytest_collection_modifyitems(config, items):
    if os.environ.get("VARFSI_PAPER_SCALE") == "1":
        return
    skip = pytest.mark.skip(reason="paper-scale run; set VARFSI_PAPER_SCALE=1")
    for item in items:
        if "paper_scale" in item.keywords:
            item.add_marker(skip)


def pytest_configure(config):
    config.stash[_CRITERIA] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one ``PASS``/``FAIL`` line for an acceptance criterion, then assert it."""

    def record(name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        request.config.stash[_CRITERIA].append(line)
        print(line)
        assert passed, line

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


def periodic_grid(n=8, L=1.0, mu=0.0, rho=1.0):
    cfg = GridConfig(n, n, L / n, L / n, left=BoundarySpec.periodic(), right=BoundarySpec.periodic(),
                     bottom=BoundarySpec.periodic(), top=BoundarySpec.periodic())
    return build_grid(cfg, FluidProperties(rho, mu))


def channel_grid(n=8, L=1.0, mu=0.05, U=1.0):
    """Inflow left/top/bottom, outflow right."""
    cfg = GridConfig(n, n, L / n, L / n, left=BoundarySpec.inflow(U), right=BoundarySpec.outflow(),
                     bottom=BoundarySpec.inflow(U), top=BoundarySpec.inflow(U))
    return build_grid(cfg, FluidProperties(1.0, mu))


def box_grid(n=8, L=1.0, mu=0.05):
    return build_grid(GridConfig(n, n, L / n, L / n), FluidProperties(1.0, mu))


def free_disc(center=(0.5, 0.5), radius=0.15, n_seg=10, velocity=(0.0, 0.0, 0.0)):
    m = np.pi * radius**2
    return BodySystem([RigidBody2D(m, 0.5 * m * radius**2, (*center, 0.0), velocity)],
                      [BoundaryMesh.circle(radius, n_seg)])
