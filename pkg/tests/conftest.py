import pytest

from densityplan import DensityParams, Environment, Obstacle, PlannerConfig


@pytest.fixture
def corridor_env():
    """The shipped two-obstacle workspace: a corridor between sensing shells."""
    return Environment(
        workspace=(-5.0, -9.0, 15.0, 9.0),
        target=(10.0, 0.0),
        obstacles=(
            Obstacle((5.0, 4.25), 2.5, 3.0),
            Obstacle((5.0, -4.25), 2.5, 3.0),
        ),
    )


@pytest.fixture
def corridor_params():
    return DensityParams(alpha=0.2, blend_inner=0.2, blend_outer=0.6)


@pytest.fixture
def corridor_planner():
    return PlannerConfig(dt=0.01, convergence_eps=0.05, max_steps=200000)


@pytest.fixture
def single_obstacle_env():
    """One circle between start region and target; handy for hand-checked values."""
    return Environment(
        workspace=(-4.0, -4.0, 4.0, 4.0),
        target=(0.0, 0.0),
        obstacles=(Obstacle((3.0, 0.0), 1.0, 2.0),),
    )


@pytest.fixture
def free_env():
    """No obstacles at all; closed forms apply everywhere."""
    return Environment(workspace=(-4.0, -4.0, 4.0, 4.0), target=(0.0, 0.0), obstacles=())
