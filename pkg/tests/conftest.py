import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "mpforge", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("mpforge")


@pytest.fixture(scope="session")
def robot():
    from mpforge.robot import load_robot

    return load_robot()


@pytest.fixture(scope="session")
def library():
    from mpforge.scenegen.meshes import bundled_library

    return bundled_library()


@pytest.fixture(scope="session")
def solved(robot):
    """A small scene, a sampled problem and its exact expert plan."""
    from mpforge.planner import PlanStatus, plan
    from mpforge.rng import make_rng
    from mpforge.scenegen.compose import generate_scene, world_from_scene
    from mpforge.scenegen.problems import SamplingFailure, sample_problem

    for seed in range(50):
        scene = generate_scene(seed, 2)
        world = world_from_scene(scene)
        try:
            problem = sample_problem(scene, make_rng(seed, 1), world, robot)
        except SamplingFailure:
            continue
        result = plan(problem, world, robot, make_rng(seed, 2), budget=None, max_connect_iters=3000)
        if result.status == PlanStatus.EXACT and len(result.path) > 2:
            return scene, world, problem, result
    raise RuntimeError("no solvable fixture problem in 50 seeds")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance(capsys):
    """Record one acceptance line; shown live and again in the terminal summary."""

    def record(criterion, ok, detail):
        line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: (len(s.split(":")[0]), s)):
            terminalreporter.write_line(line)
