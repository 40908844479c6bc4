"""
Scenes and planning problems
============================

Compose a few procedural scenes, check that their assets do not overlap,
then sample start and goal configurations on them.
"""

# %%
import numpy as np

from mpforge.robot import ee_transform, load_robot
from mpforge.rng import make_rng
from mpforge.scenegen.compose import CONTACT_TOL, deepest_contact, generate_scene, world_from_scene
from mpforge.scenegen.problems import SamplingFailure, sample_problem

robot = load_robot()

# %% A scene is a table plus up to five articulated assets, shifted apart until they clear.
for seed in range(5):
    scene = generate_scene(seed, max_assets=5)
    names = [a.category.value for a in scene.assets]
    worst = max(
        (deepest_contact(a.cuboids, b.cuboids)[0] for i, a in enumerate(scene.assets) for b in scene.assets[:i]),
        default=0.0,
    )
    print(f"seed {seed}: {names}, shifts {scene.shift_iterations}, deepest overlap {worst:.1e} m (tol {CONTACT_TOL})")

# %% Problems pair a start and a goal; each is "free" (EE in open space) or "tight" (EE inside an asset).
for seed in range(8):
    scene = generate_scene(seed, max_assets=2)
    world = world_from_scene(scene)
    try:
        p = sample_problem(scene, make_rng(seed, 1), world, robot)
    except SamplingFailure as err:
        print(f"seed {seed}: skipped ({err})")
        continue
    ee = ee_transform(robot.chain, p.g)[:3, 3]
    held = p.attached.kind if p.attached else "nothing"
    print(f"seed {seed}: {p.q0_class} -> {p.g_class}, holding {held}, goal EE at {np.round(ee, 3)}")
