"""Scene composition: table, non-penetrating assets and mesh objects.

New assets are shifted along the summed collision normals of the assets they
penetrate until they are clear, following the procedural composition loop.
Normals and depths come from a separating-axis test on oriented boxes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import transforms as tf
from ..collision import CollisionWorld, DEFAULT_MARGIN
from ..geometry import Cuboid
from .assets import AssetCategory, Asset, generate_asset
from .meshes import TriangleMesh

CONTACT_TOL = 1e-4
SHIFT_CLEARANCE = 0.01
KEEP_OUT_HALF = 0.22  # xy half-size of the column around the robot base kept free of assets
TABLE_NEAR_EDGE = 0.2

TABLE_RANGES = {
    "depth": (0.6, 1.0),
    "width": (1.0, 1.5),
    "thickness": (0.05, 0.15),
    "top_z": (-0.3, 0.3),
}

MESHES_PER_ASSET = (0, 3)
MESHES_ON_TABLE = (0, 5)
MESH_SCALE = (0.2, 0.4)


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Table:
    depth: float
    width: float
    thickness: float
    top_z: float

    @property
    def cuboid(self) -> Cuboid:
        c = (TABLE_NEAR_EDGE + self.depth / 2, 0.0, self.top_z - self.thickness / 2)
        return Cuboid(tf.translation(*c), np.array([self.depth / 2, self.width / 2, self.thickness / 2]))

    @property
    def cuboids(self) -> list[Cuboid]:
        return [self.cuboid]


def sample_table(rng) -> Table:
    return Table(**{k: float(rng.uniform(*v)) for k, v in TABLE_RANGES.items()})


@dataclass(frozen=True, eq=False)
class MeshObject:
    mesh: TriangleMesh
    pose: np.ndarray
    scale: float
    host: int = -1  # asset index, -1 for the table
    region: str = "table"

    @property
    def triangles(self) -> np.ndarray:
        v = tf.apply(self.pose, self.scale * self.mesh.vertices)
        return v[self.mesh.faces]

    @property
    def proxy(self) -> Cuboid:
        """Oriented bounding box in the mesh's own frame, used for placement tests."""
        v = self.scale * self.mesh.vertices
        lo, hi = v.min(axis=0), v.max(axis=0)
        half = np.maximum((hi - lo) / 2, 1e-6)
        return Cuboid(self.pose @ tf.translation(*((lo + hi) / 2)), half)


@dataclass(frozen=True, eq=False)
class Scene:
    seed: int
    table: Table
    assets: tuple = ()
    mesh_objects: tuple = ()
    shift_iterations: tuple = ()  # per kept asset
    discarded: int = 0

    def asset_cuboids(self) -> list[Cuboid]:
        return [c for a in self.assets for c in a.cuboids]

    def cuboids(self) -> list[Cuboid]:
        return self.table.cuboids + self.asset_cuboids()

    def regions(self) -> list:
        return [(i, r) for i, a in enumerate(self.assets) for r in a.world_regions()]


# ----------------------------------------------------------------------------
# separating-axis test on oriented boxes


class BoxSet:
    """Packed centres, rotations, half extents and AABBs of a list of cuboids."""

    def __init__(self, c, R, h):
        self.c, self.R, self.h = c, R, h
        r = np.einsum("nij,nj->ni", np.abs(R), h)
        self.lo, self.hi = c - r, c + r

    @classmethod
    def of(cls, cuboids) -> "BoxSet":
        c = np.array([b.center for b in cuboids]).reshape(-1, 3)
        R = np.array([b.rotation for b in cuboids]).reshape(-1, 3, 3)
        h = np.array([b.half_extents for b in cuboids]).reshape(-1, 3)
        return cls(c, R, h)

    def __len__(self) -> int:
        return len(self.c)

    def translated(self, delta) -> "BoxSet":
        return BoxSet(self.c + np.asarray(delta, dtype=float), self.R, self.h)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lo.min(axis=0), self.hi.max(axis=0)


def _sat_pairs(ca, Ra, ha, cb, Rb, hb) -> tuple[np.ndarray, np.ndarray]:
    """Row-paired SAT: depth ``(P,)`` and unit normal ``(P, 3)`` pushing box b out of box a."""
    ua = np.transpose(Ra, (0, 2, 1))  # rows are box axes
    ub = np.transpose(Rb, (0, 2, 1))
    cross = np.cross(ua[:, :, None, :], ub[:, None, :, :]).reshape(-1, 9, 3)
    axes = np.concatenate([ua, ub, cross], axis=1)  # (P, 15, 3)
    norm = np.linalg.norm(axes, axis=-1)
    valid = norm > 1e-9
    axes = axes / np.where(valid, norm, 1.0)[..., None]
    ra = (np.abs(axes @ Ra) * ha[:, None, :]).sum(-1)
    rb = (np.abs(axes @ Rb) * hb[:, None, :]).sum(-1)
    s = np.einsum("pkd,pd->pk", axes, cb - ca)
    overlap = np.where(valid, ra + rb - np.abs(s), np.inf)
    k = np.argmin(overlap, axis=1)
    rows = np.arange(len(k))
    sign = np.sign(s[rows, k])
    sign = np.where(sign == 0, 1.0, sign)
    return overlap[rows, k], axes[rows, k] * sign[:, None]


def obb_penetration(A, B) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise SAT penetration depth and unit normal pushing ``B[j]`` out of ``A[i]``.

    ``A`` and ``B`` are cuboid lists or :class:`BoxSet`. Returns
    ``depth (n, m)`` (non-positive when separated) and ``normal (n, m, 3)``.
    Pairs whose AABBs are apart get the AABB gap as a negative depth.
    """
    A = A if isinstance(A, BoxSet) else BoxSet.of(A)
    B = B if isinstance(B, BoxSet) else BoxSet.of(B)
    n, m = len(A), len(B)
    gap = np.maximum(A.lo[:, None] - B.hi[None], B.lo[None] - A.hi[:, None]).max(axis=-1)
    depth = np.minimum(-gap, 0.0)
    normal = np.zeros((n, m, 3))
    i, j = np.nonzero(gap < 0)
    if len(i):
        d, nrm = _sat_pairs(A.c[i], A.R[i], A.h[i], B.c[j], B.R[j], B.h[j])
        depth[i, j] = d
        normal[i, j] = nrm
    return depth, normal


def _aabb(cuboids) -> tuple[np.ndarray, np.ndarray]:
    return BoxSet.of(cuboids).bounds()


def _aabb_overlap(a, b, tol=CONTACT_TOL) -> bool:
    return bool(np.all(a[0] < b[1] - tol) and np.all(b[0] < a[1] - tol))


def deepest_contact(new, other) -> tuple[float, np.ndarray]:
    """Depth and normal (pointing from ``other`` into free space for ``new``) of the deepest pair."""
    new = new if isinstance(new, BoxSet) else BoxSet.of(new)
    other = other if isinstance(other, BoxSet) else BoxSet.of(other)
    if not len(new) or not len(other) or not _aabb_overlap(new.bounds(), other.bounds()):
        return 0.0, np.zeros(3)
    depth, normal = obb_penetration(other, new)
    i, j = np.unravel_index(np.argmax(depth), depth.shape)
    return float(depth[i, j]), normal[i, j]


def in_keep_out(cuboids: list[Cuboid], half: float = KEEP_OUT_HALF) -> bool:
    lo, hi = _aabb(cuboids)
    return bool(lo[0] < half and hi[0] > -half and lo[1] < half and hi[1] > -half)


def shift_direction(normals: list[np.ndarray], new_center, other_centers, rng) -> np.ndarray:
    """Horizontal unit direction from ``n = sum n_i``, with centre and random fallbacks."""
    n = np.sum(normals, axis=0)
    n[2] = 0.0
    if np.linalg.norm(n) < 1e-9:
        n = np.asarray(new_center, dtype=float) - np.mean(other_centers, axis=0)
        n[2] = 0.0
    if np.linalg.norm(n) < 1e-9:
        a = rng.uniform(0, 2 * np.pi)
        n = np.array([np.cos(a), np.sin(a), 0.0])
    return n / np.linalg.norm(n)


def resolve_penetration(asset: Asset, placed: list[Asset], rng, max_iters: int = 50, placed_boxes=None):
    """Shift ``asset`` until it clears every placed asset.

    Returns ``(asset, iterations)``; ``asset`` is None when ``max_iters`` shifts
    were not enough.
    """
    if placed_boxes is None:
        placed_boxes = [BoxSet.of(p.cuboids) for p in placed]
    base = BoxSet.of(asset.cuboids)
    moved = np.zeros(3)
    it = 0
    while True:
        cubes = base.translated(moved)
        normals, depths, centers = [], [], []
        for other, boxes in zip(placed, placed_boxes):
            d, n = deepest_contact(cubes, boxes)
            if d > CONTACT_TOL:
                normals.append(n)
                depths.append(d)
                centers.append(other.pose[:3, 3])
        if not normals:
            return (asset.shifted(moved) if it else asset), it
        if it >= max_iters:
            return None, it
        direction = shift_direction(normals, asset.pose[:3, 3] + moved, centers, rng)
        moved = moved + direction * (max(depths) + SHIFT_CLEARANCE)
        it += 1


def _draw_clear_asset(category, rng, table_z, attempts=20):
    for _ in range(attempts):
        _, asset = generate_asset(category, rng, table_z)
        if not in_keep_out(asset.cuboids):
            return asset
    return None


def compose_scene(
    rng,
    max_assets: int = 5,
    max_shift_iters: int = 50,
    seed: int = 0,
    categories=None,
    table: Table | None = None,
) -> Scene:
    """Procedurally compose a table and up to ``max_assets`` non-penetrating assets."""
    if max_assets < 1:
        raise ValueError("max_assets must be at least 1")
    cats = list(AssetCategory) if categories is None else [AssetCategory(c) for c in categories]
    table = sample_table(rng) if table is None else table
    k = int(rng.integers(1, max_assets + 1))
    placed, boxes, iters, discarded = [], [], [], 0
    for _ in range(k):
        cat = cats[int(rng.integers(len(cats)))]
        asset = _draw_clear_asset(cat, rng, table.top_z)
        if asset is not None:
            asset, n = resolve_penetration(asset, placed, rng, max_shift_iters, boxes)
        if asset is None or in_keep_out(asset.cuboids):
            discarded += 1
            continue
        placed.append(asset)
        boxes.append(BoxSet.of(asset.cuboids))
        iters.append(n)
    return Scene(seed=int(seed), table=table, assets=tuple(placed), shift_iterations=tuple(iters), discarded=discarded)


# ----------------------------------------------------------------------------
# mesh objects


def _fits(obj: MeshObject, region: Cuboid) -> bool:
    return bool(np.all(region.contains(obj.proxy.corners(), tol=1e-6)))


def _mesh_clear(obj: MeshObject, blockers: list[Cuboid]) -> tuple[bool, list, list]:
    """Whether the mesh proxy is clear of ``blockers``; otherwise the contact normals and depths."""
    if not blockers:
        return True, [], []
    depth, normal = obb_penetration(blockers, [obj.proxy])
    hit = depth[:, 0] > CONTACT_TOL
    return (not hit.any()), list(normal[hit, 0]), list(depth[hit, 0])


def _place_one(mesh, region_pose, region_half, host, region_name, blockers, rng, max_iters):
    """Drop one mesh onto the floor of a region and shift it clear of ``blockers``."""
    scale = float(rng.uniform(*MESH_SCALE))
    yaw = float(rng.uniform(-np.pi, np.pi))
    v = (scale * mesh.vertices) @ tf.rot_z(yaw).T
    lo, hi = v.min(axis=0), v.max(axis=0)
    room = region_half[:2] - (hi[:2] - lo[:2]) / 2
    if np.any(room < 0) or hi[2] - lo[2] > 2 * region_half[2]:
        return None
    xy = rng.uniform(-room, room) - (lo[:2] + hi[:2]) / 2
    local = tf.make_transform(tf.rot_z(yaw), (xy[0], xy[1], -region_half[2] - lo[2]))
    obj = MeshObject(mesh, region_pose @ local, scale, host, region_name)
    region = Cuboid(region_pose, region_half)
    for _ in range(max_iters + 1):
        if not _fits(obj, region):
            return None
        clear, normals, depths = _mesh_clear(obj, blockers)
        if clear:
            return obj
        d = shift_direction(normals, obj.pose[:3, 3], [obj.pose[:3, 3]], rng)
        obj = replace(obj, pose=tf.translation(*(d * (max(depths) + SHIFT_CLEARANCE))) @ obj.pose)
    return None


def place_mesh_objects(scene: Scene, library, rng, allow_empty: bool = True, max_shift_iters: int = 50) -> Scene:
    """Scatter library meshes inside asset regions (0-3 per asset) and on the table (0-5).

    Placements that leave their region or cannot be shifted clear of the
    scene within ``max_shift_iters`` are dropped.
    """
    library = list(library)
    if not library:
        if allow_empty:
            return scene
        raise ConfigurationError("mesh library is empty")
    blockers = scene.asset_cuboids()
    placed = []
    hosts = []
    for i, asset in enumerate(scene.assets):
        regions = asset.world_regions()
        count = int(rng.integers(MESHES_PER_ASSET[0], MESHES_PER_ASSET[1] + 1))
        hosts.append((i, regions, count))
    t = scene.table.cuboid
    tab_half = t.half_extents.copy()
    tab_half[2] = 0.5  # headroom above the table top
    table_region = (t.pose @ tf.translation(0, 0, t.half_extents[2] + 0.5), tab_half)
    n_table = int(rng.integers(MESHES_ON_TABLE[0], MESHES_ON_TABLE[1] + 1))
    jobs = [(i, regions[int(rng.integers(len(regions)))]) for i, regions, c in hosts if regions for _ in range(c)]
    jobs += [(-1, None)] * n_table
    for host, region in jobs:
        mesh = library[int(rng.integers(len(library)))]
        if region is None:
            pose, half, name = table_region[0], table_region[1], "table"
        else:
            pose, half, name = region.box.pose, region.box.half_extents, region.name
        obj = _place_one(mesh, pose, half, host, name, blockers + [p.proxy for p in placed], rng, max_shift_iters)
        if obj is not None and not in_keep_out([obj.proxy]):
            placed.append(obj)
    return replace(scene, mesh_objects=tuple(scene.mesh_objects) + tuple(placed))


def generate_scene(seed: int, max_assets: int = 5, library=None, max_shift_iters: int = 50, categories=None) -> Scene:
    """Compose a scene and scatter meshes from a single seed."""
    from ..rng import make_rng

    rng = make_rng(seed, 0)
    scene = compose_scene(rng, max_assets, max_shift_iters, seed=seed, categories=categories)
    if library is not None:
        scene = place_mesh_objects(scene, library, rng, max_shift_iters=max_shift_iters)
    return scene


def world_from_scene(scene: Scene, margin: float = DEFAULT_MARGIN, include_meshes: bool = True) -> CollisionWorld:
    tris = [m.triangles for m in scene.mesh_objects] if include_meshes else []
    tris = np.concatenate(tris) if tris else np.empty((0, 3, 3))
    return CollisionWorld(cuboids=scene.cuboids(), triangles=tris, margin=margin)
