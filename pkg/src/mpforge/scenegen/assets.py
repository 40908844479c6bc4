"""Parametric cuboid-compound assets.

Each category builds its parts in an asset-local frame: origin at the centre
of the footprint on the supporting surface, ``+z`` up, ``y`` across the
width, and the opening facing ``-x``. The placement transform then puts the
asset in the world so that the opening faces the robot at the origin.

Parameter ranges follow the data-generation hyper-parameter table. Cubby
entries are given there as ``[centre, half-range]`` pairs and are expanded
into ``[centre - half, centre + half]`` here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .. import transforms as tf
from ..geometry import Cuboid


class AssetCategory(str, enum.Enum):
    SHELF = "shelf"
    CUBBY = "cubby"
    MICROWAVE = "microwave"
    DISHWASHER = "dishwasher"
    OPEN_BOX = "open_box"
    CABINET = "cabinet"


def _centered(c: float, h: float) -> tuple[float, float]:
    return (round(c - h, 10), round(c + h, 10))


# (low, high, integer?) per parameter
PARAM_RANGES: dict[AssetCategory, dict[str, tuple]] = {
    AssetCategory.SHELF: {
        "width": (0.5, 1.0, False),
        "depth": (0.2, 0.5, False),
        "height": (0.5, 1.2, False),
        "num_boards": (3, 5, True),
        "board_thickness": (0.02, 0.05, False),
        "backboard_thickness": (0.0, 0.05, False),
        "num_vertical_boards": (0, 3, True),
        "num_side_columns": (0, 4, True),
        "column_thickness": (0.02, 0.05, False),
        "position_x": (0.0, 0.8, False),
        "position_y": (-0.6, 0.6, False),
        "z_rotation": (-1.57, 0.0, False),
    },
    AssetCategory.OPEN_BOX: {
        "width": (0.2, 0.7, False),
        "depth": (0.2, 0.7, False),
        "height": (0.3, 0.5, False),
        "thickness": (0.02, 0.06, False),
        "front_scale": (0.6, 1.0, False),
        "position_x": (0.0, 0.8, False),
        "position_y": (-0.6, 0.6, False),
        "z_rotation": (-1.57, 0.0, False),
    },
    AssetCategory.CUBBY: {
        "left": (*_centered(0.4, 0.1), False),
        "right": (*_centered(-0.4, 0.1), False),
        "top": (*_centered(0.85, 0.35), False),
        "bottom": (*_centered(0.0, 0.1), False),
        "front": (*_centered(0.8, 0.1), False),
        "width": (*_centered(0.35, 0.2), False),
        "horizontal_board_z_shift": (*_centered(0.45, 0.1), False),
        "vertical_board_y_shift": (*_centered(0.0, 0.1), False),
        "board_thickness": (*_centered(0.02, 0.01), False),
        "external_rotation": (0.0, 1.57, False),
        "internal_rotation": (0.0, 0.5, False),
        "num_shelves": (3, 5, True),
    },
    AssetCategory.MICROWAVE: {
        "width": (0.3, 0.6, False),
        "depth": (0.3, 0.6, False),
        "height": (0.3, 0.6, False),
        "thickness": (0.01, 0.02, False),
        "display_panel_width": (0.05, 0.15, False),
        "distance": (0.5, 0.8, False),
        "external_z_rotation": (-2.36, -0.79, False),
        "internal_z_rotation": (-0.15, 0.15, False),
        "door_angle": (0.0, 1.57, False),
    },
    AssetCategory.DISHWASHER: {
        "width": (0.4, 0.6, False),
        "depth": (0.3, 0.4, False),
        "height": (0.5, 0.7, False),
        "control_panel_height": (0.1, 0.2, False),
        "foot_panel_height": (0.1, 0.2, False),
        "wall_thickness": (0.01, 0.02, False),
        "opening_angle": (0.5, 1.57, False),
        "distance": (0.6, 1.0, False),
        "external_z_rotation": (-2.36, -0.79, False),
        "internal_z_rotation": (-0.15, 0.15, False),
    },
    AssetCategory.CABINET: {
        "width": (0.5, 0.8, False),
        "depth": (0.25, 0.4, False),
        "height": (0.6, 1.0, False),
        "wall_thickness": (0.01, 0.02, False),
        "left_opening_angle": (0.7, 1.57, False),
        "right_opening_angle": (0.7, 1.57, False),
        "drawer_opening": (0.0, 0.30, False),
        "distance": (0.6, 1.0, False),
        "external_z_rotation": (-2.36, -0.79, False),
        "internal_z_rotation": (-0.15, 0.15, False),
    },
}

# parameters that are not in the hyper-parameter table (articulation states)
EXTRA_PARAMS = {(AssetCategory.MICROWAVE, "door_angle"), (AssetCategory.CABINET, "drawer_opening")}

_TOL = 1e-9


@dataclass(frozen=True)
class AssetParams:
    category: AssetCategory
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def in_range(self) -> bool:
        return not self.violations()

    def violations(self) -> list[str]:
        bad = []
        ranges = PARAM_RANGES[self.category]
        if set(ranges) != set(self.values):
            bad.append("parameter names differ from the category's table block")
        for name, (lo, hi, integer) in ranges.items():
            v = self.values.get(name)
            if v is None:
                continue
            if integer and int(v) != v:
                bad.append(f"{name} must be an integer")
            if not (lo - _TOL <= v <= hi + _TOL):
                bad.append(f"{name}={v} outside [{lo}, {hi}]")
        return bad


def sample_params(category: AssetCategory, rng) -> AssetParams:
    values = {}
    for name, (lo, hi, integer) in PARAM_RANGES[category].items():
        values[name] = int(rng.integers(lo, hi + 1)) if integer else float(rng.uniform(lo, hi))
    return AssetParams(AssetCategory(category), values)


@dataclass(frozen=True)
class Articulation:
    name: str
    parts: tuple  # indices into Asset.parts
    kind: str  # "hinge" | "prismatic"
    axis: tuple
    origin: tuple  # a point on the hinge axis (local frame)
    lower: float
    upper: float
    value: float

    def transform(self, value: float | None = None) -> np.ndarray:
        v = self.value if value is None else value
        axis = np.asarray(self.axis, dtype=float)
        if self.kind == "prismatic":
            return tf.make_transform(translation=axis * v)
        o = np.asarray(self.origin, dtype=float)
        R = tf.axis_angle_matrices(axis, np.array([v]))[0]
        return tf.make_transform(R, o - R @ o)


@dataclass(frozen=True)
class Region:
    """Named interior sampling volume in the asset frame.

    ``approach`` is the local direction along which the gripper enters.
    ``articulation`` names a joint the region moves with (drawer interiors).
    """

    name: str
    box: Cuboid
    approach: tuple = (1.0, 0.0, 0.0)
    articulation: str | None = None


@dataclass(frozen=True, eq=False)
class Asset:
    category: AssetCategory
    params: AssetParams
    placement: np.ndarray  # world pose of the asset frame from the sampled params
    parts: tuple  # local Cuboids with articulations at zero
    part_names: tuple
    articulations: tuple = ()
    regions: tuple = ()
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))  # accumulated placement shift

    @property
    def pose(self) -> np.ndarray:
        return tf.translation(*self.offset) @ self.placement

    def articulation_map(self) -> dict[int, np.ndarray]:
        out = {}
        for art in self.articulations:
            T = art.transform()
            for i in art.parts:
                out[i] = T
        return out

    def local_cuboids(self) -> list[Cuboid]:
        arts = self.articulation_map()
        return [p.moved(arts[i]) if i in arts else p for i, p in enumerate(self.parts)]

    @property
    def cuboids(self) -> list[Cuboid]:
        P = self.pose
        return [c.moved(P) for c in self.local_cuboids()]

    def world_regions(self) -> list[Region]:
        P = self.pose
        arts = {a.name: a for a in self.articulations}
        out = []
        for r in self.regions:
            T = P @ arts[r.articulation].transform() if r.articulation else P
            approach = tuple((T[:3, :3] @ np.asarray(r.approach)).tolist())
            out.append(Region(r.name, r.box.moved(T), approach, r.articulation))
        return out

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = zip(*(c.aabb() for c in self.cuboids))
        return np.min(lo, axis=0), np.max(hi, axis=0)

    def shifted(self, delta) -> "Asset":
        return replace(self, offset=self.offset + np.asarray(delta, dtype=float))

    def part(self, name: str) -> Cuboid:
        return self.parts[self.part_names.index(name)]

    def with_part(self, name: str, cuboid: Cuboid) -> "Asset":
        parts = list(self.parts)
        parts[self.part_names.index(name)] = cuboid
        return replace(self, parts=tuple(parts))


# ----------------------------------------------------------------------------
# builders


def slab(x0, x1, y0, y1, z0, z1) -> Cuboid:
    """Axis-aligned local cuboid from its bounds."""
    c = [(x0 + x1) / 2, (y0 + y1) / 2, (z0 + z1) / 2]
    h = [(x1 - x0) / 2, (y1 - y0) / 2, (z1 - z0) / 2]
    return Cuboid(tf.translation(*c), np.array(h))


def bounds(c: Cuboid) -> np.ndarray:
    """``[[x0, x1], [y0, y1], [z0, z1]]`` of an axis-aligned local cuboid."""
    return np.stack([c.center - c.half_extents, c.center + c.half_extents], axis=1)


class _Builder:
    def __init__(self):
        self.parts, self.names, self.arts, self.regions = [], [], [], []

    def add(self, name, cuboid) -> int:
        self.parts.append(cuboid)
        self.names.append(name)
        return len(self.parts) - 1

    def region(self, name, x0, x1, y0, y1, z0, z1, approach=(1.0, 0.0, 0.0), articulation=None):
        if x1 - x0 > 1e-6 and y1 - y0 > 1e-6 and z1 - z0 > 1e-6:
            self.regions.append(Region(name, slab(x0, x1, y0, y1, z0, z1), approach, articulation))

    def asset(self, params, placement) -> Asset:
        return Asset(
            category=params.category,
            params=params,
            placement=placement,
            parts=tuple(self.parts),
            part_names=tuple(self.names),
            articulations=tuple(self.arts),
            regions=tuple(self.regions),
        )


def _xy_placement(p, table_z):
    return tf.make_transform(tf.rot_z(p["z_rotation"]), (p["position_x"], p["position_y"], table_z))


def _polar_placement(p, table_z):
    # the external angle is measured from the -y axis of the robot frame, so
    # its table range [-2.36, -0.79] spans the sector in front of the robot
    phi = p["external_z_rotation"] + np.pi / 2
    return (
        tf.make_transform(tf.rot_z(phi))
        @ tf.translation(p["distance"], 0.0, table_z)
        @ tf.make_transform(tf.rot_z(p["internal_z_rotation"]))
    )


def shelf_board_heights(p) -> np.ndarray:
    tb, H, nb = p["board_thickness"], p["height"], p["num_boards"]
    return tb / 2 + np.arange(nb) * (H - tb) / (nb - 1)


def _build_shelf(p, table_z) -> Asset:
    W, D, H = p["width"], p["depth"], p["height"]
    tb, tbb, tc = p["board_thickness"], p["backboard_thickness"], p["column_thickness"]
    b = _Builder()
    b.add("side_left", slab(-D / 2, D / 2, -W / 2, -W / 2 + tb, 0, H))
    b.add("side_right", slab(-D / 2, D / 2, W / 2 - tb, W / 2, 0, H))
    back = D / 2 - tbb if tbb >= 0.005 else D / 2
    if tbb >= 0.005:
        b.add("backboard", slab(back, D / 2, -W / 2, W / 2, 0, H))
    zs = shelf_board_heights(p)
    for i, z in enumerate(zs):
        b.add(f"board_{i}", slab(-D / 2, back, -W / 2 + tb, W / 2 - tb, z - tb / 2, z + tb / 2))
    nv = p["num_vertical_boards"]
    ys = [-W / 2 + (j + 1) * W / (nv + 1) for j in range(nv)]
    for j, y in enumerate(ys):
        b.add(f"vertical_{j}", slab(-D / 2, back, y - tb / 2, y + tb / 2, tb, H - tb))
    corners = [(-D / 2, -1), (-D / 2, 1), (D / 2 - tc, -1), (D / 2 - tc, 1)]
    for k in range(p["num_side_columns"]):
        x0, side = corners[k]
        y0 = -W / 2 - tc if side < 0 else W / 2
        b.add(f"column_{k}", slab(x0, x0 + tc, y0, y0 + tc, 0, H))
    edges = [-W / 2 + tb] + [y for y in ys] + [W / 2 - tb]
    for i in range(len(zs) - 1):
        for j in range(len(edges) - 1):
            y0 = edges[j] + (tb / 2 if j > 0 else 0)
            y1 = edges[j + 1] - (tb / 2 if j + 1 < len(edges) - 1 else 0)
            b.region(f"gap_{i}_{j}", -D / 2, back, y0, y1, zs[i] + tb / 2, zs[i + 1] - tb / 2)
    return b.asset(p, _xy_placement(p, table_z))


def _build_open_box(p, table_z) -> Asset:
    W, D, H, t = p["width"], p["depth"], p["height"], p["thickness"]
    b = _Builder()
    b.add("bottom", slab(-D / 2, D / 2, -W / 2, W / 2, 0, t))
    b.add("wall_back", slab(D / 2 - t, D / 2, -W / 2, W / 2, t, H))
    b.add("wall_left", slab(-D / 2 + t, D / 2 - t, -W / 2, -W / 2 + t, t, H))
    b.add("wall_right", slab(-D / 2 + t, D / 2 - t, W / 2 - t, W / 2, t, H))
    b.add("wall_front", slab(-D / 2, -D / 2 + t, -W / 2, W / 2, t, t + p["front_scale"] * (H - t)))
    b.region("interior", -D / 2 + t, D / 2 - t, -W / 2 + t, W / 2 - t, t, H, approach=(0.0, 0.0, -1.0))
    return b.asset(p, _xy_placement(p, table_z))


def cubby_layout(p) -> dict:
    """Derived cubby geometry: depth/width bounds, board heights, divider position."""
    tb = p["board_thickness"]
    bottom = max(p["bottom"], 0.0)
    top = p["top"]
    n_mid = p["num_shelves"] - 2
    lo_mid, hi_mid = bottom + tb + 0.08, top - tb - 0.08
    first = float(np.clip(p["horizontal_board_z_shift"], lo_mid, hi_mid))
    mids = [first] + list(np.linspace(first, top - tb, n_mid + 1)[1:-1]) if n_mid > 1 else [first]
    width_y = p["left"] - p["right"]
    y_div = float(np.clip(p["vertical_board_y_shift"], -width_y / 2 + 2 * tb, width_y / 2 - 2 * tb))
    return dict(bottom=bottom, top=top, mids=mids, depth=p["width"], width=width_y, y_div=y_div)


def _build_cubby(p, table_z) -> Asset:
    tb = p["board_thickness"]
    L = cubby_layout(p)
    D, W, z0, z1 = L["depth"], L["width"], L["bottom"], L["top"]
    b = _Builder()
    b.add("wall_left", slab(-D / 2, D / 2, -W / 2, -W / 2 + tb, z0, z1))
    b.add("wall_right", slab(-D / 2, D / 2, W / 2 - tb, W / 2, z0, z1))
    b.add("back", slab(D / 2 - tb, D / 2, -W / 2 + tb, W / 2 - tb, z0, z1))
    b.add("board_bottom", slab(-D / 2, D / 2 - tb, -W / 2 + tb, W / 2 - tb, z0, z0 + tb))
    b.add("board_top", slab(-D / 2, D / 2 - tb, -W / 2 + tb, W / 2 - tb, z1 - tb, z1))
    for i, z in enumerate(L["mids"]):
        b.add(f"board_mid_{i}", slab(-D / 2, D / 2 - tb, -W / 2 + tb, W / 2 - tb, z, z + tb))
    yd = L["y_div"]
    b.add("divider", slab(-D / 2, D / 2 - tb, yd - tb / 2, yd + tb / 2, z0 + tb, z1 - tb))
    levels = [z0 + tb] + [z + tb for z in L["mids"]]
    ceilings = list(L["mids"]) + [z1 - tb]
    for i, (a, c) in enumerate(zip(levels, ceilings)):
        b.region(f"cell_{i}_0", -D / 2, D / 2 - tb, -W / 2 + tb, yd - tb / 2, a, c)
        b.region(f"cell_{i}_1", -D / 2, D / 2 - tb, yd + tb / 2, W / 2 - tb, a, c)
    cx = p["front"] + D / 2
    cy = (p["left"] + p["right"]) / 2
    placement = (
        tf.make_transform(tf.rot_z(p["external_rotation"]))
        @ tf.translation(cx, cy, table_z)
        @ tf.make_transform(tf.rot_z(p["internal_rotation"]))
    )
    return b.asset(p, placement)


def _build_microwave(p, table_z) -> Asset:
    W, D, H, t, pw = p["width"], p["depth"], p["height"], p["thickness"], p["display_panel_width"]
    b = _Builder()
    b.add("bottom", slab(-D / 2, D / 2, -W / 2, W / 2, 0, t))
    b.add("top", slab(-D / 2, D / 2, -W / 2, W / 2, H - t, H))
    b.add("wall_left", slab(-D / 2, D / 2, -W / 2, -W / 2 + t, 0, H))
    b.add("wall_right", slab(-D / 2, D / 2, W / 2 - t, W / 2, 0, H))
    b.add("wall_back", slab(D / 2 - t, D / 2, -W / 2, W / 2, 0, H))
    yc = W / 2 - t - pw
    b.add("display_panel", slab(-D / 2, D / 2 - t, yc, W / 2 - t, t, H - t))
    door = b.add("door", slab(-D / 2 - t, -D / 2, -W / 2, yc, 0, H))
    b.arts.append(Articulation("door", (door,), "hinge", (0.0, 0.0, 1.0), (-D / 2, -W / 2, 0.0), 0.0, np.pi, p["door_angle"]))
    b.region("cavity", -D / 2, D / 2 - t, -W / 2 + t, yc, t, H - t)
    return b.asset(p, _polar_placement(p, table_z))


def _build_dishwasher(p, table_z) -> Asset:
    W, D, H, t = p["width"], p["depth"], p["height"], p["wall_thickness"]
    fh, ch = p["foot_panel_height"], p["control_panel_height"]
    b = _Builder()
    b.add("wall_left", slab(-D / 2, D / 2, -W / 2, -W / 2 + t, 0, H))
    b.add("wall_right", slab(-D / 2, D / 2, W / 2 - t, W / 2, 0, H))
    b.add("wall_back", slab(D / 2 - t, D / 2, -W / 2 + t, W / 2 - t, 0, H))
    b.add("top", slab(-D / 2, D / 2 - t, -W / 2 + t, W / 2 - t, H - t, H))
    b.add("foot_panel", slab(-D / 2, D / 2 - t, -W / 2 + t, W / 2 - t, 0, fh))
    b.add("control_panel", slab(-D / 2, -D / 2 + t, -W / 2 + t, W / 2 - t, H - ch, H - t))
    door = b.add("door", slab(-D / 2 - t, -D / 2, -W / 2, W / 2, fh, H - ch))
    b.arts.append(
        Articulation("door", (door,), "hinge", (0.0, -1.0, 0.0), (-D / 2, 0.0, fh), 0.0, np.pi / 2, p["opening_angle"])
    )
    b.region("cavity", -D / 2 + t, D / 2 - t, -W / 2 + t, W / 2 - t, fh, H - ch)
    return b.asset(p, _polar_placement(p, table_z))


def _build_cabinet(p, table_z) -> Asset:
    W, D, H, t = p["width"], p["depth"], p["height"], p["wall_thickness"]
    dh = 0.15 * H
    z_split = H - t - dh - t  # top face of the lower compartment
    b = _Builder()
    b.add("wall_left", slab(-D / 2, D / 2, -W / 2, -W / 2 + t, 0, H))
    b.add("wall_right", slab(-D / 2, D / 2, W / 2 - t, W / 2, 0, H))
    b.add("wall_back", slab(D / 2 - t, D / 2, -W / 2 + t, W / 2 - t, 0, H))
    b.add("top", slab(-D / 2, D / 2 - t, -W / 2 + t, W / 2 - t, H - t, H))
    b.add("bottom", slab(-D / 2, D / 2 - t, -W / 2 + t, W / 2 - t, 0, t))
    b.add("drawer_rail", slab(-D / 2, D / 2 - t, -W / 2 + t, W / 2 - t, z_split, z_split + t))
    z_mid = 0.5 * (t + z_split)
    b.add("shelf", slab(-D / 2, D / 2 - t, -W / 2 + t, W / 2 - t, z_mid - t / 2, z_mid + t / 2))
    # drawer box, slides out along -x
    y0, y1 = -W / 2 + t + 0.005, W / 2 - t - 0.005
    dz0, dz1 = z_split + t + 0.005, H - t - 0.005
    dx0, dx1 = -D / 2 - t, D / 2 - t - 0.01
    drawer = [
        b.add("drawer_front", slab(dx0, -D / 2, -W / 2, W / 2, z_split + t, H - t)),
        b.add("drawer_bottom", slab(-D / 2, dx1, y0, y1, dz0, dz0 + t)),
        b.add("drawer_left", slab(-D / 2, dx1, y0, y0 + t, dz0, dz1)),
        b.add("drawer_right", slab(-D / 2, dx1, y1 - t, y1, dz0, dz1)),
        b.add("drawer_back", slab(dx1 - t, dx1, y0, y1, dz0, dz1)),
    ]
    b.arts.append(Articulation("drawer", tuple(drawer), "prismatic", (-1.0, 0.0, 0.0), (0.0, 0.0, 0.0), 0.0, 0.30, p["drawer_opening"]))
    left = b.add("door_left", slab(-D / 2 - t, -D / 2, -W / 2, 0.0, 0, z_split))
    right = b.add("door_right", slab(-D / 2 - t, -D / 2, 0.0, W / 2, 0, z_split))
    b.arts.append(Articulation("door_left", (left,), "hinge", (0.0, 0.0, 1.0), (-D / 2, -W / 2, 0.0), 0.0, np.pi, p["left_opening_angle"]))
    b.arts.append(Articulation("door_right", (right,), "hinge", (0.0, 0.0, -1.0), (-D / 2, W / 2, 0.0), 0.0, np.pi, p["right_opening_angle"]))
    b.region("lower_cell", -D / 2, D / 2 - t, -W / 2 + t, W / 2 - t, t, z_mid - t / 2)
    b.region("upper_cell", -D / 2, D / 2 - t, -W / 2 + t, W / 2 - t, z_mid + t / 2, z_split)
    b.region("drawer", -D / 2 + t, dx1 - t, y0 + t, y1 - t, dz0 + t, dz1, approach=(0.0, 0.0, -1.0), articulation="drawer")
    return b.asset(p, _polar_placement(p, table_z))


BUILDERS = {
    AssetCategory.SHELF: _build_shelf,
    AssetCategory.OPEN_BOX: _build_open_box,
    AssetCategory.CUBBY: _build_cubby,
    AssetCategory.MICROWAVE: _build_microwave,
    AssetCategory.DISHWASHER: _build_dishwasher,
    AssetCategory.CABINET: _build_cabinet,
}


def build_asset(params: AssetParams, table_z: float = 0.0) -> Asset:
    return BUILDERS[params.category](params, table_z)


def generate_asset(category, rng, table_z: float = 0.0) -> tuple[AssetParams, Asset]:
    """Draw parameters uniformly from the category's ranges and build the asset."""
    params = sample_params(AssetCategory(category), rng)
    return params, build_asset(params, table_z)


# ----------------------------------------------------------------------------
# category constraints


def _close(a, b, tol=1e-6) -> bool:
    return abs(a - b) <= tol


def _inside(inner: np.ndarray, outer: np.ndarray, axes=(0, 1, 2), tol=1e-6) -> bool:
    return all(inner[k, 0] >= outer[k, 0] - tol and inner[k, 1] <= outer[k, 1] + tol for k in axes)


def _has_hinge(asset: Asset, name: str, part: str) -> Articulation | None:
    for art in asset.articulations:
        if art.name == name and art.kind == "hinge" and asset.part_names.index(part) in art.parts:
            return art
    return None


def _art_in_range(asset: Asset) -> bool:
    return all(a.lower - _TOL <= a.value <= a.upper + _TOL for a in asset.articulations)


def _check_shelf(a: Asset) -> bool:
    p = a.params
    H, D, tb = p["height"], p["depth"], p["board_thickness"]
    sides = [bounds(a.part("side_left")), bounds(a.part("side_right"))]
    if not all(_close(s[2, 1] - s[2, 0], H) for s in sides):
        return False
    frame = np.array([[-D / 2, D / 2], [sides[0][1, 1], sides[1][1, 0]], [0.0, H]])
    boards = [bounds(c) for c, n in zip(a.parts, a.part_names) if n.startswith("board_")]
    if len(boards) != p["num_boards"] or not 3 <= len(boards) <= 5:
        return False
    if not all(_inside(bb, frame) and _close(bb[2, 1] - bb[2, 0], tb) for bb in boards):
        return False
    z = sorted(bb[2, 0] for bb in boards)
    if np.any(np.diff(z) <= tb):
        return False
    verticals = [bounds(c) for c, n in zip(a.parts, a.part_names) if n.startswith("vertical_")]
    return len(verticals) == p["num_vertical_boards"] and all(_inside(v, frame) for v in verticals)


def _check_open_box(a: Asset) -> bool:
    p = a.params
    H, t = p["height"], p["thickness"]
    walls = {n: bounds(a.part(n)) for n in ("wall_back", "wall_left", "wall_right")}
    if len(a.parts) != 5 or not all(_close(w[2, 1], H) for w in walls.values()):
        return False
    front = bounds(a.part("wall_front"))
    if not _close(front[2, 1] - t, p["front_scale"] * (H - t)):
        return False
    floor = bounds(a.part("bottom"))
    return all(_inside(w, floor, axes=(0, 1)) for w in [*walls.values(), front])


def _check_cubby(a: Asset) -> bool:
    walls = [bounds(a.part(n)) for n in ("wall_left", "wall_right", "back")]
    if not (_close(walls[0][2, 0], walls[1][2, 0]) and _close(walls[0][2, 1], walls[1][2, 1])):
        return False
    frame = np.array([[walls[0][0, 0], walls[0][0, 1]], [walls[0][1, 1], walls[1][1, 0]], walls[0][2]])
    inner = [bounds(c) for c, n in zip(a.parts, a.part_names) if n.startswith("board") or n == "divider"]
    tb = a.params["board_thickness"]
    thick_ok = all(_close(min(np.diff(b, axis=1).ravel()), tb) for b in inner)
    return thick_ok and all(_inside(b, frame) for b in inner)


def _check_microwave(a: Asset) -> bool:
    walls = [bounds(a.part(n)) for n in ("wall_left", "wall_right", "wall_back")]
    if not all(_close(w[2, 0], walls[0][2, 0]) and _close(w[2, 1], walls[0][2, 1]) for w in walls):
        return False
    if not _close(walls[0][2, 1], a.params["height"]):
        return False
    hinge = _has_hinge(a, "door", "door")
    if hinge is None:
        return False
    door = bounds(a.part("door"))
    on_edge = _close(hinge.origin[1], door[1, 0]) and _close(hinge.origin[0], door[0, 1])
    return on_edge and _art_in_range(a)


def _check_dishwasher(a: Asset) -> bool:
    walls = [bounds(a.part(n)) for n in ("wall_left", "wall_right", "wall_back")]
    if not all(_close(w[2, 1], a.params["height"]) and _close(w[2, 0], 0.0) for w in walls):
        return False
    hinge = _has_hinge(a, "door", "door")
    if hinge is None:
        return False
    door = bounds(a.part("door"))
    return _close(hinge.origin[2], door[2, 0]) and _close(hinge.origin[0], door[0, 1]) and _art_in_range(a)


def _check_cabinet(a: Asset) -> bool:
    walls = [bounds(a.part(n)) for n in ("wall_left", "wall_right", "wall_back")]
    if not all(_close(w[2, 1], a.params["height"]) and _close(w[2, 0], 0.0) for w in walls):
        return False
    for side, part in (("door_left", "door_left"), ("door_right", "door_right")):
        hinge = _has_hinge(a, side, part)
        if hinge is None:
            return False
        door = bounds(a.part(part))
        edge = door[1, 0] if side == "door_left" else door[1, 1]
        if not (_close(hinge.origin[1], edge) and _close(hinge.origin[0], door[0, 1])):
            return False
    frame = np.array([[-np.inf, np.inf], [walls[0][1, 1], walls[1][1, 0]], [0, a.params["height"]]])
    drawer = [bounds(a.part(n)) for n in ("drawer_bottom", "drawer_left", "drawer_right", "drawer_back")]
    return all(_inside(d, frame) for d in drawer) and _art_in_range(a)


CHECKS = {
    AssetCategory.SHELF: _check_shelf,
    AssetCategory.OPEN_BOX: _check_open_box,
    AssetCategory.CUBBY: _check_cubby,
    AssetCategory.MICROWAVE: _check_microwave,
    AssetCategory.DISHWASHER: _check_dishwasher,
    AssetCategory.CABINET: _check_cabinet,
}


def constraint_check(asset: Asset) -> bool:
    """Category predicate: equal wall heights, boards inside frames, hinged doors at edges, ranges."""
    if not asset.params.in_range():
        return False
    return CHECKS[asset.category](asset)
