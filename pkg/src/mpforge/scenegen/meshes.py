"""Triangle meshes: Wavefront OBJ I/O and the bundled everyday-object library.

The bundled library is a set of procedurally modelled household shapes
(mugs, bottles, bowls, books, ...) written as OBJ files. Every mesh is
normalised so that its longest side is 1 m, it is centred in x/y, and it
rests on ``z = 0``; scenes scale it by the sampled scale factor.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    name: str
    vertices: np.ndarray  # (n, 3)
    faces: np.ndarray  # (m, 3) int

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    @property
    def extents(self) -> np.ndarray:
        return np.ptp(self.vertices, axis=0)

    def to_obj(self) -> str:
        lines = [f"o {self.name}"]
        lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in self.vertices.tolist()]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.faces.tolist()]
        return "\n".join(lines) + "\n"

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.to_obj().encode()).hexdigest()

    def normalized(self) -> "TriangleMesh":
        v = self.vertices - np.array([*(0.5 * (self.vertices.min(0) + self.vertices.max(0)))[:2], self.vertices[:, 2].min()])
        v = v / np.max(np.ptp(v, axis=0))
        return TriangleMesh(self.name, v, self.faces)


def parse_obj(text: str, name: str = "mesh") -> TriangleMesh:
    """Minimal OBJ reader: ``v`` and ``f`` records, polygons fan-triangulated."""
    verts, faces = [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "o" and len(parts) > 1:
            name = parts[1]
        elif parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise ValueError(f"OBJ {name!r} has no geometry")
    return TriangleMesh(name, np.array(verts, dtype=float), np.array(faces, dtype=int))


def load_obj(path) -> TriangleMesh:
    path = Path(path)
    return parse_obj(path.read_text(), path.stem)


# ----------------------------------------------------------------------------
# procedural primitives


def _revolve(profile, segments: int = 24, cap_bottom=True, cap_top=True):
    """Surface of revolution about z from an ``(r, z)`` profile polyline."""
    profile = np.asarray(profile, dtype=float)
    t = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    rings = []
    for r, z in profile:
        rings.append(np.stack([r * np.cos(t), r * np.sin(t), np.full_like(t, z)], axis=1))
    verts = list(np.concatenate(rings))
    faces = []
    for i in range(len(profile) - 1):
        a0, b0 = i * segments, (i + 1) * segments
        for j in range(segments):
            j2 = (j + 1) % segments
            faces.append([a0 + j, a0 + j2, b0 + j2])
            faces.append([a0 + j, b0 + j2, b0 + j])
    if cap_bottom and profile[0, 0] > 0:
        c = len(verts)
        verts.append([0, 0, profile[0, 1]])
        faces += [[c, (j + 1) % segments, j] for j in range(segments)]
    if cap_top and profile[-1, 0] > 0:
        c = len(verts)
        verts.append([0, 0, profile[-1, 1]])
        base = (len(profile) - 1) * segments
        faces += [[c, base + j, base + (j + 1) % segments] for j in range(segments)]
    return np.array(verts), np.array(faces)


def _box(sx, sy, sz, center=(0, 0, 0)):
    c = np.array(center, dtype=float)
    v = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)]) * [sx / 2, sy / 2, sz / 2] + c
    f = [
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
        [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
    ]
    return v, np.array(f)


def _torus(R, r, center=(0, 0, 0), axis="y", n=20, m=10):
    u = np.linspace(0, 2 * np.pi, n, endpoint=False)
    w = np.linspace(0, 2 * np.pi, m, endpoint=False)
    uu, ww = np.meshgrid(u, w, indexing="ij")
    x = (R + r * np.cos(ww)) * np.cos(uu)
    y = (R + r * np.cos(ww)) * np.sin(uu)
    z = r * np.sin(ww)
    v = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    if axis == "y":
        v = v[:, [0, 2, 1]]
    v = v + np.asarray(center, dtype=float)
    f = []
    for i in range(n):
        for j in range(m):
            a, b = i * m + j, ((i + 1) % n) * m + j
            c, d = ((i + 1) % n) * m + (j + 1) % m, i * m + (j + 1) % m
            f += [[a, b, c], [a, c, d]]
    return v, np.array(f)


def _icosphere(r=0.5, center=(0, 0, 0.5), subdiv=2):
    p = (1 + 5**0.5) / 2
    v = [[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0], [0, -1, p], [0, 1, p],
         [0, -1, -p], [0, 1, -p], [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    v = [np.array(x, dtype=float) / np.linalg.norm(x) for x in v]
    for _ in range(subdiv):
        cache, nf = {}, []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = v[a] + v[b]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        f = nf
    return np.array(v) * r + np.asarray(center, dtype=float), np.array(f)


def _merge(*parts):
    verts, faces, off = [], [], 0
    for v, f in parts:
        verts.append(v)
        faces.append(f + off)
        off += len(v)
    return np.concatenate(verts), np.concatenate(faces)


def _library_shapes():
    cyl = lambda r, h, z0=0.0, seg=24: _revolve([(r, z0), (r, z0 + h)], seg)  # noqa: E731
    return {
        "mug": _merge(cyl(0.35, 0.9), _torus(0.22, 0.06, center=(0.45, 0, 0.45))),
        "cup": _revolve([(0.3, 0), (0.42, 1.0)]),
        "bowl": _revolve([(0.25, 0), (0.45, 0.12), (0.55, 0.3), (0.6, 0.45)]),
        "plate": cyl(0.5, 0.06),
        "bottle": _revolve([(0.2, 0), (0.2, 0.6), (0.08, 0.8), (0.08, 1.0)]),
        "wine_bottle": _revolve([(0.15, 0), (0.15, 0.55), (0.05, 0.75), (0.05, 1.0)]),
        "can": cyl(0.22, 0.6),
        "jar": _revolve([(0.3, 0), (0.33, 0.5), (0.25, 0.65), (0.25, 0.75)]),
        "vase": _revolve([(0.18, 0), (0.35, 0.35), (0.2, 0.8), (0.27, 1.0)]),
        "flower_pot": _revolve([(0.3, 0), (0.42, 0.7)]),
        "traffic_cone": _merge(_box(1.0, 1.0, 0.05, (0, 0, 0.025)), _revolve([(0.35, 0.05), (0.05, 1.0)])),
        "ball": _icosphere(),
        "cereal_box": _box(0.7, 0.25, 1.0, (0, 0, 0.5)),
        "book": _box(0.75, 1.0, 0.15, (0, 0, 0.075)),
        "comic_stack": _merge(_box(0.7, 1.0, 0.1, (0, 0, 0.05)), _box(0.65, 0.95, 0.1, (0.03, 0.02, 0.15))),
        "shoe_box": _box(1.0, 0.55, 0.35, (0, 0, 0.175)),
        "record_player": _merge(_box(1.0, 0.8, 0.2, (0, 0, 0.1)), cyl(0.3, 0.03, 0.2)),
        "cap": _merge(_revolve([(0.45, 0), (0.4, 0.2), (0.2, 0.35), (0.01, 0.4)]), _box(0.5, 0.6, 0.02, (0.4, 0, 0.01))),
        "toy_car": _merge(_box(1.0, 0.45, 0.25, (0, 0, 0.175)), _box(0.5, 0.4, 0.18, (-0.05, 0, 0.39)),
                          cyl(0.1, 0.04, 0.0), ),
        "lamp": _merge(cyl(0.25, 0.05), cyl(0.04, 0.7, 0.05), _revolve([(0.35, 0.65), (0.18, 1.0)])),
    }


def build_library() -> list[TriangleMesh]:
    return [TriangleMesh(k, v.astype(float), f.astype(int)).normalized() for k, (v, f) in _library_shapes().items()]


def write_library(directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for mesh in build_library():
        p = directory / f"{mesh.name}.obj"
        p.write_text(mesh.to_obj())
        out.append(p)
    return out


def bundled_library() -> list[TriangleMesh]:
    """The shipped everyday-object meshes, sorted by name."""
    root = resources.files("mpforge.data").joinpath("meshes")
    meshes = [parse_obj(p.read_text(), p.name[:-4]) for p in root.iterdir() if p.name.endswith(".obj")]
    return sorted(meshes, key=lambda m: m.name)


def load_library(directory=None) -> list[TriangleMesh]:
    if directory is None:
        return bundled_library()
    return sorted((load_obj(p) for p in Path(directory).glob("*.obj")), key=lambda m: m.name)
