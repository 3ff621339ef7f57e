"""Shape features from the ROI mask.

The surface mesh is a marching-cubes isosurface at 0.5 of the zero-padded
mask, sampled at voxel centres, so every vertex sits at an edge midpoint.
The case table is generated at import time: on each cube face the inside
corners are joined by segments, with diagonal (ambiguous) faces resolved by
keeping the two inside corners separate. Neighbouring cubes see the same
face pattern and resolve it identically, so the mesh is closed. Polygons
with more than three vertices are fanned from their centroid.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ..volume import MaskROI
from .names import qualified
from .vector import FeatureVector

CORNERS = np.array([(b & 1, (b >> 1) & 1, (b >> 2) & 1) for b in range(8)], dtype=np.float64)
EDGES = [(a, b) for a, b in itertools.combinations(range(8), 2) if bin(a ^ b).count("1") == 1]
EDGE_INDEX = {frozenset(e): n for n, e in enumerate(EDGES)}
EDGE_MID = np.array([(CORNERS[a] + CORNERS[b]) / 2 for a, b in EDGES])


def _faces():
    """Corner cycles of the six cube faces, counter-clockwise seen from outside."""
    faces = []
    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        for side in (0, 1):
            cycle = []
            for cu, cv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                c = [0, 0, 0]
                c[axis], c[u], c[v] = side, cu, cv
                cycle.append(c[0] + 2 * c[1] + 4 * c[2])
            faces.append(cycle if side == 1 else cycle[::-1])
    return faces


FACES = _faces()


def cube_polygons(config: int):
    """Surface polygons (lists of edge indices) for one corner configuration."""
    inside = [(config >> b) & 1 for b in range(8)]
    nxt = {}
    for cyc in FACES:
        flags = [inside[c] for c in cyc]
        for m in range(4):
            # a run of inside corners starts at m
            if flags[m] and not flags[m - 1]:
                entry = EDGE_INDEX[frozenset((cyc[m - 1], cyc[m]))]
                e = m
                while flags[(e + 1) % 4]:
                    e += 1
                exit_ = EDGE_INDEX[frozenset((cyc[e % 4], cyc[(e + 1) % 4]))]
                nxt[exit_] = entry
    polys = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        polys.append(loop)
    return polys


def _fan(points: np.ndarray) -> list:
    if len(points) == 3:
        return [points]
    c = points.mean(axis=0)
    k = len(points)
    return [np.array([c, points[m], points[(m + 1) % k]]) for m in range(k)]


def _build_table():
    table = []
    for config in range(256):
        tris = []
        for loop in cube_polygons(config):
            tris.extend(_fan(EDGE_MID[loop]))
        arr = np.array(tris, dtype=np.float64).reshape(-1, 3, 3)
        table.append(arr)
    # orient so that triangles face away from the inside corners
    t = table[1][0]
    normal = np.cross(t[1] - t[0], t[2] - t[0])
    if np.dot(normal, t.mean(axis=0) - CORNERS[0]) < 0:
        table = [a[:, ::-1, :].copy() for a in table]
    return table


TRIANGLE_TABLE = _build_table()


def _cube_configs(padded: np.ndarray) -> np.ndarray:
    m = padded.astype(np.int64)
    nx, ny, nz = m.shape
    cfg = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for b, (x, y, z) in enumerate(CORNERS.astype(int)):
        cfg |= m[x : nx - 1 + x, y : ny - 1 + y, z : nz - 1 + z] << b
    return cfg


def mesh_triangles(voxels: np.ndarray, spacing) -> np.ndarray:
    """All surface triangles in physical coordinates, shape ``(T, 3, 3)``.

    Coordinates are relative to the centre of the mask's bounding box.
    """
    nz = np.nonzero(voxels)
    lo = np.array([a.min() for a in nz])
    hi = np.array([a.max() for a in nz]) + 1
    box = voxels[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
    padded = np.pad(box, 1)
    cfg = _cube_configs(padded)
    centre = (np.array(padded.shape) - 1) / 2.0
    sp = np.asarray(spacing, dtype=np.float64)
    out = []
    for c in np.unique(cfg):
        if c == 0 or c == 255:
            continue
        origins = np.argwhere(cfg == c).astype(np.float64) - centre
        tris = TRIANGLE_TABLE[c]
        verts = (origins[:, None, None, :] + tris[None, :, :, :]) * sp
        out.append(verts.reshape(-1, 3, 3))
    return np.concatenate(out)


def mesh_volume_area(tris: np.ndarray):
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    volume = float(np.sum(np.einsum("ij,ij->i", v0, np.cross(v1, v2)))) / 6.0
    area = float(np.sum(np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1))) / 2.0
    return volume, area


def surface_voxels(voxels: np.ndarray) -> np.ndarray:
    """Indices of mask voxels with at least one 6-neighbour outside the mask."""
    p = np.pad(voxels, 1)
    core = p[1:-1, 1:-1, 1:-1]
    interior = core.copy()
    for axis in range(3):
        for step in (-1, 1):
            interior &= np.roll(p, step, axis=axis)[1:-1, 1:-1, 1:-1]
    return np.argwhere(core & ~interior)


def _max_pairwise(points: np.ndarray, chunk: int = 2048) -> float:
    if len(points) < 2:
        return 0.0
    if len(points) > 64:
        try:
            points = points[ConvexHull(points).vertices]
        except (QhullError, ValueError):
            pass
    best = 0.0
    for s in range(0, len(points), chunk):
        blk = points[s : s + chunk]
        d2 = np.sum((blk[:, None, :] - points[None, :, :]) ** 2, axis=-1)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


def _max_planar(points: np.ndarray, idx: np.ndarray, axis: int) -> float:
    best = 0.0
    keys = idx[:, axis]
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    pts = points[order]
    bounds = np.flatnonzero(np.diff(keys)) + 1
    for grp in np.split(pts, bounds):
        planar = np.delete(grp, axis, axis=1)
        best = max(best, _max_pairwise(planar))
    return best


def extract_shape(mask: MaskROI, spacing=None) -> FeatureVector:
    mask.require_nonempty()
    spacing = tuple(mask.spacing if spacing is None else spacing)
    vox = mask.voxels
    sp = np.asarray(spacing, dtype=np.float64)
    n = int(vox.sum())
    flags = set()

    tris = mesh_triangles(vox, sp)
    mesh_vol, area = mesh_volume_area(tris)

    coords = np.argwhere(vox) * sp
    centred = coords - coords.mean(axis=0)
    cov = centred.T @ centred / n
    lam = np.clip(np.linalg.eigvalsh(cov), 0.0, None)  # ascending
    least, minor, major = lam
    if major > 0:
        elong = np.sqrt(minor / major)
        flat = np.sqrt(least / major)
    else:
        elong = flat = 1.0
        flags |= {"Elongation", "Flatness"}

    surf_idx = surface_voxels(vox)
    surf = surf_idx * sp
    vals = {
        "Elongation": float(elong),
        "Flatness": float(flat),
        "LeastAxisLength": float(4 * np.sqrt(least)),
        "MajorAxisLength": float(4 * np.sqrt(major)),
        "Maximum2DDiameterColumn": _max_planar(surf, surf_idx, 1),
        "Maximum2DDiameterRow": _max_planar(surf, surf_idx, 0),
        "Maximum2DDiameterSlice": _max_planar(surf, surf_idx, 2),
        "Maximum3DDiameter": _max_pairwise(surf),
        "MeshVolume": mesh_vol,
        "MinorAxisLength": float(4 * np.sqrt(minor)),
        "Sphericity": float((36 * np.pi * mesh_vol**2) ** (1.0 / 3.0) / area),
        "SurfaceArea": area,
        "SurfaceVolumeRatio": area / mesh_vol,
        "VoxelVolume": n * float(np.prod(sp)),
    }
    return FeatureVector(
        {qualified("shape", k): v for k, v in vals.items()},
        frozenset(qualified("shape", k) for k in flags),
    )
