#!/usr/bin/env python3
"""Generates the bundled test meshes and synthetic intensity files.

Outputs OBJ meshes into data/meshes/:
  tetra, icosahedron, icosphere1..3, blob (stretched icosphere),
  blob_decimated (irregular tessellation of the same blob surface),
  stress_highvalence (UV sphere with valence-40 poles),
  blobfam0..4 (five distinct tessellations of one blob surface)
plus per-vertex intensity files for the cap densities.

Deterministic: fixed seeds, no timestamps.
"""

import math
import os
import numpy as np

OUT = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "meshes")


def write_obj(name, verts, faces):
    path = os.path.join(OUT, name + ".obj")
    with open(path, "w") as f:
        for v in verts:
            f.write("v %.17g %.17g %.17g\n" % (v[0], v[1], v[2]))
        for tri in faces:
            f.write("f %d %d %d\n" % (tri[0] + 1, tri[1] + 1, tri[2] + 1))
    print("wrote", path, len(verts), "verts", len(faces), "faces")


def validate(verts, faces, require_outward=True):
    verts = np.asarray(verts)
    edges = {}
    used = set()
    for fi, (a, b, c) in enumerate(faces):
        assert len({a, b, c}) == 3, "degenerate face"
        used.update((a, b, c))
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            edges[key] = edges.get(key, 0) + 1
    assert used == set(range(len(verts))), "isolated vertices"
    assert all(n == 2 for n in edges.values()), "non-manifold or boundary edge"
    chi = len(verts) - len(edges) + len(faces)
    assert chi == 2, f"euler characteristic {chi}"
    if require_outward:
        for a, b, c in faces:
            n = np.cross(verts[b] - verts[a], verts[c] - verts[a])
            centroid = (verts[a] + verts[b] + verts[c]) / 3.0
            assert np.dot(n, centroid) > 0, "face not outward (star-shaped check)"


def tetrahedron():
    s = 1.0 / math.sqrt(3.0)
    verts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) * s
    faces = [(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)]
    return verts, faces


def icosahedron():
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    raw = []
    for a, b in ((1, phi), (-1, phi), (1, -phi), (-1, -phi)):
        raw += [(0, a, b), (a, b, 0), (b, 0, a)]
    verts = np.array(raw, dtype=float)
    verts /= np.linalg.norm(verts[0])
    # faces by nearest-neighbor edge length
    from itertools import combinations
    edge_len = 2.0 / math.sqrt(phi * math.sqrt(5.0))
    tris = []
    for i, j, k in combinations(range(12), 3):
        d = [np.linalg.norm(verts[i] - verts[j]), np.linalg.norm(verts[j] - verts[k]),
             np.linalg.norm(verts[k] - verts[i])]
        if all(abs(x - edge_len) < 1e-9 for x in d):
            n = np.cross(verts[j] - verts[i], verts[k] - verts[i])
            c = (verts[i] + verts[j] + verts[k]) / 3.0
            tris.append((i, j, k) if np.dot(n, c) > 0 else (i, k, j))
    assert len(tris) == 20
    return verts, tris


def subdivide(verts, faces):
    verts = [np.array(v, dtype=float) for v in verts]
    midcache = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in midcache:
            m = verts[a] + verts[b]
            m /= np.linalg.norm(m)
            midcache[key] = len(verts)
            verts.append(m)
        return midcache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return np.array(verts), out


def icosphere(level):
    verts, faces = icosahedron()
    for _ in range(level):
        verts, faces = subdivide(verts, faces)
    return verts, faces


def blob_radius(d):
    """Smooth positive radial profile on unit directions (shared by all blob meshes)."""
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    return 1.0 + 0.3 * x * y + 0.25 * z ** 3 - 0.2 * x * z + 0.15 * y


def blob(verts_dirs):
    r = blob_radius(verts_dirs)
    pts = verts_dirs * r[:, None]
    return pts * np.array([1.25, 1.0, 0.85])  # anisotropic stretch


def fibonacci_dirs(n, seed):
    golden = math.pi * (3.0 - math.sqrt(5.0))
    i = np.arange(n)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(1.0 - z * z)
    th = golden * i
    dirs = np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return dirs @ q.T


def hull_faces(dirs):
    from scipy.spatial import ConvexHull
    hull = ConvexHull(dirs)
    faces = []
    for a, b, c in hull.simplices:
        n = np.cross(dirs[b] - dirs[a], dirs[c] - dirs[a])
        faces.append((a, b, c) if np.dot(n, dirs[a]) > 0 else (a, c, b))
    assert len({i for f in faces for i in f}) == len(dirs)
    return faces


def uv_sphere(n_lon, n_rows):
    verts = [np.array([0.0, 0.0, 1.0])]
    for j in range(1, n_rows):
        th = math.pi * j / n_rows
        for k in range(n_lon):
            ph = 2.0 * math.pi * k / n_lon
            verts.append(np.array([math.sin(th) * math.cos(ph),
                                   math.sin(th) * math.sin(ph), math.cos(th)]))
    south = len(verts)
    verts.append(np.array([0.0, 0.0, -1.0]))
    idx = lambda j, k: 1 + (j - 1) * n_lon + (k % n_lon)
    faces = []
    for k in range(n_lon):
        faces.append((0, idx(1, k), idx(1, k + 1)))
    for j in range(1, n_rows - 1):
        for k in range(n_lon):
            a, b = idx(j, k), idx(j, k + 1)
            c, d = idx(j + 1, k), idx(j + 1, k + 1)
            faces += [(a, c, d), (a, d, b)]
    for k in range(n_lon):
        faces.append((south, idx(n_rows - 1, k + 1), idx(n_rows - 1, k)))
    return np.array(verts), faces


def cap_intensity(dirs, axis, sigma):
    axis = np.asarray(axis, dtype=float)
    axis /= np.linalg.norm(axis)
    ang = np.arccos(np.clip(dirs @ axis, -1.0, 1.0))
    return np.exp(-0.5 * (ang / sigma) ** 2)


def write_intensity(name, values):
    path = os.path.join(OUT, name + ".txt")
    with open(path, "w") as f:
        for v in values:
            f.write("%.17g\n" % v)
    print("wrote", path, len(values), "values")


def main():
    os.makedirs(OUT, exist_ok=True)

    v, f = tetrahedron()
    validate(v, f)
    write_obj("tetra", v, f)

    v, f = icosahedron()
    validate(v, f)
    write_obj("icosahedron", v, f)

    for level in (1, 2, 3):
        v, f = icosphere(level)
        validate(v, f)
        write_obj("icosphere%d" % level, v, f)

    dirs, f = icosphere(3)
    v = blob(dirs)
    validate(v, f)
    write_obj("blob", v, f)

    dirs = fibonacci_dirs(420, seed=11)
    f = hull_faces(dirs)
    v = blob(dirs)
    validate(v, f)
    write_obj("blob_decimated", v, f)

    v, f = uv_sphere(40, 10)
    validate(v, f)
    write_obj("stress_highvalence", v, f)

    # Five distinct tessellations of one smooth blob surface, plus a shared
    # synthetic cap intensity evaluated at each mesh's own vertex directions.
    cap_axis = (0.3, -0.5, 0.8)
    for k in range(5):
        dirs = fibonacci_dirs(400 + 60 * k, seed=100 + k)
        f = hull_faces(dirs)
        r = blob_radius(dirs)
        v = dirs * r[:, None]
        validate(v, f)
        write_obj("blobfam%d" % k, v, f)
        write_intensity("blobfam%d_cap" % k, cap_intensity(dirs, cap_axis, 0.6))

    dirs, f = icosphere(2)
    write_intensity("icosphere2_cap", (cap_intensity(dirs, (0.0, 0.0, 1.0), 0.35) > 0.5).astype(float))


if __name__ == "__main__":
    main()
