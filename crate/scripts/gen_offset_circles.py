"""Generate the bundled offset-circles mesh (msh2d format).

Force-based point smoothing (DistMesh style) on the disk of radius 1 with a
hole of radius 0.1 centred at (0.5, 0). Boundary vertices are placed exactly
on the circles and kept fixed. Outer-circle vertices come first so that the
outer boundary component is detected with marker 1.

    python3 scripts/gen_offset_circles.py crates/core/data/offset_circles_coarse.msh2d
"""
import sys

import numpy as np
from scipy.spatial import Delaunay

R1, R2, CX, CY = 1.0, 0.1, 0.5, 0.0
N_OUTER, N_INNER = 84, 28
H_MIN, H_MAX, GROWTH = 0.024, 0.081, 0.35


def sdist(p):
    d1 = np.hypot(p[:, 0], p[:, 1]) - R1
    d2 = np.hypot(p[:, 0] - CX, p[:, 1] - CY) - R2
    return np.maximum(d1, -d2)


def hsize(p):
    d2 = np.hypot(p[:, 0] - CX, p[:, 1] - CY) - R2
    return np.minimum(H_MIN + GROWTH * np.maximum(d2, 0.0), H_MAX)


def fixed_points():
    to = 2 * np.pi * np.arange(N_OUTER) / N_OUTER
    ti = 2 * np.pi * np.arange(N_INNER) / N_INNER
    outer = np.c_[R1 * np.cos(to), R1 * np.sin(to)]
    inner = np.c_[CX + R2 * np.cos(ti), CY + R2 * np.sin(ti)]
    return np.vstack([outer, inner])


def main(path):
    rng = np.random.default_rng(7)
    pfix = fixed_points()
    nfix = len(pfix)
    h0 = H_MIN
    xs = np.arange(-1, 1 + h0, h0)
    ys = np.arange(-1, 1 + h0, h0 * np.sqrt(3) / 2)
    X, Y = np.meshgrid(xs, ys)
    X[1::2, :] += h0 / 2
    p = np.c_[X.ravel(), Y.ravel()]
    p = p[sdist(p) < -0.3 * h0]
    r0 = 1.0 / hsize(p) ** 2
    p = p[rng.random(len(p)) < r0 / r0.max()]
    p = np.vstack([pfix, p])

    dt, fscale = 0.2, 1.2
    for it in range(400):
        tri = Delaunay(p).simplices
        cen = p[tri].mean(axis=1)
        tri = tri[sdist(cen) < -1e-3 * h0]
        bars = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]])
        bars = np.unique(np.sort(bars, axis=1), axis=0)
        vec = p[bars[:, 0]] - p[bars[:, 1]]
        L = np.hypot(vec[:, 0], vec[:, 1])
        hb = hsize((p[bars[:, 0]] + p[bars[:, 1]]) / 2)
        L0 = hb * fscale * np.sqrt((L ** 2).sum() / (hb ** 2).sum())
        F = np.maximum(L0 - L, 0)
        Fvec = (F / L)[:, None] * vec
        Ftot = np.zeros_like(p)
        np.add.at(Ftot, bars[:, 0], Fvec)
        np.add.at(Ftot, bars[:, 1], -Fvec)
        Ftot[:nfix] = 0
        p = p + dt * Ftot
        # project escaped points back inside
        d = sdist(p)
        out = d > 0
        if out.any():
            eps = 1e-8
            q = p[out]
            dgx = (sdist(q + [eps, 0]) - d[out]) / eps
            dgy = (sdist(q + [0, eps]) - d[out]) / eps
            p[out] = q - np.c_[d[out] * dgx, d[out] * dgy]
        p[:nfix] = pfix
        # drop interior points that drifted onto the boundary
        keep = np.ones(len(p), bool)
        keep[nfix:] = sdist(p[nfix:]) < -0.25 * hsize(p[nfix:])
        p = p[keep]

    tri = Delaunay(p).simplices
    cen = p[tri].mean(axis=1)
    tri = tri[sdist(cen) < -1e-3 * h0]
    # orient counterclockwise
    a = p[tri[:, 1]] - p[tri[:, 0]]
    b = p[tri[:, 2]] - p[tri[:, 0]]
    area = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    tri[area < 0] = tri[area < 0][:, [0, 2, 1]]
    used = np.unique(tri)
    assert len(used) == len(p), "unused vertices"

    nv = len(p)
    edges = np.unique(np.sort(np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]]), axis=1), axis=0)
    ne = len(edges)
    print(f"vertices {nv} triangles {len(tri)} edges {ne} taylor-hood dofs {2 * (nv + ne) + nv}", file=sys.stderr)
    with open(path, "w", newline="\n") as f:
        f.write("msh2d 1\n")
        f.write(f"vertices {nv}\n")
        for x, y in p:
            f.write(f"{float(x)!r} {float(y)!r}\n")
        f.write(f"triangles {len(tri)}\n")
        for t in tri:
            f.write(f"{t[0]} {t[1]} {t[2]}\n")


if __name__ == "__main__":
    main(sys.argv[1])
