"""Shared test utilities: random primitives, surface samplers, brute force."""

import itertools

import numpy as np

from bevsim.geometry import Box, Capsule, Cylinder, Ellipsoid, Plane, Sphere

PRIMITIVE_KINDS = ("plane", "sphere", "box", "cylinder", "capsule", "ellipsoid")


def random_primitive(kind: str, rng: np.random.Generator):
    if kind == "plane":
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        return Plane(normal=n, offset=float(rng.uniform(-1.0, 1.0)))
    if kind == "sphere":
        return Sphere(radius=float(rng.uniform(0.3, 2.0)))
    if kind == "box":
        return Box(half_extents=rng.uniform(0.3, 1.5, size=3))
    if kind == "cylinder":
        return Cylinder(radius=float(rng.uniform(0.3, 1.5)), half_height=float(rng.uniform(0.3, 1.5)))
    if kind == "capsule":
        return Capsule(radius=float(rng.uniform(0.3, 1.0)), half_length=float(rng.uniform(0.3, 1.5)))
    if kind == "ellipsoid":
        return Ellipsoid(radii=rng.uniform(0.3, 2.0, size=3))
    raise ValueError(kind)


def sample_surface(geom, rng: np.random.Generator, n: int) -> np.ndarray:
    """n points on the primitive's surface (not necessarily uniform)."""
    if isinstance(geom, Sphere):
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d * geom.radius
    if isinstance(geom, Box):
        he = geom.half_extents
        pts = rng.uniform(-he, he, size=(n, 3))
        axis = rng.integers(0, 3, size=n)
        sign = rng.choice([-1.0, 1.0], size=n)
        pts[np.arange(n), axis] = sign * he[axis]
        return pts
    if isinstance(geom, Cylinder):
        r, hh = geom.radius, geom.half_height
        pts = np.empty((n, 3))
        side_area = 2 * np.pi * r * 2 * hh
        cap_area = 2 * np.pi * r**2
        on_side = rng.random(n) < side_area / (side_area + cap_area)
        phi = rng.uniform(0, 2 * np.pi, size=n)
        rr = r * np.sqrt(rng.random(n))
        pts[:, 0] = np.where(on_side, r * np.cos(phi), rr * np.cos(phi))
        pts[:, 1] = np.where(on_side, r * np.sin(phi), rr * np.sin(phi))
        pts[:, 2] = np.where(on_side, rng.uniform(-hh, hh, size=n), rng.choice([-hh, hh], size=n))
        return pts
    if isinstance(geom, Capsule):
        r, hl = geom.radius, geom.half_length
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        pts = d * r
        on_side = rng.random(n) < 0.5
        phi = rng.uniform(0, 2 * np.pi, size=n)
        side = np.column_stack((r * np.cos(phi), r * np.sin(phi), rng.uniform(-hl, hl, size=n)))
        caps = pts + np.column_stack((np.zeros(n), np.zeros(n), np.sign(pts[:, 2]) * hl))
        return np.where(on_side[:, None], side, caps)
    if isinstance(geom, Ellipsoid):
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d * geom.radii
    if isinstance(geom, Plane):
        # any orthonormal tangent basis
        n_vec = geom.normal
        t1 = np.cross(n_vec, [1.0, 0.0, 0.0])
        if np.linalg.norm(t1) < 1e-6:
            t1 = np.cross(n_vec, [0.0, 1.0, 0.0])
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n_vec, t1)
        a = rng.uniform(-5, 5, size=(n, 1))
        b = rng.uniform(-5, 5, size=(n, 1))
        return -geom.offset * n_vec + a * t1 + b * t2
    raise TypeError(type(geom).__name__)


def brute_force_assignment_cost(cost: np.ndarray) -> float:
    """Exhaustive minimum over all maximal assignments (min(N, M) <= 7)."""
    n, m = cost.shape
    best = np.inf
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            best = min(best, sum(cost[i, cols[i]] for i in range(n)))
    else:
        for rows in itertools.permutations(range(n), m):
            best = min(best, sum(cost[rows[j], j] for j in range(m)))
    return best


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR with positive diagonal."""
    a = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
