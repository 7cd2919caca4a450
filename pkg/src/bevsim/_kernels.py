"""numba kernels: analytic ray-primitive intersections and the scan loop.

Scalar intersection routines operate in the primitive's local frame and
return the smallest surface-crossing distance t > t_eps, or -1.0 for a
miss (a ray starting inside a solid hits its exit surface). The batch
kernel parallelizes over rays; every ray draws its noise from a
counter-based splitmix64 stream keyed by (seed, ray index), so results
do not depend on thread scheduling.

If numba is unavailable the module still works as plain Python, only
slower; the public API is unchanged.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


GEOM_PLANE = 0
GEOM_SPHERE = 1
GEOM_BOX = 2
GEOM_CYLINDER = 3
GEOM_CAPSULE = 4
GEOM_ELLIPSOID = 5


# --- scalar analytic intersections ------------------------------------------


@njit(cache=True, inline="always")
def _hit_plane(ox, oy, oz, dx, dy, dz, nx, ny, nz, d, t_eps):
    denom = nx * dx + ny * dy + nz * dz
    if abs(denom) < 1e-300:
        return -1.0
    t = -(nx * ox + ny * oy + nz * oz + d) / denom
    if t > t_eps:
        return t
    return -1.0


@njit(cache=True, inline="always")
def _hit_sphere(ox, oy, oz, dx, dy, dz, r, t_eps):
    # |d| = 1, so a = 1: t^2 + b t + c = 0
    b = ox * dx + oy * dy + oz * dz
    c = ox * ox + oy * oy + oz * oz - r * r
    disc = b * b - c
    if disc < 0.0:
        return -1.0
    s = math.sqrt(disc)
    t = -b - s
    if t > t_eps:
        return t
    t = -b + s
    if t > t_eps:
        return t
    return -1.0


@njit(cache=True, inline="always")
def _hit_box(ox, oy, oz, dx, dy, dz, hx, hy, hz, t_eps):
    # Slab method: intersect the per-axis parameter intervals.
    t_near = -1e300
    t_far = 1e300
    for axis in range(3):
        if axis == 0:
            o, d, h = ox, dx, hx
        elif axis == 1:
            o, d, h = oy, dy, hy
        else:
            o, d, h = oz, dz, hz
        if abs(d) < 1e-300:
            if abs(o) > h:
                return -1.0
        else:
            inv = 1.0 / d
            t0 = (-h - o) * inv
            t1 = (h - o) * inv
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > t_near:
                t_near = t0
            if t1 < t_far:
                t_far = t1
            if t_near > t_far:
                return -1.0
    if t_near > t_eps:
        return t_near
    if t_far > t_eps:
        return t_far
    return -1.0


@njit(cache=True, inline="always")
def _hit_cylinder(ox, oy, oz, dx, dy, dz, r, hh, t_eps):
    # Quadratic in the x-y plane for the side, disks for the caps.
    best = -1.0
    a = dx * dx + dy * dy
    if a > 1e-300:
        b = ox * dx + oy * dy
        c = ox * ox + oy * oy - r * r
        disc = b * b - a * c
        if disc >= 0.0:
            s = math.sqrt(disc)
            for sign in range(2):
                t = (-b - s) / a if sign == 0 else (-b + s) / a
                if t > t_eps and abs(oz + t * dz) <= hh:
                    if best < 0.0 or t < best:
                        best = t
    if abs(dz) > 1e-300:
        for cap in range(2):
            zc = hh if cap == 0 else -hh
            t = (zc - oz) / dz
            if t > t_eps:
                px = ox + t * dx
                py = oy + t * dy
                if px * px + py * py <= r * r:
                    if best < 0.0 or t < best:
                        best = t
    return best


@njit(cache=True, inline="always")
def _hit_capsule(ox, oy, oz, dx, dy, dz, r, hl, t_eps):
    # Cylinder body restricted to |z| <= hl plus two hemispherical caps.
    best = -1.0
    a = dx * dx + dy * dy
    if a > 1e-300:
        b = ox * dx + oy * dy
        c = ox * ox + oy * oy - r * r
        disc = b * b - a * c
        if disc >= 0.0:
            s = math.sqrt(disc)
            for sign in range(2):
                t = (-b - s) / a if sign == 0 else (-b + s) / a
                if t > t_eps and abs(oz + t * dz) <= hl:
                    if best < 0.0 or t < best:
                        best = t
    for cap in range(2):
        zc = hl if cap == 0 else -hl
        cz = oz - zc
        b = ox * dx + oy * dy + cz * dz
        c = ox * ox + oy * oy + cz * cz - r * r
        disc = b * b - c
        if disc < 0.0:
            continue
        s = math.sqrt(disc)
        for sign in range(2):
            t = -b - s if sign == 0 else -b + s
            if t > t_eps:
                z_hit = oz + t * dz
                on_cap = z_hit >= zc if cap == 0 else z_hit <= zc
                if on_cap and (best < 0.0 or t < best):
                    best = t
    return best


@njit(cache=True, inline="always")
def _hit_ellipsoid(ox, oy, oz, dx, dy, dz, ax, ay, az, t_eps):
    # Scale to unit-sphere space; t is unchanged by the scaling.
    sox, soy, soz = ox / ax, oy / ay, oz / az
    sdx, sdy, sdz = dx / ax, dy / ay, dz / az
    a = sdx * sdx + sdy * sdy + sdz * sdz
    b = sox * sdx + soy * sdy + soz * sdz
    c = sox * sox + soy * soy + soz * soz - 1.0
    disc = b * b - a * c
    if disc < 0.0:
        return -1.0
    s = math.sqrt(disc)
    t = (-b - s) / a
    if t > t_eps:
        return t
    t = (-b + s) / a
    if t > t_eps:
        return t
    return -1.0


@njit(cache=True, inline="always")
def intersect_local(gtype, ox, oy, oz, dx, dy, dz, p0, p1, p2, p3, t_eps):
    """Dispatch over geometry kind; returns t or -1.0."""
    if gtype == GEOM_PLANE:
        return _hit_plane(ox, oy, oz, dx, dy, dz, p0, p1, p2, p3, t_eps)
    if gtype == GEOM_SPHERE:
        return _hit_sphere(ox, oy, oz, dx, dy, dz, p0, t_eps)
    if gtype == GEOM_BOX:
        return _hit_box(ox, oy, oz, dx, dy, dz, p0, p1, p2, t_eps)
    if gtype == GEOM_CYLINDER:
        return _hit_cylinder(ox, oy, oz, dx, dy, dz, p0, p1, t_eps)
    if gtype == GEOM_CAPSULE:
        return _hit_capsule(ox, oy, oz, dx, dy, dz, p0, p1, t_eps)
    return _hit_ellipsoid(ox, oy, oz, dx, dy, dz, p0, p1, p2, t_eps)


# --- implicit surface functions (independent route, used by the marcher) ----


@njit(cache=True, inline="always")
def implicit_local(gtype, x, y, z, p0, p1, p2, p3):
    """Sign-correct implicit function: negative inside, zero on the surface."""
    if gtype == GEOM_PLANE:
        return p0 * x + p1 * y + p2 * z + p3
    if gtype == GEOM_SPHERE:
        return math.sqrt(x * x + y * y + z * z) - p0
    if gtype == GEOM_BOX:
        f = abs(x) - p0
        fy = abs(y) - p1
        fz = abs(z) - p2
        if fy > f:
            f = fy
        if fz > f:
            f = fz
        return f
    if gtype == GEOM_CYLINDER:
        radial = math.sqrt(x * x + y * y) - p0
        axial = abs(z) - p1
        return radial if radial > axial else axial
    if gtype == GEOM_CAPSULE:
        cz = z
        if cz > p1:
            cz = p1
        elif cz < -p1:
            cz = -p1
        dz = z - cz
        return math.sqrt(x * x + y * y + dz * dz) - p0
    return (x / p0) ** 2 + (y / p1) ** 2 + (z / p2) ** 2 - 1.0


@njit(cache=True)
def march_local(gtype, ox, oy, oz, dx, dy, dz, p0, p1, p2, p3, step, t_eps, t_max):
    """Brute-force first sign change of the implicit function, bisected.

    Scans t = t_eps, t_eps + step, ... and refines the first bracketing
    interval by bisection. Independent of the analytic solvers; intended
    as a test oracle.
    """
    t = t_eps
    f_prev = implicit_local(gtype, ox + t * dx, oy + t * dy, oz + t * dz, p0, p1, p2, p3)
    prev_pos = f_prev > 0.0
    while t < t_max:
        t_next = t + step
        f = implicit_local(
            gtype, ox + t_next * dx, oy + t_next * dy, oz + t_next * dz, p0, p1, p2, p3
        )
        pos = f > 0.0
        if pos != prev_pos:
            lo, hi = t, t_next
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                fm = implicit_local(
                    gtype, ox + mid * dx, oy + mid * dy, oz + mid * dz, p0, p1, p2, p3
                )
                if (fm > 0.0) == prev_pos:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        t = t_next
        prev_pos = pos
    return -1.0


# --- counter-based per-ray noise --------------------------------------------


@njit(cache=True, inline="always")
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, inline="always")
def _u01(bits):
    # (0, 1]: never returns 0, safe for log()
    return (float(bits >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def ray_noise(seed, ray_index):
    """(gauss, uniform) draws for one ray, independent of evaluation order."""
    state = (np.uint64(seed) ^ (np.uint64(ray_index) * np.uint64(0xD1342543DE82EF95))) & np.uint64(
        0xFFFFFFFFFFFFFFFF
    )
    state, b1 = _splitmix64(state)
    state, b2 = _splitmix64(state)
    state, b3 = _splitmix64(state)
    u1 = _u01(b1)
    u2 = _u01(b2)
    gauss = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    return gauss, _u01(b3)


# --- batched scan kernel -----------------------------------------------------


@njit(cache=True, parallel=True)
def cast_kernel(
    dirs_world,
    local_origins,
    rot_inv,
    gtypes,
    params,
    cull_radius,
    t_eps,
    max_range,
    range_sigma,
    dropout_prob,
    seed,
    out_t,
    out_obj,
):
    """Closest-hit over all objects for every ray.

    dirs_world:    (R, 3) unit ray directions in the world frame
    local_origins: (O, 3) sensor origin pre-transformed into each object frame
    rot_inv:       (O, 3, 3) world-to-object rotations
    cull_radius:   (O,) bounding-sphere radius, < 0 disables culling (planes)
    out_t:         (R,) noisy hit distance, -1 for miss or dropout
    out_obj:       (R,) index of the hit object, -1 for miss
    """
    n_rays = dirs_world.shape[0]
    n_obj = gtypes.shape[0]
    for i in prange(n_rays):
        wx = dirs_world[i, 0]
        wy = dirs_world[i, 1]
        wz = dirs_world[i, 2]
        best = 1e300
        best_obj = -1
        for j in range(n_obj):
            ox = local_origins[j, 0]
            oy = local_origins[j, 1]
            oz = local_origins[j, 2]
            dx = rot_inv[j, 0, 0] * wx + rot_inv[j, 0, 1] * wy + rot_inv[j, 0, 2] * wz
            dy = rot_inv[j, 1, 0] * wx + rot_inv[j, 1, 1] * wy + rot_inv[j, 1, 2] * wz
            dz = rot_inv[j, 2, 0] * wx + rot_inv[j, 2, 1] * wy + rot_inv[j, 2, 2] * wz
            rb = cull_radius[j]
            if rb >= 0.0:
                # conservative bounding-sphere reject (sphere centered at local origin)
                b = ox * dx + oy * dy + oz * dz
                c = ox * ox + oy * oy + oz * oz - rb * rb
                if c > 0.0 and (b > 0.0 or b * b < c):
                    continue
            t = intersect_local(
                gtypes[j], ox, oy, oz, dx, dy, dz,
                params[j, 0], params[j, 1], params[j, 2], params[j, 3], t_eps,
            )
            if t > 0.0 and t < best:
                best = t
                best_obj = j
        if best_obj >= 0 and best <= max_range:
            gauss, u = ray_noise(seed, i)
            t_noisy = best + range_sigma * gauss
            if t_noisy < t_eps:
                t_noisy = t_eps
            if u < dropout_prob:
                out_t[i] = -1.0
                out_obj[i] = -1
            else:
                out_t[i] = t_noisy
                out_obj[i] = best_obj
        else:
            out_t[i] = -1.0
            out_obj[i] = -1


def warmup():
    """Trigger JIT compilation of the hot kernels (cached across runs)."""
    dirs = np.array([[1.0, 0.0, 0.0]])
    origins = np.array([[-5.0, 0.0, 0.0]])
    rot = np.eye(3)[None, :, :]
    gtypes = np.array([GEOM_SPHERE], dtype=np.int64)
    params = np.array([[1.0, 0.0, 0.0, 0.0]])
    cull = np.array([1.0])
    out_t = np.empty(1)
    out_obj = np.empty(1, dtype=np.int64)
    cast_kernel(dirs, origins, rot, gtypes, params, cull, 1e-6, 100.0, 0.0, 0.0, 0, out_t, out_obj)
    march_local(GEOM_SPHERE, -5.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1e-3, 1e-6, 10.0)
