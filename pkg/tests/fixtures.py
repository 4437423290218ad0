"""Dense synthetic surfaces built without the package's shape generator."""
import numpy as np


def unit_sphere(n, seed=0):
    g = np.random.default_rng(seed).standard_normal((n, 3))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def unit_cube_faces(n, seed=0):
    """Uniform samples on the faces of [-0.5, 0.5]^3."""
    g = np.random.default_rng(seed)
    pts = g.uniform(-0.5, 0.5, size=(n, 3))
    axis = g.integers(0, 3, size=n)
    side = g.choice([-0.5, 0.5], size=n)
    pts[np.arange(n), axis] = side
    return pts


def cube_face_lattice(k):
    """A ``k`` x ``k`` lattice on each face of [-0.5, 0.5]^3 (edges repeat across faces)."""
    t = np.linspace(-0.5, 0.5, k)
    u, v = (a.ravel() for a in np.meshgrid(t, t))
    faces = []
    for axis in range(3):
        for side in (-0.5, 0.5):
            f = np.empty((k * k, 3))
            f[:, axis] = side
            f[:, [a for a in range(3) if a != axis]] = np.column_stack([u, v])
            faces.append(f)
    return np.concatenate(faces)


def cube_front_facing(points, direction, half, tol):
    """Ray-cast oracle for a convex axis-aligned cube.

    A surface point is visible when it lies (within ``tol``) on a face whose
    outward normal has a non-negative component along the camera direction.
    """
    facing = np.where(direction >= 0, 1.0, -1.0)
    return (half - facing * points).min(axis=1) <= tol


def sphere_front_facing(points, direction, tol):
    """Dot-product oracle for a sphere centred at the origin."""
    return points @ direction > -tol
