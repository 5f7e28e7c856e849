"""Synthetic articulated shapes: paired poses of one prototype with known identity matches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import PointCloud, normalize
from .data import ShapePair

# rest-pose limb roots and directions: left/right arm, left/right leg
_LIMB_ROOTS = np.array([[-0.28, 0.35, 0.0], [0.28, 0.35, 0.0],
                        [-0.14, -0.6, 0.0], [0.14, -0.6, 0.0]])
_LIMB_DIRS = np.array([[-0.94, -0.34, 0.0], [0.94, -0.34, 0.0],
                       [-0.1, -0.99, 0.0], [0.1, -0.99, 0.0]])


def _rot_zx(az, ax):
    cz, sz, cx, sx = np.cos(az), np.sin(az), np.cos(ax), np.sin(ax)
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    return rz @ rx


def _frame(axis):
    axis = axis / np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    return axis, u, np.cross(axis, u)


def _capsule_surface(start, end, radius, n, rng):
    axis, u, v = _frame(end - start)
    t = rng.random(n)
    theta = rng.random(n) * 2 * np.pi
    ring = radius * (np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v)
    return start + t[:, None] * (end - start) + ring


def _sphere_surface(center, radius, n, rng):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return center + radius * d


@dataclass
class Prototype:
    """Rest-pose points, each tagged with the kinematic segment that carries it.

    ``segment`` is -1 for torso/head, ``2 * limb + s`` for limb segment ``s``.
    """

    points: np.ndarray
    segment: np.ndarray
    limb_lengths: np.ndarray  # (4, 2)

    @property
    def n_points(self):
        return len(self.points)

    @property
    def n_angles(self):
        return 16  # 4 limbs x 2 joints x (swing, twist)


def make_prototype(n_points, rng, length_jitter=0.1):
    if n_points < 32:
        raise ValueError(f"synthetic shapes need at least 32 points, got {n_points}")
    lengths = 0.42 * (1 + length_jitter * rng.uniform(-1, 1, size=(4, 2)))
    radii = [0.22, 0.17, 0.07]  # torso, head, limb
    areas = [2 * np.pi * radii[0] * 1.0, 4 * np.pi * radii[1] ** 2]
    areas += [2 * np.pi * radii[2] * l for l in lengths.reshape(-1)]
    areas = np.array(areas)
    counts = np.floor(areas / areas.sum() * n_points).astype(int)
    counts = np.maximum(counts, 1)
    counts[0] += n_points - counts.sum()
    pts = [_capsule_surface(np.array([0.0, -0.55, 0.0]), np.array([0.0, 0.45, 0.0]), radii[0],
                            counts[0], rng),
           _sphere_surface(np.array([0.0, 0.8, 0.0]), radii[1], counts[1], rng)]
    seg = [np.full(counts[0], -1), np.full(counts[1], -1)]
    for limb in range(4):
        joint = _LIMB_ROOTS[limb]
        for s in range(2):
            end = joint + lengths[limb, s] * _LIMB_DIRS[limb]
            c = counts[2 + 2 * limb + s]
            pts.append(_capsule_surface(joint, end, radii[2], c, rng))
            seg.append(np.full(c, 2 * limb + s))
            joint = end
    return Prototype(np.concatenate(pts), np.concatenate(seg), lengths)


def pose(proto, angles):
    """Forward kinematics: rotate each limb chain by its joint angles.

    ``angles`` has shape (4, 2, 2): per limb, per joint, (swing about z,
    twist about x). Zero angles reproduce the rest pose exactly.
    """
    angles = np.asarray(angles, dtype=np.float64).reshape(4, 2, 2)
    out = proto.points.copy()
    for limb in range(4):
        root = _LIMB_ROOTS[limb]
        knee_rest = root + proto.limb_lengths[limb, 0] * _LIMB_DIRS[limb]
        r1 = _rot_zx(*angles[limb, 0])
        r2 = r1 @ _rot_zx(*angles[limb, 1])
        knee = root + r1 @ (knee_rest - root)
        upper = proto.segment == 2 * limb
        lower = proto.segment == 2 * limb + 1
        out[upper] = root + (proto.points[upper] - root) @ r1.T
        out[lower] = knee + (proto.points[lower] - knee_rest) @ r2.T
    return out


def random_angles(rng, max_angle=0.5):
    return rng.uniform(-max_angle, max_angle, size=(4, 2, 2))


def synth_pairs(count, n_points, rng, max_angle=0.5):
    """``count`` pairs of randomly posed copies of one prototype.

    Both clouds are normalized and share point indexing, so the ground truth
    is the identity map.
    """
    proto = make_prototype(n_points, rng)
    pairs = []
    for _ in range(count):
        x = normalize(pose(proto, random_angles(rng, max_angle)))
        y = normalize(pose(proto, random_angles(rng, max_angle)))
        pairs.append(ShapePair(PointCloud(x), PointCloud(y), np.arange(n_points)))
    return pairs
