"""Small geometric helpers shared across modules: angles and quaternions."""

from __future__ import annotations

import math

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi].

    The result is congruent to ``a`` modulo 2*pi. +pi maps to +pi
    (the interval is closed on both ends; -pi and +pi denote the same
    heading).
    """
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    wrapped = math.atan2(math.sin(a), math.cos(a))
    return wrapped


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_multiply(q1, q2) -> np.ndarray:
    """Hamilton product, (w, x, y, z) convention."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    qv = np.array([0.0, *v])
    return quat_multiply(quat_multiply(q, qv), quat_conjugate(q))[1:]


def quat_from_yaw(theta: float) -> np.ndarray:
    return np.array([math.cos(theta / 2.0), 0.0, 0.0, math.sin(theta / 2.0)])


def quat_nlerp(q0, q1, t: float) -> np.ndarray:
    """Normalized linear interpolation with sign correction.

    Picks the representative of q1 on the same hemisphere as q0, so the
    double-cover ambiguity never produces a long-way rotation.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    if float(np.dot(q0, q1)) < 0.0:
        q1 = -q1
    return quat_normalize((1.0 - t) * q0 + t * q1)


def quat_angle(q0, q1) -> float:
    """Rotation angle (radians) between two unit quaternions."""
    d = abs(float(np.dot(q0, q1)))
    d = min(1.0, d)
    return 2.0 * math.acos(d)


IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])
