"""Quaternion helpers.

Quaternions are ``[w, x, y, z]`` and map body coordinates to world
coordinates. The world frame is z-up with gravity along -z.
"""
import numpy as np

from ._kernels import quat_to_matrix as _quat_to_matrix

# Rotations this close to 0 or pi switch to series / axis-extraction branches.
SMALL_ANGLE = 1e-6

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat_multiply(a, b):
    """Hamilton product ``a * b``."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def quat_to_matrix(q):
    return _quat_to_matrix(np.asarray(q, dtype=float))


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    h = 0.5 * angle
    return np.concatenate(([np.cos(h)], np.sin(h) * axis))


def quat_exp(rotvec):
    """Unit quaternion of the rotation vector ``rotvec`` (axis * angle)."""
    rotvec = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(rotvec)
    if theta < SMALL_ANGLE:
        # sin(t/2)/t to third order
        k = 0.5 - theta * theta / 48.0
        q = np.concatenate(([np.cos(0.5 * theta)], k * rotvec))
        return q / np.linalg.norm(q)
    return np.concatenate(([np.cos(0.5 * theta)], np.sin(0.5 * theta) / theta * rotvec))


def quat_log(q):
    """Rotation vector of a unit quaternion, with norm in [0, pi]."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        q = -q
    w = q[0]
    xyz = q[1:]
    s = np.linalg.norm(xyz)
    theta = 2.0 * np.arctan2(s, w)
    if theta < SMALL_ANGLE:
        # 2 * xyz / w * (1 - s^2 / (3 w^2)) series of 2 atan(s/w) / s
        return 2.0 * xyz / w * (1.0 - s * s / (3.0 * w * w))
    if theta > np.pi - SMALL_ANGLE:
        axis = xyz / s
        return theta * axis
    return theta / s * xyz


def boxminus(qa, qb):
    """World-frame rotation vector ``log(qa * qb^-1)``.

    ``quat_exp(boxminus(a, b))`` composed on the left of ``b`` gives back
    ``a`` (up to quaternion sign).
    """
    qa, qb = np.asarray(qa, float), np.asarray(qb, float)
    if np.array_equal(qa, qb):
        # exact zero instead of product rounding noise
        return np.zeros(3)
    return quat_log(quat_multiply(qa, quat_conjugate(qb)))


def boxplus(q, rotvec):
    return quat_normalize(quat_multiply(quat_exp(rotvec), q))


def rotate(q, v):
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def rotate_inverse(q, v):
    return quat_to_matrix(q).T @ np.asarray(v, dtype=float)


def gravity_in_frame(q):
    """Unit world gravity direction expressed in the body frame."""
    return rotate_inverse(q, np.array([0.0, 0.0, -1.0]))


def matrix_to_quat(R):
    """Unit quaternion (w >= 0) of a rotation matrix, Shepperd's method."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    k = int(np.argmax([tr, R[0, 0], R[1, 1], R[2, 2]]))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q = q / np.linalg.norm(q)
    return -q if q[0] < 0 else q
