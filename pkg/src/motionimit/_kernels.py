"""Hot numeric kernels.

Every kernel is written in a loop style that numba can compile. When numba is
importable and ``MOTIONIMIT_DISABLE_NUMBA`` is unset (or ``0``), the kernels are
compiled with ``@njit``; otherwise the very same functions run as plain numpy.
The uncompiled originals stay reachable through ``py_func`` for benchmarking.

Chains are passed as flat arrays (see ``ChainModel.arrays``):

    parent   int64[n]      parent body index, -1 for the root
    jtype    int64[n]      FIXED, REVOLUTE or FLOATING
    axis     float64[n,3]  joint axis in the child frame
    tree_R   float64[n,3,3] rotation of the joint frame w.r.t. the parent
    tree_r   float64[n,3]  joint origin in parent coordinates
    qidx     int64[n]      first position index of the joint
    vidx     int64[n]      first velocity index of the joint
    inertia  float64[n,6,6] spatial inertia about the body origin
    armature float64[nv]   rotor inertia added to the diagonal

Spatial vectors are ordered [angular; linear]. Floating joints carry
q = [p, quat(w, x, y, z)] and body-frame velocity [omega_b, v_b].
"""
import os

import numpy as np

FIXED = 0
REVOLUTE = 1
FLOATING = 2

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("MOTIONIMIT_DISABLE_NUMBA", "0") in ("", "0")


def _jit(fn):
    if USE_NUMBA:
        return njit(cache=True)(fn)
    fn.py_func = fn
    return fn


@_jit
def skew(v):
    m = np.zeros((3, 3))
    m[0, 1] = -v[2]
    m[0, 2] = v[1]
    m[1, 0] = v[2]
    m[1, 2] = -v[0]
    m[2, 0] = -v[1]
    m[2, 1] = v[0]
    return m


@_jit
def axis_rotation(axis, angle):
    """Rodrigues formula; ``axis`` must be unit length."""
    c = np.cos(angle)
    s = np.sin(angle)
    K = skew(axis)
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


@_jit
def quat_to_matrix(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@_jit
def plucker(E, r):
    """Motion transform [E 0; -E r^ E] into a frame at ``r`` rotated by ``E``."""
    X = np.zeros((6, 6))
    X[:3, :3] = E
    X[3:, 3:] = E
    X[3:, :3] = -E @ skew(r)
    return X


@_jit
def crm(v):
    m = np.zeros((6, 6))
    w = skew(v[:3])
    m[:3, :3] = w
    m[3:, 3:] = w
    m[3:, :3] = skew(v[3:])
    return m


@_jit
def crf(v):
    return -crm(v).T


@_jit
def joint_transforms(parent, jtype, axis, tree_R, tree_r, qidx, q):
    n = parent.shape[0]
    Xup = np.empty((n, 6, 6))
    zero = np.zeros(3)
    for i in range(n):
        t = jtype[i]
        k = qidx[i]
        if t == FLOATING:
            R = quat_to_matrix(q[k + 3:k + 7])
            Xup[i] = plucker(np.ascontiguousarray(R.T), q[k:k + 3])
        else:
            XT = plucker(np.ascontiguousarray(tree_R[i].T), tree_r[i])
            if t == REVOLUTE:
                E = np.ascontiguousarray(axis_rotation(axis[i], q[k]).T)
                Xup[i] = plucker(E, zero) @ XT
            else:
                Xup[i] = XT
    return Xup


@_jit
def body_poses(parent, jtype, axis, tree_R, tree_r, qidx, q):
    """World rotation and origin of every body frame."""
    n = parent.shape[0]
    Rw = np.empty((n, 3, 3))
    pw = np.empty((n, 3))
    for i in range(n):
        t = jtype[i]
        k = qidx[i]
        if t == FLOATING:
            Rrel = quat_to_matrix(q[k + 3:k + 7])
            prel = q[k:k + 3].copy()
        elif t == REVOLUTE:
            Rrel = tree_R[i] @ axis_rotation(axis[i], q[k])
            prel = tree_r[i].copy()
        else:
            Rrel = tree_R[i].copy()
            prel = tree_r[i].copy()
        p = parent[i]
        if p < 0:
            Rw[i] = Rrel
            pw[i] = prel
        else:
            Rw[i] = Rw[p] @ Rrel
            pw[i] = pw[p] + Rw[p] @ prel
    return Rw, pw


@_jit
def rnea(parent, jtype, axis, tree_R, tree_r, qidx, vidx, inertia, armature,
         q, qd, qdd, gravity, fext):
    """Inverse dynamics; ``fext`` holds body-frame spatial forces (n, 6)."""
    n = parent.shape[0]
    nv = qd.shape[0]
    Xup = joint_transforms(parent, jtype, axis, tree_R, tree_r, qidx, q)
    v = np.zeros((n, 6))
    a = np.zeros((n, 6))
    f = np.zeros((n, 6))
    a0 = np.zeros(6)
    a0[3:] = -gravity
    for i in range(n):
        vJ = np.zeros(6)
        aJ = np.zeros(6)
        t = jtype[i]
        k = vidx[i]
        if t == REVOLUTE:
            vJ[:3] = axis[i] * qd[k]
            aJ[:3] = axis[i] * qdd[k]
        elif t == FLOATING:
            vJ[:] = qd[k:k + 6]
            aJ[:] = qdd[k:k + 6]
        p = parent[i]
        if p < 0:
            v[i] = vJ
            a[i] = Xup[i] @ a0 + aJ
        else:
            v[i] = Xup[i] @ v[p] + vJ
            a[i] = Xup[i] @ a[p] + aJ + crm(v[i]) @ vJ
        Iv = inertia[i] @ v[i]
        f[i] = inertia[i] @ a[i] + crf(v[i]) @ Iv - fext[i]
    tau = np.zeros(nv)
    for i in range(n - 1, -1, -1):
        t = jtype[i]
        k = vidx[i]
        if t == REVOLUTE:
            tau[k] = axis[i] @ f[i][:3]
        elif t == FLOATING:
            tau[k:k + 6] = f[i]
        p = parent[i]
        if p >= 0:
            f[p] += Xup[i].T @ f[i]
    for k in range(nv):
        tau[k] += armature[k] * qdd[k]
    return tau


@_jit
def _subspace(jtype, axis_i):
    if jtype == FLOATING:
        return np.eye(6)
    S = np.zeros((6, 1))
    S[:3, 0] = axis_i
    return S


@_jit
def crba(parent, jtype, axis, tree_R, tree_r, qidx, vidx, inertia, armature, q, nv):
    """Joint-space mass matrix by the composite-rigid-body algorithm."""
    n = parent.shape[0]
    Xup = joint_transforms(parent, jtype, axis, tree_R, tree_r, qidx, q)
    Ic = inertia.copy()
    for i in range(n - 1, -1, -1):
        p = parent[i]
        if p >= 0:
            Ic[p] += Xup[i].T @ Ic[i] @ Xup[i]
    H = np.zeros((nv, nv))
    for i in range(n):
        if jtype[i] == FIXED:
            continue
        Si = _subspace(jtype[i], axis[i])
        ki = Si.shape[1]
        vi = vidx[i]
        F = Ic[i] @ Si
        H[vi:vi + ki, vi:vi + ki] = Si.T @ F
        j = i
        while parent[j] >= 0:
            F = Xup[j].T @ F
            j = parent[j]
            if jtype[j] == FIXED:
                continue
            Sj = _subspace(jtype[j], axis[j])
            kj = Sj.shape[1]
            vj = vidx[j]
            blk = Sj.T @ F
            H[vj:vj + kj, vi:vi + ki] = blk
            H[vi:vi + ki, vj:vj + kj] = blk.T
    for k in range(nv):
        H[k, k] += armature[k]
    return H


@_jit
def floor_softmax(f, valid, tau, eps):
    """Floor-smoothed categorical over the valid entries of a flat array."""
    n = f.shape[0]
    p = np.zeros(n)
    m = -np.inf
    count = 0
    for k in range(n):
        if valid[k]:
            count += 1
            if f[k] / tau > m:
                m = f[k] / tau
    z = 0.0
    for k in range(n):
        if valid[k]:
            p[k] = np.exp(f[k] / tau - m)
            z += p[k]
    for k in range(n):
        if valid[k]:
            p[k] = (1.0 - eps) * p[k] / z + eps / count
    return p
