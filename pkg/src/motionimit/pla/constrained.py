"""Constrained-dynamics reference for closed-chain linkages.

Both open chains are simulated in full coordinates ``x = [q_main; q_support]``
and the loops are closed by Lagrange multipliers. Constraint drift is damped
with Baumgarte stabilization, ``phi'' + 2 alpha phi' + beta^2 phi = 0``.
This is slow and only meant as ground truth for the projected models.
"""
import numpy as np

from .. import rbd

BAUMGARTE_ALPHA = 10.0
BAUMGARTE_BETA = 10.0
_FD_EPS = 1e-6


def _split(linkage, x):
    n = linkage.main.nq
    return x[:n], x[n:]


def constraint_residual(linkage, x):
    """World-frame loop closure residuals followed by the parent-joint mirror equations."""
    qm, qs = _split(linkage, x)
    Rm, pm = rbd.body_poses(linkage.main, qm)
    Rs, ps = rbd.body_poses(linkage.support, qs)
    out = []
    for c in linkage.constraints:
        a = pm[c.main_body] + Rm[c.main_body] @ np.asarray(c.main_point, float)
        b = ps[c.support_body] + Rs[c.support_body] @ np.asarray(c.support_point, float)
        out.append((a - b)[list(c.components)])
    out.append(qs[list(linkage.parent_support)] - qm[list(linkage.parent_main)])
    return np.concatenate(out)


def constraint_jacobian(linkage, x):
    qm, qs = _split(linkage, x)
    nm, ns = linkage.main.nv, linkage.support.nv
    rows = []
    for c in linkage.constraints:
        comp = list(c.components)
        Jm = rbd.point_jacobian(linkage.main, qm, c.main_body, c.main_point)[comp]
        Js = rbd.point_jacobian(linkage.support, qs, c.support_body, c.support_point)[comp]
        rows.append(np.hstack((Jm, -Js)))
    for km, ks in zip(linkage.parent_main, linkage.parent_support):
        r = np.zeros(nm + ns)
        r[km] = -1.0
        r[nm + ks] = 1.0
        rows.append(r[None, :])
    return np.vstack(rows)


def full_mass_and_bias(linkage, x, xd, main=None):
    main = linkage.main if main is None else main
    qm, qs = _split(linkage, x)
    vm, vs = _split(linkage, xd)
    nm = main.nv
    Ms = rbd.mass_matrix(linkage.support, qs)
    Ms[list(linkage.actuated_support), list(linkage.actuated_support)] += linkage.motor_armature
    M = np.zeros((nm + linkage.support.nv,) * 2)
    M[:nm, :nm] = rbd.mass_matrix(main, qm)
    M[nm:, nm:] = Ms
    h = np.concatenate((rbd.bias_forces(main, qm, vm), rbd.bias_forces(linkage.support, qs, vs)))
    return M, h


def constrained_acceleration(linkage, x, xd, tau_i, tau_main=None, main=None,
                             alpha=BAUMGARTE_ALPHA, beta=BAUMGARTE_BETA):
    """Full-coordinate accelerations and multipliers.

    Returns ``(xdd, lam)``. ``tau_i`` drives the actuated support joints and
    ``tau_main`` (optional) the main chain.
    """
    x = np.asarray(x, dtype=float)
    xd = np.asarray(xd, dtype=float)
    M, h = full_mass_and_bias(linkage, x, xd, main)
    nm = linkage.main.nv
    tau = np.zeros_like(h)
    if tau_main is not None:
        tau[:nm] = tau_main
    tau[nm + np.asarray(linkage.actuated_support)] = tau_i
    J = constraint_jacobian(linkage, x)
    phi = constraint_residual(linkage, x)
    phid = J @ xd
    # J-dot x-dot as a central difference of J along x-dot
    e = _FD_EPS
    Jdxd = (constraint_jacobian(linkage, x + e * xd) - constraint_jacobian(linkage, x - e * xd)) @ xd / (2 * e)
    m = J.shape[0]
    K = np.zeros((M.shape[0] + m,) * 2)
    K[:M.shape[0], :M.shape[0]] = M
    K[:M.shape[0], M.shape[0]:] = J.T
    K[M.shape[0]:, :M.shape[0]] = J
    rhs = np.concatenate((tau - h, -Jdxd - 2 * alpha * phid - beta**2 * phi))
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:M.shape[0]], sol[M.shape[0]:]


def consistent_state(linkage, q, qd):
    """Full-coordinate state satisfying the loop and velocity constraints."""
    from .linkage import transmission_jacobians

    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    maps = transmission_jacobians(linkage, q[list(linkage.output_main)])
    qs = linkage.support_q(maps.q_support, q[list(linkage.parent_main)])
    return np.concatenate((q, qs)), np.concatenate((qd, maps.G @ qd))


def simulate(linkage, q0, qd0, torque_fn, dt, steps, main=None):
    """Semi-implicit Euler rollout of the constrained system.

    ``torque_fn(t, x, xd)`` returns ``(tau_i, tau_main)``. Returns the
    main-chain positions, velocities and accelerations, one row per step.
    """
    x, xd = consistent_state(linkage, q0, qd0)
    nm = linkage.main.nv
    Q, V, A = [], [], []
    for k in range(steps):
        tau_i, tau_main = torque_fn(k * dt, x, xd)
        xdd, _ = constrained_acceleration(linkage, x, xd, tau_i, tau_main, main)
        xd = xd + dt * xdd
        x = x + dt * xd
        Q.append(x[:nm].copy())
        V.append(xd[:nm].copy())
        A.append(xdd[:nm].copy())
    return np.array(Q), np.array(V), np.array(A)
