"""Configuration-dependent output torque limits.

A box of motor torques maps through ``tau_o = Gamma_i^T tau_i``. With two
outputs the image of the box is a parallelogram whose shape changes with the
output configuration.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .linkage import TransmissionSingularityError, transmission_jacobians

DEGENERATE_TOL = 1e-12


@dataclass
class TorquePolytope:
    """Vertices of the feasible output-torque set.

    For two outputs the vertices are ordered counterclockwise. ``degenerate``
    marks a transmission that collapses the box to a lower-dimensional set; the
    vertices are then the extreme points of that segment (or point).
    """

    vertices: np.ndarray
    degenerate: bool
    transpose_map: np.ndarray

    def contains(self, tau_o, tol=1e-9):
        tau_o = np.asarray(tau_o, dtype=float)
        if self.vertices.shape[1] != 2 or self.degenerate:
            raise NotImplementedError("membership is implemented for non-degenerate polygons")
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        d = tau_o - v
        cross = e[:, 0] * d[:, 1] - e[:, 1] * d[:, 0]
        scale = np.linalg.norm(e, axis=1)
        return bool(np.all(cross >= -tol * scale))

    def project(self, tau_o):
        """Closest feasible output torque (Euclidean)."""
        tau_o = np.asarray(tau_o, dtype=float)
        v = self.vertices
        if len(v) == 1:
            return v[0].copy()
        if v.shape[1] == 2 and not self.degenerate and self.contains(tau_o, tol=0.0):
            return tau_o.copy()
        best, best_d = None, np.inf
        edges = zip(v, np.roll(v, -1, axis=0)) if len(v) > 2 else [(v[0], v[1])]
        for a, b in edges:
            ab = b - a
            t = np.clip((tau_o - a) @ ab / (ab @ ab), 0.0, 1.0)
            p = a + t * ab
            dist = np.linalg.norm(tau_o - p)
            if dist < best_d:
                best, best_d = p, dist
        return best


def box_corners(box):
    """All corners of a box given as (n, 2) rows of (lower, upper)."""
    box = np.asarray(box, dtype=float)
    return np.array(list(itertools.product(*box)))


def _ccw_box_corners(box):
    (l0, u0), (l1, u1) = box
    return np.array([[l0, l1], [u0, l1], [u0, u1], [l0, u1]])


def polytope_from_map(gamma_i, box):
    """Image of the motor-torque box under ``Gamma_i^T``."""
    A = np.asarray(gamma_i, dtype=float).T
    box = np.asarray(box, dtype=float)
    if box.shape != (A.shape[1], 2) or np.any(box[:, 0] > box[:, 1]):
        raise ValueError("box must be (n_motors, 2) rows of (lower, upper)")
    if A.shape == (2, 2):
        det = np.linalg.det(A)
        ref = np.linalg.norm(A, 2) ** 2
        if abs(det) > DEGENERATE_TOL * max(ref, 1e-300):
            v = _ccw_box_corners(box) @ A.T
            if det < 0:
                v = v[::-1]
            return TorquePolytope(v, False, A)
        img = box_corners(box) @ A.T
        # collapsed to a segment: keep its two extreme points
        c = img.mean(axis=0)
        vt = np.linalg.svd(img - c)[2]
        t = (img - c) @ vt[0]
        pts = img[[np.argmin(t), np.argmax(t)]]
        if np.allclose(pts[0], pts[1]):
            pts = pts[:1]
        return TorquePolytope(pts, True, A)
    # general dimension: vertex set of the affine image
    img = box_corners(box) @ A.T
    rank = np.linalg.matrix_rank(A)
    return TorquePolytope(np.unique(np.round(img, 12), axis=0), rank < A.shape[0], A)


def torque_polytope(linkage, q_o, box, guess=None):
    """Feasible output torques at configuration ``q_o`` for motor limits ``box``."""
    try:
        gi = transmission_jacobians(linkage, q_o, guess=guess).gamma_i
    except TransmissionSingularityError:
        from .linkage import closure_jacobians, solve_loop_closure
        q_s = np.concatenate(solve_loop_closure(linkage, q_o, guess))
        Co, Cs = closure_jacobians(linkage, q_o, q_s)
        gi = -(np.linalg.pinv(Cs) @ Co)[linkage.n_d:]
        poly = polytope_from_map(gi, box)
        poly.degenerate = True
        return poly
    return polytope_from_map(gi, box)


def polytope_sweep(linkage, box, points=21):
    """Polygons over a grid spanning the output joint limits.

    Returns a list of ``(q_o, TorquePolytope)`` pairs in row-major order.
    """
    lo, hi = linkage.main.joint_limits()[:2]
    o = list(linkage.output_main)
    axes = [np.linspace(lo[k], hi[k], points) for k in o]
    out = []
    for q_o in itertools.product(*axes):
        out.append((np.array(q_o), torque_polytope(linkage, np.array(q_o), box)))
    return out


def write_polytope_csv(sweep, path):
    """Rows of (pitch, roll, vertex_index, tau_pitch, tau_roll)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pitch", "roll", "vertex_index", "tau_pitch", "tau_roll"])
        for q_o, poly in sweep:
            for k, v in enumerate(poly.vertices):
                w.writerow([f"{q_o[0]:.6f}", f"{q_o[1]:.6f}", k, f"{v[0]:.9e}", f"{v[1]:.9e}"])
