"""Projected dynamics of a main chain driven through a parallel linkage.

All functions return main-chain accelerations ``[qdd_p; qdd_o]`` (in the main
chain's joint order) and accept the same arguments:

chain
    main-chain model used for ``M_M`` and ``h_M``; usually ``linkage.main``,
    possibly with randomized masses.
q, qd
    main-chain joint positions and velocities.
tau_i
    motor torques. Pass ``tau_o`` instead to give output torques directly.
tau_main
    optional generalized force on the main chain (parent joints).

The ladder, from exact to crude:

* ``exact_projected_dynamics``: support-chain inertia projected through G.
* ``locally_projected_dynamics``: massless support links, armature
  ``M_o = Gamma_i^T I_i Gamma_i`` and velocity term ``h_0``.
* ``dynamic_armature_step``: diagonal of ``M_o`` on the mass side, the
  off-diagonal part times the previous acceleration on the force side.
* ``nominal_armature_dynamics``: as above with ``M_o`` frozen at ``q_nom``.
* ``simplest_dynamics``: frozen diagonal armature only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import rbd
from .linkage import transmission_jacobians


@dataclass
class ArmatureDecomposition:
    """Projected motor armature ``M_o`` split into diagonal and off-diagonal parts.

    ``D_bar`` and ``O_bar`` hold the split at the linkage's nominal
    configuration; at ``q_nom`` they coincide with ``D_o`` and ``O_o``.
    """

    q_o: np.ndarray
    M_o: np.ndarray
    D_o: np.ndarray
    O_o: np.ndarray
    D_bar: np.ndarray
    O_bar: np.ndarray

    @property
    def diagonal_margin(self):
        """Per-row ``D_ii - sum_j |O_ij|``; positive means diagonally dominant."""
        return np.diag(self.D_o) - np.abs(self.O_o).sum(axis=1)


def _split_md(M):
    D = np.diag(np.diag(M))
    return D, M - D


def projected_armature(linkage, q_o, guess=None):
    """``M_o(q_o) = Gamma_i^T I_i Gamma_i``."""
    gi = transmission_jacobians(linkage, q_o, guess=guess).gamma_i
    return gi.T @ (linkage.motor_armature[:, None] * gi)


def nominal_armature(linkage):
    """Armature decomposition at ``linkage.q_nom``."""
    M = projected_armature(linkage, linkage.q_nom)
    D, O = _split_md(M)
    return ArmatureDecomposition(linkage.q_nom.copy(), M, D, O, D.copy(), O.copy())


def armature_decomposition(linkage, q_o, nominal=None):
    nominal = nominal_armature(linkage) if nominal is None else nominal
    M = projected_armature(linkage, q_o)
    D, O = _split_md(M)
    return ArmatureDecomposition(np.asarray(q_o, float).copy(), M, D, O, nominal.D_bar, nominal.O_bar)


def _prepare(chain, linkage, q, qd, tau_i, tau_o, tau_main, with_rates=True, guess=None):
    q, qd = rbd._check(chain, q, qd)
    if chain.nv != linkage.main.nv:
        raise ValueError("chain does not match the linkage's main chain")
    o = list(linkage.output_main)
    maps = transmission_jacobians(linkage, q[o], qd[o] if with_rates else None, guess)
    if tau_o is None:
        tau_o = maps.gamma_i.T @ np.asarray(tau_i, dtype=float)
    tau = np.zeros(chain.nv) if tau_main is None else np.array(tau_main, dtype=float)
    tau[o] += tau_o
    return q, qd, o, maps, tau


def _solve(M, rhs):
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise rbd.DynamicsError("projected mass matrix is not positive definite") from exc
    return np.linalg.solve(L.T, np.linalg.solve(L, rhs))


def projected_mass_matrix(chain, linkage, q, guess=None):
    """``M_M + G^T M_S G`` at main-chain configuration ``q``."""
    q, _ = rbd._check(chain, q)
    o = list(linkage.output_main)
    maps = transmission_jacobians(linkage, q[o], guess=guess)
    return _exact_terms(chain, linkage, q, np.zeros(chain.nv), maps)[0]


def _support_mass(linkage, qs):
    Ms = rbd.mass_matrix(linkage.support, qs)
    a = list(linkage.actuated_support)
    Ms[a, a] += linkage.motor_armature
    return Ms


def _exact_terms(chain, linkage, q, qd, maps):
    qs = linkage.support_q(maps.q_support, q[list(linkage.parent_main)])
    qds = maps.G @ qd
    Ms = _support_mass(linkage, qs)
    M = rbd.mass_matrix(chain, q) + maps.G.T @ Ms @ maps.G
    h = rbd.bias_forces(chain, q, qd) + maps.G.T @ rbd.bias_forces(linkage.support, qs, qds)
    if maps.gamma_i_dot is not None:
        h = h + maps.G.T @ Ms @ maps.G_dot_qd(linkage, qd[list(linkage.output_main)])
    return M, h


def exact_projected_dynamics(chain, linkage, q, qd, tau_i=None, *, tau_o=None, tau_main=None, guess=None):
    """``(M_M + G^T M_S G) qdd + h_M + G^T h_S + G^T M_S Gdot [0; qd_o] = [tau_p; Gamma_i^T tau_i]``."""
    q, qd, o, maps, tau = _prepare(chain, linkage, q, qd, tau_i, tau_o, tau_main, guess=guess)
    M, h = _exact_terms(chain, linkage, q, qd, maps)
    return _solve(M, tau - h)


def _armature_dynamics(chain, q, qd, o, tau, M_add, h_add):
    M = rbd.mass_matrix(chain, q)
    M[np.ix_(o, o)] += M_add
    h = rbd.bias_forces(chain, q, qd)
    h[o] += h_add
    return _solve(M, tau - h)


def _h0(linkage, maps, qd_o):
    """``Gamma_i^T I_i Gammadot_i qd_o``."""
    return maps.gamma_i.T @ (linkage.motor_armature * (maps.gamma_i_dot @ qd_o))


def locally_projected_dynamics(chain, linkage, q, qd, tau_i=None, *, tau_o=None, tau_main=None, guess=None):
    """Massless support links: ``(M_M + [0 0; 0 M_o]) qdd + h_M + [0; h_0] = tau``."""
    q, qd, o, maps, tau = _prepare(chain, linkage, q, qd, tau_i, tau_o, tau_main, guess=guess)
    gi = maps.gamma_i
    M_o = gi.T @ (linkage.motor_armature[:, None] * gi)
    return _armature_dynamics(chain, q, qd, o, tau, M_o, _h0(linkage, maps, qd[o]))


def dynamic_armature_step(chain, linkage, q, qd, tau_i, qdd_o_prev, *, tau_o=None, tau_main=None, guess=None):
    """Jacobi split of ``M_o``: diagonal ``D_o`` in the mass matrix, ``O_o qdd_o'`` as a force.

    ``qdd_o_prev`` is the output-joint acceleration from the previous step
    (zeros at the start of an episode).
    """
    q, qd, o, maps, tau = _prepare(chain, linkage, q, qd, tau_i, tau_o, tau_main, guess=guess)
    gi = maps.gamma_i
    D, O = _split_md(gi.T @ (linkage.motor_armature[:, None] * gi))
    h_add = _h0(linkage, maps, qd[o]) + O @ np.asarray(qdd_o_prev, dtype=float)
    return _armature_dynamics(chain, q, qd, o, tau, D, h_add)


def nominal_armature_dynamics(chain, linkage, q, qd, tau_i, qdd_o_prev, *, nominal=None,
                              tau_o=None, tau_main=None, guess=None):
    """Dynamic-armature model with ``D_o``, ``O_o`` frozen at ``q_nom``.

    The velocity term ``h_0`` is still evaluated at the current state.
    """
    nominal = nominal_armature(linkage) if nominal is None else nominal
    q, qd, o, maps, tau = _prepare(chain, linkage, q, qd, tau_i, tau_o, tau_main, guess=guess)
    h_add = _h0(linkage, maps, qd[o]) + nominal.O_bar @ np.asarray(qdd_o_prev, dtype=float)
    return _armature_dynamics(chain, q, qd, o, tau, nominal.D_bar, h_add)


def simplest_dynamics(chain, linkage, q, qd, tau_i=None, *, nominal=None, tau_o=None,
                      tau_main=None, guess=None):
    """Constant diagonal armature ``D_bar`` added to the main chain, nothing else."""
    nominal = nominal_armature(linkage) if nominal is None else nominal
    q, qd, o, maps, tau = _prepare(chain, linkage, q, qd, tau_i, tau_o, tau_main,
                                   with_rates=False, guess=guess)
    return _armature_dynamics(chain, q, qd, o, tau, nominal.D_bar, np.zeros(len(o)))


MODELS = ("exact", "locally_projected", "dynamic_armature", "nominal_armature", "simplest")


def model_acceleration(name, chain, linkage, q, qd, *, tau_o, qdd_o_prev=None, nominal=None,
                       tau_main=None, guess=None):
    """Dispatch by model name with output torques; used by the evaluation protocol."""
    prev = np.zeros(linkage.n_o) if qdd_o_prev is None else qdd_o_prev
    kw = dict(tau_o=tau_o, tau_main=tau_main, guess=guess)
    if name == "exact":
        return exact_projected_dynamics(chain, linkage, q, qd, **kw)
    if name == "locally_projected":
        return locally_projected_dynamics(chain, linkage, q, qd, **kw)
    if name == "dynamic_armature":
        return dynamic_armature_step(chain, linkage, q, qd, None, prev, **kw)
    if name == "nominal_armature":
        return nominal_armature_dynamics(chain, linkage, q, qd, None, prev, nominal=nominal, **kw)
    if name == "simplest":
        return simplest_dynamics(chain, linkage, q, qd, nominal=nominal, **kw)
    raise ValueError(f"unknown model {name!r}; expected one of {MODELS}")
