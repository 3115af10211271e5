"""Failure-coupled assistive wrench on the base.

Bins that are tracked poorly get a virtual PD-plus-feedforward wrench on the
torso, scaled by ``beta = clip(1 - S_hat / eta, 0, beta_max)`` with
``S_hat = 1 - f``. As the failure EMA falls, ``beta`` reaches zero exactly at
the target similarity ``eta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rotations import boxminus, quat_to_matrix
from .rsi import EMA_ALPHA, INITIAL_FAILURE

GRAVITY = (0.0, 0.0, -9.81)


@dataclass(frozen=True)
class CurriculumParams:
    """Schedule and wrench constants.

    ``inertia`` is the nominal base inertia in the base frame and ``r_com``
    the whole-body CoM relative to the base origin, also in the base frame.
    """

    eta: float = 0.80
    beta_max: float = 0.60
    kp_v: float = 0.0
    kd_v: float = 10.0
    kp_w: float = 200.0
    kd_w: float = 10.0
    mass: float = 1.0
    inertia: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    r_com: tuple = (0.0, 0.0, 0.0)
    gravity: tuple = GRAVITY

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if not 0 <= self.beta_max < 1:
            raise ValueError("beta_max must lie in [0, 1)")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        I = np.asarray(self.inertia, dtype=float)
        if I.shape != (3, 3) or not np.allclose(I, I.T) or np.any(np.linalg.eigvalsh(I) <= 0):
            raise ValueError("inertia must be a symmetric positive definite 3x3 matrix")

    @property
    def inertia_matrix(self):
        return np.asarray(self.inertia, dtype=float)


def assistance_scale(f, params):
    """``clip(1 - (1 - f) / eta, 0, beta_max)``; works elementwise, 0 where ``f = -inf``."""
    f = np.asarray(f, dtype=float)
    with np.errstate(invalid="ignore"):
        beta = np.clip(1.0 - (1.0 - f) / params.eta, 0.0, params.beta_max)
    beta = np.where(np.isfinite(f), beta, 0.0)
    return float(beta) if beta.ndim == 0 else beta


@dataclass(frozen=True)
class Wrench:
    """World-frame force and moment applied at the torso origin."""

    force: np.ndarray
    moment: np.ndarray

    def as_vector(self):
        """``[F; M]``."""
        return np.concatenate((self.force, self.moment))

    def as_spatial(self):
        """``[M; F]``, the ordering used by the dynamics code."""
        return np.concatenate((self.moment, self.force))


def nominal_wrench(state, ref, params):
    """Unscaled ``(F_b, M_b)``.

    ``state`` needs world-frame ``base_pos``, ``base_quat``, ``base_linvel``
    and ``base_angvel``; ``ref`` the same plus ``base_linacc`` and
    ``base_angacc``. The moment is formed in the base frame with the
    base-frame inertia and rotated to world.
    """
    g = np.asarray(params.gravity, dtype=float)
    M = params.mass
    F = M * (np.asarray(ref.base_linacc, float)
             + params.kp_v * (np.asarray(ref.base_pos, float) - state.base_pos)
             + params.kd_v * (np.asarray(ref.base_linvel, float) - state.base_linvel)
             - g)
    R = quat_to_matrix(state.base_quat)
    I = params.inertia_matrix
    w_b = R.T @ state.base_angvel
    acc_b = R.T @ np.asarray(ref.base_angacc, float)
    err_b = R.T @ boxminus(ref.base_quat, state.base_quat)
    dw_b = R.T @ (np.asarray(ref.base_angvel, float) - state.base_angvel)
    m_b = I @ acc_b + params.kp_w * (I @ err_b) + params.kd_w * (I @ dw_b) + np.cross(w_b, I @ w_b)
    r_w = R @ np.asarray(params.r_com, dtype=float)
    moment = R @ m_b - np.cross(r_w, M * g)
    return F, moment


def assistive_wrench(state, ref, params, beta):
    """``beta * [F_b; M_b]`` as a ``Wrench``."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    if beta == 0.0:
        return Wrench(np.zeros(3), np.zeros(3))
    F, Mb = nominal_wrench(state, ref, params)
    return Wrench(beta * F, beta * Mb)


@dataclass
class DecayTrace:
    s_bar: np.ndarray
    failure: np.ndarray
    beta: np.ndarray
    first_zero: int | None = field(default=None)


def improving_similarity(n, start=0.2, step=0.02):
    """``min(1, start + step * k)`` for ``k = 0..n-1``."""
    return np.minimum(1.0, start + step * np.arange(n))


def decay_iteration_bound(params, alpha=EMA_ALPHA, start=0.2, step=0.02, f0=INITIAL_FAILURE):
    """Iterations after which ``beta`` is guaranteed zero in the improving-similarity harness.

    The similarity reaches 1 after ``n1`` iterations; from then on ``f``
    decays by ``(1 - alpha)`` per iteration from at most ``f0`` and must fall
    below ``1 - eta``.
    """
    s = improving_similarity(int(math.ceil((1.0 - start) / step)) + 2, start, step)
    n1 = int(np.argmax(s >= 1.0))
    k = int(math.ceil(math.log((1.0 - params.eta) / f0) / math.log(1.0 - alpha)))
    return n1 + max(k, 0) + 1


def decay_harness(params, iterations, alpha=EMA_ALPHA, start=0.2, step=0.02,
                  f0=INITIAL_FAILURE, episodes_per_iteration=1):
    """One bin driven by a synthetic similarity that improves every iteration.

    Each iteration folds ``episodes_per_iteration`` identical results into
    the EMA (averaged, one step) and records the ``beta`` the next episode
    would get.
    """
    s_hist = improving_similarity(iterations, start, step)
    f = float(f0)
    fs, betas = np.empty(iterations), np.empty(iterations)
    first_zero = None
    for k, s in enumerate(s_hist):
        s_bar = math.fsum([s] * episodes_per_iteration) / episodes_per_iteration
        f = (1.0 - alpha) * f + alpha * (1.0 - s_bar)
        fs[k] = f
        betas[k] = assistance_scale(f, params)
        if betas[k] == 0.0 and first_zero is None:
            first_zero = k + 1
    return DecayTrace(s_hist, fs, betas, first_zero)
