"""Parameterized linkages shipped with the package.

Geometry is illustrative: link lengths and masses are chosen to resemble a
humanoid knee and ankle, not any particular robot.
"""
import numpy as np

from ..rbd import ChainModel, Joint, Link
from ..rotations import quat_from_axis_angle
from .linkage import LoopConstraint, PlaLinkage

Y = (0.0, 1.0, 0.0)
X = (1.0, 0.0, 0.0)


def _box_inertia(mass, sx, sy, sz):
    return ((mass * (sy**2 + sz**2) / 12, 0.0, 0.0),
            (0.0, mass * (sx**2 + sz**2) / 12, 0.0),
            (0.0, 0.0, mass * (sx**2 + sy**2) / 12))


def _rod_x(mass, length):
    """Slender rod along local x with its centre at length / 2."""
    return Link(mass=mass, com=(length / 2, 0.0, 0.0), inertia=_box_inertia(mass, length, 0.01, 0.01))


def _pitch_angle(w):
    """Rotation about y taking the local x axis onto direction ``w`` (x-z plane)."""
    return np.arctan2(-w[2], w[0])


def four_bar_knee(crank=0.04, lever=0.06, pivot_distance=0.3, thigh=0.4, shank=0.4,
                  crank_mass=0.25, coupler_mass=0.3, armature=0.01,
                  thigh_mass=3.0, shank_mass=2.0, knee_limits=(-0.3, 0.6), name="four_bar_knee"):
    """Planar knee driven by a thigh-mounted motor through a four-bar linkage.

    The motor pivot sits ``pivot_distance`` above the knee. At zero angles the
    crank and the shank lever point along the same direction ``u``, chosen so
    the coupler is perpendicular to both; the nominal transmission ratio is
    then exactly ``lever / crank``. Equal lengths give a parallelogram with
    ``q_i = q_o`` everywhere. With a longer lever the output rocks between
    two toggle positions, so ``knee_limits`` must stay inside that range.
    """
    d = pivot_distance
    uz = (lever - crank) / d
    if abs(uz) >= 1.0:
        raise ValueError("lever - crank must be shorter than the pivot distance")
    u = np.array([-np.sqrt(1.0 - uz * uz), 0.0, uz])
    P = np.array([0.0, 0.0, -(thigh - d)])
    Kp = np.array([0.0, 0.0, -thigh])
    A = P + crank * u
    B = Kp + lever * u
    w = B - A
    b = np.linalg.norm(w)
    psi = _pitch_angle(u)
    chi = _pitch_angle(w) - psi

    main = ChainModel(
        links=(Link(thigh_mass, (0, 0, -thigh / 2), _box_inertia(thigh_mass, 0.08, 0.08, thigh), "thigh"),
               Link(shank_mass, (0, 0, -shank / 2), _box_inertia(shank_mass, 0.06, 0.06, shank), "shank")),
        joints=(Joint("revolute", -1, Y, name="hip"),
                Joint("revolute", 0, Y, (0, 0, -thigh), q_limits=knee_limits, name="knee")),
    )
    support = ChainModel(
        links=(Link(0.0, name="thigh_support"),
               _rod_x(crank_mass, crank),
               _rod_x(coupler_mass, b)),
        joints=(Joint("revolute", -1, Y, name="hip_copy"),
                Joint("revolute", 0, Y, tuple(P), tuple(quat_from_axis_angle(Y, psi)), name="motor"),
                Joint("revolute", 1, Y, (crank, 0, 0), tuple(quat_from_axis_angle(Y, chi)),
                      name="coupler")),
    )
    return PlaLinkage(
        main=main, support=support,
        parent_main=(0,), output_main=(1,),
        parent_support=(0,), dependent_support=(2,), actuated_support=(1,),
        constraints=(LoopConstraint(1, tuple(lever * u), 2, (b, 0.0, 0.0), (0, 2)),),
        motor_armature=np.array([armature]),
        q_nom=np.zeros(1),
        name=name,
    )


def parallelogram_knee(length=0.05, **kw):
    """Four-bar with equal crank and lever: a rigid 1:1 coupling (q_i = q_o)."""
    kw.setdefault("knee_limits", (-0.3, 2.0))
    return four_bar_knee(crank=length, lever=length, name="parallelogram_knee", **kw)


def ratio_two_knee(crank=0.03, **kw):
    """Four-bar whose transmission ratio is exactly 2 at the nominal configuration."""
    kw.setdefault("knee_limits", (-0.3, 0.45))
    return four_bar_knee(crank=crank, lever=2 * crank, name="ratio_two_knee", **kw)


def pushrod_ankle(attach_x=-0.05, half_width=0.045, crank_radii=(0.07, 0.09),
                  motor_heights=(0.30, 0.28), armature=(0.03, 0.015), crank_mass=0.05,
                  rod_mass=0.025, foot_mass=1.2, pitch_link_mass=0.2,
                  pitch_limits=(-0.4, 0.4), roll_limits=(-0.25, 0.25),
                  motor_torque_limits=(-60.0, 60.0)):
    """Pitch-roll ankle driven by two shank-mounted motors through pushrods.

    Each motor turns a crank about y; a rod hangs from the crank end on a
    universal joint (x then y) and meets the foot at ``(attach_x, +-half_width, 0)``.
    At zero output angles the cranks point forward and the rods are vertical.
    Unequal crank radii and motor inertias make the projected armature
    non-diagonal. Cranks longer than the foot lever keep the transmission
    nearly constant over the workspace.
    """
    main = ChainModel(
        links=(Link(pitch_link_mass, (0, 0, 0), _box_inertia(pitch_link_mass, 0.04, 0.04, 0.04), "ankle_pitch"),
               Link(foot_mass, (0.04, 0.0, -0.04), _box_inertia(foot_mass, 0.22, 0.09, 0.05), "foot")),
        joints=(Joint("revolute", -1, Y, q_limits=pitch_limits, name="ankle_pitch"),
                Joint("revolute", 0, X, q_limits=roll_limits, name="ankle_roll")),
    )
    links, joints, constraints = [], [], []
    for side, (r, h) in enumerate(zip(crank_radii, motor_heights)):
        y = half_width if side == 0 else -half_width
        base = len(links)
        links += [_rod_x(crank_mass, r),
                  Link(0.0, name=f"ujoint_{side}"),
                  Link(rod_mass, (0, 0, -h / 2), _box_inertia(rod_mass, 0.01, 0.01, h), f"rod_{side}")]
        joints += [Joint("revolute", -1, Y, (attach_x - r, y, h),
                         tau_limits=motor_torque_limits, name=f"motor_{side}"),
                   Joint("revolute", base, X, (r, 0, 0), name=f"ujoint_x_{side}"),
                   Joint("revolute", base + 1, Y, name=f"ujoint_y_{side}")]
        constraints.append(LoopConstraint(1, (attach_x, y, 0.0), base + 2, (0.0, 0.0, -h)))
    support = ChainModel(links=tuple(links), joints=tuple(joints))
    return PlaLinkage(
        main=main, support=support,
        parent_main=(), output_main=(0, 1),
        parent_support=(), dependent_support=(1, 2, 4, 5), actuated_support=(0, 3),
        constraints=tuple(constraints),
        motor_armature=np.asarray(armature, dtype=float),
        q_nom=np.zeros(2),
        name="pushrod_ankle",
    )


def motor_torque_box(linkage):
    """Per-motor (lower, upper) torque limits from the support chain."""
    js = [linkage.support.joints[k] for k in linkage.actuated_support]
    return np.array([j.tau_limits for j in js], dtype=float)


MECHANISMS = {
    "four_bar_knee": four_bar_knee,
    "parallelogram_knee": parallelogram_knee,
    "ratio_two_knee": ratio_two_knee,
    "pushrod_ankle": pushrod_ankle,
}
