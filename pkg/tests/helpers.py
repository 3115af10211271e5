"""Small models built only for tests."""
import numpy as np

from motionimit.pla.linkage import LoopConstraint, PlaLinkage
from motionimit.rbd import ChainModel, Joint, Link
from motionimit.rotations import quat_from_axis_angle

X = (1.0, 0.0, 0.0)
Y = (0.0, 1.0, 0.0)
Z = (0.0, 0.0, 1.0)


def _inertia(a, b, c):
    return ((a, 0.0, 0.0), (0.0, b, 0.0), (0.0, 0.0, c))


def two_link_planar(gravity=(0.0, 0.0, -9.81)):
    return ChainModel(
        links=(Link(1.3, (0.0, 0.0, -0.25), _inertia(0.02, 0.03, 0.01)),
               Link(0.8, (0.05, 0.0, -0.2), _inertia(0.01, 0.015, 0.008))),
        joints=(Joint("revolute", -1, Y),
                Joint("revolute", 0, Y, (0.0, 0.0, -0.5))),
        gravity=gravity)


def spatial_chain(gravity=(0.0, 0.0, -9.81)):
    """Three non-parallel revolute joints with rotated joint frames, a fixed tip and an armature."""
    axis = np.array([0.3, -0.2, 0.9])
    axis /= np.linalg.norm(axis)
    return ChainModel(
        links=(Link(2.0, (0.02, 0.01, -0.15), ((0.03, 0.002, 0.0), (0.002, 0.04, 0.001), (0.0, 0.001, 0.02))),
               Link(1.1, (0.1, 0.0, 0.0), _inertia(0.004, 0.01, 0.01)),
               Link(0.7, (0.0, 0.05, -0.1), _inertia(0.006, 0.005, 0.002)),
               Link(0.3, (0.02, 0.0, 0.0), _inertia(0.001, 0.001, 0.001))),
        joints=(Joint("revolute", -1, Z),
                Joint("revolute", 0, X, (0.0, 0.05, -0.3), tuple(quat_from_axis_angle(Y, 0.4)), armature=0.02),
                Joint("revolute", 1, tuple(axis), (0.2, 0.0, 0.0), tuple(quat_from_axis_angle(Z, -0.7))),
                Joint("fixed", 2, Z, (0.0, 0.1, -0.2), tuple(quat_from_axis_angle(X, 0.3)))),
        gravity=gravity)


def _pitch_roll(name, masses=(0.3, 0.8), limits=((-0.4, 0.4), (-0.3, 0.3)), tau=None):
    kw = {} if tau is None else {"tau_limits": tau}
    # inertias scale with mass so a zero mass gives a massless body
    a, b = masses[0] / 0.3, masses[1] / 0.8
    return ChainModel(
        links=(Link(masses[0], (0, 0, 0), _inertia(0.001 * a, 0.001 * a, 0.001 * a), f"{name}_pitch"),
               Link(masses[1], (0.0, 0.0, -0.5), _inertia(0.01 * b, 0.01 * b, 0.005 * b), f"{name}_foot")),
        joints=(Joint("revolute", -1, Y, q_limits=limits[0], name=f"{name}_pitch", **kw),
                Joint("revolute", 0, X, q_limits=limits[1], name=f"{name}_roll", **kw)))


def identity_linkage(armature=(0.1, 0.1), support_mass=0.0, motor_limit=1.0):
    """Two motors that copy the pitch and roll of the output: Gamma_i = I everywhere.

    The support chain mirrors the main chain and the loop pins the x and y
    coordinates of a point below the foot, so q_i = q_o solves the closure.
    """
    main = _pitch_roll("out")
    support = _pitch_roll("motor", masses=(support_mass, support_mass),
                          tau=(-motor_limit, motor_limit))
    return PlaLinkage(main=main, support=support, parent_main=(), output_main=(0, 1),
                      parent_support=(), dependent_support=(), actuated_support=(0, 1),
                      constraints=(LoopConstraint(1, (0.0, 0.0, -1.0), 1, (0.0, 0.0, -1.0), (0, 1)),),
                      motor_armature=np.asarray(armature, float), q_nom=np.zeros(2), name="identity")
