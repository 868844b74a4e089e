"""A short walk through the group operations the planner is built on.

Run with ``python3 demos/lie_group_tour.py``.
"""

import numpy as np

from lieddp.dynamics import RigidBodyParams, linearize_twist, twist_derivative
from lieddp.liegroup import SE3, euler_xyz, rot_z

np.set_printoptions(precision=4, suppress=True)

# A twist is [omega; v]. Exponentiating it gives a pose; the log brings it back.
xi = np.array([0.0, 0.0, np.pi / 2, 1.0, 0.0, 0.0])
X = SE3.exp(xi)
print("exp([0, 0, pi/2, 1, 0, 0]) =\n", X)
print("log of that pose:", SE3.log(X))

# Poses compose by matrix product; the adjoint moves twists between frames.
Y = SE3.exp([0.1, -0.2, 0.3, 0.0, 1.0, 0.0])
eta = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
lhs = SE3.hat(SE3.Ad(Y) @ eta)
rhs = Y @ SE3.hat(eta) @ SE3.inverse(Y)
print("Ad_Y eta matches Y eta^ Y^-1:", np.allclose(lhs, rhs))

# Orientation errors live in the tangent space: a quarter turn about z away
# from the goal shows up as a pure rotation offset of pi/2.
goal = SE3.exp([0.0, 0.0, np.pi / 2, 0.0, 0.0, 0.0])
print("offset from identity to goal:", SE3.log(SE3.inverse(goal) @ np.eye(4)))
print("XYZ Euler angles of Rz(90):", euler_xyz(rot_z(np.pi / 2)))

# Twist dynamics of a rigid body and their Jacobians.
params = RigidBodyParams([1.0, 2.0, 3.0], 1.0)
xi = np.array([0.3, -0.5, 0.8, 0.1, 0.0, -0.2])
lin = linearize_twist(params, xi)
print("xi_dot with zero input:", twist_derivative(params, xi, np.zeros(6)))
print("Gamma xi + b reproduces it:", lin.Gamma @ xi + lin.b)
