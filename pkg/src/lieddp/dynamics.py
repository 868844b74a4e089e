"""Twist dynamics on the tangent bundle and their error-state linearization.

A system evolves as ``X' = X xi^`` and ``xi' = f(xi, u)``. Models implement
:class:`TwistModel`; :class:`RigidBodySE3` is the forced Euler-Poincare rigid
body. Discrete rollouts integrate the twist first and then advance the
configuration with the fresh twist::

    xi[k+1] = xi[k] + f(xi[k], u[k]) dt
    X[k+1]  = X[k] exp(xi[k+1] dt)
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from .exceptions import DivergenceError
from .liegroup import SE3, MatrixLieGroup, skew

DIVERGENCE_LIMIT = 1e6
DISCRETIZATIONS = ("euler", "zoh", "semi_implicit", "rollout")


@dataclass(frozen=True)
class RigidBodyParams:
    """Body-frame principal inertia and mass."""

    inertia_body: np.ndarray
    mass: float

    def __post_init__(self):
        inertia = np.array(self.inertia_body, dtype=float)
        if inertia.ndim == 1:
            inertia = np.diag(inertia)
        if inertia.shape != (3, 3):
            raise ValueError(f"inertia must be 3x3 or a length-3 diagonal, got {inertia.shape}")
        if np.max(np.abs(inertia - inertia.T)) > 1e-12:
            raise ValueError("inertia must be symmetric")
        if np.min(np.linalg.eigvalsh(inertia)) <= 0.0:
            raise ValueError("inertia must be positive definite")
        if not self.mass > 0.0:
            raise ValueError("mass must be positive")
        object.__setattr__(self, "inertia_body", inertia)
        object.__setattr__(self, "mass", float(self.mass))

    @cached_property
    def inertia_inv(self):
        return np.linalg.inv(self.inertia_body)

    @cached_property
    def J(self):
        """Generalized inertia ``blockdiag(I_b, m I_3)``."""
        J = np.zeros((6, 6))
        J[:3, :3] = self.inertia_body
        J[3:, 3:] = self.mass * np.eye(3)
        return J

    @cached_property
    def J_inv(self):
        Ji = np.zeros((6, 6))
        Ji[:3, :3] = self.inertia_inv
        Ji[3:, 3:] = np.eye(3) / self.mass
        return Ji


@dataclass(frozen=True)
class State:
    config: np.ndarray
    twist: np.ndarray


@dataclass(frozen=True)
class LinearizedTwist:
    """``xi' ~= Gamma xi + Lambda u + b`` about a nominal twist."""

    Gamma: np.ndarray
    Lambda: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class PerturbedSystem:
    """Error-state matrices for ``x = [psi; dxi]``."""

    A: np.ndarray
    B: np.ndarray
    dt: float | None = None
    discretized: bool = False

    @property
    def n(self):
        return self.A.shape[0] // 2


@dataclass
class Trajectory:
    """Configurations ``(N+1, k, k)``, twists ``(N+1, n)``, inputs ``(N, m)``."""

    configs: np.ndarray
    twists: np.ndarray
    inputs: np.ndarray
    dt: float

    def __post_init__(self):
        if len(self.configs) != len(self.twists) or len(self.twists) != len(self.inputs) + 1:
            raise ValueError(
                f"inconsistent trajectory lengths: {len(self.configs)} configs, "
                f"{len(self.twists)} twists, {len(self.inputs)} inputs"
            )

    @property
    def N(self):
        return len(self.inputs)

    @property
    def states(self):
        return [State(X, xi) for X, xi in zip(self.configs, self.twists)]

    @property
    def times(self):
        return self.dt * np.arange(self.N + 1)

    def copy(self):
        return Trajectory(self.configs.copy(), self.twists.copy(), self.inputs.copy(), self.dt)


class TwistModel(abc.ABC):
    """Velocity dynamics ``f(xi, u)`` on a given group, with Jacobians."""

    group: MatrixLieGroup
    input_dim: int

    @property
    def n(self):
        return self.group.dim

    @abc.abstractmethod
    def f(self, xi, u):
        """Twist derivative; may be evaluated on batches."""

    @abc.abstractmethod
    def jacobians(self, xi, u):
        """Return ``(Gamma, Lambda)``, the partials of ``f`` in ``xi`` and ``u``."""


class RigidBodySE3(TwistModel):
    """Forced Euler-Poincare equations ``J xi' = ad*_xi J xi + u (+ w0)``.

    ``bias_wrench`` is an optional constant body wrench added to the input;
    it is zero unless a scenario asks for it.
    """

    group = SE3
    input_dim = 6

    def __init__(self, params, bias_wrench=None):
        self.params = params
        self.bias_wrench = np.zeros(6) if bias_wrench is None else np.asarray(bias_wrench, dtype=float)

    def f(self, xi, u):
        return twist_derivative(self.params, xi, np.asarray(u) + self.bias_wrench)

    def jacobians(self, xi, u=None):
        lin = linearize_twist(self.params, xi)
        return lin.Gamma, lin.Lambda


def twist_derivative(params, xi, u):
    """Euler-Poincare twist rate ``J^{-1}(ad*_xi J xi + u)``; batched."""
    xi = np.asarray(xi, dtype=float)
    u = np.asarray(u, dtype=float)
    if xi.shape[-1] != 6 or u.shape[-1] != 6:
        raise ValueError("rigid-body twists and wrenches have length 6")
    w, v = xi[..., :3], xi[..., 3:]
    h_ang = w @ params.inertia_body.T
    # ad*_xi J xi = -[w x Iw + v x mv; w x mv]; v x v vanishes
    torque = -np.cross(w, h_ang) + u[..., :3]
    force = -params.mass * np.cross(w, v) + u[..., 3:]
    return np.concatenate(
        [torque @ params.inertia_inv.T, force / params.mass], axis=-1
    )


def _momentum_block(params, xi):
    w, v = xi[:3], xi[3:]
    M = np.zeros((6, 6))
    M[:3, :3] = skew(params.inertia_body @ w)
    M[:3, 3:] = params.mass * skew(v)
    M[3:, :3] = params.mass * skew(v)
    return M


def linearize_twist(params, xi):
    """Gamma, Lambda and drift ``b`` of the linearized twist dynamics."""
    xi = np.asarray(xi, dtype=float)
    J, J_inv = params.J, params.J_inv
    M = _momentum_block(params, xi)
    coad = SE3.coad(xi)
    Gamma = J_inv @ coad @ J + J_inv @ M
    b = -J_inv @ M @ xi
    return LinearizedTwist(Gamma=Gamma, Lambda=J_inv, b=b)


def perturbed_system(group, xi, lin):
    """Continuous error-state system ``A = [[-ad_xi, I], [0, Gamma]]``, ``B = [[0], [Lambda]]``."""
    n = group.dim
    m = lin.Lambda.shape[1]
    if lin.Gamma.shape != (n, n) or lin.Lambda.shape[0] != n:
        raise ValueError("linearization dimensions do not match the group")
    A = np.zeros((2 * n, 2 * n))
    A[:n, :n] = -group.ad(xi)
    A[:n, n:] = np.eye(n)
    A[n:, n:] = lin.Gamma
    B = np.zeros((2 * n, m))
    B[n:, :] = lin.Lambda
    return PerturbedSystem(A=A, B=B)


def discretize(sys, dt, mode="euler"):
    """Discretize a continuous error-state system.

    ``euler``: ``A_k = I + A dt``, ``B_k = B dt``.
    ``zoh``: exact zero-order hold through the matrix exponential.
    ``semi_implicit``: matches the rollout ordering, where the configuration
    is advanced with the already-updated twist.

    The ``rollout`` mode needs the next nominal twist and is produced by
    :func:`rollout_linearization` instead.
    """
    if not dt > 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    if sys.discretized:
        raise ValueError("system is already discretized")
    A, B = sys.A, sys.B
    nx, m = B.shape
    n = nx // 2
    if mode == "euler":
        Ad = np.eye(nx) + A * dt
        Bd = B * dt
    elif mode == "zoh":
        aug = np.zeros((nx + m, nx + m))
        aug[:nx, :nx] = A
        aug[:nx, nx:] = B
        E = expm(aug * dt)
        Ad, Bd = E[:nx, :nx], E[:nx, nx:]
    elif mode == "semi_implicit":
        vel_A = np.eye(nx)[n:] + A[n:] * dt
        vel_B = B[n:] * dt
        Ad = np.zeros((nx, nx))
        Bd = np.zeros((nx, m))
        Ad[n:] = vel_A
        Bd[n:] = vel_B
        Ad[:n, :n] = np.eye(n) + A[:n, :n] * dt
        Ad[:n] += dt * A[:n, n:] @ vel_A
        Bd[:n] = dt * B[:n] + dt * A[:n, n:] @ vel_B
    elif mode == "rollout":
        raise ValueError("the rollout linearization needs the next twist; use rollout_linearization")
    else:
        raise ValueError(f"unknown discretization {mode!r}; expected one of {DISCRETIZATIONS}")
    return PerturbedSystem(A=Ad, B=Bd, dt=dt, discretized=True)


def rollout_linearization(group, lin, xi_next, dt):
    """Exact first-order expansion of one discrete :func:`step`.

    With ``a = xi_next dt`` the configuration error propagates as
    ``psi' = Ad_{exp(-a)} psi + dt J_r(a) dxi'`` and the twist error as
    ``dxi' = (I + Gamma dt) dxi + Lambda dt du``. Unlike the Euler and
    zero-order-hold modes this matches the integrator exactly to first order,
    so DDP iterates converge without a model-mismatch tail.
    """
    if not dt > 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    n = group.dim
    m = lin.Lambda.shape[1]
    a = np.asarray(xi_next, dtype=float) * dt
    vel_A = np.eye(n) + lin.Gamma * dt
    vel_B = lin.Lambda * dt
    Jr = group.right_jacobian(a) * dt
    Ad = np.zeros((2 * n, 2 * n))
    Bd = np.zeros((2 * n, m))
    Ad[:n, :n] = group.Ad(group.exp(-a))
    Ad[:n, n:] = Jr @ vel_A
    Ad[n:, n:] = vel_A
    Bd[:n] = Jr @ vel_B
    Bd[n:] = vel_B
    return PerturbedSystem(A=Ad, B=Bd, dt=dt, discretized=True)


def step(model, X, xi, u, dt):
    """One discrete step; returns ``(X_next, xi_next)``."""
    xi_next = xi + model.f(xi, u) * dt
    X_next = X @ model.group.exp(xi_next * dt)
    return X_next, xi_next


def rollout(model, x0, inputs, dt):
    """Integrate ``inputs`` from ``x0`` and return the :class:`Trajectory`.

    Raises :class:`DivergenceError` if a twist becomes non-finite or exceeds
    ``DIVERGENCE_LIMIT`` in magnitude.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    N = len(inputs)
    if N < 1:
        raise ValueError("rollout needs at least one input")
    if not dt > 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    k = model.group.matrix_size
    configs = np.empty((N + 1, k, k))
    twists = np.empty((N + 1, model.n))
    configs[0] = x0.config
    twists[0] = x0.twist
    for i in range(N):
        configs[i + 1], twists[i + 1] = step(model, configs[i], twists[i], inputs[i], dt)
        if not np.all(np.isfinite(twists[i + 1])) or np.max(np.abs(twists[i + 1])) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"rollout diverged at step {i + 1}", step=i + 1)
    return Trajectory(configs, twists, inputs.copy(), dt)


def linearize_trajectory(model, traj, mode="euler"):
    """Discrete error-state ``(A_k, B_k)`` stacked over the horizon."""
    N, n, m = traj.N, model.n, model.input_dim
    A = np.empty((N, 2 * n, 2 * n))
    B = np.empty((N, 2 * n, m))
    for k in range(N):
        Gamma, Lambda = model.jacobians(traj.twists[k], traj.inputs[k])
        lin = LinearizedTwist(Gamma, Lambda, np.zeros(n))
        if mode == "rollout":
            sys = rollout_linearization(model.group, lin, traj.twists[k + 1], traj.dt)
        else:
            sys = discretize(perturbed_system(model.group, traj.twists[k], lin), traj.dt, mode)
        A[k], B[k] = sys.A, sys.B
    return A, B
