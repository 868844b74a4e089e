"""Augmented-Lagrangian constrained DDP on matrix Lie groups.

The backward pass works on the error state ``x = [psi; dxi]`` living in the
tangent space of the nominal trajectory; the forward pass re-integrates the
true dynamics on the group with the affine policy ``du = K dx + alpha d``.
An outer loop updates the Lagrange multipliers and penalties until the
constraints hold.

Costs are quadratic in the goal error ``[log(X_g^{-1} X); xi - xi_g]``::

    L_A = 1/2 |e_N|^2_SV + sum_k 1/2 |e_k|^2_SQ + 1/2 |u_k|^2_SU
          + sum_k (lam_k + 1/2 I_mu g_k)^T g_k
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .constraints import JACOBIAN_MODES, MultiplierState, evaluate_horizon, penalty_weights, update_multipliers
from .dynamics import DISCRETIZATIONS, State, Trajectory, linearize_trajectory, rollout
from .exceptions import DivergenceError, IllConditionedError

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max-iters"
DIVERGED = "diverged"
ILL_CONDITIONED = "ill-conditioned"


@dataclass(frozen=True)
class CostWeights:
    """Quadratic weights: final state ``S_V``, running state ``S_Q``, input ``S_U``."""

    final: np.ndarray
    running: np.ndarray
    input: np.ndarray

    def __post_init__(self):
        for name in ("final", "running", "input"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if M.shape[0] != M.shape[1] or np.max(np.abs(M - M.T)) > 1e-12:
                raise ValueError(f"{name} weight must be a symmetric square matrix")
            eig = np.linalg.eigvalsh(M)
            if name == "running" and eig.min() < -1e-12:
                raise ValueError("running state weight must be positive semidefinite")
            if name != "running" and eig.min() <= 0.0:
                raise ValueError(f"{name} weight must be positive definite")
            object.__setattr__(self, name, M)
        if self.final.shape != self.running.shape:
            raise ValueError("final and running state weights must have the same shape")

    @classmethod
    def scaled(cls, state_dim, input_dim, final, running, input):
        return cls(final * np.eye(state_dim), running * np.eye(state_dim), input * np.eye(input_dim))


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    rho0: float = 0.0
    rho_min: float = 1e-6
    rho_factor: float = 10.0
    rho_max: float = 1e10
    alpha_factor: float = 0.5
    alpha_min: float = 1e-4
    max_inner_iters: int = 200
    max_outer_iters: int = 10
    constraint_tol: float = 1e-4
    lam0: float = 0.0
    mu0: float = 1.0
    gamma: float = 10.0
    mu_max: float = 1e8
    multipliers: str = "per_step"
    jacobian_mode: str = "numeric"
    discretization: str = "rollout"
    feedforward_tol: float = 1e-10
    exact_cost_gradient: bool = False

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if not self.rho_factor > 1.0:
            raise ValueError("rho_factor must exceed 1")
        if not 0.0 < self.alpha_factor < 1.0:
            raise ValueError("alpha_factor must lie in (0, 1)")
        if not self.alpha_min > 0.0:
            raise ValueError("alpha_min must be positive")
        if self.rho0 < 0.0 or not self.rho_min > 0.0:
            raise ValueError("rho0 must be non-negative and rho_min positive")
        if self.max_inner_iters < 1 or self.max_outer_iters < 1:
            raise ValueError("iteration limits must be at least 1")
        if self.multipliers not in ("per_step", "shared"):
            raise ValueError("multipliers must be 'per_step' or 'shared'")
        if self.jacobian_mode not in JACOBIAN_MODES:
            raise ValueError(f"jacobian_mode must be one of {JACOBIAN_MODES}")
        if self.discretization not in DISCRETIZATIONS:
            raise ValueError(f"discretization must be one of {DISCRETIZATIONS}")


@dataclass
class Problem:
    """A trajectory optimization problem over ``N`` steps of length ``dt``."""

    model: object
    x0: State
    goal: State
    N: int
    dt: float
    weights: CostWeights
    constraints: list = field(default_factory=list)
    initial_inputs: np.ndarray | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon N must be at least 1")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        n2 = 2 * self.model.n
        if self.weights.final.shape != (n2, n2) or self.weights.input.shape != (self.model.input_dim,) * 2:
            raise ValueError("cost weight dimensions do not match the model")
        if self.initial_inputs is None:
            self.initial_inputs = np.zeros((self.N, self.model.input_dim))
        self.initial_inputs = np.asarray(self.initial_inputs, dtype=float)
        if self.initial_inputs.shape != (self.N, self.model.input_dim):
            raise ValueError("initial inputs must have shape (N, m)")

    @property
    def group(self):
        return self.model.group


@dataclass
class Policy:
    gains: np.ndarray
    feedforwards: np.ndarray


@dataclass
class IterationRecord:
    outer: int
    iteration: int
    cost: float
    alpha: float
    rho: float
    max_violation: float


@dataclass
class SolveResult:
    trajectory: Trajectory
    policy: Policy
    cost_history: list
    max_violation_history: list
    status: str
    records: list = field(default_factory=list)
    multipliers: MultiplierState | None = None
    inner_iterations: list = field(default_factory=list)
    multiplier_history: list = field(default_factory=list)

    @property
    def iterations(self):
        """Accepted DDP iterations summed over all outer iterations."""
        return sum(self.inner_iterations)

    @property
    def final_cost(self):
        return self.cost_history[-1] if self.cost_history else float("nan")


# ---------------------------------------------------------------------------
# costs
# ---------------------------------------------------------------------------

def goal_error(group, goal, configs, twists):
    """``[log(X_g^{-1} X); xi - xi_g]`` for one state or a batch."""
    configs = np.asarray(configs, dtype=float)
    twists = np.asarray(twists, dtype=float)
    psi = group.log(group.inverse(goal.config) @ configs, strict=False)
    return np.concatenate([psi, twists - goal.twist], axis=-1)


def cost_derivatives(dx, u, weights):
    """Gradients and Hessians of the running cost ``1/2|dx|_SQ + 1/2|u|_SU``."""
    S_Q, S_U = weights.running, weights.input
    return (
        S_Q @ dx,
        S_U @ u,
        S_Q,
        S_U,
        np.zeros((S_U.shape[0], S_Q.shape[0])),
    )


def goal_error_jacobians(group, err):
    """``d err / d x`` for the perturbation ``X exp(psi)``, ``xi + dxi``.

    The configuration block is ``J_r^{-1}`` of the goal offset; the twist
    block is the identity. Shape ``(K, 2n, 2n)``.
    """
    n = group.dim
    T = np.zeros((len(err), 2 * n, 2 * n))
    for k, e in enumerate(err):
        T[k, :n, :n] = np.linalg.inv(group.right_jacobian(e[:n]))
        T[k, n:, n:] = np.eye(n)
    return T


def _quad(M, x):
    return 0.5 * np.einsum("...i,ij,...j->...", x, M, x)


def _constraint_terms(values, lam, mu):
    w = penalty_weights(values, lam, mu)
    return np.sum((lam + 0.5 * w * values) * values, axis=-1)


def augmented_lagrangian(problem, traj, mult=None, ev=None, mode="numeric"):
    """Scalar ``L_A`` of a trajectory. ``ev`` reuses a constraint evaluation."""
    w = problem.weights
    err = goal_error(problem.group, problem.goal, traj.configs, traj.twists)
    total = _quad(w.final, err[-1]) + np.sum(_quad(w.running, err[:-1])) + np.sum(_quad(w.input, traj.inputs))
    if problem.constraints:
        if ev is None:
            ev = evaluate_horizon(problem.constraints, problem.model, traj.configs, traj.twists, traj.inputs, mode, jacobians=False)
        lam, mu = mult.broadcast(traj.N + 1)
        total = total + np.sum(_constraint_terms(ev.values, lam, mu))
    total = float(total)
    if not np.isfinite(total):
        raise DivergenceError("augmented Lagrangian is not finite")
    return total


# ---------------------------------------------------------------------------
# backward / forward passes
# ---------------------------------------------------------------------------

def backward_pass(problem, traj, mult=None, config=SolverConfig(), rho=None):
    """Riccati-like sweep producing the affine policy.

    Returns ``(policy, expected_decrease, rho_used)``. ``expected_decrease``
    holds the two coefficients ``(sum d^T Q_u, sum 1/2 d^T Q_uu d)`` so the
    predicted change for step size ``alpha`` is ``a1 alpha + a2 alpha^2``.
    """
    rho = config.rho0 if rho is None else rho
    model, w = problem.model, problem.weights
    N, n2, m = traj.N, 2 * model.n, model.input_dim
    err = goal_error(problem.group, problem.goal, traj.configs, traj.twists)
    A, B = linearize_trajectory(model, traj, config.discretization)
    T = goal_error_jacobians(problem.group, err) if config.exact_cost_gradient else None

    if problem.constraints:
        ev = evaluate_horizon(problem.constraints, model, traj.configs, traj.twists, traj.inputs, config.jacobian_mode)
        lam, mu = mult.broadcast(N + 1)
        pw = penalty_weights(ev.values, lam, mu)
        coef = lam + pw * ev.values
        gx, gu = ev.jac_x, ev.jac_u
    else:
        ev = None

    while True:
        Vx = w.final @ err[N]
        Vxx = w.final.copy()
        if T is not None:
            Vx = T[N].T @ Vx
            Vxx = T[N].T @ Vxx @ T[N]
        if ev is not None:
            Vx = Vx + gx[N].T @ coef[N]
            Vxx = Vxx + gx[N].T @ (pw[N][:, None] * gx[N])
        K = np.zeros((N, m, n2))
        d = np.zeros((N, m))
        dV1 = dV2 = 0.0
        failed = False
        eye = np.eye(m)
        for k in range(N - 1, -1, -1):
            lx, lu, lxx, luu, lux = cost_derivatives(err[k], traj.inputs[k], w)
            if T is not None:
                lx, lxx = T[k].T @ lx, T[k].T @ lxx @ T[k]
            Ak, Bk = A[k], B[k]
            BtV = Bk.T @ Vxx
            Qx = lx + Ak.T @ Vx
            Qu = lu + Bk.T @ Vx
            Qxx = lxx + Ak.T @ Vxx @ Ak
            Quu = luu + BtV @ Bk
            Qux = lux + BtV @ Ak
            if ev is not None:
                gxk, guk, pk = gx[k], gu[k], pw[k][:, None]
                Qx = Qx + gxk.T @ coef[k]
                Qu = Qu + guk.T @ coef[k]
                Qxx = Qxx + gxk.T @ (pk * gxk)
                Quu = Quu + guk.T @ (pk * guk)
                Qux = Qux + guk.T @ (pk * gxk)
            Quu = 0.5 * (Quu + Quu.T)
            try:
                L = np.linalg.cholesky(Quu + rho * eye)
            except np.linalg.LinAlgError:
                failed = True
                break
            rhs = np.column_stack([Qu, Qux])
            sol = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
            dk, Kk = -sol[:, 0], -sol[:, 1:]
            K[k], d[k] = Kk, dk
            dV1 += dk @ Qu
            dV2 += 0.5 * dk @ Quu @ dk
            Vx = Qx + Kk.T @ Qu + Kk.T @ Quu @ dk + Qux.T @ dk
            Vxx = Qxx + Kk.T @ Quu @ Kk + Kk.T @ Qux + Qux.T @ Kk
            Vxx = 0.5 * (Vxx + Vxx.T)
        if not failed:
            return Policy(K, d), (dV1, dV2), rho
        rho = max(rho * config.rho_factor, config.rho_min)
        if rho > config.rho_max:
            raise IllConditionedError(f"regularization exceeded rho_max={config.rho_max:g}")


def forward_pass(problem, traj, policy, alpha, mult=None, mode="numeric"):
    """Closed-loop rollout of the updated policy; returns ``(candidate, L_A)``.

    A diverging candidate is returned as ``(None, inf)``.
    """
    model, group = problem.model, problem.group
    N, dt = traj.N, traj.dt
    configs = np.empty_like(traj.configs)
    twists = np.empty_like(traj.twists)
    inputs = np.empty_like(traj.inputs)
    configs[0], twists[0] = traj.configs[0], traj.twists[0]
    try:
        for k in range(N):
            dpsi = group.log(group.inverse(traj.configs[k]) @ configs[k], strict=False)
            dx = np.concatenate([dpsi, twists[k] - traj.twists[k]])
            inputs[k] = traj.inputs[k] + policy.gains[k] @ dx + alpha * policy.feedforwards[k]
            twists[k + 1] = twists[k] + model.f(twists[k], inputs[k]) * dt
            if not np.all(np.isfinite(twists[k + 1])) or np.max(np.abs(twists[k + 1])) > 1e6:
                return None, np.inf
            configs[k + 1] = configs[k] @ group.exp(twists[k + 1] * dt)
        cand = Trajectory(configs, twists, inputs, dt)
        return cand, augmented_lagrangian(problem, cand, mult, mode=mode)
    except (DivergenceError, FloatingPointError):
        return None, np.inf


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _initial_multipliers(problem, config, traj):
    if not problem.constraints:
        return None
    ev = evaluate_horizon(problem.constraints, problem.model, traj.configs, traj.twists, traj.inputs, jacobians=False)
    shape = ev.values.shape if config.multipliers == "per_step" else ev.values.shape[1:]
    return MultiplierState.initial(shape, config.lam0, config.mu0, config.gamma, config.mu_max)


def _violation(problem, traj, mode):
    if not problem.constraints:
        return 0.0, None
    ev = evaluate_horizon(problem.constraints, problem.model, traj.configs, traj.twists, traj.inputs, mode, jacobians=False)
    return ev.max_violation(), ev


def _inner_loop(problem, traj, mult, config, outer, records):
    """DDP iterations for fixed multipliers.

    Returns ``(trajectory, cost_history, converged, accepted_iterations)``.
    """
    mode = config.jacobian_mode
    cost = augmented_lagrangian(problem, traj, mult, mode=mode)
    prev = np.inf
    costs = [cost]
    rho = config.rho0
    accepted = 0
    for _ in range(config.max_inner_iters):
        policy, (dv1, dv2), rho_used = backward_pass(problem, traj, mult, config, rho)
        if np.max(np.abs(policy.feedforwards)) < config.feedforward_tol:
            return traj, costs, True, accepted
        alpha = 1.0
        while alpha >= config.alpha_min:
            cand, new_cost = forward_pass(problem, traj, policy, alpha, mult, mode)
            if new_cost < cost:
                break
            alpha *= config.alpha_factor
        else:
            # no decrease along the search direction
            if abs(dv1 + dv2) < config.tol:
                return traj, costs, True, accepted
            rho = max(rho_used * config.rho_factor, config.rho_min)
            if rho > config.rho_max:
                log.debug("outer %d: line search stalled at rho %.3g", outer, rho_used)
                return traj, costs, False, accepted
            continue
        traj = cand
        prev, cost = cost, new_cost
        costs.append(cost)
        accepted += 1
        rho = config.rho0
        viol, _ = _violation(problem, traj, mode)
        records.append(IterationRecord(outer, accepted, cost, alpha, rho_used, viol))
        if abs(cost - prev) < config.tol:
            return traj, costs, True, accepted
    return traj, costs, False, accepted


def solve(problem, config=SolverConfig()):
    """Run constrained DDP from the rollout of ``problem.initial_inputs``."""
    try:
        traj = rollout(problem.model, problem.x0, problem.initial_inputs, problem.dt)
    except DivergenceError:
        empty = Policy(np.zeros((problem.N, problem.model.input_dim, 2 * problem.model.n)),
                       np.zeros((problem.N, problem.model.input_dim)))
        return SolveResult(None, empty, [], [], DIVERGED)

    mult = _initial_multipliers(problem, config, traj)
    cost_history, viol_history, records, inner_counts = [], [], [], []
    mult_history = [mult] if mult is not None else []
    status = MAX_ITERS
    try:
        for outer in range(config.max_outer_iters):
            traj, costs, inner_ok, accepted = _inner_loop(problem, traj, mult, config, outer, records)
            cost_history.extend(costs)
            inner_counts.append(accepted)
            viol, ev = _violation(problem, traj, config.jacobian_mode)
            viol_history.append(viol)
            log.info("outer %d: %d iterations, L_A %.6g, max violation %.3g", outer, accepted, costs[-1], viol)
            if viol < config.constraint_tol:
                status = CONVERGED if inner_ok else MAX_ITERS
                break
            if outer == config.max_outer_iters - 1:
                break
            mult = update_multipliers(mult, ev.values, ev.mask)
            mult_history.append(mult)
        policy, _, _ = backward_pass(problem, traj, mult, config)
    except IllConditionedError:
        status = ILL_CONDITIONED
        policy = Policy(np.zeros((problem.N, problem.model.input_dim, 2 * problem.model.n)),
                        np.zeros((problem.N, problem.model.input_dim)))
    except DivergenceError:
        status = DIVERGED
        policy = Policy(np.zeros((problem.N, problem.model.input_dim, 2 * problem.model.n)),
                        np.zeros((problem.N, problem.model.input_dim)))
    return SolveResult(traj, policy, cost_history, viol_history, status, records, mult, inner_counts, mult_history)
