from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lieddp.constraints import ConfigAvoidance, MultiplierState, VelocityBound
from lieddp.dynamics import RigidBodyParams, RigidBodySE3, State, linearize_trajectory, rollout
from lieddp.exceptions import IllConditionedError
from lieddp.liegroup import SE3, make_pose, rot_z
from lieddp.solver import (
    CONVERGED,
    CostWeights,
    Policy,
    Problem,
    SolverConfig,
    augmented_lagrangian,
    backward_pass,
    cost_derivatives,
    forward_pass,
    goal_error,
    goal_error_jacobians,
    solve,
)

from oracles import central_difference, double_integrator_matrices, lq_optimum, lq_problem, riccati

ROLLOUT = SolverConfig(discretization="rollout")
LITERAL = SolverConfig(discretization="rollout", exact_cost_gradient=False)
EXACT = SolverConfig(discretization="rollout", exact_cost_gradient=True)


def rest(X):
    return State(np.asarray(X, dtype=float), np.zeros(6))


def rigid_problem(N=20, dt=0.1, goal=None, constraints=(), weights=(100.0, 1e-3, 1e-2)):
    model = RigidBodySE3(RigidBodyParams(np.ones(3), 1.0))
    goal = goal if goal is not None else rest(make_pose(rot_z(np.pi / 4), [0.5, 0.2, -0.1]))
    return Problem(model, rest(np.eye(4)), goal, N, dt, CostWeights.scaled(12, 6, *weights), list(constraints))


# linear-quadratic oracle ---------------------------------------------------

@pytest.mark.parametrize("mode", ["rollout", "semi_implicit"])
def test_gains_match_riccati(mode):
    problem = lq_problem()
    traj = rollout(problem.model, problem.x0, problem.initial_inputs, problem.dt)
    A, B = linearize_trajectory(problem.model, traj, mode)
    Ao, Bo = double_integrator_matrices(problem.dt)
    assert np.allclose(A, Ao, atol=1e-15) and np.allclose(B, Bo, atol=1e-15)
    policy, _, rho = backward_pass(problem, traj, config=SolverConfig(discretization=mode))
    w = problem.weights
    gains, _ = riccati(Ao, Bo, w.running, w.input, w.final, problem.N)
    assert rho == 0.0
    assert np.max(np.abs(policy.gains - gains)) < 1e-8


def test_single_full_step_reaches_lq_optimum(rng):
    problem = lq_problem(u0=rng.normal(size=(25, 1)))
    traj = rollout(problem.model, problem.x0, problem.initial_inputs, problem.dt)
    policy, (dv1, dv2), _ = backward_pass(problem, traj, config=ROLLOUT)
    cand, cost = forward_pass(problem, traj, policy, 1.0)
    U = lq_optimum(problem)
    assert np.max(np.abs(cand.inputs[:, 0] - U)) < 1e-6
    # the quadratic model predicts the exact decrease
    before = augmented_lagrangian(problem, traj)
    assert cost - before == pytest.approx(dv1 + dv2, rel=1e-8)
    # a second pass finds nothing left to do
    policy2, _, _ = backward_pass(problem, cand, config=ROLLOUT)
    assert np.max(np.abs(policy2.feedforwards)) < 1e-8


def test_solve_lq_problem_converges_in_one_step():
    problem = lq_problem()
    result = solve(problem, ROLLOUT)
    assert result.status == CONVERGED
    assert result.inner_iterations == [1] or result.inner_iterations == [2]
    assert np.max(np.abs(result.trajectory.inputs[:, 0] - lq_optimum(problem))) < 1e-6


def test_single_step_closed_form(rng):
    problem = rigid_problem(N=1, dt=0.2)
    problem.initial_inputs = rng.normal(size=(1, 6))
    traj = rollout(problem.model, problem.x0, problem.initial_inputs, problem.dt)
    traj.twists[0] = 0.0
    A, B = linearize_trajectory(problem.model, traj, "rollout")
    policy, _, _ = backward_pass(problem, traj, config=LITERAL)
    w = problem.weights
    e1 = goal_error(SE3, problem.goal, traj.configs[1], traj.twists[1])
    H = w.input + B[0].T @ w.final @ B[0]
    d = -np.linalg.solve(H, w.input @ traj.inputs[0] + B[0].T @ w.final @ e1)
    K = -np.linalg.solve(H, B[0].T @ w.final @ A[0])
    assert np.allclose(policy.feedforwards[0], d, atol=1e-10)
    assert np.allclose(policy.gains[0], K, atol=1e-10)


# costs --------------------------------------------------------------------

def test_goal_error_examples(rng):
    goal = State(SE3.exp(rng.normal(size=6)), rng.normal(size=6))
    assert np.allclose(goal_error(SE3, goal, goal.config, goal.twist), 0.0, atol=1e-12)
    v = 0.3 * rng.normal(size=6)
    e = goal_error(SE3, goal, goal.config @ SE3.exp(v), goal.twist)
    assert np.allclose(e, np.concatenate([v, np.zeros(6)]), atol=1e-12)


@settings(max_examples=50)
@given(arrays(np.float64, 6, elements=st.floats(-1e-3, 1e-3)), st.integers(0, 1000))
def test_goal_error_antisymmetry(v, seed):
    a = SE3.exp(np.random.default_rng(seed).normal(size=6))
    b = a @ SE3.exp(v)
    ab = goal_error(SE3, rest(a), b, np.zeros(6))[:6]
    ba = goal_error(SE3, rest(b), a, np.zeros(6))[:6]
    assert np.linalg.norm(ab + SE3.Ad(SE3.inverse(a) @ b) @ ba) <= 10 * max(np.linalg.norm(v) ** 2, 1e-15)


def test_augmented_lagrangian_examples():
    goal = rest(np.eye(4))
    problem = rigid_problem(N=1, goal=goal)
    traj = rollout(problem.model, problem.x0, np.zeros((1, 6)), problem.dt)
    assert augmented_lagrangian(problem, traj) == 0.0

    traj.configs[-1] = SE3.exp(np.eye(6)[0])
    assert augmented_lagrangian(problem, traj) == pytest.approx(50.0, abs=1e-12)

    # one velocity bound violated by 0.1 at the terminal step only
    problem = rigid_problem(N=1, goal=goal, constraints=[VelocityBound.upper(2, 1.4)])
    traj = rollout(problem.model, problem.x0, np.zeros((1, 6)), problem.dt)
    traj.twists[-1, 2] = 1.5
    base = augmented_lagrangian(rigid_problem(N=1, goal=goal), traj)
    mult = MultiplierState(np.zeros((2, 1)), np.full((2, 1), 10.0))
    assert augmented_lagrangian(problem, traj, mult) - base == pytest.approx(0.05, abs=1e-12)


def test_cost_derivatives_match_finite_differences(rng):
    w = CostWeights(np.eye(12), np.diag(rng.uniform(0.1, 2, 12)), np.diag(rng.uniform(0.1, 2, 6)))
    dx, u = rng.normal(size=12), rng.normal(size=6)

    def ell(z):
        x, v = z[:12], z[12:]
        return 0.5 * x @ w.running @ x + 0.5 * v @ w.input @ v

    lx, lu, lxx, luu, lux = cost_derivatives(dx, u, w)
    grad = central_difference(ell, np.concatenate([dx, u]), 1e-5)
    assert np.allclose(np.concatenate([lx, lu]), grad, atol=1e-8)
    assert np.array_equal(lxx, w.running) and np.array_equal(luu, w.input)
    assert np.array_equal(lux, np.zeros((6, 12)))
    assert np.array_equal(cost_derivatives(np.zeros(12), np.zeros(6), w)[0], np.zeros(12))


def test_cost_weight_validation():
    with pytest.raises(ValueError):
        CostWeights(np.eye(2), np.eye(2), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        CostWeights(np.eye(2), -np.eye(2), np.eye(1))
    with pytest.raises(ValueError):
        CostWeights(np.array([[1.0, 0.5], [0.0, 1.0]]), np.eye(2), np.eye(1))
    with pytest.raises(ValueError):
        CostWeights(np.eye(2), np.eye(3), np.eye(1))
    CostWeights(np.eye(2), np.zeros((2, 2)), np.eye(1))


def test_solver_config_validation():
    for bad in (dict(tol=0.0), dict(rho_factor=1.0), dict(alpha_factor=1.0), dict(alpha_min=0.0),
                dict(max_inner_iters=0), dict(multipliers="global"), dict(jacobian_mode="exact"),
                dict(discretization="rk4")):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


# regularization -----------------------------------------------------------

def test_regularization_escalates_on_indefinite_quu():
    problem = rigid_problem(N=5)
    object.__setattr__(problem.weights, "input", -3.0 * np.eye(6))
    traj = rollout(problem.model, problem.x0, problem.initial_inputs, problem.dt)
    policy, _, rho = backward_pass(problem, traj, config=ROLLOUT)
    assert rho >= 3.0
    assert np.all(np.isfinite(policy.gains))
    with pytest.raises(IllConditionedError):
        backward_pass(problem, traj, config=SolverConfig(rho_max=1e-3))


# forward pass -------------------------------------------------------------

def test_forward_pass_null_update(rng):
    problem = rigid_problem()
    problem.initial_inputs = 0.1 * rng.normal(size=(20, 6))
    traj = rollout(problem.model, problem.x0, problem.initial_inputs, problem.dt)
    zero = Policy(np.zeros((20, 6, 12)), rng.normal(size=(20, 6)))
    cand, cost = forward_pass(problem, traj, zero, 0.0)
    assert np.array_equal(cand.inputs, traj.inputs)
    assert np.max(np.abs(cand.configs - traj.configs)) < 1e-12
    assert cost == pytest.approx(augmented_lagrangian(problem, traj), rel=1e-12)


def test_forward_pass_divergence_is_rejected():
    problem = rigid_problem()
    traj = rollout(problem.model, problem.x0, problem.initial_inputs, problem.dt)
    blowup = Policy(np.zeros((20, 6, 12)), np.full((20, 6), 1e9))
    cand, cost = forward_pass(problem, traj, blowup, 1.0)
    assert cand is None and cost == np.inf


def test_optimum_is_a_fixed_point():
    # iterate well past the default tolerance so the nominal is the optimum
    problem = rigid_problem()
    tight = replace(EXACT, tol=1e-13)
    result = solve(problem, tight)
    assert result.status == CONVERGED
    traj = result.trajectory
    policy, _, _ = backward_pass(problem, traj, config=tight)
    base = augmented_lagrangian(problem, traj)
    for alpha in (1.0, 0.5, 0.1):
        _, cost = forward_pass(problem, traj, policy, alpha)
        assert abs(cost - base) < 1e-10


def test_gradient_vanishes_at_inner_convergence():
    # with the goal-offset chain rule the fixed point is a stationary point of L_A
    problem = rigid_problem(N=15)
    config = EXACT
    result = solve(problem, config)
    traj = result.trajectory

    def total(flat):
        cand = rollout(problem.model, problem.x0, flat.reshape(traj.inputs.shape), problem.dt)
        return augmented_lagrangian(problem, cand)

    grad = central_difference(total, traj.inputs.ravel(), 1e-6)
    assert np.max(np.abs(grad)) < 10 * config.tol


# driver -------------------------------------------------------------------

def test_trivial_scenario_is_a_fixed_point():
    X = make_pose(rot_z(0.3), [1.0, 2.0, 3.0])
    problem = rigid_problem(goal=rest(X))
    problem.x0 = rest(X)
    result = solve(problem, ROLLOUT)
    assert result.status == CONVERGED
    assert result.iterations <= 2
    assert np.max(np.abs(result.trajectory.inputs)) < 1e-8


def test_unconstrained_solve_is_monotone_and_deterministic():
    problem = rigid_problem(goal=rest(make_pose(rot_z(np.pi / 2), [1.0, 1.0, 1.0])))
    first, second = solve(problem, ROLLOUT), solve(problem, ROLLOUT)
    assert first.status == CONVERGED
    assert np.all(np.diff(first.cost_history) <= 0.0)
    assert first.cost_history == second.cost_history
    assert np.array_equal(first.trajectory.configs, second.trajectory.configs)
    assert np.array_equal(first.policy.gains, second.policy.gains)


def test_constrained_solve_satisfies_obstacle():
    obstacle = ConfigAvoidance.sphere([0.5, 0.5, 0.5], 0.4)
    problem = rigid_problem(N=30, goal=rest(make_pose(rot_z(np.pi / 2), [1.0, 1.0, 1.0])), constraints=[obstacle])
    result = solve(problem, ROLLOUT)
    assert result.status == CONVERGED
    d = np.linalg.norm(result.trajectory.configs[:, :3, 3] - 0.5, axis=1)
    assert d.min() > 0.4 - 1e-3
    for record_outer in {r.outer for r in result.records}:
        costs = [r.cost for r in result.records if r.outer == record_outer]
        assert np.all(np.diff(costs) <= 0.0)
    for m in result.multiplier_history:
        assert np.all(m.lam >= 0.0) and np.all(m.mu <= m.mu_max)


def test_shared_multipliers_also_converge():
    obstacle = ConfigAvoidance.sphere([0.5, 0.5, 0.5], 0.4)
    problem = rigid_problem(N=30, goal=rest(make_pose(rot_z(np.pi / 2), [1.0, 1.0, 1.0])), constraints=[obstacle])
    result = solve(problem, SolverConfig(multipliers="shared"))
    assert result.status == CONVERGED
    assert result.multipliers.lam.shape == (1,)


def test_problem_validation():
    model = RigidBodySE3(RigidBodyParams(np.ones(3), 1.0))
    w = CostWeights.scaled(12, 6, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        Problem(model, rest(np.eye(4)), rest(np.eye(4)), 0, 0.1, w)
    with pytest.raises(ValueError):
        Problem(model, rest(np.eye(4)), rest(np.eye(4)), 5, 0.0, w)
    with pytest.raises(ValueError):
        Problem(model, rest(np.eye(4)), rest(np.eye(4)), 5, 0.1, CostWeights.scaled(6, 6, 1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        Problem(model, rest(np.eye(4)), rest(np.eye(4)), 5, 0.1, w, initial_inputs=np.zeros((4, 6)))


def test_literal_gradient_is_first_order_near_goal():
    # without the chain rule the backward pass treats the goal offset as additive;
    # the two agree where the offset is small
    problem = rigid_problem(N=15, goal=rest(make_pose(rot_z(0.01), [0.01, 0.0, 0.0])))
    lit, ex = solve(problem, LITERAL), solve(problem, EXACT)
    assert lit.status == ex.status == CONVERGED
    assert np.max(np.abs(lit.trajectory.inputs - ex.trajectory.inputs)) < 1e-5


def test_goal_error_jacobians_match_finite_differences(rng):
    goal = rest(SE3.exp(rng.normal(size=6)))
    X, xi = SE3.exp(rng.normal(size=6)), rng.normal(size=6)
    e = goal_error(SE3, goal, X, xi)
    T = goal_error_jacobians(SE3, e[None])[0]
    num = central_difference(lambda dx: goal_error(SE3, goal, X @ SE3.exp(dx[:6]), xi + dx[6:]), np.zeros(12), 1e-6)
    assert np.max(np.abs(T - num)) < 1e-7
