"""Monte-Carlo evaluation of the DDP feedback policy under twist noise.

Each sample perturbs the twist update with ``sigma_w w``, ``w ~ N(0, I)``,
and is driven either open loop (the optimized inputs) or by the
Lie-algebraic feedback law

    u = u*_k + K_k [log((X*_k)^{-1} X_k); xi_k - xi*_k]

Samples draw from their own generator seeded by ``(base_seed, index)``, so
results do not depend on how samples are batched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DIVERGENCE_LIMIT, Trajectory
from .exceptions import DivergenceError, EmptyStatisticsError
from .liegroup import SE3

MODES = ("open_loop", "feedback")
CHUNK = 250


@dataclass(frozen=True)
class NoiseModel:
    sigma_w: float
    base_seed: int = 0

    def __post_init__(self):
        if not self.sigma_w >= 0.0:
            raise ValueError(f"sigma_w must be non-negative, got {self.sigma_w}")

    def draws(self, sample_index, N, dim):
        """Standard normal draws ``(N, dim)`` for one sample."""
        rng = np.random.default_rng([int(self.base_seed), int(sample_index)])
        return rng.standard_normal((N, dim))


@dataclass
class MonteCarloStats:
    """Per-step, per-dimension mean and (unbiased) variance of the error state."""

    mean: np.ndarray
    variance: np.ndarray
    sample_count: int
    mode: str
    diverged: int = 0

    @property
    def terminal_trace(self):
        """Trace of the terminal error-state covariance."""
        return float(np.sum(self.variance[-1]))


def _normalize_mode(mode):
    aliases = {"open": "open_loop", "fb": "feedback"}
    mode = aliases.get(mode, mode)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def feedback_control(k, config, nominal, twist=None, full_state=True, group=SE3):
    """Feedback input at step ``k`` for one state or a batch of states.

    With ``full_state`` the measured twist error fills the velocity block of
    the gain input; otherwise that block is zero and only the configuration
    error is fed back.
    """
    traj, policy = nominal.trajectory, nominal.policy
    if not 0 <= k < traj.N:
        raise IndexError(f"step {k} outside the horizon 0..{traj.N - 1}")
    config = np.asarray(config, dtype=float)
    psi = group.log(group.inverse(traj.configs[k]) @ config, strict=False)
    if full_state and twist is not None:
        dxi = np.asarray(twist, dtype=float) - traj.twists[k]
    else:
        dxi = np.zeros_like(psi)
    dx = np.concatenate([psi, dxi], axis=-1)
    return traj.inputs[k] + dx @ policy.gains[k].T


def _rollout_batch(model, nominal, noise, indices, mode, full_state, current_twist):
    """Integrate a batch of samples; returns error states ``(S, N+1, 2n)`` and a divergence mask."""
    traj = nominal.trajectory
    group = model.group
    N, dt, n = traj.N, traj.dt, model.n
    S = len(indices)
    w = np.stack([noise.draws(i, N, n) for i in indices], axis=1) * noise.sigma_w
    X = np.broadcast_to(traj.configs[0], (S,) + traj.configs[0].shape).copy()
    xi = np.broadcast_to(traj.twists[0], (S, n)).copy()
    err = np.zeros((S, N + 1, 2 * n))
    bad = np.zeros(S, dtype=bool)
    for k in range(N):
        if mode == "feedback":
            u = feedback_control(k, X, nominal, xi, full_state, group)
        else:
            u = np.broadcast_to(traj.inputs[k], (S, model.input_dim))
        xi_next = xi + model.f(xi, u) * dt + w[k]
        bad |= ~np.all(np.isfinite(xi_next), axis=1) | (np.max(np.abs(xi_next), axis=1) > DIVERGENCE_LIMIT)
        xi_next[bad] = traj.twists[k + 1]
        X = X @ group.exp((xi if current_twist else xi_next) * dt)
        xi = xi_next
        psi = group.log(group.inverse(traj.configs[k + 1]) @ X, strict=False)
        err[:, k + 1] = np.concatenate([psi, xi - traj.twists[k + 1]], axis=1)
    return err, bad


def stochastic_rollout(model, nominal, noise, sample_index, mode="feedback", full_state=True, current_twist=False):
    """One noisy closed- or open-loop trajectory.

    By default the configuration advances with the updated twist, the same
    ordering as the deterministic rollout, so ``sigma_w = 0`` reproduces the
    nominal exactly. ``current_twist=True`` advances it with the twist from
    the start of the step instead.
    """
    mode = _normalize_mode(mode)
    traj = nominal.trajectory
    group = model.group
    N, dt = traj.N, traj.dt
    w = noise.draws(sample_index, N, model.n) * noise.sigma_w
    configs = np.empty_like(traj.configs)
    twists = np.empty_like(traj.twists)
    inputs = np.empty_like(traj.inputs)
    configs[0], twists[0] = traj.configs[0], traj.twists[0]
    for k in range(N):
        if mode == "feedback":
            inputs[k] = feedback_control(k, configs[k], nominal, twists[k], full_state, group)
        else:
            inputs[k] = traj.inputs[k]
        twists[k + 1] = twists[k] + model.f(twists[k], inputs[k]) * dt + w[k]
        if not np.all(np.isfinite(twists[k + 1])) or np.max(np.abs(twists[k + 1])) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"sample {sample_index} diverged at step {k + 1}", step=k + 1)
        step_twist = twists[k] if current_twist else twists[k + 1]
        configs[k + 1] = configs[k] @ group.exp(step_twist * dt)
    return Trajectory(configs, twists, inputs, dt)


def _merge(count, mean, m2, other_count, other_mean, other_m2):
    """Chan et al. pairwise combination of running moments."""
    total = count + other_count
    if other_count == 0:
        return count, mean, m2
    if count == 0:
        return other_count, other_mean, other_m2
    delta = other_mean - mean
    mean = mean + delta * (other_count / total)
    m2 = m2 + other_m2 + delta * delta * (count * other_count / total)
    return total, mean, m2


def monte_carlo(model, nominal, noise, n_samples, mode="feedback", full_state=True, current_twist=False, chunk=CHUNK):
    """Statistics of the error state against the nominal over ``n_samples`` samples.

    Samples are integrated in fixed chunks of consecutive indices and the
    chunk moments are merged in index order, so the output depends only on
    ``(noise, n_samples, mode)``.
    """
    mode = _normalize_mode(mode)
    if n_samples < 2:
        raise ValueError("monte carlo needs at least two samples")
    shape = nominal.trajectory.twists.shape[:1] + (2 * model.n,)
    count, mean, m2 = 0, np.zeros(shape), np.zeros(shape)
    diverged = 0
    for start in range(0, n_samples, chunk):
        indices = range(start, min(start + chunk, n_samples))
        err, bad = _rollout_batch(model, nominal, noise, indices, mode, full_state, current_twist)
        err = err[~bad]
        diverged += int(bad.sum())
        if len(err):
            # shifting by the first sample keeps identical samples at exactly zero variance
            shifted = err - err[0]
            c_shift = shifted.mean(axis=0)
            c_m2 = np.sum((shifted - c_shift) ** 2, axis=0)
            c_mean = err[0] + c_shift
            count, mean, m2 = _merge(count, mean, m2, len(err), c_mean, c_m2)
    if count == 0:
        raise EmptyStatisticsError(f"all {n_samples} samples diverged")
    variance = m2 / (count - 1) if count > 1 else np.zeros_like(m2)
    return MonteCarloStats(mean, variance, count, mode, diverged)
