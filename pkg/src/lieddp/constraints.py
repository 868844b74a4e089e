"""Inequality constraints ``g <= 0`` and their tangent-space expansions.

Three kinds are supported and always stacked in this row order:

* :class:`ConfigAvoidance` - keep the tangent-space offset
  ``psi_c = log(X^{-1} X_c)`` outside a ball (or ellipsoid) around a
  forbidden configuration: ``g = r^2 - |psi_c|^2``.
* :class:`VelocityBound` - one twist component against a bound,
  ``g = beta (xi_b - xi_i)`` with ``beta = -1`` for upper and ``+1`` for
  lower bounds.
* :class:`InputBound` - ``g = [u - u_max; u_min - u]``.

Everything is evaluated over a whole horizon at once: configurations have
shape ``(K, k, k)``, twists ``(K, n)``, inputs ``(K, m)``.

Jacobians with respect to the error state ``x = [psi; dxi]`` come in two
flavours. ``numeric`` differentiates the evaluation itself through the
on-manifold perturbation ``X exp(eps e_i)``; ``paper`` assembles the
closed-form rows ``[-2 (ad_xi psi_c)^T, 2 psi_c^T]`` for configurations and
``[0, beta (Gamma dxi_b)^T]`` / ``beta (Lambda^T dxi_b)^T`` for velocities.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .liegroup import SE3, make_pose, so3_log

FD_STEP = 1e-6
JACOBIAN_MODES = ("numeric", "paper")
COMPONENT_MODES = ("full", "position", "rotation")


@dataclass(frozen=True)
class ConfigAvoidance:
    """Forbidden region around ``center`` in the tangent space.

    ``components`` restricts the offset on SE(3): ``position`` compares only
    positions (the center takes the current orientation, so the tangent
    distance is the Euclidean distance), ``rotation`` compares only
    orientations. ``radii`` turns the ball into an axis-aligned ellipsoid over
    the selected components, ``g = 1 - sum((psi_i / r_i)^2)``.
    """

    center: np.ndarray
    radius: float
    components: str = "full"
    radii: tuple | None = None
    name: str = ""

    kind = "config"

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.components not in COMPONENT_MODES:
            raise ValueError(f"components must be one of {COMPONENT_MODES}, got {self.components!r}")
        if self.radii is not None and any(not r > 0.0 for r in self.radii):
            raise ValueError("ellipsoid radii must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @classmethod
    def sphere(cls, position, radius, name=""):
        """Translational obstacle: a ball of ``radius`` around ``position``."""
        return cls(make_pose(p=position), radius, components="position", name=name)

    @property
    def rows(self):
        return 1

    def selection(self, group):
        n = group.dim
        if self.components == "full":
            return np.ones(n, dtype=bool)
        if group is not SE3:
            raise ValueError(f"{self.components!r} avoidance is only defined on SE3")
        mask = np.zeros(n, dtype=bool)
        if self.components == "rotation":
            mask[:3] = True
        else:
            mask[3:] = True
        return mask

    def offsets(self, group, configs):
        """``psi_c`` for a batch of configurations, unselected entries zeroed."""
        configs = np.asarray(configs, dtype=float)
        if self.components == "full":
            psi = group.log(group.inverse(configs) @ self.center, strict=False)
        elif group is not SE3:
            raise ValueError(f"{self.components!r} avoidance is only defined on SE3")
        elif self.components == "position":
            R = configs[..., :3, :3]
            d = self.center[:3, 3] - configs[..., :3, 3]
            psi = np.concatenate(
                [np.zeros(d.shape), np.einsum("...ji,...j->...i", R, d)], axis=-1
            )
        else:
            Rrel = np.swapaxes(configs[..., :3, :3], -1, -2) @ self.center[:3, :3]
            w = so3_log(Rrel, strict=False)
            psi = np.concatenate([w, np.zeros(w.shape)], axis=-1)
        return psi

    def _weights(self, group):
        sel = self.selection(group)
        if self.radii is None:
            return sel.astype(float), self.radius**2
        radii = np.asarray(self.radii, dtype=float)
        if radii.size != sel.sum():
            raise ValueError(f"expected {sel.sum()} ellipsoid radii, got {radii.size}")
        w = np.zeros(group.dim)
        w[sel] = 1.0 / radii**2
        return w, 1.0

    def evaluate(self, group, configs, twists, inputs):
        psi = self.offsets(group, configs)
        w, level = self._weights(group)
        return (level - np.sum(w * psi * psi, axis=-1))[..., None]

    def paper_jacobian(self, group, model, configs, twists, inputs):
        psi = self.offsets(group, configs)
        w, _ = self._weights(group)
        wpsi = w * psi
        n = group.dim
        K = len(configs)
        jx = np.zeros((K, 1, 2 * n))
        ad = np.stack([group.ad(xi) for xi in twists])
        jx[:, 0, :n] = -2.0 * np.einsum("kij,kj->ki", ad, wpsi)
        jx[:, 0, n:] = 2.0 * wpsi
        return jx, np.zeros((K, 1, model.input_dim))


@dataclass(frozen=True)
class VelocityBound:
    """Bound on twist component ``axis``; ``beta = -1`` upper, ``+1`` lower."""

    axis: int
    bound: float
    beta: int = -1

    kind = "velocity"

    def __post_init__(self):
        if self.beta not in (-1, 1):
            raise ValueError(f"beta must be -1 (upper) or +1 (lower), got {self.beta}")

    @classmethod
    def upper(cls, axis, value):
        return cls(axis, value, -1)

    @classmethod
    def lower(cls, axis, value):
        return cls(axis, value, 1)

    @property
    def rows(self):
        return 1

    def _check_axis(self, n):
        if not 0 <= self.axis < n:
            raise ValueError(f"velocity axis {self.axis} out of range for dimension {n}")

    def evaluate(self, group, configs, twists, inputs):
        twists = np.asarray(twists, dtype=float)
        self._check_axis(twists.shape[-1])
        return (self.beta * (self.bound - twists[..., self.axis]))[..., None]

    def paper_jacobian(self, group, model, configs, twists, inputs):
        n = group.dim
        self._check_axis(n)
        K = len(twists)
        jx = np.zeros((K, 1, 2 * n))
        ju = np.zeros((K, 1, model.input_dim))
        for k in range(K):
            Gamma, Lambda = model.jacobians(twists[k], inputs[k])
            dxi_b = np.zeros(n)
            dxi_b[self.axis] = self.bound - twists[k, self.axis]
            jx[k, 0, n:] = self.beta * (Gamma @ dxi_b)
            ju[k, 0] = self.beta * (Lambda.T @ dxi_b)
        return jx, ju


@dataclass(frozen=True)
class InputBound:
    lower: np.ndarray
    upper: np.ndarray

    kind = "input"

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("input bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("input lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def rows(self):
        return 2 * self.lower.size

    def evaluate(self, group, configs, twists, inputs):
        u = np.asarray(inputs, dtype=float)
        if u.shape[-1] != self.lower.size:
            raise ValueError(f"input bound has {self.lower.size} entries, input has {u.shape[-1]}")
        return np.concatenate([u - self.upper, self.lower - u], axis=-1)

    def paper_jacobian(self, group, model, configs, twists, inputs):
        K, m = len(inputs), self.lower.size
        ju = np.broadcast_to(np.vstack([np.eye(m), -np.eye(m)]), (K, 2 * m, m)).copy()
        return np.zeros((K, 2 * m, 2 * group.dim)), ju


# ---------------------------------------------------------------------------
# single-constraint conveniences
# ---------------------------------------------------------------------------

def eval_velocity_bound(spec, xi):
    return float(spec.evaluate(None, None, np.asarray(xi, dtype=float)[None], None)[0, 0])


def eval_config_avoidance(spec, X, group=SE3):
    """Return ``(g, psi_c)`` for a single configuration."""
    psi = spec.offsets(group, np.asarray(X, dtype=float)[None])[0]
    g = float(spec.evaluate(group, np.asarray(X, dtype=float)[None], None, None)[0, 0])
    return g, psi


def eval_input_bound(spec, u):
    return spec.evaluate(None, None, None, np.asarray(u, dtype=float)[None])[0]


# ---------------------------------------------------------------------------
# stacking
# ---------------------------------------------------------------------------

_ORDER = {"config": 0, "velocity": 1, "input": 2}


def order_specs(specs):
    """Stable reorder into the canonical ``[config; velocity; input]`` layout."""
    return sorted(specs, key=lambda s: _ORDER[s.kind])


@dataclass
class ConstraintEval:
    """Stacked constraint values and Jacobians over ``K`` steps.

    ``mask`` is false for rows that do not exist at a step (input bounds at
    the terminal state); those rows carry ``values = -1`` and zero Jacobians.
    """

    values: np.ndarray
    jac_x: np.ndarray
    jac_u: np.ndarray
    mask: np.ndarray

    @property
    def p(self):
        return self.values.shape[-1]

    def max_violation(self):
        if self.values.size == 0:
            return 0.0
        return float(max(0.0, np.max(np.where(self.mask, self.values, -np.inf))))


def _row_mask(specs, K, has_input):
    cols = []
    for spec in specs:
        live = np.ones(K, dtype=bool) if spec.kind != "input" else has_input
        cols.extend([live] * spec.rows)
    if not cols:
        return np.zeros((K, 0), dtype=bool)
    return np.stack(cols, axis=-1)


def _perturb_configs(group, configs, eps):
    """``configs @ exp(eps e_i)`` for every tangent direction, shape ``(n, K, k, k)``."""
    n = group.dim
    steps = group.exp(eps * np.eye(n))
    return configs[None] @ steps[:, None]


def _numeric_jacobian(spec, group, model, configs, twists, inputs, eps=FD_STEP):
    K, n, m = len(configs), group.dim, model.input_dim
    jx = np.zeros((K, spec.rows, 2 * n))
    ju = np.zeros((K, spec.rows, m))
    if spec.kind == "config":
        plus = _perturb_configs(group, configs, eps)
        minus = _perturb_configs(group, configs, -eps)
        for i in range(n):
            diff = spec.evaluate(group, plus[i], twists, inputs) - spec.evaluate(group, minus[i], twists, inputs)
            jx[:, :, i] = diff / (2 * eps)
    elif spec.kind == "velocity":
        for i in range(n):
            e = np.zeros(n)
            e[i] = eps
            diff = spec.evaluate(group, configs, twists + e, inputs) - spec.evaluate(group, configs, twists - e, inputs)
            jx[:, :, n + i] = diff / (2 * eps)
    else:
        for i in range(m):
            e = np.zeros(m)
            e[i] = eps
            diff = spec.evaluate(group, configs, twists, inputs + e) - spec.evaluate(group, configs, twists, inputs - e)
            ju[:, :, i] = diff / (2 * eps)
    return jx, ju


def evaluate_horizon(specs, model, configs, twists, inputs, mode="numeric", jacobians=True):
    """Stack every constraint over ``K = len(configs)`` steps.

    ``inputs`` may be one row shorter than ``configs`` (the usual horizon
    layout); the missing terminal input rows are masked out.
    """
    if mode not in JACOBIAN_MODES:
        raise ValueError(f"unknown jacobian mode {mode!r}; expected one of {JACOBIAN_MODES}")
    group = model.group
    specs = order_specs(specs)
    configs = np.asarray(configs, dtype=float)
    twists = np.asarray(twists, dtype=float)
    inputs = np.asarray(inputs, dtype=float).reshape(-1, model.input_dim)
    K, n, m = len(configs), group.dim, model.input_dim
    has_input = np.ones(K, dtype=bool)
    if len(inputs) == K - 1:
        inputs = np.vstack([inputs, np.zeros((1, m))])
        has_input[-1] = False
    elif len(inputs) != K:
        raise ValueError("inputs must have K or K-1 rows")

    mask = _row_mask(specs, K, has_input)
    p = mask.shape[1]
    values = np.empty((K, p))
    jac_x = np.zeros((K, p, 2 * n)) if jacobians else None
    jac_u = np.zeros((K, p, m)) if jacobians else None
    row = 0
    for spec in specs:
        rows = slice(row, row + spec.rows)
        values[:, rows] = spec.evaluate(group, configs, twists, inputs)
        if jacobians:
            if mode == "paper":
                jx, ju = spec.paper_jacobian(group, model, configs, twists, inputs)
            else:
                jx, ju = _numeric_jacobian(spec, group, model, configs, twists, inputs)
            jac_x[:, rows] = jx
            jac_u[:, rows] = ju
        row += spec.rows
    values = np.where(mask, values, -1.0)
    if jacobians:
        jac_x[~mask] = 0.0
        jac_u[~mask] = 0.0
    return ConstraintEval(values, jac_x, jac_u, mask)


def stack_eval(specs, model, X, xi, u, mode="numeric"):
    """Single-step stack: values ``(p,)``, ``jac_x (p, 2n)``, ``jac_u (p, m)``."""
    u = np.zeros(model.input_dim) if u is None else np.asarray(u, dtype=float)
    ev = evaluate_horizon(specs, model, np.asarray(X)[None], np.asarray(xi)[None], u[None], mode)
    return ConstraintEval(ev.values[0], ev.jac_x[0], ev.jac_u[0], ev.mask[0])


# ---------------------------------------------------------------------------
# augmented-Lagrangian bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class MultiplierState:
    """Lagrange multipliers and penalties.

    ``lam`` and ``mu`` have shape ``(p,)`` for multipliers shared by every
    time step, or ``(K, p)`` for one multiplier per step and constraint.
    """

    lam: np.ndarray
    mu: np.ndarray
    gamma: float = 10.0
    mu_max: float = 1e8

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.mu = np.broadcast_to(np.asarray(self.mu, dtype=float), self.lam.shape).copy()
        if np.any(self.lam < 0.0):
            raise ValueError("multipliers must be non-negative")
        if np.any(self.mu <= 0.0):
            raise ValueError("penalties must be positive")
        if not self.gamma > 1.0:
            raise ValueError("penalty growth gamma must exceed 1")

    @classmethod
    def initial(cls, shape, lam0=0.0, mu0=1.0, gamma=10.0, mu_max=1e8):
        return cls(np.full(shape, lam0), np.full(shape, mu0), gamma, mu_max)

    @property
    def per_step(self):
        return self.lam.ndim == 2

    def broadcast(self, K):
        """Multipliers and penalties expanded to ``(K, p)``."""
        if self.per_step:
            return self.lam, self.mu
        return (np.broadcast_to(self.lam, (K,) + self.lam.shape),
                np.broadcast_to(self.mu, (K,) + self.mu.shape))


def penalty_weights(values, lam, mu):
    """Diagonal of the active-set penalty matrix, elementwise over any shape.

    Zero where the constraint is strictly satisfied with a zero multiplier,
    the penalty otherwise (ties at ``g = 0`` count as active).
    """
    inactive = (values < 0.0) & (lam == 0.0)
    return np.where(inactive, 0.0, mu)


def penalty_matrix(values, mult):
    """``I_mu`` as a dense ``p x p`` diagonal matrix for a single step."""
    values = np.asarray(values, dtype=float)
    lam = mult.lam if not mult.per_step else mult.lam[0]
    mu = mult.mu if not mult.per_step else mult.mu[0]
    return np.diag(penalty_weights(values, lam, mu))


def update_multipliers(mult, values, mask=None):
    """Outer-loop update ``lam+ = max(0, lam + mu g)``, ``mu+ = min(gamma mu, mu_max)``.

    ``values`` are per-step constraint values ``(K, p)``. Shared multipliers
    use the worst value over the horizon for each constraint.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if mask is None:
        mask = np.ones(values.shape, dtype=bool)
    if mult.per_step:
        g = np.where(mask, values, -np.inf)
    else:
        g = np.max(np.where(mask, values, -np.inf), axis=0)
    lam = np.maximum(0.0, mult.lam + mult.mu * g)
    mu = np.minimum(mult.gamma * mult.mu, mult.mu_max)
    return replace(mult, lam=lam, mu=mu)
