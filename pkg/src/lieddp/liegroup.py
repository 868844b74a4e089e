"""Matrix Lie groups SO(3) and SE(3).

Group elements are plain numpy arrays (3x3 rotations, 4x4 homogeneous
transforms). Tangent vectors are arrays of length ``n``; SE(3) twists are
ordered ``[omega; v]`` (angular first). All of the low-level helpers accept
arbitrary leading batch dimensions so that a whole horizon can be mapped in a
single call.

The :class:`MatrixLieGroup` base class is the genericity contract used by the
solver: anything exposing ``dim``, ``hat``, ``vee``, ``exp``, ``log``,
``compose``, ``inverse``, ``Ad`` and ``ad`` can be optimized over.
"""

from __future__ import annotations

import abc

import numpy as np
from scipy.linalg import expm

from .exceptions import BranchAmbiguityError, GimbalLockError

# below this angle the sinc-like coefficients switch to their Taylor series
SMALL_ANGLE = 1e-8
# third-order coefficients (theta - sin theta)/theta^3 lose digits much earlier
SERIES_ANGLE = 1e-3
PI_MARGIN = 1e-6
ORTHO_TOL = 1e-9
ALGEBRA_TOL = 1e-8


# ---------------------------------------------------------------------------
# so(3) / SO(3) helpers
# ---------------------------------------------------------------------------

def skew(w):
    """Map ``(..., 3)`` vectors to ``(..., 3, 3)`` skew-symmetric matrices."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != 3:
        raise ValueError(f"skew expects a trailing dimension of 3, got {w.shape}")
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def unskew(m):
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def _coefficients(theta):
    """Return sin(t)/t, (1-cos t)/t^2 and (t - sin t)/t^3 with series guards."""
    t2 = theta * theta
    small = theta < SMALL_ANGLE
    mid = theta < SERIES_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(safe) / safe)
    half = np.sin(0.5 * safe) / safe
    b = np.where(small, 0.5 - t2 / 24.0, 2.0 * half * half)
    safe_mid = np.where(mid, 1.0, theta)
    c = np.where(
        mid,
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        (safe_mid - np.sin(safe_mid)) / safe_mid**3,
    )
    return a, b, c


def so3_exp(phi):
    """Rodrigues formula, batched over leading dimensions."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    a, b, _ = _coefficients(theta)
    K = skew(phi)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def so3_left_jacobian(phi):
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    _, b, c = _coefficients(theta)
    K = skew(phi)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + b[..., None, None] * K + c[..., None, None] * (K @ K)


def so3_log(R, strict=True):
    """Principal logarithm of rotation matrices, batched.

    Near theta = pi the axis is recovered from the symmetric part of ``R`` and
    its sign from the skew part, so the result is the principal log of the
    matrix as represented in floating point. With ``strict`` set, angles
    within ``PI_MARGIN`` of pi raise :class:`BranchAmbiguityError`.
    """
    R = np.asarray(R, dtype=float)
    s_vec = 0.5 * unskew(R - np.swapaxes(R, -1, -2))
    s = np.linalg.norm(s_vec, axis=-1)
    c = np.clip(0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0), -1.0, 1.0)
    theta = np.arctan2(s, c)
    if strict and np.any(np.pi - theta < PI_MARGIN):
        raise BranchAmbiguityError(
            "rotation angle within 1e-6 of pi; principal logarithm is ambiguous"
        )

    small = theta < SMALL_ANGLE
    safe_s = np.where(small, 1.0, s)
    scale = np.where(small, 1.0 + theta * theta / 6.0, theta / safe_s)
    phi = scale[..., None] * s_vec

    near_pi = c < -0.7
    if np.any(near_pi):
        sym = 0.5 * (R + np.swapaxes(R, -1, -2)) - c[..., None, None] * np.eye(3)
        one_minus_c = (1.0 - c)[..., None, None]
        nn = sym / one_minus_c
        diag = np.diagonal(nn, axis1=-2, axis2=-1)
        j = np.argmax(diag, axis=-1)
        col = np.take_along_axis(nn, j[..., None, None], axis=-1)[..., 0]
        dj = np.take_along_axis(diag, j[..., None], axis=-1)
        axis = col / np.sqrt(np.maximum(dj, 1e-300))
        axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
        sign = np.where(np.sum(axis * s_vec, axis=-1) < 0.0, -1.0, 1.0)
        phi_pi = (sign * theta)[..., None] * axis
        phi = np.where(near_pi[..., None], phi_pi, phi)
    return phi


# ---------------------------------------------------------------------------
# se(3) / SE(3) helpers
# ---------------------------------------------------------------------------

def se3_hat(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 6:
        raise ValueError(f"se(3) twist must have length 6, got {xi.shape[-1]}")
    out = np.zeros(xi.shape[:-1] + (4, 4))
    out[..., :3, :3] = skew(xi[..., :3])
    out[..., :3, 3] = xi[..., 3:]
    return out


def se3_vee(M):
    M = np.asarray(M, dtype=float)
    return np.concatenate([unskew(M[..., :3, :3]), M[..., :3, 3]], axis=-1)


def se3_exp(xi):
    xi = np.asarray(xi, dtype=float)
    w = xi[..., :3]
    v = xi[..., 3:]
    theta = np.linalg.norm(w, axis=-1)
    a, b, c = _coefficients(theta)
    K = skew(w)
    K2 = K @ K
    eye = np.eye(3)
    R = eye + a[..., None, None] * K + b[..., None, None] * K2
    V = eye + b[..., None, None] * K + c[..., None, None] * K2
    out = np.zeros(xi.shape[:-1] + (4, 4))
    out[..., :3, :3] = R
    out[..., :3, 3] = np.einsum("...ij,...j->...i", V, v)
    out[..., 3, 3] = 1.0
    return out


def _vinv_coefficient(theta):
    """(1 - (t/2) cot(t/2)) / t^2, the omega^2 weight of V^{-1}."""
    t2 = theta * theta
    mid = theta < SERIES_ANGLE
    safe = np.where(mid, 1.0, theta)
    half = 0.5 * safe
    exact = (1.0 - half * np.cos(half) / np.sin(half)) / (safe * safe)
    return np.where(mid, 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0, exact)


def se3_log(X, strict=True):
    X = np.asarray(X, dtype=float)
    w = so3_log(X[..., :3, :3], strict=strict)
    theta = np.linalg.norm(w, axis=-1)
    d = _vinv_coefficient(theta)
    K = skew(w)
    Vinv = np.eye(3) - 0.5 * K + d[..., None, None] * (K @ K)
    v = np.einsum("...ij,...j->...i", Vinv, X[..., :3, 3])
    return np.concatenate([w, v], axis=-1)


def se3_inverse(X):
    X = np.asarray(X, dtype=float)
    Rt = np.swapaxes(X[..., :3, :3], -1, -2)
    out = np.zeros(X.shape)
    out[..., :3, :3] = Rt
    out[..., :3, 3] = -np.einsum("...ij,...j->...i", Rt, X[..., :3, 3])
    out[..., 3, 3] = 1.0
    return out


def se3_adjoint(X):
    X = np.asarray(X, dtype=float)
    R = X[..., :3, :3]
    out = np.zeros(X.shape[:-2] + (6, 6))
    out[..., :3, :3] = R
    out[..., 3:, 3:] = R
    out[..., 3:, :3] = skew(X[..., :3, 3]) @ R
    return out


def se3_ad(xi):
    xi = np.asarray(xi, dtype=float)
    W = skew(xi[..., :3])
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = W
    out[..., 3:, 3:] = W
    out[..., 3:, :3] = skew(xi[..., 3:])
    return out


def make_pose(R=None, p=None):
    """Assemble a homogeneous transform from a rotation and a position."""
    X = np.eye(4)
    if R is not None:
        X[:3, :3] = R
    if p is not None:
        X[:3, 3] = p
    return X


# ---------------------------------------------------------------------------
# elementary rotations and Euler angles
# ---------------------------------------------------------------------------

def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def from_euler_xyz(phi, theta, psi, degrees=True):
    """Rotation ``R_x(phi) R_y(theta) R_z(psi)``."""
    if degrees:
        phi, theta, psi = np.deg2rad([phi, theta, psi])
    return rot_x(phi) @ rot_y(theta) @ rot_z(psi)


def euler_xyz(R, degrees=True, gimbal_margin=1e-6):
    """Angles ``(phi, theta, psi)`` with ``R = R_x(phi) R_y(theta) R_z(psi)``.

    Raises :class:`GimbalLockError` when ``|theta|`` is within
    ``gimbal_margin`` (radians) of 90 degrees.
    """
    R = np.asarray(R, dtype=float)
    sin_theta = np.clip(R[0, 2], -1.0, 1.0)
    theta = np.arcsin(sin_theta)
    if np.pi / 2 - abs(theta) < gimbal_margin:
        raise GimbalLockError(f"pitch {np.rad2deg(theta):.6f} deg is at the gimbal singularity")
    phi = np.arctan2(-R[1, 2], R[2, 2])
    psi = np.arctan2(-R[0, 1], R[0, 0])
    angles = np.array([phi, theta, psi])
    return np.rad2deg(angles) if degrees else angles


# ---------------------------------------------------------------------------
# group interface
# ---------------------------------------------------------------------------

class MatrixLieGroup(abc.ABC):
    """Interface for an ``n``-dimensional matrix Lie group."""

    name: str
    dim: int
    matrix_size: int

    @abc.abstractmethod
    def hat(self, v): ...

    @abc.abstractmethod
    def vee(self, M, check=True): ...

    @abc.abstractmethod
    def exp(self, v): ...

    @abc.abstractmethod
    def log(self, X, strict=True): ...

    @abc.abstractmethod
    def inverse(self, X): ...

    @abc.abstractmethod
    def Ad(self, X): ...

    @abc.abstractmethod
    def ad(self, xi): ...

    @abc.abstractmethod
    def is_element(self, X, tol=ORTHO_TOL): ...

    def identity(self):
        return np.eye(self.matrix_size)

    def compose(self, A, B):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        self._check_matrix(A)
        self._check_matrix(B)
        return A @ B

    def coad(self, xi):
        """Coadjoint map, the transpose of :meth:`ad`."""
        return np.swapaxes(self.ad(xi), -1, -2)

    def bracket(self, a, b):
        """Lie bracket ``[a^, b^]`` returned in coordinates."""
        A, B = self.hat(a), self.hat(b)
        return self.vee(A @ B - B @ A, check=False)

    def right_jacobian(self, v):
        """``J_r(v)`` with ``exp(v + e) ~= exp(v) exp(J_r(v) e)``.

        Evaluated as ``int_0^1 exp(-s ad_v) ds`` through one block matrix
        exponential, so it holds for any group exposing :meth:`ad`.
        """
        v = self._check_vector(v)
        n = self.dim
        aug = np.zeros((2 * n, 2 * n))
        aug[:n, :n] = -self.ad(v)
        aug[:n, n:] = np.eye(n)
        return expm(aug)[:n, n:]

    def between(self, A, B, strict=False):
        """``log(A^{-1} B)``: the tangent-space offset from ``A`` to ``B``."""
        return self.log(self.inverse(A) @ B, strict=strict)

    def _check_vector(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise ValueError(f"{self.name} tangent vectors have length {self.dim}, got {v.shape[-1]}")
        return v

    def _check_matrix(self, X):
        k = self.matrix_size
        if X.shape[-2:] != (k, k):
            raise ValueError(f"{self.name} elements are {k}x{k}, got {X.shape[-2:]}")

    def _check_element(self, X):
        self._check_matrix(X)
        if not self.is_element(X):
            raise ValueError(f"matrix is not a valid {self.name} element")

    def __repr__(self):
        return f"<{self.name}>"


class SpecialOrthogonal3(MatrixLieGroup):
    name = "SO3"
    dim = 3
    matrix_size = 3

    def hat(self, v):
        return skew(self._check_vector(v))

    def vee(self, M, check=True):
        M = np.asarray(M, dtype=float)
        self._check_matrix(M)
        if check and np.max(np.abs(M + np.swapaxes(M, -1, -2))) > ALGEBRA_TOL:
            raise ValueError("matrix is not skew-symmetric")
        return unskew(M)

    def exp(self, v):
        return so3_exp(self._check_vector(v))

    def log(self, X, strict=True):
        X = np.asarray(X, dtype=float)
        if strict:
            self._check_element(X)
        return so3_log(X, strict=strict)

    def inverse(self, X):
        X = np.asarray(X, dtype=float)
        self._check_matrix(X)
        return np.swapaxes(X, -1, -2).copy()

    def Ad(self, X):
        X = np.asarray(X, dtype=float)
        self._check_matrix(X)
        return X.copy()

    def ad(self, xi):
        return skew(self._check_vector(xi))

    def is_element(self, X, tol=ORTHO_TOL):
        X = np.asarray(X, dtype=float)
        if X.shape[-2:] != (3, 3):
            return False
        err = X @ np.swapaxes(X, -1, -2) - np.eye(3)
        ortho = np.linalg.norm(err, axis=(-2, -1)) < tol
        det = np.abs(np.linalg.det(X) - 1.0) < tol
        return bool(np.all(ortho & det))


class SpecialEuclidean3(MatrixLieGroup):
    name = "SE3"
    dim = 6
    matrix_size = 4

    def hat(self, v):
        return se3_hat(self._check_vector(v))

    def vee(self, M, check=True):
        M = np.asarray(M, dtype=float)
        self._check_matrix(M)
        if check:
            W = M[..., :3, :3]
            if np.max(np.abs(W + np.swapaxes(W, -1, -2))) > ALGEBRA_TOL or np.max(np.abs(M[..., 3, :])) > ALGEBRA_TOL:
                raise ValueError("matrix is not in se(3)")
        return se3_vee(M)

    def exp(self, v):
        return se3_exp(self._check_vector(v))

    def log(self, X, strict=True):
        X = np.asarray(X, dtype=float)
        if strict:
            self._check_element(X)
        return se3_log(X, strict=strict)

    def inverse(self, X):
        X = np.asarray(X, dtype=float)
        self._check_matrix(X)
        return se3_inverse(X)

    def Ad(self, X):
        X = np.asarray(X, dtype=float)
        self._check_matrix(X)
        return se3_adjoint(X)

    def ad(self, xi):
        return se3_ad(self._check_vector(xi))

    def is_element(self, X, tol=ORTHO_TOL):
        X = np.asarray(X, dtype=float)
        if X.shape[-2:] != (4, 4):
            return False
        if np.any(X[..., 3, :] != np.array([0.0, 0.0, 0.0, 1.0])):
            return False
        return SO3.is_element(X[..., :3, :3], tol)


SO3 = SpecialOrthogonal3()
SE3 = SpecialEuclidean3()

GROUPS = {"SO3": SO3, "SE3": SE3}


def get_group(tag):
    try:
        return GROUPS[tag]
    except KeyError:
        raise ValueError(f"unknown group {tag!r}; expected one of {sorted(GROUPS)}") from None


# module-level spellings of the group operations
def hat(v, group=SE3):
    return group.hat(v)


def vee(M, group=SE3):
    return group.vee(M)


def exp_map(v, group=SE3):
    return group.exp(v)


def log_map(X, group=SE3, strict=True):
    return group.log(X, strict=strict)


def compose(A, B, group=SE3):
    return group.compose(A, B)


def inverse(X, group=SE3):
    return group.inverse(X)


def identity(group=SE3):
    return group.identity()


def adjoint_Ad(X, group=SE3):
    return group.Ad(X)


def ad_small(xi, group=SE3):
    return group.ad(xi)


def coad(xi, group=SE3):
    return group.coad(xi)
