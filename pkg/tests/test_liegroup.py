import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from lieddp import liegroup as lg
from lieddp.exceptions import BranchAmbiguityError, GimbalLockError
from lieddp.liegroup import SE3, SO3, euler_xyz, from_euler_xyz, rot_x, rot_y, rot_z

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)
twists = arrays(np.float64, 6, elements=finite)
rotvecs = arrays(np.float64, 3, elements=finite)


def random_twist(rng, size=None, max_angle=np.pi - 0.1):
    """Twists with rotation angle uniform in (0, max_angle)."""
    shape = (size,) if size else ()
    axis = rng.normal(size=shape + (3,))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = rng.uniform(1e-6, max_angle, size=shape)
    return np.concatenate([axis * np.asarray(angle)[..., None], rng.normal(size=shape + (3,))], axis=-1)


def random_pose(rng):
    return SE3.exp(random_twist(rng))


# hat / vee --------------------------------------------------------------

def test_hat_vee_examples():
    assert np.array_equal(SE3.vee(np.zeros((4, 4))), np.zeros(6))
    assert np.array_equal(SO3.vee(SO3.hat([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])
    W = SO3.hat([1.0, 2.0, 3.0])
    assert np.array_equal(W, -W.T)
    assert W[2, 1] == 1.0 and W[0, 2] == 2.0 and W[1, 0] == 3.0


@given(twists)
def test_hat_vee_roundtrip(xi):
    M = SE3.hat(xi)
    assert np.array_equal(SE3.vee(M), xi)
    assert np.max(np.abs(SE3.hat(SE3.vee(M)) - M)) <= 1e-12


def test_vee_rejects_non_algebra():
    M = SE3.hat([0.1, 0.2, 0.3, 1.0, 2.0, 3.0])
    M[0, 1] += 1e-6
    with pytest.raises(ValueError):
        SE3.vee(M)
    with pytest.raises(ValueError):
        SO3.vee(np.eye(3))


def test_wrong_lengths_rejected():
    with pytest.raises(ValueError):
        SE3.hat(np.zeros(3))
    with pytest.raises(ValueError):
        SO3.exp(np.zeros(6))


# exp / log --------------------------------------------------------------

def test_exp_examples():
    assert np.array_equal(SO3.exp(np.zeros(3)), np.eye(3))
    Rz = SO3.exp([0.0, 0.0, np.pi / 2])
    assert np.allclose(Rz, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    assert np.array_equal(SE3.exp(np.zeros(6)), np.eye(4))


def test_log_examples():
    assert np.array_equal(SE3.log(np.eye(4)), np.zeros(6))
    assert np.allclose(SO3.log(rot_z(np.pi / 2)), [0.0, 0.0, np.pi / 2], atol=1e-15)


def test_exp_matches_dense_expm(rng):
    for xi in random_twist(rng, 100):
        assert np.linalg.norm(SE3.exp(xi) - expm(SE3.hat(xi))) < 1e-10
        assert np.linalg.norm(SO3.exp(xi[:3]) - expm(SO3.hat(xi[:3]))) < 1e-10


def test_roundtrip_batched(rng):
    xi = random_twist(rng, 1000)
    assert np.max(np.abs(SE3.log(SE3.exp(xi)) - xi)) < 1e-9
    assert np.max(np.abs(SO3.log(SO3.exp(xi[:, :3])) - xi[:, :3])) < 1e-9


@settings(max_examples=200)
@given(rotvecs, arrays(np.float64, 3, elements=finite))
def test_exp_log_roundtrip_property(w, v):
    theta = np.linalg.norm(w)
    if theta >= np.pi - 0.1:
        w = w / theta * (np.pi - 0.1) * 0.999
    xi = np.concatenate([w, v])
    X = SE3.exp(xi)
    assert SE3.is_element(X)
    assert np.max(np.abs(SE3.log(X) - xi)) < 1e-9
    assert np.linalg.norm(SE3.exp(SE3.log(X)) - X) < 1e-9


def test_small_angle_continuity():
    for v in (np.array([1e-8, 0, 0, 0, 0, 0]), np.array([0, 3e-9, 4e-9, 1e-8, 0, -1e-8])):
        assert np.max(np.abs(SE3.exp(v) - (np.eye(4) + SE3.hat(v)))) <= 1e-15
    tiny = np.array([1e-9, -2e-9, 5e-10])
    assert np.allclose(SO3.log(SO3.exp(tiny)), tiny, rtol=0, atol=1e-20)


def test_series_switchover_is_continuous():
    # both sides of the Taylor threshold agree with the dense exponential
    for angle in (0.999e-3, 1.001e-3, 0.999e-8, 1.001e-8):
        xi = np.array([angle, 0.0, 0.0, 0.3, -0.2, 0.1])
        assert np.max(np.abs(SE3.exp(xi) - expm(SE3.hat(xi)))) < 1e-15
        assert np.max(np.abs(SE3.log(SE3.exp(xi)) - xi)) < 1e-14


def test_log_near_pi_strict_and_tolerant():
    R = rot_z(np.pi)
    with pytest.raises(BranchAmbiguityError):
        SO3.log(R)
    w = SO3.log(R, strict=False)
    assert np.isclose(np.linalg.norm(w), np.pi)
    assert np.allclose(SO3.exp(w), R, atol=1e-12)
    # just inside the branch the axis and sign are recovered
    near = rot_x(np.pi - 1e-5)
    assert np.allclose(SO3.log(near), [np.pi - 1e-5, 0.0, 0.0], atol=1e-9)
    near_neg = rot_y(-(np.pi - 1e-3))
    assert np.allclose(SO3.log(near_neg), [0.0, -(np.pi - 1e-3), 0.0], atol=1e-9)


def test_log_rejects_non_elements():
    with pytest.raises(ValueError):
        SO3.log(2.0 * np.eye(3))
    bad = np.eye(4)
    bad[3, 0] = 1.0
    with pytest.raises(ValueError):
        SE3.log(bad)


# compose / inverse ------------------------------------------------------

def test_group_laws(rng):
    A, B, C = (random_pose(rng) for _ in range(3))
    assert np.array_equal(SE3.compose(SE3.identity(), A), A)
    assert np.max(np.abs(SE3.compose(A, SE3.inverse(A)) - np.eye(4))) < 1e-12
    assert np.max(np.abs(SE3.inverse(SE3.inverse(A)) - A)) < 1e-15
    lhs = SE3.compose(SE3.compose(A, B), C)
    rhs = SE3.compose(A, SE3.compose(B, C))
    assert np.max(np.abs(lhs - rhs)) < 1e-12
    assert np.allclose(SE3.inverse(A), np.linalg.inv(A), atol=1e-12)


def test_compose_group_mismatch():
    with pytest.raises(ValueError):
        SE3.compose(np.eye(4), np.eye(3))


def test_module_level_spellings():
    xi = np.array([0.1, -0.2, 0.3, 1.0, 0.0, -1.0])
    assert np.array_equal(lg.exp_map(xi), SE3.exp(xi))
    assert np.array_equal(lg.log_map(lg.exp_map(xi)), SE3.log(SE3.exp(xi)))
    assert np.array_equal(lg.hat(xi), SE3.hat(xi))
    assert np.array_equal(lg.vee(lg.hat(xi)), xi)
    assert np.array_equal(lg.identity(SO3), np.eye(3))
    assert np.array_equal(lg.coad(xi), lg.ad_small(xi).T)
    assert lg.get_group("SO3") is SO3
    with pytest.raises(ValueError):
        lg.get_group("SU2")


# adjoints ---------------------------------------------------------------

def test_Ad_defining_relation(rng):
    assert np.array_equal(SE3.Ad(np.eye(4)), np.eye(6))
    R = SO3.exp(rng.normal(size=3))
    assert np.array_equal(SO3.Ad(R), R)
    X = random_pose(rng)
    Xinv = SE3.inverse(X)
    for phi in rng.normal(size=(100, 6)):
        assert np.max(np.abs(SE3.hat(SE3.Ad(X) @ phi) - X @ SE3.hat(phi) @ Xinv)) < 1e-9


def test_Ad_homomorphism(rng):
    for _ in range(20):
        X, Y = random_pose(rng), random_pose(rng)
        assert np.max(np.abs(SE3.Ad(X @ Y) - SE3.Ad(X) @ SE3.Ad(Y))) < 1e-9


def test_ad_is_bracket(rng):
    assert np.array_equal(SE3.ad(np.zeros(6)), np.zeros((6, 6)))
    for _ in range(50):
        xi, eta = rng.normal(size=(2, 6))
        A, B = SE3.hat(xi), SE3.hat(eta)
        assert np.max(np.abs(SE3.hat(SE3.ad(xi) @ eta) - (A @ B - B @ A))) < 1e-12
        assert np.max(np.abs(SE3.ad(xi) @ xi)) < 1e-12
        assert np.allclose(SE3.bracket(xi, eta), SE3.ad(xi) @ eta, atol=1e-12)
        w, e = rng.normal(size=(2, 3))
        assert np.allclose(SO3.hat(SO3.ad(w) @ e), SO3.hat(w) @ SO3.hat(e) - SO3.hat(e) @ SO3.hat(w), atol=1e-12)


def test_coad_structure(rng):
    assert np.array_equal(SE3.coad(np.zeros(6)), np.zeros((6, 6)))
    xi = rng.normal(size=6)
    C = SE3.coad(xi)
    assert np.array_equal(C, SE3.ad(xi).T)
    W, V = SO3.hat(xi[:3]), SO3.hat(xi[3:])
    expected = -np.block([[W, V], [np.zeros((3, 3)), W]])
    assert np.max(np.abs(C - expected)) == 0.0


def test_right_jacobian_first_order(rng):
    for group in (SO3, SE3):
        v = rng.normal(size=group.dim)
        J = group.right_jacobian(v)
        for eps in (1e-4, 1e-5):
            e = eps * rng.normal(size=group.dim)
            lhs = group.log(group.inverse(group.exp(v)) @ group.exp(v + e))
            assert np.linalg.norm(lhs - J @ e) < 10 * eps**2
    assert np.allclose(SE3.right_jacobian(np.zeros(6)), np.eye(6), atol=1e-15)


# Euler angles -----------------------------------------------------------

def test_euler_examples():
    assert np.allclose(euler_xyz(np.eye(3)), 0.0)
    assert np.allclose(euler_xyz(rot_z(np.pi / 2)), [0.0, 0.0, 90.0])
    assert np.allclose(euler_xyz(rot_z(np.pi)), [0.0, 0.0, 180.0])


@given(st.floats(-179, 179), st.floats(-89, 89), st.floats(-179, 179))
def test_euler_roundtrip(phi, theta, psi):
    R = from_euler_xyz(phi, theta, psi)
    angles = euler_xyz(R)
    assert np.max(np.abs(from_euler_xyz(*angles) - R)) < 1e-6
    assert np.allclose(angles, [phi, theta, psi], atol=1e-6)


def test_euler_gimbal_raises():
    with pytest.raises(GimbalLockError):
        euler_xyz(rot_y(np.pi / 2))
    with pytest.raises(GimbalLockError):
        euler_xyz(from_euler_xyz(10.0, -90.0, 20.0))
