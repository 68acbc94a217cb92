import json
import math

import mpmath
import numpy as np
import pytest

from chainopt.errors import InconsistentBasis, InvalidInput, TooLarge
from chainopt.minimizer import solve_chain_minimizer
from chainopt.model import (DerivativeBundle, InstanceParams, RotationBasis,
                            apply_to_vectors, densify_tensor, eval_chain,
                            eval_rotated, g_derivative, instance_from_json,
                            instance_to_json, select_gamma, validate_params)
from conftest import chain_params, identity_setup, rotated_setup


# ---------------------------------------------------------------------------
# kernel derivatives
# ---------------------------------------------------------------------------

def test_kernel_derivatives_vanish_at_zero():
    for k in (2, 3, 4, 5):
        for m in range(1, k + 1):
            assert g_derivative(0.0, k, m) == 0.0


def test_kernel_derivative_signs_and_magnitudes():
    # g(z) = |z|^(k+1)/(k+1); check a few closed forms by hand
    assert g_derivative(2.0, 3, 1) == pytest.approx(8.0)        # sign*|z|^3
    assert g_derivative(-2.0, 3, 1) == pytest.approx(-8.0)
    assert g_derivative(-2.0, 3, 2) == pytest.approx(3 * 4.0)   # 3|z|^2
    assert g_derivative(-2.0, 3, 3) == pytest.approx(-6 * 2.0)  # 6 sign |z|
    assert g_derivative(-1.5, 2, 2) == pytest.approx(2 * 1.5)


def test_kernel_top_derivative_slope():
    # g^(k) is k! |z| (even k) or k! z (odd k): slope +-k! away from zero
    for k in (2, 3, 4):
        h = 1e-6
        for z0 in (0.7, -0.4):
            num = (g_derivative(z0 + h, k, k) - g_derivative(z0 - h, k, k)) / (2 * h)
            expected = math.factorial(k) * (np.sign(z0) if k % 2 == 0 else 1.0)
            assert num == pytest.approx(expected, rel=1e-6)


# ---------------------------------------------------------------------------
# chain evaluation
# ---------------------------------------------------------------------------

def test_eval_chain_zero_and_hand_value():
    p = chain_params(2, 1.0, 1.0, 2, dim=3)
    assert eval_chain(p, np.zeros(2)) == 0.0
    # 1/3 |1-0|^3 - 1*1 + 1/2 * 1 = -1/6
    assert eval_chain(p, np.array([1.0, 0.0])) == pytest.approx(-1.0 / 6.0)


def test_eval_chain_negative_at_minimizer():
    p = chain_params(2, 1.0, 8.0, 32)
    sol = solve_chain_minimizer(p)
    assert eval_chain(p, sol.x_star) < 0.0


def test_eval_chain_extra_coordinates_only_quadratic():
    p = chain_params(2, 1.5, 2.0, 4, dim=8)
    x = np.array([0.3, -0.2, 0.5, 0.1])
    pad = np.concatenate([x, np.array([0.7, -0.4, 0.0, 0.2])])
    extra = pad[4:]
    assert eval_chain(p, pad) == pytest.approx(
        eval_chain(p, x) + 0.5 * p.lambda_tilde * float(extra @ extra))


# ---------------------------------------------------------------------------
# gamma selection
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("k,lam,mu,D", [
    (2, 1.0, 2 * 2 ** 2.5, 3.0),
    (2, 1.0, 2 * 2 ** 2.5, 1e6),
    (3, 0.5, 7.0, 100.0),
    (4, 2.0, 1.0, 10.0),
])
def test_select_gamma_saturates_norm_cap(k, lam, mu, D):
    g = select_gamma(k, lam, mu, D)
    lt = math.factorial(k) * 2 ** ((k + 3) / 2) * lam / mu
    cap = 3.0 * g ** ((3 * k + 1) / (2 * k)) / lt ** 1.5
    assert cap == pytest.approx(D ** 2, rel=1e-10)


def test_select_gamma_matches_50_digit_evaluation():
    mpmath.mp.dps = 50
    for (k, lam, mu, D) in [(2, 1.0, 2 * 2 ** 2.5, 3.0), (3, 0.7, 5.0, 40.0)]:
        kf = mpmath.factorial(k)
        base = (mpmath.mpf(2) ** mpmath.mpf((3 * k + 9) / 2) * kf ** 3
                * mpmath.mpf(lam) ** 3 * mpmath.mpf(D) ** 4) \
            / (9 * mpmath.mpf(mu) ** 3)
        expected = float(base ** (mpmath.mpf(k) / (3 * k + 1)))
        assert select_gamma(k, lam, mu, D) == pytest.approx(expected, rel=1e-13)


def test_select_gamma_homogeneity_in_D():
    k, lam, mu = 3, 1.2, 4.0
    g1 = select_gamma(k, lam, mu, 7.0)
    s = 5.0
    g2 = select_gamma(k, lam, mu, 7.0 * s)
    assert g2 / g1 == pytest.approx(s ** (4 * k / (3 * k + 1)), rel=1e-12)


# ---------------------------------------------------------------------------
# admissibility checks
# ---------------------------------------------------------------------------

def test_validate_admissible_instance_is_clean():
    # lambda_tilde = 1, so both accuracy thresholds evaluate to >= 0.125
    p = chain_params(2, 1.0, 32.0, 132, dim=256)
    assert p.lambda_tilde == pytest.approx(1.0)
    for precision in ("f64", "extended"):
        out = validate_params(p, "high", D=1e6, eps=1e-12, precision=precision)
        assert out == []


def test_validate_flags_zero_distance():
    p = chain_params(2, 1.0, 32.0, 128, dim=256)
    out = validate_params(p, "high", D=0.0)
    assert any(v.name == "initial_distance" for v in out)


def test_validate_low_dim_boundary_eps_is_nonstrict_failure():
    p = chain_params(2, 1.0, 1.0, 16, dim=16, regime="low")
    out = validate_params(p, "low", eps=p.lam / 32.0)
    bad = [v for v in out if v.name == "target_accuracy"]
    assert len(bad) == 1 and bad[0].rhs == pytest.approx(p.lam / 32.0)


def test_validate_gamma_and_chain_floors():
    p = chain_params(2, 1.0, 5.0, 16)  # gamma below 12^(4/3) ~ 27.5
    names = {v.name for v in validate_params(p, "high")}
    assert "gamma_floor" in names
    p2 = chain_params(2, 1.0, 32.0, 64, dim=256)  # chain_len < 4*gamma
    names2 = {v.name for v in validate_params(p2, "high")}
    assert "chain_len_floor" in names2


def test_validate_rejects_non_finite():
    p = chain_params(2, 1.0, 32.0, 128, dim=256)
    with pytest.raises(InvalidInput):
        validate_params(p, "high", D=float("nan"))


# ---------------------------------------------------------------------------
# rotated evaluation
# ---------------------------------------------------------------------------

def test_eval_rotated_at_origin():
    for k in (2, 3, 4):
        p, basis = rotated_setup(k, 1.0, 5.0, 12, 20, seed=1)
        b = eval_rotated(p, basis, np.zeros(p.dim), k)
        assert b.value == 0.0
        expected = -p.scale * p.gamma * basis.vectors[0]
        np.testing.assert_allclose(b.gradient, expected, atol=1e-14)
        for m in range(2, k + 1):
            assert np.all(b.coeffs[m] == 0.0)
        assert b.lam == p.lam  # Hessian is exactly lam * I at the origin


def test_identity_basis_reproduces_chain():
    p, basis, sol, x_star, f_star, oracle = identity_setup(3, 1.3, 6.0, 24)
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.standard_normal(p.dim)
        assert oracle(x).value == pytest.approx(
            p.scale * eval_chain(p, x), rel=1e-14, abs=1e-14)


def test_rotated_gradient_matches_finite_differences(rng):
    for k in (2, 3):
        p, basis = rotated_setup(k, 1.0, 4.0, 10, 16, seed=k)
        for _ in range(10):
            x = rng.standard_normal(p.dim) * 1.5
            b = eval_rotated(p, basis, x, 1)
            h = 1e-5 * (1.0 + float(np.linalg.norm(x)))
            for _ in range(2):
                u = rng.standard_normal(p.dim)
                u /= np.linalg.norm(u)
                num = (eval_rotated(p, basis, x + h * u, 1).value
                       - eval_rotated(p, basis, x - h * u, 1).value) / (2 * h)
                ana = float(b.gradient @ u)
                assert num == pytest.approx(ana, rel=1e-6, abs=1e-9)


def test_orthogonal_frame_equivalence(rng):
    # complete the basis to a full orthogonal matrix: f(x) = scale * chain(Vx)
    p, basis = rotated_setup(2, 0.8, 4.0, 8, 12, seed=3)
    V = basis.vectors
    full, _ = np.linalg.qr(rng.standard_normal((p.dim, p.dim)))
    proj = full - V.T @ (V @ full)
    comp = np.linalg.qr(proj)[0][:, : p.dim - p.chain_len]
    frame = np.vstack([V, comp.T])
    for _ in range(5):
        x = rng.standard_normal(p.dim)
        fx = eval_rotated(p, basis, x, 1).value
        assert fx == pytest.approx(p.scale * eval_chain(p, frame @ x),
                                   rel=1e-10, abs=1e-12)


def test_zero_derivative_locality_is_exact():
    # x supported on the first t coordinates, identity embedding: a prefix
    # basis answers identically to the complete one
    p = chain_params(3, 1.0, 4.0, 12, dim=16)
    complete = RotationBasis.identity(p.chain_len, p.dim)
    t = 5
    partial = RotationBasis(p.chain_len, p.dim)
    for i in range(t):
        partial.commit(complete.vectors[i])
    x = np.zeros(p.dim)
    x[: t - 1] = np.array([0.4, -0.3, 0.2, 0.6])
    bp = eval_rotated(p, partial, x, p.k)
    bc = eval_rotated(p, complete, x, p.k)
    assert bp.value == bc.value
    np.testing.assert_array_equal(bp.gradient, bc.gradient)
    rng = np.random.default_rng(0)
    for m in range(2, p.k + 1):
        for _ in range(3):
            dirs = [rng.standard_normal(p.dim) for _ in range(m)]
            assert apply_to_vectors(bp, m, dirs) == pytest.approx(
                apply_to_vectors(bc, m, dirs), rel=1e-15, abs=1e-15)


def test_partial_basis_rejects_overlapping_query():
    p = chain_params(2, 1.0, 4.0, 8, dim=12)
    complete = RotationBasis.identity(p.chain_len, p.dim)
    partial = RotationBasis(p.chain_len, p.dim)
    for i in range(3):
        partial.commit(complete.vectors[i])
    x = np.zeros(p.dim)
    x[2] = 1.0  # overlaps the last committed direction
    with pytest.raises(InconsistentBasis):
        eval_rotated(p, partial, x, 1)


def test_bundle_hessian_spectrum_and_factor_sparsity(rng):
    p, basis, sol, x_star, f_star, oracle = identity_setup(2, 1.0, 4.0, 10)
    x = rng.standard_normal(p.dim)
    b = oracle(x, 2)
    H = densify_tensor(b, 2)
    eigs = np.linalg.eigvalsh(H)
    assert eigs.min() >= p.lam - 1e-8
    rows = b.factors.toarray()
    assert np.all((rows != 0).sum(axis=1) == 2)


# ---------------------------------------------------------------------------
# tensor plumbing
# ---------------------------------------------------------------------------

def _toy_bundle(lam=0.5, d=4):
    r = np.zeros(d)
    r[0], r[1] = 1.0, -1.0
    factors = r[None, :]
    coeffs = {2: np.array([1.0]), 3: np.array([2.0])}
    return DerivativeBundle(value=0.0, gradient=np.zeros(d), order=3,
                            factors=factors, coeffs=coeffs, lam=lam)


def test_densify_rank_one_block():
    b = _toy_bundle()
    H = densify_tensor(b, 2)
    expected = np.zeros((4, 4))
    expected[:2, :2] = [[1.0, -1.0], [-1.0, 1.0]]
    expected += 0.5 * np.eye(4)
    np.testing.assert_allclose(H, expected)


def test_densify_symmetry_under_permutations():
    b = _toy_bundle()
    T = densify_tensor(b, 3)
    np.testing.assert_array_equal(T, np.transpose(T, (1, 0, 2)))
    np.testing.assert_array_equal(T, np.transpose(T, (2, 1, 0)))
    np.testing.assert_array_equal(T, np.transpose(T, (0, 2, 1)))


def test_densify_budget():
    b = _toy_bundle()
    with pytest.raises(TooLarge):
        densify_tensor(b, 3, budget=10)


def test_apply_matches_dense_contraction(rng):
    p, basis, sol, x_star, f_star, oracle = identity_setup(3, 1.0, 3.0, 8)
    x = rng.standard_normal(p.dim)
    b = oracle(x, 3)
    for m in (2, 3):
        T = densify_tensor(b, m)
        for _ in range(10):
            dirs = [rng.standard_normal(p.dim) for _ in range(m)]
            dense = T
            for u in dirs:
                dense = np.tensordot(dense, u, axes=([0], [0]))
            assert apply_to_vectors(b, m, dirs) == pytest.approx(
                float(dense), rel=1e-10, abs=1e-12)


def test_apply_quadratic_form_dominates_lam(rng):
    p, basis, sol, x_star, f_star, oracle = identity_setup(2, 1.0, 4.0, 10)
    x = rng.standard_normal(p.dim)
    b = oracle(x, 2)
    for _ in range(10):
        u = rng.standard_normal(p.dim)
        q = apply_to_vectors(b, 2, [u, u])
        assert q >= p.lam * float(u @ u) - 1e-10


def test_apply_zero_directions():
    p, basis, sol, x_star, f_star, oracle = identity_setup(3, 1.0, 3.0, 8)
    x = np.ones(p.dim)
    b = oracle(x, 3)
    z = np.zeros(p.dim)
    assert apply_to_vectors(b, 3, [z, z, z]) == 0.0
    u = np.arange(p.dim, dtype=float)
    assert apply_to_vectors(b, 2, [z, z]) == 0.0
    assert apply_to_vectors(b, 2, [u, u]) >= p.lam * float(u @ u) - 1e-9


def test_apply_partial_contraction_vector(rng):
    p, basis, sol, x_star, f_star, oracle = identity_setup(3, 1.0, 3.0, 8)
    x = rng.standard_normal(p.dim)
    b = oracle(x, 3)
    u, v = rng.standard_normal(p.dim), rng.standard_normal(p.dim)
    vec = apply_to_vectors(b, 3, [u, v])
    T = densify_tensor(b, 3)
    dense = np.tensordot(np.tensordot(T, u, axes=([0], [0])), v, axes=([0], [0]))
    np.testing.assert_allclose(vec, dense, rtol=1e-10, atol=1e-12)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_instance_json_round_trip():
    p = chain_params(3, 0.7, 11.0, 16, dim=24)
    basis = RotationBasis.random_orthonormal(16, 24, np.random.default_rng(2))
    text = instance_to_json(p, basis)
    obj = json.loads(text)
    assert set(obj) == {"k", "lambda", "mu_k", "gamma", "chain_len", "dim",
                        "regime", "basis"}
    q, b2 = instance_from_json(text)
    assert q == p
    np.testing.assert_array_equal(b2.vectors, basis.vectors)
    assert b2.is_complete
