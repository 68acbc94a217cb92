import json
import math

import numpy as np
import pytest

from chainopt.errors import InconsistentBasis, InvalidInput
from chainopt.minimizer import (brute_force_minimizer, chain_gradient,
                                coordinate_lower_bound, head_upper_bound,
                                norm_bound, pull_back, solution_to_json,
                                solve_chain_minimizer, tail_decay_bound)
from chainopt.model import (RotationBasis, eval_chain, eval_rotated,
                            select_gamma)
from conftest import chain_params, rotated_setup

# valid high-dim instances: gamma above its floor, chain long enough
VALID = [
    (2, 1.0, 32.0, 132),
    (2, 1.0, 60.0, 256),
    (2, 2.0, 75.0, 128),
    (3, 1.0, 45.0, 192),
    (4, 1.0, 60.0, 256),
]
SMALL = [
    (2, 1.0, 1.0, 4),
    (2, 1.0, 8.0, 32),
    (3, 1.0, 2.0, 16),
    (4, 0.5, 3.0, 24),
]


@pytest.mark.parametrize("k,lt,gamma,T", VALID + SMALL)
def test_sum_identity_and_system_residuals(k, lt, gamma, T):
    p = chain_params(k, lt, gamma, T)
    sol = solve_chain_minimizer(p)
    assert sol.sum_residual <= 1e-10 * (gamma / p.lambda_tilde)
    assert sol.max_residual <= 1e-9 * gamma
    assert np.min(sol.x_star) >= -1e-12
    assert np.max(np.diff(sol.x_star)) <= 1e-12


def test_terminal_equation():
    p = chain_params(2, 1.0, 8.0, 32)
    x = solve_chain_minimizer(p).x_star
    lhs = (x[-2] - x[-1]) ** p.k
    assert lhs == pytest.approx(p.lambda_tilde * x[-1], rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("k,lt,gamma,T", SMALL)
def test_shooting_matches_brute_force(k, lt, gamma, T):
    p = chain_params(k, lt, gamma, T)
    sol = solve_chain_minimizer(p)
    bf = brute_force_minimizer(p, tol=1e-8)
    assert np.max(np.abs(sol.x_star - bf)) <= 1e-6
    # both approximate the same unique minimum
    assert eval_chain(p, bf) <= eval_chain(p, sol.x_star) + 1e-16 * p.lambda_tilde \
        + 1e-8 ** 2 * p.lambda_tilde


def test_k2_reference_instance_agrees_to_1e8():
    p = chain_params(2, 1.0, 1.0, 4)
    sol = solve_chain_minimizer(p)
    bf = brute_force_minimizer(p, tol=1e-10)
    assert np.max(np.abs(sol.x_star - bf)) <= 1e-8


def test_vanishing_gamma_limit():
    p = chain_params(2, 1.0, 1e-12, 8)
    bf = brute_force_minimizer(p, tol=1e-9)
    assert np.max(np.abs(bf)) <= 1e-11 / p.lambda_tilde + 1e-9


def test_forward_and_tail_recursions():
    for (k, lt, gamma, T) in VALID:
        p = chain_params(k, lt, gamma, T)
        x = solve_chain_minimizer(p).x_star
        s = np.cumsum(x)
        powered = (x[:-1] - x[1:]) ** k
        assert np.max(np.abs(powered - (gamma - p.lambda_tilde * s[:-1]))) \
            <= 1e-9 * gamma
        tail = s[-1] - s[:-1]
        assert np.max(np.abs(powered - p.lambda_tilde * tail)) <= 1e-9 * gamma


# ---------------------------------------------------------------------------
# analytic envelopes
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("k,lt,gamma,T", VALID)
def test_coordinate_floor_dominated(k, lt, gamma, T):
    p = chain_params(k, lt, gamma, T)
    x = solve_chain_minimizer(p).x_star
    slack = 1e-10 * max(1.0, gamma ** (1.0 / k))
    for t in range(1, T + 1):
        assert x[t - 1] >= coordinate_lower_bound(p, t) - slack


def test_coordinate_floor_zero_for_large_t():
    p = chain_params(2, 1.0, 32.0, 132)
    assert coordinate_lower_bound(p, 132) == 0.0


def test_head_above_half_threshold_under_gamma_floor():
    # gamma above its floor forces x_1 >= lambda_tilde^(1/(k-1)) / 2
    for (k, lt, gamma, T) in VALID:
        p = chain_params(k, lt, gamma, T)
        x1 = solve_chain_minimizer(p).x_star[0]
        assert x1 >= lt ** (1.0 / (k - 1)) / 2.0


def test_coordinate_floor_positive_at_head_when_gamma_large():
    # the closed-form floor at t=1 turns positive past gamma ~ 6^(2k/(k-1)) lt^(k/(k-1))
    k, lt = 2, 1.0
    gamma = 6.0 ** (2 * k / (k - 1)) * 1.05
    p = chain_params(k, lt, gamma, int(4 * gamma) + 1)
    assert coordinate_lower_bound(p, 1) > 0.0


@pytest.mark.parametrize("k,lt,gamma,T", VALID)
def test_geometric_tail(k, lt, gamma, T):
    p = chain_params(k, lt, gamma, T)
    sol = solve_chain_minimizer(p)
    assert sol.t0 is not None and sol.t0 <= T / 2
    x = sol.x_star
    for j in range(0, T - sol.t0 + 1):
        idx = sol.t0 + j - 1
        if idx >= T or x[idx] <= 0.0:
            continue
        _, logbound = tail_decay_bound(p, j)
        assert math.log(x[idx]) >= logbound - 1e-9


def test_tail_decay_values():
    p = chain_params(2, 1.0, 32.0, 132)
    v, logv = tail_decay_bound(p, 0)
    assert v == pytest.approx(p.lambda_tilde ** (1.0 / (p.k - 1)) * 6.0 ** (-p.k ** 1))
    v2, logv2 = tail_decay_bound(p, 50)
    assert v2 == 0.0 and logv2 < -1e10  # value underflows long before the log
    _, logv3 = tail_decay_bound(p, 2000)
    assert logv3 == -math.inf  # k^(j+1) itself overflows binary64


def test_norm_cap_and_select_gamma_consistency():
    for (k, lt, gamma, T) in VALID:
        p = chain_params(k, lt, gamma, T)
        x = solve_chain_minimizer(p).x_star
        assert float(x @ x) <= norm_bound(p) * (1 + 1e-12)
    # with gamma from select_gamma the cap equals D^2
    D = 50.0
    k, lam, mu = 2, 1.0, 2 * 2 ** 2.5
    gamma = select_gamma(k, lam, mu, D)
    from chainopt.model import InstanceParams

    p = InstanceParams(k=k, lam=lam, mu_k=mu, gamma=gamma,
                       chain_len=int(4 * gamma) + 1,
                       dim=int(4 * gamma) + 8, regime="high")
    assert norm_bound(p) <= D ** 2 * (1 + 1e-12)
    sol = solve_chain_minimizer(p)
    assert float(sol.x_star @ sol.x_star) <= D ** 2


def test_norm_cap_monotone_in_gamma():
    caps = [norm_bound(chain_params(3, 1.0, g, 16)) for g in (1.0, 2.0, 5.0, 9.0)]
    assert all(a < b for a, b in zip(caps, caps[1:]))


def test_head_cap():
    for (k, lt, gamma, T) in VALID + SMALL:
        p = chain_params(k, lt, gamma, T)
        x1 = solve_chain_minimizer(p).x_star[0]
        assert x1 <= head_upper_bound(p) * (1 + 1e-12)


def test_upper_tail_log_inequality():
    p = chain_params(2, 1.0, 32.0, 132)
    x = solve_chain_minimizer(p).x_star
    lt = p.lambda_tilde
    for t in range(len(x) - 1):
        if x[t] <= 0 or x[t + 1] <= 0:
            continue
        assert math.log(x[t + 1]) <= p.k * math.log(x[t]) - math.log(lt) + 1e-9


def test_coordinate_floor_validates_t():
    p = chain_params(2, 1.0, 8.0, 32)
    with pytest.raises(InvalidInput):
        coordinate_lower_bound(p, 0)
    with pytest.raises(InvalidInput):
        coordinate_lower_bound(p, 33)


# ---------------------------------------------------------------------------
# pull back
# ---------------------------------------------------------------------------

def test_pull_back_identity_pads_with_zeros():
    p = chain_params(2, 1.0, 8.0, 32, dim=40)
    sol = solve_chain_minimizer(p)
    basis = RotationBasis.identity(p.chain_len, p.dim)
    xs = pull_back(sol, basis)
    np.testing.assert_array_equal(xs[:32], sol.x_star)
    np.testing.assert_array_equal(xs[32:], np.zeros(8))


def test_pull_back_norm_invariance():
    p = chain_params(2, 1.0, 8.0, 16, dim=24)
    sol = solve_chain_minimizer(p)
    norms = []
    for seed in (0, 1, 2):
        basis = RotationBasis.random_orthonormal(16, 24, np.random.default_rng(seed))
        norms.append(float(np.linalg.norm(pull_back(sol, basis))))
    assert max(norms) - min(norms) <= 1e-12 * max(norms)
    assert norms[0] == pytest.approx(float(np.linalg.norm(sol.x_star)), rel=1e-12)


def test_pull_back_stationarity_in_rotated_frame():
    p, basis = rotated_setup(2, 1.0, 3.0, 8, 12, seed=4)
    sol = solve_chain_minimizer(p)
    xs = pull_back(sol, basis)
    grad = eval_rotated(p, basis, xs, 1).gradient
    assert float(np.linalg.norm(grad)) <= 1e-8 * p.lambda_tilde * float(np.linalg.norm(xs))


def test_pull_back_requires_complete_basis():
    p = chain_params(2, 1.0, 8.0, 16, dim=24)
    sol = solve_chain_minimizer(p)
    partial = RotationBasis(16, 24)
    partial.commit(np.eye(24)[0])
    with pytest.raises(InconsistentBasis):
        pull_back(sol, partial)


def test_low_dim_minimizer_bounds():
    p = chain_params(2, 1.0, 1.0, 16, dim=16, regime="low")
    sol = solve_chain_minimizer(p)
    assert sol.t0 is None
    x = sol.x_star
    assert float(x @ x) <= norm_bound(p) * (1 + 1e-12)
    for t in range(1, 17):
        assert x[t - 1] >= coordinate_lower_bound(p, t) - 1e-10


def test_solution_serialization():
    p = chain_params(2, 1.0, 32.0, 132)
    sol = solve_chain_minimizer(p)
    obj = json.loads(solution_to_json(sol))
    assert set(obj) == {"x_star", "residual_max", "sum_residual", "t0"}
    assert len(obj["x_star"]) == 132
    assert obj["t0"] == sol.t0


def test_gradient_norm_small_at_solution():
    p = chain_params(3, 1.0, 45.0, 192)
    sol = solve_chain_minimizer(p)
    assert float(np.linalg.norm(chain_gradient(p, sol.x_star))) <= 1e-11 * p.gamma
