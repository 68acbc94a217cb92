import math

import numpy as np
import pytest

from chainopt.model import InstanceParams, RotationBasis, eval_chain, eval_rotated
from chainopt.minimizer import solve_chain_minimizer


def chain_params(k, lambda_tilde, gamma, chain_len, dim=None, lam=1.0,
                 regime="high"):
    dim = chain_len + 1 if dim is None else dim
    return InstanceParams.from_chain_frame(
        k=k, lambda_tilde=lambda_tilde, gamma=gamma, chain_len=chain_len,
        dim=dim, lam=lam, regime=regime)


def identity_setup(k, lambda_tilde, gamma, chain_len, dim=None, lam=1.0):
    """Instance + identity basis + solved optimum + oracle closure."""
    p = chain_params(k, lambda_tilde, gamma, chain_len, dim, lam)
    basis = RotationBasis.identity(p.chain_len, p.dim)
    sol = solve_chain_minimizer(p)
    x_star = np.zeros(p.dim)
    x_star[: p.chain_len] = sol.x_star
    f_star = p.scale * eval_chain(p, sol.x_star)

    def oracle(x, order=None):
        return eval_rotated(p, basis, x, order if order else p.k)

    return p, basis, sol, x_star, f_star, oracle


def rotated_setup(k, lambda_tilde, gamma, chain_len, dim, seed=0, lam=1.0):
    p = chain_params(k, lambda_tilde, gamma, chain_len, dim, lam)
    rng = np.random.default_rng(seed)
    basis = RotationBasis.random_orthonormal(p.chain_len, p.dim, rng)
    return p, basis


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
