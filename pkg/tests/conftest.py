import numpy as np
import pytest

from gmam.models import double_well, maier_stein, saddle_node_normal_form
from gmam.systems import SdeSystem


@pytest.fixture
def dw():
    return double_well()


@pytest.fixture
def ms10():
    return maier_stein(10.0)


@pytest.fixture
def fold_1d():
    return saddle_node_normal_form(0.04)


def constant_metric_system(cov):
    """2D system with drift (1, 0) and a constant covariance matrix."""
    cov = np.asarray(cov, dtype=float)
    dim = cov.shape[0]
    chol = np.linalg.cholesky(cov)

    def drift(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = 1.0
        return out

    def diffusion(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(chol, x.shape[:-1] + (dim, dim)).copy()

    return SdeSystem(dim=dim, drift=drift, diffusion=diffusion)
