import numpy as np
import pytest

from kdvrom.fitting import build_dataset, fit_alphas
from kdvrom.solver import FullModelConfig, integrate
from kdvrom.spectral import ModePartition, SpectralField


def direct_conv(a, b, k_max):
    """O(K^2) reference for the quadratic term -(ik/2) sum_{p+q=k} a_p b_q."""
    out = np.zeros(2 * k_max + 1, dtype=complex)
    for k in range(-k_max, k_max + 1):
        s = 0.0 + 0.0j
        for p in range(max(-k_max, k - k_max), min(k_max, k + k_max) + 1):
            q = k - p
            s += a[p + k_max] * b[q + k_max]
        out[k + k_max] = -0.5j * k * s
    return out


@pytest.fixture(scope="session")
def full_traj_10():
    """Fully resolved reference run to t = 10 sampled every step."""
    cfg = FullModelConfig(epsilon=0.1, M=256, dt=1e-3, t_end=10.0)
    return integrate(SpectralField.sine(cfg.k_max), cfg)


@pytest.fixture(scope="session")
def dataset_n20(full_traj_10):
    part = ModePartition.for_rom(20)
    return build_dataset(full_traj_10, part, 0.1, (0.0, 10.0))


@pytest.fixture(scope="session")
def fit_n20(dataset_n20):
    return fit_alphas(dataset_n20)


@pytest.fixture(scope="session")
def fit_n20_low(dataset_n20):
    return fit_alphas(dataset_n20, orders=(1, 2))
