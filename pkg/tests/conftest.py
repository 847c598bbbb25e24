import pytest

from anovaselect.extremal import GridSpec, weights
from anovaselect.lattice import DimensionSpec
from anovaselect.selector import SelectorConfig, build_selector_config, epsilon_hat, threshold


@pytest.fixture(scope="session")
def tiny_dim():
    """Small configuration whose supports hold a few dozen points."""
    return DimensionSpec(d=12, s=2, beta=0.6, sigma=1.0, epsilon=0.01)


@pytest.fixture(scope="session")
def tiny_config(tiny_dim):
    return build_selector_config(tiny_dim, M=3, truncation="rule")


@pytest.fixture(scope="session")
def bench_dim():
    """The d = 50 benchmark configuration."""
    return DimensionSpec(d=50, s=4, beta=0.87, sigma=1.0, epsilon=5e-5)


@pytest.fixture(scope="session")
def bench_config(bench_dim):
    return build_selector_config(bench_dim, M=20)


@pytest.fixture(scope="session")
def bench_k1_config():
    """First-order slice of the benchmark grid (cheap to build)."""
    dim = DimensionSpec(d=50, s=1, beta=0.87, sigma=1.0, epsilon=5e-5)
    return build_selector_config(dim, M=20)


def manual_config(d, r_by_order, epsilon, sigma=1.0, M=1, trunc_pad=2):
    """Hand-assembled selector config with fixed (uncalibrated) radii.

    Lets tests pin tiny supports at extreme noise levels where the grid
    calibration itself would be out of scale.
    """
    profiles = {}
    thresholds = {}
    trunc = {}
    eps_hats = {}
    for k, radii in r_by_order.items():
        profs = tuple(weights(r, k, sigma, epsilon) for r in radii)
        profiles[k] = profs
        eps_hats[k] = epsilon_hat(d, k)
        thresholds[k] = threshold(d, k, max(len(profs), 1), eps_hats[k])
        trunc[k] = max(p.max_abs_coord for p in profs) + trunc_pad
    n_profiles = max(len(v) for v in profiles.values())
    betas = tuple((m + 1) / (n_profiles + 1) for m in range(n_profiles))
    grid = GridSpec(
        M=n_profiles,
        betas=betas,
        targets={k: tuple(p.a_value for p in v) for k, v in profiles.items()},
        r_stars={k: tuple(p.source_r for p in v) for k, v in profiles.items()},
        a_values={k: tuple(p.a_value for p in v) for k, v in profiles.items()},
        eps_hat=eps_hats,
        calibration_mode="manual",
    )
    dim = DimensionSpec(d=d, s=max(r_by_order), beta=0.5, sigma=sigma, epsilon=epsilon)
    return SelectorConfig(
        dim=dim,
        grid=grid,
        profiles=profiles,
        thresholds=thresholds,
        truncation=trunc,
        truncation_mode="rule",
        eps_hat_rule="fixed",
    )
