import numpy as np
import pytest

from cfslab import core


@pytest.fixture
def rng():
    return np.random.default_rng(20240815)


def random_point(N: int, n: int, rng: np.random.Generator) -> core.OperatorPoint:
    """Signature-valid rank-2n operator point with O(1) spectrum."""
    r = 2 * n
    V = rng.normal(size=(N, r)) + 1j * rng.normal(size=(N, r))
    nu = np.concatenate(
        [rng.uniform(0.3, 1.5, size=n), -rng.uniform(0.3, 1.5, size=n)]
    )
    return core.make_operator_point(V, nu, n)
