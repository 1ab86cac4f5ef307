import numpy as np
import pytest

from smallball import martingale


@pytest.fixture
def unit_spec():
    """dim-2 spec with v == 1, L = 1, x0 = 0; controller chosen per test."""

    def make(controller, n, dim=2, L=1.0, x0=None):
        return martingale.MartingaleSpec.unit(controller, n, dim=dim, L=L, x0=x0)

    return make


def enumerate_sign_paths(n):
    """All 2^n sign sequences, one per row."""
    rows = []
    for mask in range(2**n):
        rows.append([1 if (mask >> k) & 1 else -1 for k in range(n)])
    return np.array(rows, dtype=np.float64)
