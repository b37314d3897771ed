import numpy as np
import pytest

from tunnelpark import _kernels_py
from tunnelpark.pipeline import plan
from tunnelpark.scenario import load_bundled

try:
    from tunnelpark import _kernels as _compiled
except ImportError:
    _compiled = None

KERNEL_BACKENDS = [pytest.param(_kernels_py, id="python")]
if _compiled is not None:
    KERNEL_BACKENDS.append(pytest.param(_compiled, id="cython"))


@pytest.fixture(params=KERNEL_BACKENDS)
def kern(request):
    """Each available kernel backend in turn."""
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def solved():
    """Pipeline reports on the bundled scenarios, computed once per session."""
    cache = {}

    def get(name, **overrides):
        key = (name, tuple(sorted(overrides.items())))
        if key not in cache:
            cache[key] = plan(load_bundled(name), overrides or None)
        return cache[key]

    return get
