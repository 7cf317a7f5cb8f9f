import numpy as np
import pytest

from absgrad import _kernels_py, backend
from absgrad.problems import phimu_tape

try:
    from absgrad import _kernels_c
    _BACKENDS = ["compiled", "python"]
except ImportError:  # extension not built; everything runs on the fallback
    _kernels_c = None
    _BACKENDS = ["python"]


@pytest.fixture(params=_BACKENDS)
def kernel_backend(request, monkeypatch):
    """Run a test once per kernel implementation."""
    impl = _kernels_c if request.param == "compiled" else _kernels_py
    monkeypatch.setattr(backend, "forward_sweep", impl.forward_sweep)
    monkeypatch.setattr(backend, "reverse_sweep", impl.reverse_sweep)
    return request.param


@pytest.fixture
def phimu():
    return phimu_tape


@pytest.fixture
def abs_x_tape():
    """phi(x) = |x1|, the smallest abs-smooth function."""
    from absgrad.tape import Tape, Node
    return Tape(1, [Node("input", value=0), Node("abs", args=(0,))], 1)


def rel_err(got, want):
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    return np.linalg.norm(got - want) / (1.0 + np.linalg.norm(want))
