import subprocess
import sys

import numpy as np
import pytest

from tokcast import _kernels


def random_case(rng, n=None, d=None):
    n = n or int(rng.integers(1, 40))
    d = d or int(rng.integers(2, 120))
    logits = np.ascontiguousarray(rng.normal(scale=3, size=(n, d)))
    targets = rng.integers(d, size=n)
    return logits, targets


needs_compiled = pytest.mark.skipif(
    "c" not in _kernels.available_backends(),
    reason="compiled kernel extension not built",
)


class TestSelection:
    def test_active_backend_is_listed(self):
        assert _kernels.BACKEND in ("c", "python")
        assert "python" in _kernels.available_backends()

    def test_get_backend(self):
        assert _kernels.get_backend("python").backend_name() == "python"
        with pytest.raises(ValueError):
            _kernels.get_backend("fortran")

    def test_env_var_forces_python(self):
        code = ("import tokcast._kernels as k; print(k.BACKEND)")
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True, text=True, check=True,
            env={"PATH": "/usr/bin:/bin", "TOKCAST_KERNELS": "py"},
        )
        assert out.stdout.strip() == "python"

    def test_env_var_rejects_garbage(self):
        code = "import tokcast._kernels"
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True, text=True,
            env={"PATH": "/usr/bin:/bin", "TOKCAST_KERNELS": "fast"},
        )
        assert out.returncode != 0
        assert "TOKCAST_KERNELS" in out.stderr


@needs_compiled
class TestBackendParity:
    """The compiled kernels must agree with the numpy reference bit-for-bit
    in exact cases and to float64 roundoff elsewhere."""

    def setup_method(self):
        self.c = _kernels.get_backend("c")
        self.py = _kernels.get_backend("python")

    def test_softmax(self):
        rng = np.random.default_rng(100)
        for _ in range(50):
            logits, _ = random_case(rng)
            a = self.c.softmax(logits)
            b = self.py.softmax(logits)
            np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-300)

    def test_cross_entropy(self):
        rng = np.random.default_rng(101)
        for _ in range(50):
            logits, targets = random_case(rng)
            va, ga = self.c.cross_entropy(logits.copy(), targets)
            vb, gb = self.py.cross_entropy(logits.copy(), targets)
            np.testing.assert_allclose(va, vb, rtol=1e-12)
            np.testing.assert_allclose(ga, gb, rtol=1e-12, atol=1e-15)

    @pytest.mark.parametrize("p", [1.0, 2.0, 1.7])
    @pytest.mark.parametrize("pth_power", [True, False])
    def test_wasserstein(self, p, pth_power):
        rng = np.random.default_rng(102)
        for _ in range(30):
            logits, targets = random_case(rng)
            va, ga = self.c.wasserstein(logits, targets, p, 0.37, pth_power)
            vb, gb = self.py.wasserstein(logits, targets, p, 0.37, pth_power)
            np.testing.assert_allclose(va, vb, rtol=1e-12)
            # summation order differs (einsum vs serial loop) and w^p - s
            # cancels, so grads agree to accumulated roundoff, not 1 ulp
            np.testing.assert_allclose(ga, gb, rtol=1e-11, atol=1e-14)

    def test_point_mass_exactness_both_backends(self):
        # underflowed softmax is a literal point mass; both backends must
        # then return r*|j-a| with no roundoff at all
        d, r = 64, 30.0 / 4093
        logits = np.zeros((d, d))
        j = np.arange(d)
        logits[j, j] = 800.0
        targets = np.full(d, 20, dtype=np.int64)
        expected = r * np.abs(j - 20)
        for backend in (self.c, self.py):
            for p in (1.0, 2.0):
                values, _ = backend.wasserstein(logits, targets, p, r, False)
                np.testing.assert_array_equal(values, expected)

    def test_single_row_and_single_column_shapes(self):
        logits = np.array([[0.3, -1.2, 4.0]])
        targets = np.array([2], dtype=np.int64)
        for backend in (self.c, self.py):
            v, g = backend.cross_entropy(logits.copy(), targets)
            assert v.shape == (1,) and g.shape == (1, 3)
            v, g = backend.wasserstein(logits, targets, 1.0, 1.0, True)
            assert v.shape == (1,) and g.shape == (1, 3)
