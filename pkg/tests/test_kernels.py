import os
import subprocess
import sys

import numpy as np
import pytest

from aris_privacy import _ascent_py, kernels
from aris_privacy.li import homogenize

from conftest import random_complex

needs_compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernel not built")


def problem(seed, n=12):
    rng = np.random.default_rng(seed)
    A = random_complex(rng, n + 3, n)
    D = homogenize(random_complex(rng, n), np.conj(A).T @ A)
    z = np.exp(2j * np.pi * rng.random(n + 1))
    return D, z


def objective(D, z):
    return float(np.real(np.vdot(z, D @ z)))


def test_python_kernel_ascends_each_sweep():
    D, z = problem(0)
    prev = objective(D, z)
    for _ in range(30):
        obj, _ = kernels.unit_modulus_ascent(D, z, 0.0, 1, backend="python")
        assert obj >= prev - 1e-12 * abs(prev)
        assert obj == pytest.approx(objective(D, z), rel=1e-10)
        assert np.allclose(np.abs(z), 1.0, atol=1e-12)
        prev = obj


@needs_compiled
def test_backends_agree():
    for seed in range(20):
        D, z0 = problem(seed, n=3 + seed)
        za, zb = z0.copy(), z0.copy()
        oa, sa = kernels.unit_modulus_ascent(D, za, 1e-10, 500, backend="python")
        ob, sb = kernels.unit_modulus_ascent(D, zb, 1e-10, 500, backend="cython")
        assert sa == sb
        assert oa == pytest.approx(ob, rel=1e-10)
        assert np.allclose(za, zb, atol=1e-9)


@needs_compiled
def test_compiled_kernel_ascends_each_sweep():
    D, z = problem(1)
    prev = objective(D, z)
    for _ in range(30):
        obj, _ = kernels.unit_modulus_ascent(D, z, 0.0, 1, backend="cython")
        assert obj >= prev - 1e-12 * abs(prev)
        prev = obj


def test_argument_validation():
    D, z = problem(2)
    with pytest.raises(TypeError):
        kernels.unit_modulus_ascent(D, z.astype(np.complex64))
    with pytest.raises(TypeError):
        kernels.unit_modulus_ascent(D, np.repeat(z, 2)[::2])
    with pytest.raises(ValueError):
        kernels.unit_modulus_ascent(D[:, :-1], z)
    with pytest.raises(ValueError):
        kernels.unit_modulus_ascent(D, z, backend="fortran")


def test_fallback_selected_by_environment():
    env = dict(os.environ, ARIS_PRIVACY_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from aris_privacy import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


def test_python_module_matches_wrapper():
    D, z = problem(3)
    a, b = z.copy(), z.copy()
    _ascent_py.unit_modulus_ascent(D, a, 1e-10, 100)
    kernels.unit_modulus_ascent(D, b, 1e-10, 100, backend="python")
    assert np.array_equal(a, b)
