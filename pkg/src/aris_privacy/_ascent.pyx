# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled unit-modulus coordinate ascent (see kernels.py for the contract)."""

import numpy as np
from libc.math cimport sqrt


def unit_modulus_ascent(double complex[:, ::1] D, double complex[::1] z,
                        double tol, int max_sweeps):
    cdef Py_ssize_t n = D.shape[0]
    cdef Py_ssize_t i, m
    cdef int sweep = 0
    cdef double complex s, znew, delta
    cdef double mag, obj, new_obj
    y_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] y = y_arr

    for m in range(n):
        s = 0
        for i in range(n):
            s = s + D[m, i] * z[i]
        y[m] = s
    obj = 0.0
    for m in range(n):
        obj += z[m].real * y[m].real + z[m].imag * y[m].imag

    while sweep < max_sweeps:
        sweep += 1
        for i in range(n):
            s = y[i] - D[i, i] * z[i]
            mag = sqrt(s.real * s.real + s.imag * s.imag)
            if mag == 0.0:
                continue
            znew = s / mag
            delta = znew - z[i]
            if delta.real == 0.0 and delta.imag == 0.0:
                continue
            # D is Hermitian: column i is the conjugate of row i
            for m in range(n):
                y[m] = y[m] + (D[i, m].real - 1j * D[i, m].imag) * delta
            z[i] = znew
        new_obj = 0.0
        for m in range(n):
            new_obj += z[m].real * y[m].real + z[m].imag * y[m].imag
        if new_obj - obj <= tol * max(abs(new_obj), 1e-300):
            obj = new_obj
            break
        obj = new_obj
    return obj, sweep
