"""Pure-Python/numpy fallback for the unit-modulus coordinate ascent."""

from __future__ import annotations

import numpy as np


def unit_modulus_ascent(D, z, tol, max_sweeps):
    n = D.shape[0]
    y = D @ z
    obj = float(np.real(np.vdot(z, y)))
    sweep = 0
    while sweep < max_sweeps:
        sweep += 1
        for i in range(n):
            s = y[i] - D[i, i] * z[i]
            mag = abs(s)
            if mag == 0.0:
                continue
            znew = s / mag
            delta = znew - z[i]
            if delta == 0:
                continue
            y += np.conj(D[i]) * delta
            z[i] = znew
        new_obj = float(np.real(np.vdot(z, y)))
        if new_obj - obj <= tol * max(abs(new_obj), 1e-300):
            obj = new_obj
            break
        obj = new_obj
    return obj, sweep
