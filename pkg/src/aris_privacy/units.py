"""Decibel conventions, large-scale path loss and Rayleigh channel synthesis.

All power arithmetic inside the package is done in linear watts; decibels
only appear at configuration and reporting boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

SQRT_PI_OVER_2 = math.sqrt(math.pi) / 2.0


def db_to_linear(x_db):
    """Convert decibels to a linear power ratio, ``10**(x/10)``."""
    arr = np.asarray(x_db, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite decibel value: {x_db!r}")
    out = np.power(10.0, arr / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(x):
    """Convert a positive linear power ratio to decibels."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"linear value must be finite and positive: {x!r}")
    out = 10.0 * np.log10(arr)
    return float(out) if out.ndim == 0 else out


def dbm_to_watt(x_dbm):
    return db_to_linear(x_dbm) * 1e-3


def watt_to_dbm(x_w):
    return linear_to_db(x_w) + 30.0


@dataclass(frozen=True)
class PathLossModel:
    """``L(d) = L0 * d**(-exponent)`` with ``L0`` given in dB at 1 m."""

    l0_db: float = -37.3
    exponent: float = 2.2

    def __post_init__(self):
        if not math.isfinite(self.l0_db):
            raise DomainError("l0_db must be finite")
        if not (self.exponent > 0 and math.isfinite(self.exponent)):
            raise DomainError("path-loss exponent must be positive")

    @property
    def l0(self) -> float:
        return db_to_linear(self.l0_db)


def path_loss(d, model: PathLossModel):
    """Linear large-scale gain at distance ``d`` metres."""
    arr = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"distance must be positive and finite: {d!r}")
    out = model.l0 * arr ** (-model.exponent)
    return float(out) if out.ndim == 0 else out


def make_rng(seed, *keys) -> np.random.Generator:
    """PCG64 generator derived from ``seed`` and optional integer stream keys.

    Distinct key tuples give statistically independent streams; identical
    ``(seed, keys)`` always reproduce the same draws.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def sample_channel(rows: int, cols: int, loss: float, rng: np.random.Generator) -> np.ndarray:
    """Draw a ``rows x cols`` matrix of i.i.d. CN(0, loss) entries."""
    if not (loss > 0 and math.isfinite(loss)):
        raise DomainError(f"loss must be positive: {loss!r}")
    if rows < 0 or cols < 0:
        raise DomainError("matrix dimensions must be non-negative")
    scale = math.sqrt(loss / 2.0)
    re = rng.standard_normal((rows, cols))
    im = rng.standard_normal((rows, cols))
    return scale * (re + 1j * im)


def channel_moments(loss: float) -> tuple[float, float]:
    """Return ``(E|f|, E|f|^2)`` for ``f = sqrt(loss) * CN(0, 1)``.

    The amplitude moment scales with ``sqrt(loss)``: ``|f|`` is Rayleigh with
    unit-normalised mean ``sqrt(pi)/2``.
    """
    if not (loss > 0 and math.isfinite(loss)):
        raise DomainError(f"loss must be positive: {loss!r}")
    return SQRT_PI_OVER_2 * math.sqrt(loss), float(loss)
