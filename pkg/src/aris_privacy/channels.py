"""Channel realisations for one placed scenario.

Channels are drawn once for the whole surface (``n_t`` elements) and then
sliced by a partition: the communication sub-surface (ARIS-CE) takes the
first ``n0`` elements and ARIS-LI partition ``e`` takes the next ``n_e[e]``.
Every scheme evaluated on the same draw therefore sees the same fading.

Conventions: vectors are stored as rows, ``h^H w`` is ``np.vdot(h, w)`` and
the cascade ``g^H Theta H w`` is ``sum(conj(g) * theta * (H @ w))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, distances
from .units import path_loss, sample_channel


@dataclass(frozen=True)
class SurfaceChannels:
    """Full-surface channel draw (independent of any partition)."""

    h_ru: np.ndarray  # K x M, SU -> RU k
    h_mu: np.ndarray  # E x M, SU -> MU e
    H: np.ndarray  # n_t x M, SU -> ARIS
    g_ru: np.ndarray  # K x n_t, ARIS -> RU k
    g_mu: np.ndarray  # E x n_t, ARIS -> MU e

    @property
    def n_t(self) -> int:
        return self.H.shape[0]


def draw_channels(s: Scenario, rng: np.random.Generator) -> SurfaceChannels:
    d = distances(s)
    pl = s.loss
    M, n_t = s.M, s.n_t
    h_ru = np.vstack([sample_channel(1, M, path_loss(x, pl), rng) for x in d.d_hk])
    h_mu = np.vstack([sample_channel(1, M, path_loss(x, pl), rng) for x in d.d_h]) if s.E else np.zeros((0, M), complex)
    H = sample_channel(n_t, M, path_loss(d.d_H, pl), rng)
    g_ru = np.vstack([sample_channel(1, n_t, path_loss(x, pl), rng) for x in d.d_gk])
    g_mu = np.vstack([sample_channel(1, n_t, path_loss(x, pl), rng) for x in d.d_g]) if s.E else np.zeros((0, n_t), complex)
    return SurfaceChannels(h_ru=h_ru, h_mu=h_mu, H=H, g_ru=g_ru, g_mu=g_mu)


@dataclass(frozen=True)
class ChannelSet:
    """Channels seen through one partition of the surface.

    ``aris`` is False for the no-ARIS baseline, in which case every ARIS
    path is absent (zero-length sub-surfaces).
    """

    full: SurfaceChannels
    n0: int
    n_e: tuple
    aris: bool = True

    @classmethod
    def partitioned(cls, full: SurfaceChannels, n0: int, n_e=()) -> "ChannelSet":
        n_e = tuple(int(x) for x in n_e)
        if n0 < 0 or any(x < 0 for x in n_e) or n0 + sum(n_e) > full.n_t:
            raise ValueError("partition exceeds the surface")
        return cls(full=full, n0=int(n0), n_e=n_e)

    @classmethod
    def direct_only(cls, full: SurfaceChannels) -> "ChannelSet":
        return cls(full=full, n0=0, n_e=(0,) * full.h_mu.shape[0], aris=False)

    # slices -------------------------------------------------------------
    def _li_slice(self, e: int) -> slice:
        start = self.n0 + sum(self.n_e[:e])
        return slice(start, start + self.n_e[e])

    @property
    def K(self) -> int:
        return self.full.h_ru.shape[0]

    @property
    def E(self) -> int:
        return self.full.h_mu.shape[0]

    @property
    def M(self) -> int:
        return self.full.H.shape[1]

    @property
    def h(self) -> np.ndarray:
        return self.full.h_ru

    @property
    def h_mu(self) -> np.ndarray:
        return self.full.h_mu

    @property
    def H(self) -> np.ndarray:
        return self.full.H[: self.n0]

    @property
    def g0(self) -> np.ndarray:
        """K x n0, ARIS-CE -> RU k."""
        return self.full.g_ru[:, : self.n0]

    @property
    def g_e0(self) -> np.ndarray:
        """E x n0, ARIS-CE -> MU e."""
        return self.full.g_mu[:, : self.n0]

    def H_e(self, e: int) -> np.ndarray:
        return self.full.H[self._li_slice(e)]

    def g_ke(self, e: int) -> np.ndarray:
        """K x n_e, ARIS-LI e -> RU k (misaligned path)."""
        return self.full.g_ru[:, self._li_slice(e)]

    def g_ei(self, e: int, i: int) -> np.ndarray:
        """ARIS-LI i -> MU e; ``g_ei(e, e)`` is the aligned path."""
        return self.full.g_mu[e, self._li_slice(i)]
