"""Closed-form power allocation and element partitioning of the ARIS.

Everything here works under average channel conditions: only path losses
enter, never a fading draw. The communication sub-surface is called CE and
the per-MU interference sub-surfaces LI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfeasibleError
from .scenario import DistanceSet, Scenario, _pos
from .units import path_loss


@dataclass(frozen=True)
class PartitionPlan:
    rho0: float
    rho_e: tuple
    eta0: float
    eta_e: tuple
    n0: int
    n_e: tuple
    p0: float
    p_e: tuple
    warnings: tuple = field(default=())

    @property
    def n_li(self) -> int:
        return int(sum(self.n_e))

    def check(self, n_t: int, p_r_max: float, tol: float = 1e-12) -> None:
        """Raise ``AssertionError`` if any plan invariant is broken."""
        assert abs(self.rho0 + sum(self.rho_e) - 1.0) <= tol
        assert abs(self.eta0 + sum(self.eta_e) - 1.0) <= tol
        assert self.n0 + sum(self.n_e) <= n_t
        assert all(0.0 <= x <= 1.0 for x in (self.rho0, self.eta0, *self.rho_e, *self.eta_e))
        assert math.isclose(self.p0, self.eta0 * p_r_max, rel_tol=1e-12)
        assert all(math.isclose(p, x * p_r_max, rel_tol=1e-12, abs_tol=0.0) for p, x in zip(self.p_e, self.eta_e))


def su_aris_loss(s: Scenario) -> float:
    """Large-scale gain L_H of the SU -> ARIS link."""
    return path_loss(float(np.linalg.norm(_pos(s.aris_pos) - _pos(s.su_pos))), s.loss)


def allocate_power(s: Scenario, d: DistanceSet) -> tuple[float, np.ndarray]:
    """Power shares ``(eta0, eta_e)`` that put every MU exactly on the ISR floor.

    With ``V_e = d_g/d_h`` and the SU at full power ``P_S``::

        eta0  = (P_R - rho P_S sum V_e^eps) / (P_R (1 + rho E))
        eta_e = rho (P_S V_e^eps / P_R + eta0)
    """
    p_s, p_r, rho = s.p_s_max, s.p_r_max, s.varrho_st
    if rho < 0:
        raise DomainError("varrho_st must be non-negative")
    v_eps = np.asarray(d.v_ratio, dtype=float) ** s.loss.exponent
    margin = p_r - rho * p_s * float(np.sum(v_eps))
    eta0 = margin / (p_r * (1.0 + rho * len(v_eps)))
    if not eta0 > 0:
        raise InfeasibleError(
            f"ISR floor {rho:g} unreachable: CE power share {eta0:.4g} <= 0", margin=margin
        )
    eta_e = rho * (p_s * v_eps / p_r + eta0)
    return float(eta0), eta_e


def isr_floor_residual(s: Scenario, d: DistanceSet, eta0: float, eta_e) -> np.ndarray:
    """``|eta_e P_R / (P_S V_e^eps + eta0 P_R) - varrho_st|`` for every MU."""
    v_eps = np.asarray(d.v_ratio, dtype=float) ** s.loss.exponent
    eta_e = np.asarray(eta_e, dtype=float)
    return np.abs(eta_e * s.p_r_max / (s.p_s_max * v_eps + eta0 * s.p_r_max) - s.varrho_st)


def ce_size_bound(s: Scenario, p0: float, losses) -> np.ndarray:
    """Per-RU real-valued lower bound on the CE element count (before ceiling)."""
    if not (p0 > 0 and s.p_s_max > 0):
        raise DomainError("p0 and P_S must be positive")
    l_g = np.asarray(losses, dtype=float)
    l_h = su_aris_loss(s)
    p_s, s2, sv2 = s.p_s_max, s.sigma2, s.sigma_v2
    num = 16.0 * s.gamma_st * (p0 * l_g * sv2 + p_s * l_h * s2 + s2 * sv2)
    return num / (math.pi**2 * l_g * l_h * p0 * p_s)


def size_ce_partition(s: Scenario, p0: float, losses) -> int:
    """Smallest CE size meeting the SINR floor for the worst RU, at least 1."""
    bound = float(np.max(ce_size_bound(s, p0, losses)))
    return max(1, math.ceil(bound))


def li_constant(s: Scenario, p0: float, kappa_target: float) -> float:
    """Constant term ``C`` of the LI sizing quadratic ``-P_S L_H N^2 + P_e N - C >= 0``."""
    l_h = su_aris_loss(s)
    return 4.0 / math.pi * kappa_target * l_h * (1.0 + p0 / (l_h * s.p_s_max + s.sigma_v2))


def size_li_partition(s: Scenario, p_e: float, kappa_target: float, p0: float) -> int:
    """Smallest LI size ``N`` with ``-P_S L_H N^2 + P_e N - C >= 0``."""
    if not p_e > 0:
        raise DomainError("p_e must be positive")
    a = s.p_s_max * su_aris_loss(s)
    c = li_constant(s, p0, kappa_target)
    disc = p_e * p_e - 4.0 * a * c
    if -1e-12 * p_e * p_e <= disc < 0:
        disc = 0.0  # tangent case lost to rounding
    if disc < 0:
        raise InfeasibleError(
            f"LI budget {p_e:.4g} W cannot reach ISR target {kappa_target:g}", margin=disc
        )
    # smaller root written without cancellation
    root = 2.0 * c / (p_e + math.sqrt(disc)) if c > 0 else 0.0
    return max(0, math.ceil(root))


def finalize_partition(n0: int, n_e, n_t: int) -> tuple[int, list, float, list]:
    """Reconcile CE/LI sizes with the surface size.

    Returns ``(n0*, n_e*, rho0, rho_e)``; the shares are the unfloored
    fractions and sum to one.
    """
    n_e = [int(x) for x in n_e]
    if n0 < 1 or any(x < 0 for x in n_e):
        raise DomainError("need n0 >= 1 and n_e >= 0")
    if n0 > n_t:
        raise InfeasibleError(f"CE needs {n0} elements but surface has {n_t}", margin=n_t - n0)
    n_E = sum(n_e)
    if n0 + n_E >= n_t:
        spare = n_t - n0
        if n_E == 0:
            return n0, n_e, 1.0, [0.0] * len(n_e)
        new_e = [(x * spare) // n_E for x in n_e]
        rho_e = [x * spare / (n_E * n_t) for x in n_e]
        return n0, new_e, n0 / n_t, rho_e
    n0_new = n_t - n_E
    return n0_new, n_e, n0_new / n_t, [x / n_t for x in n_e]


def _renorm(first: float, rest) -> tuple[float, tuple]:
    # absorb rounding into the first share so the shares sum to 1 to ~1 ulp
    rest = tuple(float(x) for x in rest)
    return 1.0 - math.fsum(rest), rest


def make_plan(s: Scenario, rho0, rho_e, eta0, eta_e, n0, n_e, warnings=()) -> PartitionPlan:
    rho0, rho_e = _renorm(rho0, rho_e)
    eta0, eta_e = _renorm(eta0, eta_e)
    return PartitionPlan(
        rho0=rho0,
        rho_e=rho_e,
        eta0=eta0,
        eta_e=eta_e,
        n0=int(n0),
        n_e=tuple(int(x) for x in n_e),
        p0=eta0 * s.p_r_max,
        p_e=tuple(x * s.p_r_max for x in eta_e),
        warnings=tuple(warnings),
    )


def adaptive_plan(s: Scenario, d: DistanceSet) -> PartitionPlan:
    """Power shares, CE/LI sizing and final reconciliation for one geometry."""
    eta0, eta_e = allocate_power(s, d)
    p0 = eta0 * s.p_r_max
    l_gk = path_loss(d.d_gk, s.loss)
    n0 = size_ce_partition(s, p0, l_gk)
    kappa = s.omega * s.kappa_st
    n_e = [size_li_partition(s, x * s.p_r_max, kappa, p0) for x in eta_e]
    n0f, n_ef, rho0, rho_e = finalize_partition(n0, n_e, s.n_t)
    return make_plan(s, rho0, rho_e, eta0, eta_e, n0f, n_ef)


def fixed_plan(s: Scenario) -> PartitionPlan:
    """Half the surface and power for CE, the rest split evenly across MUs."""
    E = s.E
    share = 0.5 / E if E else 0.0
    n_e = [math.floor(share * s.n_t)] * E
    if E == 0:
        return make_plan(s, 1.0, (), 1.0, (), s.n_t, ())
    return make_plan(s, 0.5, [share] * E, 0.5, [share] * E, math.floor(0.5 * s.n_t), n_e)


def whole_surface_plan(s: Scenario) -> PartitionPlan:
    """Every element and all power for communication, no LI partitions."""
    return make_plan(s, 1.0, [0.0] * s.E, 1.0, [0.0] * s.E, s.n_t, [0] * s.E)
