"""Per-MU optimisation of the ARIS-LI precoder and artificial noise.

For MU ``e`` the ISR is ``kappa = |g^H Theta_e v|^2 / sum_k |hbar_e^H w_k + g^H Theta_e H_e w_k|^2``
where ``g`` is the aligned LI channel and ``hbar_e`` folds in the CE cascade.
The quadratic transform with a complex auxiliary ``xi`` gives ::

    Q4 = 2 Re{conj(xi) g^H Theta_e v} - |xi|^2 sum_k |...|^2

which is linear in ``v`` and a unit-modulus quadratic in ``theta_e``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .channels import ChannelSet
from .comm import CeState, FpConfig
from .errors import DomainError, InfeasibleError
from .kernels import unit_modulus_ascent
from .scenario import Scenario


@dataclass(frozen=True)
class LiState:
    theta_e: np.ndarray
    v_e: np.ndarray
    xi: complex = 0j
    q4: float = float("nan")
    trace: tuple = field(default=(), compare=False)
    iterations: int = 0
    warnings: tuple = ()

    @property
    def an_power(self) -> float:
        return float(np.sum(np.abs(self.v_e) ** 2))


@dataclass(frozen=True)
class _MuTerms:
    g: np.ndarray  # aligned channel g_{e,e}, length N_e
    c: np.ndarray  # K x N_e, conj(g) * (H_e w_k)
    d: np.ndarray  # K, hbar_e^H w_k
    pass_power: float  # sum_k ||H_e w_k||^2


def mu_direct(e: int, ce: CeState, ch: ChannelSet) -> np.ndarray:
    """``hbar_e^H w_k`` for every k: direct path plus the CE cascade."""
    row = np.conj(ch.h_mu[e])
    if ch.n0:
        row = row + (np.conj(ch.g_e0[e]) * ce.theta) @ ch.H
    return ce.w @ row


def _terms(e: int, ce: CeState, ch: ChannelSet) -> _MuTerms:
    g = ch.g_ei(e, e)
    HW = ch.H_e(e) @ ce.w.T  # N_e x K
    return _MuTerms(
        g=g,
        c=(np.conj(g)[:, None] * HW).T,
        d=mu_direct(e, ce, ch),
        pass_power=float(np.sum(np.abs(HW) ** 2)),
    )


def _num_den(t: _MuTerms, theta, v):
    num = np.sum(np.conj(t.g) * theta * v)
    den = float(np.sum(np.abs(t.d + t.c @ theta) ** 2))
    return num, den


def isr_mu(e: int, li: LiState, ce: CeState, ch: ChannelSet, others=None) -> float:
    """ISR at MU ``e``.

    ``others`` optionally maps partition index ``i`` to its :class:`LiState`;
    the misaligned paths through those partitions are then added (their
    pass-through signal to the denominator, their AN power to the numerator,
    treating distinct AN streams as independent).
    """
    t = _terms(e, ce, ch)
    num, den = _num_den(t, li.theta_e, li.v_e)
    an = abs(num) ** 2
    if others:
        extra = np.zeros(ch.K, complex)
        for i, st in others.items():
            if i == e or ch.n_e[i] == 0:
                continue
            gi = np.conj(ch.g_ei(e, i)) * st.theta_e
            extra = extra + ce.w @ (gi @ ch.H_e(i))
            an += abs(np.sum(gi * st.v_e)) ** 2
        den = float(np.sum(np.abs(t.d + t.c @ li.theta_e + extra) ** 2))
    if not den > 0:
        raise DomainError("no signal power at the MU; ISR undefined")
    return float(an / den)


def update_xi(e: int, li: LiState, ce: CeState, ch: ChannelSet) -> complex:
    t = _terms(e, ce, ch)
    num, den = _num_den(t, li.theta_e, li.v_e)
    if not den > 0:
        raise DomainError("no signal power at the MU; xi undefined")
    return complex(num / den)


def q4(e: int, theta, v, xi, ce: CeState, ch: ChannelSet, terms: _MuTerms | None = None) -> float:
    t = terms or _terms(e, ce, ch)
    num, den = _num_den(t, theta, v)
    return float(2.0 * np.real(np.conj(xi) * num) - abs(xi) ** 2 * den)


def an_budget(e: int, ce: CeState, ch: ChannelSet, p_e: float) -> float:
    """Power left for AN after amplifying the pass-through signal."""
    HW = ch.H_e(e) @ ce.w.T
    return p_e - float(np.sum(np.abs(HW) ** 2))


def top_eigvec(B: np.ndarray) -> np.ndarray:
    """Unit eigenvector of the largest eigenvalue of a Hermitian matrix."""
    _, vecs = np.linalg.eigh(B)
    return vecs[:, -1]


def update_an(e: int, li: LiState, ce: CeState, ch: ChannelSet, p_e: float, min_power: float | None = None) -> np.ndarray:
    """Full-budget AN along ``Theta_e^H g``, phased to match ``xi``.

    The Rayleigh quotient matrix ``Theta_e^H g g^H Theta_e`` is rank one, so
    its top eigenvector is known in closed form.
    """
    p_v = an_budget(e, ce, ch, p_e)
    if not p_v > 0:
        if min_power is None:
            raise InfeasibleError("pass-through signal exhausts the LI budget", margin=p_v)
        p_v = min_power
    g = ch.g_ei(e, e)
    u = np.conj(li.theta_e) * g
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        u = np.ones_like(u) / math.sqrt(len(u))
    else:
        u = u / norm
    phase = li.xi / abs(li.xi) if li.xi != 0 else 1.0
    return math.sqrt(p_v) * u * phase


def precoder_problem(e: int, li: LiState, ce: CeState, ch: ChannelSet, terms: _MuTerms | None = None):
    """``(upsilon, Lambda)`` with ``Q4 = 2 Re{theta^H upsilon} - theta^H Lambda theta + const``."""
    t = terms or _terms(e, ce, ch)
    xi = li.xi
    a = np.conj(t.g) * li.v_e
    ups = xi * np.conj(a) - abs(xi) ** 2 * (t.d @ np.conj(t.c))
    lam = abs(xi) ** 2 * (np.conj(t.c).T @ t.c)
    return ups, lam


def homogenize(ups: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """``D = [[-Lambda, upsilon], [upsilon^H, 0]]`` so that ``z^H D z`` is the objective at ``t = 1``."""
    n = len(ups)
    D = np.zeros((n + 1, n + 1), complex)
    D[:n, :n] = -lam
    D[:n, n] = ups
    D[n, :n] = np.conj(ups)
    return D


def precoder_objective(theta, ups, lam) -> float:
    return float(2.0 * np.real(np.vdot(theta, ups)) - np.real(np.vdot(theta, lam @ theta)))


def solve_unit_modulus(ups, lam, start, rng: np.random.Generator | None = None, restarts: int = 4,
                       tol: float = 1e-10, max_sweeps: int = 2000) -> np.ndarray:
    """Maximise ``2 Re{theta^H ups} - theta^H lam theta`` over ``|theta_n| = 1``.

    Coordinate ascent on the homogenised form is run from ``start``, from the
    phases of the top eigenvector of ``D`` and from ``restarts`` random phase
    vectors. The best result is kept, so the value never falls below that
    of ``start``.
    """
    n = len(ups)
    D = homogenize(ups, lam)
    starts = [np.append(np.exp(1j * np.angle(start)), 1.0 + 0j)]
    top = top_eigvec(D)
    if np.all(top != 0):
        starts.append(np.exp(1j * np.angle(top)))
    if rng is not None:
        for _ in range(restarts):
            starts.append(np.exp(2j * np.pi * rng.random(n + 1)))
    best, best_val = None, -math.inf
    for z in starts:
        z = np.ascontiguousarray(z, dtype=np.complex128)
        unit_modulus_ascent(D, z, tol, max_sweeps)
        theta = z[:n] / z[n]
        theta = theta / np.abs(theta)
        val = precoder_objective(theta, ups, lam)
        if val > best_val:
            best, best_val = theta, val
    return best


def update_precoder_li(e: int, li: LiState, ce: CeState, ch: ChannelSet, rng=None, cfg: FpConfig = FpConfig(),
                       terms: _MuTerms | None = None) -> np.ndarray:
    ups, lam = precoder_problem(e, li, ce, ch, terms)
    return solve_unit_modulus(ups, lam, li.theta_e, rng, cfg.li_restarts, cfg.ascent_tol, cfg.ascent_max_sweeps)


def update_li_block(e: int, li: LiState, ce: CeState, ch: ChannelSet, p_e: float, rng=None,
                    cfg: FpConfig = FpConfig(), terms: _MuTerms | None = None,
                    min_power: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Joint maximisation of Q4 over ``(theta_e, v_e)`` for fixed ``xi``.

    The best AN for any phases is the full-budget vector along
    ``Theta_e^H g``, and with it ``g^H Theta_e v`` no longer depends on the
    phases. What is left for ``theta_e`` is to minimise the leaked signal
    ``sum_k |d_k + c_k theta|^2`` over unit-modulus vectors, after which the
    AN is realigned. Updating ``v_e`` and ``theta_e`` one at a time instead
    converges very slowly because the AN pins the phases to where they are.
    """
    t = terms or _terms(e, ce, ch)
    ups = -(t.d @ np.conj(t.c))
    lam = np.conj(t.c).T @ t.c
    theta = solve_unit_modulus(ups, lam, li.theta_e, rng, cfg.li_restarts, cfg.ascent_tol, cfg.ascent_max_sweeps)
    v = update_an(e, replace(li, theta_e=theta), ce, ch, p_e, min_power)
    return theta, v


def initial_li_state(e: int, ce: CeState, ch: ChannelSet, p_e: float, min_power: float | None = None) -> LiState:
    """Phases co-phased with the aligned channel, AN at full budget."""
    n = ch.n_e[e]
    theta = np.exp(1j * np.angle(ch.g_ei(e, e))) if n else np.zeros(0, complex)
    seed = LiState(theta_e=theta, v_e=np.zeros(n, complex), xi=1.0 + 0j)
    v = update_an(e, seed, ce, ch, p_e, min_power)
    return LiState(theta_e=theta, v_e=v, xi=0j)


def optimize_li(e: int, ch: ChannelSet, ce: CeState, p_e: float, cfg: FpConfig = FpConfig(),
                init: LiState | None = None, rng: np.random.Generator | None = None,
                min_an_power: float = 1e-12) -> LiState:
    """Alternate ``xi -> v_e -> (theta_e, v_e)`` until Q4 settles.

    The phase step is the joint block update of :func:`update_li_block`.

    If the pass-through signal alone exceeds ``p_e`` the AN power is clamped
    to ``min_an_power`` and a warning is recorded in the returned state.
    """
    if ch.n_e[e] < 1:
        raise DomainError(f"MU {e} has no LI elements")
    notes = []
    if an_budget(e, ce, ch, p_e) <= 0:
        msg = f"MU {e}: LI budget exhausted by pass-through signal; AN clamped to {min_an_power:g} W"
        warnings.warn(msg, RuntimeWarning)
        notes.append(msg)
    state = init if init is not None else initial_li_state(e, ce, ch, p_e, min_an_power)
    terms = _terms(e, ce, ch)
    trace = []
    prev = None
    it = 0
    for it in range(1, cfg.max_outer_iters + 1):
        xi = update_xi(e, state, ce, ch)
        q_xi = q4(e, state.theta_e, state.v_e, xi, ce, ch, terms)
        state = replace(state, xi=xi, q4=q_xi)
        v = update_an(e, state, ce, ch, p_e, min_an_power)
        q_v = q4(e, state.theta_e, v, xi, ce, ch, terms)
        if q_v >= state.q4:
            state = replace(state, v_e=v, q4=q_v)
        theta, v = update_li_block(e, state, ce, ch, p_e, rng, cfg, terms, min_an_power)
        q_t = q4(e, theta, v, xi, ce, ch, terms)
        if q_t >= state.q4:
            state = replace(state, theta_e=theta, v_e=v, q4=q_t)
        trace.append({"iteration": it, "q4_xi": q_xi, "q4": state.q4,
                      "isr": isr_mu(e, state, ce, ch),
                      "margin": p_e - terms.pass_power - state.an_power})
        if prev is not None and abs(q_xi - prev) <= cfg.rel_tol * max(abs(prev), 1e-300):
            break
        prev = q_xi
    xi = update_xi(e, state, ce, ch)
    return replace(state, xi=xi, q4=q4(e, state.theta_e, state.v_e, xi, ce, ch, terms),
                   trace=tuple(trace), iterations=it, warnings=tuple(notes))
