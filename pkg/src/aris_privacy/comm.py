"""Fractional-programming optimisation of SU beamforming and ARIS-CE precoding.

The sum rate is lifted with the quadratic transform into the surrogate ::

    Q3 = sum_k ln(1+eps_k) - eps_k + 2 sqrt(1+eps_k) Re{conj(ups_k) s_kk}
                 - |ups_k|^2 (sum_a |s_ka|^2 + ||g_k^H Theta||^2 sv2 + s2)

with ``s_ka = hbar_k^H w_a``. Natural logarithms are used so that the
auxiliary fixed point is exactly ``eps_k = SINR_k``; at that point
``Q3 = ln 2 * sum_rate``. Each block update is an exact maximisation, so Q3
never decreases.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from .channels import ChannelSet
from .errors import InfeasibleError, NumericalError
from .scenario import Scenario

LN2 = math.log(2.0)


@dataclass(frozen=True)
class FpConfig:
    max_outer_iters: int = 200
    rel_tol: float = 1e-7
    bisect_tol: float = 1e-12
    bisect_max: int = 200
    ridge_cond: float = 1e12
    li_restarts: int = 4
    ascent_tol: float = 1e-10
    ascent_max_sweeps: int = 2000
    extrapolate: bool = True

    def __post_init__(self):
        if min(self.max_outer_iters, self.rel_tol, self.bisect_tol, self.bisect_max) <= 0:
            raise ValueError("FpConfig fields must be positive")


@dataclass(frozen=True)
class CeState:
    w: np.ndarray  # K x M, row k is w_k
    theta: np.ndarray  # n0 complex reflection coefficients
    eps: np.ndarray  # K
    ups: np.ndarray  # K complex
    q3: float = float("nan")
    trace: tuple = field(default=(), compare=False)
    iterations: int = 0

    @property
    def tx_power(self) -> float:
        return float(np.sum(np.abs(self.w) ** 2))

    @property
    def amplitudes(self) -> np.ndarray:
        return np.abs(self.theta)


# ---------------------------------------------------------------------------
# evaluation


def effective_rows(theta: np.ndarray, ch: ChannelSet) -> np.ndarray:
    """Rows ``r_k`` with ``r_k @ w = hbar_k^H w`` (direct plus CE cascade)."""
    rows = np.conj(ch.h)
    if ch.n0:
        rows = rows + (np.conj(ch.g0) * theta) @ ch.H
    return rows


def _noise(theta: np.ndarray, ch: ChannelSet, s: Scenario) -> np.ndarray:
    amp = np.abs(ch.g0) ** 2 @ (np.abs(theta) ** 2) if ch.n0 else np.zeros(ch.K)
    return amp * s.sigma_v2 + s.sigma2


def _cross(w, theta, ch):
    return effective_rows(theta, ch) @ w.T  # [k, a] = hbar_k^H w_a


def sinr_all(w, theta, ch: ChannelSet, s: Scenario) -> np.ndarray:
    S = np.abs(_cross(w, theta, ch)) ** 2
    sig = np.diag(S).copy()
    # zero the diagonal rather than subtracting it, which loses precision
    np.fill_diagonal(S, 0.0)
    return sig / (S.sum(axis=1) + _noise(theta, ch, s))


def sinr_ru(k: int, state: CeState, ch: ChannelSet, s: Scenario) -> float:
    """SINR of RU ``k`` with misaligned LI paths ignored."""
    if not 0 <= k < ch.K:
        raise IndexError(k)
    return float(sinr_all(state.w, state.theta, ch, s)[k])


def sum_rate(state: CeState, ch: ChannelSet, s: Scenario) -> float:
    """Sum of ``log2(1 + SINR_k)`` in bit/s/Hz."""
    return float(np.sum(np.log2(1.0 + sinr_all(state.w, state.theta, ch, s))))


def q3_value(w, theta, eps, ups, ch: ChannelSet, s: Scenario) -> float:
    S = _cross(w, theta, ch)
    sig = np.diag(S)
    total = np.sum(np.abs(S) ** 2, axis=1) + _noise(theta, ch, s)
    root = np.sqrt(1.0 + eps)
    terms = (
        np.log1p(eps)
        - eps
        + 2.0 * root * np.real(np.conj(ups) * sig)
        - np.abs(ups) ** 2 * total
    )
    return float(math.fsum(terms))


def constraint_margins(w, theta, ch: ChannelSet, s: Scenario, p0: float) -> tuple[float, float]:
    """``(P_S - sum||w||^2, P0 - ARIS output power)``; both >= 0 when feasible."""
    tx = float(np.sum(np.abs(w) ** 2))
    return s.p_s_max - tx, p0 - aris_power(w, theta, ch, s)


def aris_power(w, theta, ch: ChannelSet, s: Scenario) -> float:
    if not ch.n0:
        return 0.0
    HW = ch.H @ w.T  # n0 x K
    psi = np.sum(np.abs(HW) ** 2, axis=1) + s.sigma_v2
    return float(np.sum(np.abs(theta) ** 2 * psi))


# ---------------------------------------------------------------------------
# block updates


def update_auxiliaries(state: CeState, ch: ChannelSet, s: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ``(eps, ups)``: eps is the SINR, ups the MMSE-like receiver."""
    S = _cross(state.w, state.theta, ch)
    sig = np.diag(S).copy()
    power = np.abs(S) ** 2
    off = power.copy()
    np.fill_diagonal(off, 0.0)
    noise = _noise(state.theta, ch, s)
    eps = np.abs(sig) ** 2 / (off.sum(axis=1) + noise)
    total = power.sum(axis=1) + noise
    ups = np.sqrt(1.0 + eps) * sig / total
    return eps, ups


def _bisect_decreasing(f, tol: float, max_iter: int, scale: float, name: str) -> float:
    """Smallest ``x >= 0`` with ``f(x) <= 0`` for a continuous nonincreasing ``f``.

    The root is bracketed by geometric growth from ``scale``, located with
    Brent's method and then nudged to the feasible side.
    """
    f0 = f(0.0)
    if f0 <= 0.0:
        return 0.0
    lo, hi = 0.0, max(scale, 1e-300)
    f_hi = f(hi)
    for _ in range(max_iter):
        if f_hi <= 0.0:
            break
        lo, hi = hi, hi * 4.0
        f_hi = f(hi)
    else:
        raise NumericalError(f"{name}: multiplier bracket not found", {"hi": hi, "f_hi": f_hi})
    if f_hi == 0.0:
        return hi
    x = brentq(f, lo, hi, xtol=1e-300, rtol=max(tol, 4e-16), maxiter=max_iter)
    step = max(tol * x, 1e-300)
    while f(x) > 0.0 and x < hi:
        x = min(x + step, hi)
        step *= 2.0
    return x


def _ridge(mat: np.ndarray, cond_max: float) -> np.ndarray:
    dim = mat.shape[0]
    if dim and np.linalg.cond(mat) > cond_max:
        mat = mat + 1e-12 * np.real(np.trace(mat)) / dim * np.eye(dim)
    return mat


def update_beamformer(state: CeState, ch: ChannelSet, s: Scenario, p0: float, cfg: FpConfig = FpConfig()) -> np.ndarray:
    """Maximise Q3 over ``w`` subject to the SU and ARIS power budgets.

    Solves ``w = (B + l1 I + l2 C)^-1 alpha``. The SU multiplier ``l1`` is a
    secular-equation root for each ``l2``; ``l2`` is bisected on the ARIS
    budget.
    """
    theta, eps, ups = state.theta, state.eps, state.ups
    M = ch.M
    rows = effective_rows(theta, ch)  # r_k = hbar_k^H
    hbar = np.conj(rows)  # columns hbar_k as rows
    B = (hbar.T * np.abs(ups) ** 2) @ rows  # sum_k |ups_k|^2 hbar_k hbar_k^H
    alpha = (np.sqrt(1.0 + eps) * ups)[:, None] * hbar  # K x M
    amp2 = np.abs(theta) ** 2
    C = (np.conj(ch.H).T * amp2) @ ch.H if ch.n0 else np.zeros((M, M), complex)
    p_w = p0 - float(np.sum(amp2)) * s.sigma_v2 if ch.n0 else math.inf
    if p_w <= 0:
        raise InfeasibleError("ARIS intrinsic noise exhausts the CE budget", margin=p_w)
    B = _ridge(B, cfg.ridge_cond)
    eye = np.eye(M)

    def solve(l1, l2):
        return np.linalg.solve(B + l1 * eye + l2 * C, alpha.T).T

    def tx(W):
        return float(np.sum(np.abs(W) ** 2))

    def rx(W):
        return float(np.real(np.sum(np.conj(W) * (W @ C.T))))

    p_s = s.p_s_max
    scale = max(float(np.linalg.norm(alpha)) / math.sqrt(p_s), float(np.real(np.trace(B))) / M, 1e-300)
    scale2 = scale / max(float(np.real(np.trace(C))) / M, 1e-300) if ch.n0 else 1.0

    def l1_for(l2):
        # tx(l1) = sum_i pw_i / (d_i + l1)^2 in the eigenbasis of B + l2 C
        d, U = np.linalg.eigh(B + l2 * C)
        pw = np.sum(np.abs(np.conj(U).T @ alpha.T) ** 2, axis=1)
        return _secular_root(pw, d, p_s)

    def rx_excess(l2):
        return rx(solve(l1_for(l2), l2)) - p_w

    # Minimising the dual over l1 for each l2 leaves a convex function of l2
    # whose slope is p_w - rx, so rx_excess is nonincreasing in l2.
    l2 = 0.0
    if ch.n0 and rx_excess(0.0) > 0.0:
        l2 = _bisect_decreasing(rx_excess, cfg.bisect_tol, cfg.bisect_max, scale2, "lambda2")
    W = solve(l1_for(l2), l2)
    # shave residual bisection violations
    shrink = min(1.0, p_s / max(tx(W), 1e-300), p_w / max(rx(W), 1e-300) if ch.n0 else 1.0)
    if shrink < 1.0:
        W = W * math.sqrt(shrink)
    return W


def _secular_root(pw: np.ndarray, d: np.ndarray, target: float, tol: float = 1e-13, max_iter: int = 200) -> float:
    """Smallest ``x >= 0`` with ``sum(pw / (d + x)^2) <= target``.

    The left side is convex and decreasing on the feasible range, so Newton's
    method started left of the root increases monotonically towards it.
    """
    mask = pw > 0
    pw, d = pw[mask], d[mask]
    if not len(pw):
        return 0.0
    d = np.maximum(d, 0.0)
    if float(np.sum(pw / np.maximum(d, 1e-300) ** 2)) <= target:
        return 0.0
    # each term alone must not exceed the target, which bounds the root below
    x = max(0.0, float(np.max(np.sqrt(pw / target) - d)))
    f = float(np.sum(pw / (d + x) ** 2)) - target
    if f <= 0.0:
        return x
    for _ in range(max_iter):
        slope = -2.0 * float(np.sum(pw / (d + x) ** 3))
        step = -f / slope
        x += step
        f = float(np.sum(pw / (d + x) ** 2)) - target
        if step <= tol * max(x, 1e-300) or f <= 0.0:
            break
    # Newton stops just short of the root; nudge until feasible
    while f > 0.0:
        x = x * (1.0 + 1e-12) + 1e-300
        f = float(np.sum(pw / (d + x) ** 2)) - target
    return x


def _precoder_terms(state: CeState, ch: ChannelSet, s: Scenario):
    """Quadratic-form pieces ``(upsilon, diag, lowrank, psi)`` of Q3 in theta.

    ``Lambda = diag(diag) + lowrank @ lowrank^H``.
    """
    w, eps, ups = state.w, state.eps, state.ups
    K = ch.K
    HW = ch.H @ w.T  # n0 x K, column a = H w_a
    direct = np.conj(ch.h) @ w.T  # [k, a] = h_k^H w_a
    g_conj = np.conj(ch.g0)  # K x n0
    weight = np.abs(ups) ** 2
    # a_{k,a} = conj(g_k) * H w_a ; Lambda = sum_k |ups_k|^2 sum_a conj(a_ka) a_ka^T + ...
    a = g_conj[:, :, None] * HW[None, :, :]  # k, n, a
    lowrank = (np.conj(a) * np.sqrt(weight)[:, None, None]).transpose(1, 0, 2).reshape(ch.n0, K * K)
    diag = s.sigma_v2 * (weight @ np.abs(ch.g0) ** 2)
    a_kk = a[np.arange(K), :, np.arange(K)]  # K x n0
    ups_vec = np.sum((np.sqrt(1.0 + eps) * ups)[:, None] * np.conj(a_kk), axis=0)
    ups_vec = ups_vec - np.einsum("k,ka,kna->n", weight, direct, np.conj(a))
    psi = np.sum(np.abs(HW) ** 2, axis=1) + s.sigma_v2
    return ups_vec, diag, lowrank, psi


def _woodbury_solver(diag, lowrank, psi, rhs, cond_max):
    """Return ``mu -> (diag(diag + mu psi) + L L^H)^-1 rhs``."""
    kk = lowrank.shape[1]
    eye = np.eye(kk)
    ref = (float(np.sum(diag)) + float(np.sum(np.abs(lowrank) ** 2))) / max(len(diag), 1)

    def solve(mu):
        d = diag + mu * psi
        if d.min() <= ref / cond_max:
            d = d + 1e-12 * ref
        dinv_rhs = rhs / d
        dinv_l = lowrank / d[:, None]
        cap = eye + np.conj(lowrank).T @ dinv_l
        corr = dinv_l @ np.linalg.solve(cap, np.conj(lowrank).T @ dinv_rhs)
        return dinv_rhs - corr

    return solve


def update_precoder(state: CeState, ch: ChannelSet, s: Scenario, p0: float, cfg: FpConfig = FpConfig()) -> np.ndarray:
    """Maximise Q3 over the CE reflection vector under the ARIS power budget.

    ``theta = (Lambda + mu Psi)^-1 upsilon`` with ``mu >= 0`` found by
    bisection on ``theta^H Psi theta <= P0``.
    """
    if not ch.n0:
        return state.theta
    ups_vec, diag, lowrank, psi = _precoder_terms(state, ch, s)
    if not np.any(ups_vec):
        warnings.warn("degenerate precoder problem (upsilon = 0); returning theta = 0", RuntimeWarning)
        return np.zeros(ch.n0, complex)
    solve = _woodbury_solver(diag, lowrank, psi, ups_vec, cfg.ridge_cond)

    def excess(mu):
        th = solve(mu)
        return float(np.sum(psi * np.abs(th) ** 2)) - p0

    scale = (float(np.sum(diag)) + float(np.sum(np.abs(lowrank) ** 2))) / float(np.sum(psi))
    mu = _bisect_decreasing(excess, cfg.bisect_tol, cfg.bisect_max, scale, "mu")
    theta = solve(mu)
    used = float(np.sum(psi * np.abs(theta) ** 2))
    if used > p0:
        theta = theta * math.sqrt(p0 / used)
    return theta


# ---------------------------------------------------------------------------
# driver


def initial_ce_state(ch: ChannelSet, s: Scenario, p0: float, margin: float = 0.9) -> CeState:
    """Feasible deterministic start.

    Beamformers are matched filters with an equal power split; the CE phases
    co-phase the first RU's cascade with its direct path, and the common
    amplitude fills ``margin`` of the ARIS budget.
    """
    K, M = ch.K, ch.M
    per_user = math.sqrt(s.p_s_max / K)
    w = per_user * ch.h / np.linalg.norm(ch.h, axis=1, keepdims=True)
    theta = np.zeros(ch.n0, complex)
    if ch.n0:
        casc = np.conj(ch.g0[0]) * (ch.H @ w[0])
        direct = np.vdot(ch.h[0], w[0])
        theta = np.exp(1j * (np.angle(direct) - np.angle(casc)))
        theta = _fill_budget(theta, w, ch, s, p0, margin)
        rows = effective_rows(theta, ch)
        w = per_user * np.conj(rows) / np.linalg.norm(rows, axis=1, keepdims=True)
        theta = _fill_budget(theta, w, ch, s, p0, margin)
    state = CeState(w=w, theta=theta, eps=np.zeros(K), ups=np.zeros(K, complex))
    eps, ups = update_auxiliaries(state, ch, s)
    return replace(state, eps=eps, ups=ups, q3=q3_value(w, theta, eps, ups, ch, s))


def _fill_budget(theta, w, ch, s, p0, margin):
    used = aris_power(w, theta, ch, s)
    return theta * math.sqrt(margin * p0 / used)


def _project(w, theta, ch: ChannelSet, s: Scenario, p0: float):
    """Scale ``w`` then ``theta`` back inside their power budgets."""
    tx = float(np.sum(np.abs(w) ** 2))
    if tx > s.p_s_max:
        w = w * math.sqrt(s.p_s_max / tx)
    used = aris_power(w, theta, ch, s)
    if used > p0:
        theta = theta * math.sqrt(p0 / used)
    return w, theta


def optimize_ce(ch: ChannelSet, s: Scenario, p0: float, cfg: FpConfig = FpConfig(), init: CeState | None = None) -> CeState:
    """Alternate auxiliaries -> beamformer -> precoder until Q3 settles.

    With ``cfg.extrapolate`` each sweep is followed by a momentum step
    ``x + beta (x - x_prev)`` pulled back into the budgets, kept only if it
    raises the sum rate. The next auxiliary update then starts from a higher
    tight bound, so the Q3 trace stays nondecreasing, and the plain sweeps
    (which crawl at high SINR) need several times fewer iterations.

    The returned state has ``eps`` equal to the final SINRs and ``trace``
    holding one record per outer iteration.
    """
    state = init if init is not None else initial_ce_state(ch, s, p0)
    trace = []
    prev = None
    prev_x = None
    beta = 1.0
    it = 0
    for it in range(1, cfg.max_outer_iters + 1):
        eps, ups = update_auxiliaries(state, ch, s)
        q_aux = q3_value(state.w, state.theta, eps, ups, ch, s)
        state = replace(state, eps=eps, ups=ups, q3=q_aux)

        w = update_beamformer(state, ch, s, p0, cfg)
        q_w = q3_value(w, state.theta, eps, ups, ch, s)
        if q_w >= state.q3:
            state = replace(state, w=w, q3=q_w)

        theta = update_precoder(state, ch, s, p0, cfg)
        q_t = q3_value(state.w, theta, eps, ups, ch, s)
        if q_t >= state.q3:
            state = replace(state, theta=theta, q3=q_t)

        rate = sum_rate(state, ch, s)
        jumped = False
        if cfg.extrapolate and prev_x is not None and ch.n0:
            yw, yt = _project(state.w + beta * (state.w - prev_x[0]),
                              state.theta + beta * (state.theta - prev_x[1]), ch, s, p0)
            y_rate = float(np.sum(np.log2(1.0 + sinr_all(yw, yt, ch, s))))
            if y_rate > rate:
                state, rate, jumped = replace(state, w=yw, theta=yt), y_rate, True
                beta = min(1.5 * beta, 50.0)
            else:
                beta = max(0.5 * beta, 0.25)
        prev_x = (state.w, state.theta)

        m_s, m_r = constraint_margins(state.w, state.theta, ch, s, p0)
        trace.append(
            {
                "iteration": it,
                "q3_aux": q_aux,
                "q3_w": max(q_w, q_aux),
                "q3": state.q3,
                "sum_rate": rate,
                "extrapolated": float(jumped),
                "margin_su": m_s,
                "margin_aris": m_r,
            }
        )
        if prev is not None and abs(q_aux - prev) <= cfg.rel_tol * max(abs(prev), 1e-300):
            break
        prev = q_aux
    eps, ups = update_auxiliaries(state, ch, s)
    q = q3_value(state.w, state.theta, eps, ups, ch, s)
    return replace(state, eps=eps, ups=ups, q3=q, trace=tuple(trace), iterations=it)
