"""The four schemes compared in the experiments and their shared metrics.

``adaptive``      closed-form partition, then the CE and LI optimisers
``fixed``         half the surface/power for CE, the rest split evenly
``no_partition``  whole surface used for communication, no AN
``no_aris``       direct links only, WMMSE beamforming

All schemes are scored by :func:`evaluate`, so no metric is computed with
scheme-specific code.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet, SurfaceChannels
from .comm import CeState, FpConfig, _bisect_decreasing, sinr_all, sum_rate, update_auxiliaries
from .errors import SingularityError
from .li import LiState, isr_mu, optimize_li
from .localization import (
    MleResult,
    SearchConfig,
    adversary_model,
    expected_isr,
    fim_crlb,
    mle_estimate,
    rss_components,
    sample_observations,
)
from .partition import PartitionPlan, adaptive_plan, fixed_plan, whole_surface_plan
from .scenario import Scenario, _pos, distances


class SchemeId(str, enum.Enum):
    ADAPTIVE = "adaptive"
    FIXED = "fixed"
    NO_PARTITION = "no_partition"
    NO_ARIS = "no_aris"

    @classmethod
    def parse(cls, tag) -> "SchemeId":
        try:
            return cls(tag)
        except ValueError:
            raise ValueError(f"unknown scheme {tag!r}; choose from {[m.value for m in cls]}") from None


ALL_SCHEMES = tuple(SchemeId)


def wmmse_beamforming(ch: ChannelSet, s: Scenario, p_max: float | None = None, cfg: FpConfig = FpConfig(),
                      trace: list | None = None) -> np.ndarray:
    """Weighted-MMSE sum-rate beamforming on the direct links (rows of ``w``)."""
    p_max = s.p_s_max if p_max is None else p_max
    K, M = ch.K, ch.M
    h = ch.h  # K x M; h_k^H w = vdot(h_k, w)
    theta = np.zeros(0, complex)
    w = math.sqrt(p_max / K) * h / np.linalg.norm(h, axis=1, keepdims=True)

    def rate(W):
        return float(np.sum(np.log2(1.0 + sinr_all(W, theta, ch, s))))

    prev = rate(w)
    if trace is not None:
        trace.append(prev)
    eye = np.eye(M)
    for _ in range(cfg.max_outer_iters):
        S = np.conj(h) @ w.T  # [k, a] = h_k^H w_a
        total = np.sum(np.abs(S) ** 2, axis=1) + s.sigma2
        u = np.diag(S) / total
        mse = 1.0 - np.conj(u) * np.diag(S)
        weight = 1.0 / np.real(mse)
        A = (h.T * (weight * np.abs(u) ** 2)) @ np.conj(h)  # sum_a weight |u|^2 h_a h_a^H
        rhs = (weight * u)[:, None] * h  # rows weight_k u_k h_k

        def solve(mu):
            return np.linalg.solve(A + mu * eye, rhs.T).T

        def excess(mu):
            return float(np.sum(np.abs(solve(mu)) ** 2)) - p_max

        scale = float(np.real(np.trace(A))) / M
        if np.linalg.cond(A) > cfg.ridge_cond:
            # singular A: mu = 0 is not usable, so start the search just above it
            mu = _bisect_decreasing(lambda x: excess(x + 1e-12 * scale), cfg.bisect_tol, cfg.bisect_max,
                                    scale, "wmmse mu") + 1e-12 * scale
        else:
            mu = _bisect_decreasing(excess, cfg.bisect_tol, cfg.bisect_max, scale, "wmmse mu")
        w_new = solve(mu)
        used = float(np.sum(np.abs(w_new) ** 2))
        if used > p_max:
            w_new *= math.sqrt(p_max / used)
        cur = rate(w_new)
        w = w_new
        if trace is not None:
            trace.append(cur)
        if abs(cur - prev) <= cfg.rel_tol * max(abs(prev), 1e-300):
            break
        prev = cur
    return w


@dataclass(frozen=True)
class SchemeResult:
    scheme: SchemeId
    plan: PartitionPlan | None
    channels: ChannelSet
    ce: CeState
    li: dict  # MU index -> LiState
    warnings: tuple = ()

    @property
    def aris(self) -> bool:
        return self.channels.aris

    def an_powers(self, E: int) -> np.ndarray:
        return np.array([self.li[e].an_power if e in self.li else 0.0 for e in range(E)])

    @property
    def iterations(self) -> int:
        return self.ce.iterations + sum(st.iterations for st in self.li.values())


def plan_for(scheme: SchemeId, s: Scenario) -> PartitionPlan | None:
    scheme = SchemeId.parse(scheme)
    if scheme is SchemeId.ADAPTIVE:
        return adaptive_plan(s, distances(s))
    if scheme is SchemeId.FIXED:
        return fixed_plan(s)
    if scheme is SchemeId.NO_PARTITION:
        return whole_surface_plan(s)
    return None


def run_scheme(scheme, s: Scenario, full: SurfaceChannels, cfg: FpConfig = FpConfig(),
               rng: np.random.Generator | None = None, plan: PartitionPlan | None = None) -> SchemeResult:
    """Run one scheme on a shared full-surface channel draw."""
    scheme = SchemeId.parse(scheme)
    if scheme is SchemeId.NO_ARIS:
        ch = ChannelSet.direct_only(full)
        w = wmmse_beamforming(ch, s, s.p_s_max, cfg)
        ce = CeState(w=w, theta=np.zeros(0, complex), eps=np.zeros(ch.K), ups=np.zeros(ch.K, complex))
        eps, ups = update_auxiliaries(ce, ch, s)
        ce = CeState(w=w, theta=ce.theta, eps=eps, ups=ups)
        return SchemeResult(scheme, None, ch, ce, {})
    from .comm import optimize_ce

    plan = plan if plan is not None else plan_for(scheme, s)
    ch = ChannelSet.partitioned(full, plan.n0, plan.n_e)
    ce = optimize_ce(ch, s, plan.p0, cfg)
    lis = {}
    notes = list(plan.warnings)
    if scheme is not SchemeId.NO_PARTITION:
        for e in range(ch.E):
            if plan.n_e[e] < 1:
                notes.append(f"MU {e}: no LI elements")
                continue
            st = optimize_li(e, ch, ce, plan.p_e[e], cfg, rng=rng)
            notes.extend(st.warnings)
            lis[e] = st
    return SchemeResult(scheme, plan, ch, ce, lis, tuple(notes))


@dataclass(frozen=True)
class Metrics:
    sum_rate: float
    mean_isr: float
    crlb_bound: float
    mle_error: float
    expected_isr: float
    mle: MleResult | None = None


def evaluate(result: SchemeResult, s: Scenario, rng: np.random.Generator,
             search: SearchConfig = SearchConfig(), localize: bool = True) -> Metrics:
    """Sum rate, ISR, CRLB and one adversary MLE draw for any scheme."""
    ch, ce = result.channels, result.ce
    rate = sum_rate(ce, ch, s)
    E = ch.E
    isr = [isr_mu(e, result.li[e], ce, ch) if e in result.li else 0.0 for e in range(E)]
    mean_isr = float(np.mean(isr)) if E else 0.0
    p_v = result.an_powers(E)
    comp = rss_components(s, ce.amplitudes, result.plan.n_e if result.plan else [0] * E, p_v,
                          p_s=ce.tx_power, aris=result.aris)
    varrho, _ = expected_isr(comp)
    try:
        bound = fim_crlb(s, comp, reflected=result.aris).rmse_bound
    except SingularityError:
        bound = math.inf
    err, mle = math.nan, None
    if localize:
        r = sample_observations(comp.c, s.sigma_db, rng)
        model = adversary_model(s, comp.p_n, reflected=result.aris)
        mle = mle_estimate(r, model, search)
        err = float(np.linalg.norm(mle.estimate.position - _pos(s.su_pos)))
    return Metrics(sum_rate=rate, mean_isr=mean_isr, crlb_bound=bound, mle_error=err,
                   expected_isr=float(np.mean(varrho)) if E else 0.0, mle=mle)
