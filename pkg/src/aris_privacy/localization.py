"""RSS model, the adversary's maximum-likelihood localiser and the CRLB.

Every RSS quantity is in dB relative to one watt (``10 lg P``). A mean RSS
at MU ``e`` is the power sum of three terms: the direct SU path ``p_d``,
the path reflected by the communication sub-surface ``p_r`` and the
artificial noise ``p_n``. ``p_r`` or ``p_n`` may be ``-inf`` when the
corresponding path is absent.

The parameter vector is ``Pi = [x_S, y_S, z_S, G_R, p_S]``. When there is no
reflected path ``G_R`` does not enter the model and is dropped, leaving a
reduced four-parameter problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import SingularityError, UnidentifiableError
from .scenario import Scenario, _pos
from .units import PathLossModel

LN10 = math.log(10.0)


def _db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def _lin(x_db):
    with np.errstate(over="ignore"):
        return np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)


@dataclass(frozen=True)
class RssComponents:
    """Per-MU dB powers of the three RSS terms."""

    p_d: np.ndarray
    p_r: np.ndarray
    p_n: np.ndarray

    @property
    def c(self) -> np.ndarray:
        return _db(_lin(self.p_d) + _lin(self.p_r) + _lin(self.p_n))

    @property
    def E(self) -> int:
        return len(self.p_d)


@dataclass(frozen=True)
class ParamVector:
    x: float
    y: float
    z: float
    g_r: float  # dB; nan in the reduced model
    p_s: float  # dBW

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_array(self, reduced: bool = False) -> np.ndarray:
        if reduced:
            return np.array([self.x, self.y, self.z, self.p_s])
        return np.array([self.x, self.y, self.z, self.g_r, self.p_s])

    @classmethod
    def from_array(cls, arr, reduced: bool = False) -> "ParamVector":
        arr = [float(a) for a in arr]
        if reduced:
            x, y, z, p = arr
            return cls(x, y, z, float("nan"), p)
        return cls(*arr)


@dataclass(frozen=True)
class FimReport:
    j: np.ndarray
    crlb_block: np.ndarray
    rmse_bound: float
    grad_vecs: np.ndarray  # E x P, rows are grad_Pi c_e
    alpha0: np.ndarray
    alpha: np.ndarray
    varrho: np.ndarray


@dataclass(frozen=True)
class AdversaryModel:
    """What the colluding MUs know: their own positions, the ARIS position,
    the propagation law and the AN power each of them receives.

    ``reflected`` is False when no surface is present (reduced model).
    """

    mu_pos: np.ndarray  # E x 3
    aris_pos: np.ndarray
    loss: PathLossModel
    p_n: np.ndarray  # dB, -inf when no AN
    reflected: bool = True

    @property
    def n_params(self) -> int:
        return 5 if self.reflected else 4

    @property
    def d_g(self) -> np.ndarray:
        return np.linalg.norm(self.mu_pos - self.aris_pos, axis=1)

    def components(self, params) -> RssComponents:
        """Model means for ``params`` (array in the model's parameterisation)."""
        params = np.asarray(params, dtype=float)
        pos = params[:3]
        p_s = params[-1]
        l0_db = 10.0 * math.log10(self.loss.l0)
        eps = self.loss.exponent
        d_h = np.linalg.norm(self.mu_pos - pos, axis=1)
        p_d = p_s + l0_db - 10.0 * eps * np.log10(d_h)
        if self.reflected:
            d_H = float(np.linalg.norm(self.aris_pos - pos))
            p_r = p_s + 2.0 * l0_db - 10.0 * eps * np.log10(self.d_g * d_H) + params[3]
        else:
            p_r = np.full(len(d_h), -np.inf)
        return RssComponents(p_d=p_d, p_r=p_r, p_n=np.asarray(self.p_n, dtype=float))

    def mean(self, params) -> np.ndarray:
        return self.components(params).c

    def gradients(self, params) -> np.ndarray:
        """Rows ``grad_Pi c_e``; analytic form ``alpha0_e * v_e``."""
        comp = self.components(params)
        pos = np.asarray(params, dtype=float)[:3]
        return _gradients(comp, self.mu_pos, self.aris_pos, pos, self.loss.exponent, self.reflected)[0]


def adversary_model(s: Scenario, p_n_db, reflected: bool = True) -> AdversaryModel:
    return AdversaryModel(
        mu_pos=np.array(s.mu_pos, dtype=float).reshape(-1, 3),
        aris_pos=_pos(s.aris_pos),
        loss=s.loss,
        p_n=np.asarray(p_n_db, dtype=float),
        reflected=reflected,
    )


# ---------------------------------------------------------------------------
# truth


def noise_power_db(s: Scenario, p_v) -> np.ndarray:
    """``p_n = 10 lg P_v + 10 lg L0 - 10 eps lg d_g`` per MU (``-inf`` for no AN)."""
    p_v = np.asarray(p_v, dtype=float)
    mus = np.array(s.mu_pos, dtype=float).reshape(-1, 3)
    d_g = np.linalg.norm(mus - _pos(s.aris_pos), axis=1)
    return _db(p_v) + 10.0 * math.log10(s.loss.l0) - 10.0 * s.loss.exponent * np.log10(d_g)


def rss_components(s: Scenario, amps, n_e, p_v, p_s: float | None = None, aris: bool = True) -> RssComponents:
    """True RSS components for every MU.

    ``amps`` are the CE amplitudes ``p_n``, ``n_e`` the per-MU LI sizes and
    ``p_v`` the per-MU AN powers in watts. ``G_R`` is evaluated per MU with
    that MU's own ``N_e``.
    """
    p_s_db = _db(s.p_s_max if p_s is None else p_s)
    gain = float(np.sum(np.abs(np.asarray(amps)) ** 2))
    n_e = np.asarray(n_e, dtype=float)
    g_r = _db(gain + n_e)
    su = _pos(s.su_pos)
    l0_db = 10.0 * math.log10(s.loss.l0)
    eps = s.loss.exponent
    mus = np.array(s.mu_pos, dtype=float).reshape(-1, 3)
    d_h = np.linalg.norm(mus - su, axis=1)
    d_g = np.linalg.norm(mus - _pos(s.aris_pos), axis=1)
    d_H = float(np.linalg.norm(_pos(s.aris_pos) - su))
    p_d = p_s_db + l0_db - 10.0 * eps * np.log10(d_h)
    if aris:
        p_r = p_s_db + 2.0 * l0_db - 10.0 * eps * np.log10(d_g * d_H) + g_r
        p_n = noise_power_db(s, p_v)
    else:
        p_r = np.full(len(mus), -np.inf)
        p_n = np.full(len(mus), -np.inf)
    return RssComponents(p_d=p_d, p_r=p_r, p_n=p_n)


def expected_isr(comp: RssComponents) -> tuple[np.ndarray, np.ndarray]:
    """``(varrho, alpha0)``: expected ISR and the weight ``1/(1+varrho)``."""
    sig = _lin(comp.p_d) + _lin(comp.p_r)
    varrho = _lin(comp.p_n) / sig
    return varrho, 1.0 / (1.0 + varrho)


def sample_observations(means, sigma_db: float, rng: np.random.Generator) -> np.ndarray:
    if sigma_db < 0:
        raise ValueError("sigma_db must be non-negative")
    means = np.asarray(means, dtype=float)
    return means + sigma_db * rng.standard_normal(means.shape)


# ---------------------------------------------------------------------------
# Fisher information


def _gradients(comp, mu_pos, aris_pos, su_pos, exponent, reflected):
    e_db = 10.0 * exponent / LN10
    varrho, alpha0 = expected_isr(comp)
    P_d, P_r = _lin(comp.p_d), _lin(comp.p_r)
    alpha = P_r / (P_d + P_r)
    diff_h = mu_pos - su_pos
    d_h = np.linalg.norm(diff_h, axis=1)
    u_h = diff_h / d_h[:, None]
    rows = []
    if reflected:
        diff_H = aris_pos - su_pos
        d_H = float(np.linalg.norm(diff_H))
        u_H = diff_H / d_H
    for e in range(len(d_h)):
        if reflected:
            pos = e_db * ((1.0 - alpha[e]) / d_h[e] * u_h[e] + alpha[e] / d_H * u_H)
            v = np.concatenate([pos, [alpha[e], 1.0]])
        else:
            v = np.concatenate([e_db / d_h[e] * u_h[e], [1.0]])
        rows.append(alpha0[e] * v)
    return np.array(rows), alpha0, alpha, varrho


def fim_crlb(s: Scenario, comp: RssComponents, reflected: bool = True) -> FimReport:
    """FIM ``J = sigma^-2 sum_e grad c_e grad c_e^T`` and its position CRLB."""
    if comp.E < 1:
        raise SingularityError("no MUs", rank=0)
    mus = np.array(s.mu_pos, dtype=float).reshape(-1, 3)
    grads, alpha0, alpha, varrho = _gradients(
        comp, mus, _pos(s.aris_pos), _pos(s.su_pos), s.loss.exponent, reflected
    )
    if s.sigma_db <= 0:
        raise SingularityError("sigma_db = 0 gives unbounded information", rank=grads.shape[1])
    J = grads.T @ grads / s.sigma_db**2
    J = 0.5 * (J + J.T)
    n = J.shape[0]
    # rank test on the scale-free correlation form
    d = np.sqrt(np.diag(J))
    rank = int(np.linalg.matrix_rank(J / np.outer(d, d), tol=1e-10)) if np.all(d > 0) else int(np.linalg.matrix_rank(J))
    if rank < n:
        raise SingularityError(f"FIM is singular (rank {rank} < {n})", rank=rank)
    cov = np.linalg.inv(J)
    block = 0.5 * (cov[:3, :3] + cov[:3, :3].T)
    bound = math.sqrt(max(float(np.trace(block)), 0.0))
    return FimReport(j=J, crlb_block=block, rmse_bound=bound, grad_vecs=grads,
                     alpha0=alpha0, alpha=alpha, varrho=varrho)


# ---------------------------------------------------------------------------
# maximum-likelihood estimation


@dataclass(frozen=True)
class SearchConfig:
    """Search region and refinement settings.

    By default the position grid covers the bounding box of the nodes the
    adversary knows (MUs and ARIS) padded by ``padding`` metres. Giving
    ``center`` switches to a cube of half-width ``padding`` about it.
    """

    padding: float = 150.0
    pitch: float = 20.0
    center: tuple | None = None
    refine_starts: int = 3
    step_tol: float = 1e-6
    max_iter: int = 100
    g_r_bounds: tuple = (-20.0, 140.0)  # dB
    p_s_bounds: tuple = (-80.0, 20.0)  # dBW
    chunk: int = 20000


@dataclass(frozen=True)
class MleResult:
    estimate: ParamVector
    sse: float
    converged: bool
    grid_best: ParamVector
    diagnostics: dict = field(default_factory=dict)


def search_box(model: "AdversaryModel", cfg: SearchConfig) -> tuple[np.ndarray, np.ndarray]:
    if cfg.center is not None:
        c = np.asarray(cfg.center, dtype=float)
        return c - cfg.padding, c + cfg.padding
    known = np.vstack([model.mu_pos, model.aris_pos[None, :]])
    return known.min(axis=0) - cfg.padding, known.max(axis=0) + cfg.padding


def _grid(lo, hi, pitch) -> np.ndarray:
    axes = [np.arange(a, b + 0.5 * pitch, pitch) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _profile(model: AdversaryModel, pts: np.ndarray, r: np.ndarray, cfg: SearchConfig):
    """Closed-form ``(G_R, p_S)`` at each candidate position.

    In the linear domain the RSS is ``P_S a_e + (P_S G) b_e + P_n,e``, linear
    in ``x = (P_S, P_S G)``. A relative-error weighted least-squares fit gives
    the nuisance parameters, which are then clipped to their bounds.
    """
    eps = model.loss.exponent
    l0 = model.loss.l0
    d_h = np.linalg.norm(pts[:, None, :] - model.mu_pos[None, :, :], axis=2)
    a = l0 * d_h ** (-eps)
    y = _lin(r)
    target = (y - _lin(model.p_n)) / y
    a = a / y
    lo_p, hi_p = _lin(cfg.p_s_bounds[0]), _lin(cfg.p_s_bounds[1])
    if not model.reflected:
        p = np.einsum("ge,e->g", a, target) / np.einsum("ge,ge->g", a, a)
        p = np.clip(p, lo_p, hi_p)
        return None, _db(p)
    d_H = np.linalg.norm(model.aris_pos - pts, axis=1)
    b = (l0**2) * (model.d_g[None, :] * d_H[:, None]) ** (-eps) / y
    saa = np.einsum("ge,ge->g", a, a)
    sbb = np.einsum("ge,ge->g", b, b)
    sab = np.einsum("ge,ge->g", a, b)
    sat = a @ target
    sbt = b @ target
    det = saa * sbb - sab**2
    with np.errstate(divide="ignore", invalid="ignore"):
        x1 = (sbb * sat - sab * sbt) / det
        x2 = (saa * sbt - sab * sat) / det
    bad = ~np.isfinite(x1) | ~np.isfinite(x2)
    x1 = np.where(bad, sat / saa, x1)
    x2 = np.where(bad, 0.0, x2)
    x1 = np.clip(x1, lo_p, hi_p)
    g = np.clip(x2 / x1, _lin(cfg.g_r_bounds[0]), _lin(cfg.g_r_bounds[1]))
    return _db(g), _db(x1)


def _sse_grid(model: AdversaryModel, pts, g_r, p_s, r) -> np.ndarray:
    eps = model.loss.exponent
    l0_db = 10.0 * math.log10(model.loss.l0)
    d_h = np.linalg.norm(pts[:, None, :] - model.mu_pos[None, :, :], axis=2)
    p_d = p_s[:, None] + l0_db - 10.0 * eps * np.log10(d_h)
    total = _lin(p_d) + _lin(model.p_n)[None, :]
    if model.reflected:
        d_H = np.linalg.norm(model.aris_pos - pts, axis=1)
        p_r = (p_s + g_r)[:, None] + 2.0 * l0_db - 10.0 * eps * np.log10(model.d_g[None, :] * d_H[:, None])
        total = total + _lin(p_r)
    return np.sum((r[None, :] - _db(total)) ** 2, axis=1)


def mle_estimate(r, model: AdversaryModel, cfg: SearchConfig = SearchConfig()) -> MleResult:
    """Least-squares fit of the RSS model to the pooled observations ``r``.

    A position grid is scanned with the nuisance parameters profiled out in
    closed form; the best ``refine_starts`` grid points seed bounded
    Gauss-Newton/trust-region refinements of all parameters, restricted to
    the search box.
    """
    r = np.asarray(r, dtype=float)
    if len(r) < model.n_params:
        raise UnidentifiableError(f"{len(r)} observations cannot identify {model.n_params} parameters")
    box_lo, box_hi = search_box(model, cfg)
    pts = _grid(box_lo, box_hi, cfg.pitch)
    g_r = np.empty(len(pts)) if model.reflected else None
    p_s = np.empty(len(pts))
    sse = np.empty(len(pts))
    for start in range(0, len(pts), cfg.chunk):
        sl = slice(start, start + cfg.chunk)
        g_c, p_c = _profile(model, pts[sl], r, cfg)
        if model.reflected:
            g_r[sl] = g_c
        p_s[sl] = p_c
        sse[sl] = _sse_grid(model, pts[sl], g_c, p_c, r)
    order = np.argsort(sse, kind="stable")[: cfg.refine_starts]

    def pack(i):
        if model.reflected:
            return np.array([*pts[i], g_r[i], p_s[i]])
        return np.array([*pts[i], p_s[i]])

    lo = list(box_lo)
    hi = list(box_hi)
    if model.reflected:
        lo.append(cfg.g_r_bounds[0])
        hi.append(cfg.g_r_bounds[1])
    lo.append(cfg.p_s_bounds[0])
    hi.append(cfg.p_s_bounds[1])
    lo, hi = np.array(lo), np.array(hi)

    def resid(x):
        return model.mean(x) - r

    grid_best = pack(order[0])
    best_x, best_sse, converged, nfev = grid_best, float(sse[order[0]]), False, 0
    common = dict(jac=model.gradients, xtol=cfg.step_tol * 1e-3, ftol=1e-15, gtol=1e-15,
                  max_nfev=4 * cfg.max_iter)
    for i in order:
        x0 = np.clip(pack(i), lo, hi)
        # Levenberg-Marquardt handles the badly conditioned G_R/p_S
        # directions far better than the bounded solver; the bounded
        # trust-region run is the fallback when LM leaves the search box.
        candidates = []
        try:
            sol = least_squares(resid, x0, method="lm", **common)
            candidates.append(sol)
            if not np.all((sol.x >= lo) & (sol.x <= hi)):
                candidates.append(least_squares(resid, x0, bounds=(lo, hi), method="trf", **common))
        except (ValueError, np.linalg.LinAlgError):
            continue
        for sol in candidates:
            nfev += sol.nfev
            inside = np.all((sol.x >= lo) & (sol.x <= hi))
            val = float(np.sum(sol.fun**2))
            if inside and np.all(np.isfinite(sol.x)) and val < best_sse:
                best_x, best_sse, converged = sol.x, val, sol.status > 0
    reduced = not model.reflected
    return MleResult(
        estimate=ParamVector.from_array(best_x, reduced),
        sse=best_sse,
        converged=converged,
        grid_best=ParamVector.from_array(grid_best, reduced),
        diagnostics={"grid_points": len(pts), "nfev": nfev},
    )
