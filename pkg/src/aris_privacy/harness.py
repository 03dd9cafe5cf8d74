"""Monte Carlo sweeps, aggregation and CSV I/O.

Random streams are derived from ``(seed, trial, purpose)`` and do not depend
on the sweep value or the scheme, so every scheme and every point of a sweep
sees the same placements, fading and measurement noise for a given trial.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import ALL_SCHEMES, SchemeId, evaluate, plan_for, run_scheme
from .channels import draw_channels
from .comm import FpConfig
from .errors import ArisError, ConfigError
from .localization import SearchConfig
from .scenario import Scenario, parse_power, place_nodes
from .units import make_rng

SWEEP_VARIABLES = ("d_se", "p_r_max", "n_t", "e_count", "omega")

# stream keys for make_rng(seed, trial, key, ...)
_PLACE, _FADING, _SOLVER, _MEASURE = 0, 1, 2, 3

# Settings for sweeps. The CE loop is still creeping upwards after 100
# outer iterations (a few percent of rate at N0 ~ 256), but every scheme gets
# the same budget and 300+ iterations would triple the sweep time.
SWEEP_FP = FpConfig(max_outer_iters=100, rel_tol=1e-5)


def apply_sweep(base: Scenario, variable: str, value) -> Scenario:
    if variable == "d_se":
        return base.replace(d_se=float(value))
    if variable == "p_r_max":
        return base.replace(p_r_max=parse_power(value))
    if variable == "n_t":
        return base.replace(n_t=_as_int(value, "n_t"))
    if variable == "e_count":
        return base.replace(E=_as_int(value, "e_count"), mu_pos=())
    if variable == "omega":
        return base.replace(omega=float(value))
    raise ConfigError(f"unknown sweep variable {variable!r}; choose from {SWEEP_VARIABLES}")


def _as_int(value, name):
    f = float(value)
    if f != int(f):
        raise ConfigError(f"{name} values must be integers")
    return int(f)


@dataclass(frozen=True)
class ExperimentSpec:
    sweep_variable: str
    sweep_values: tuple
    trials: int = 200
    schemes: tuple = ALL_SCHEMES
    base: Scenario = field(default_factory=Scenario)
    seed: int = 0
    out_path: str | None = None
    fp: FpConfig = SWEEP_FP
    search: SearchConfig = field(default_factory=SearchConfig)
    workers: int = 1

    def __post_init__(self):
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable {self.sweep_variable!r}; choose from {SWEEP_VARIABLES}")
        if not self.sweep_values:
            raise ConfigError("sweep_values must not be empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        object.__setattr__(self, "schemes", tuple(SchemeId.parse(x) for x in self.schemes))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        for v in self.sweep_values:
            apply_sweep(self.base, self.sweep_variable, v)


COLUMNS = (
    "scheme",
    "sweep_variable",
    "sweep_value",
    "trial",
    "status",
    "sum_rate",
    "mle_rmse",
    "crlb_bound",
    "mean_isr",
    "expected_isr",
    "n0",
    "n_li",
    "eta0",
    "iterations",
    "n_ok",
)

SUMMARY = "summary"


@dataclass(frozen=True)
class ResultRow:
    """One trial (``trial`` an int) or an aggregate (``trial == "summary"``).

    For a trial row ``mle_rmse`` is that trial's position error; for a
    summary row it is the root mean square over the feasible trials, and
    ``crlb_bound`` likewise. Other metrics are plain means. Failed trials
    carry ``status`` starting with ``infeasible`` and NaN metrics.
    """

    scheme: str
    sweep_variable: str
    sweep_value: str
    trial: object
    status: str = "ok"
    sum_rate: float = math.nan
    mle_rmse: float = math.nan
    crlb_bound: float = math.nan
    mean_isr: float = math.nan
    expected_isr: float = math.nan
    n0: float = math.nan
    n_li: float = math.nan
    eta0: float = math.nan
    iterations: float = math.nan
    n_ok: int = 1

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _fmt_value(v) -> str:
    return v if isinstance(v, str) else repr(v)


def _trial_rows(spec: ExperimentSpec, value, trial: int) -> list:
    s0 = apply_sweep(spec.base, spec.sweep_variable, value)
    s = place_nodes(s0, make_rng(spec.seed, trial, _PLACE))
    full = draw_channels(s, make_rng(spec.seed, trial, _FADING))
    rows = []
    for scheme in spec.schemes:
        common = dict(scheme=scheme.value, sweep_variable=spec.sweep_variable,
                      sweep_value=_fmt_value(value), trial=trial)
        try:
            plan = plan_for(scheme, s)
            res = run_scheme(scheme, s, full, spec.fp, rng=make_rng(spec.seed, trial, _SOLVER), plan=plan)
            m = evaluate(res, s, make_rng(spec.seed, trial, _MEASURE), spec.search)
        except ArisError as exc:
            rows.append(ResultRow(status=f"infeasible: {exc}", n_ok=0, **common))
            continue
        rows.append(ResultRow(
            sum_rate=m.sum_rate,
            mle_rmse=m.mle_error,
            crlb_bound=m.crlb_bound,
            mean_isr=m.mean_isr,
            expected_isr=m.expected_isr,
            n0=float(plan.n0 if plan else 0),
            n_li=float(plan.n_li if plan else 0),
            eta0=float(plan.eta0 if plan else 0.0),
            iterations=float(res.iterations),
            **common,
        ))
    return rows


def _cell_key(spec: ExperimentSpec, value, trial: int):
    # Two cells give identical results when the placed scenario and all
    # scheme plans agree; omega only reaches the solvers through the plan.
    s0 = apply_sweep(spec.base, spec.sweep_variable, value)
    s = place_nodes(s0, make_rng(spec.seed, trial, _PLACE))
    plans = []
    for scheme in spec.schemes:
        try:
            plans.append(plan_for(scheme, s))
        except ArisError as exc:
            plans.append(str(exc))
    return (trial, s.replace(omega=0.0), tuple(plans))


def _run_cell(args):
    spec, value, trial = args
    return _trial_rows(spec, value, trial)


def aggregate(rows: list, scheme: str, variable: str, value: str) -> ResultRow:
    good = [r for r in rows if r.ok]
    n = len(good)

    def mean(name):
        return math.fsum(getattr(r, name) for r in good) / n if n else math.nan

    def rms(name):
        return math.sqrt(math.fsum(getattr(r, name) ** 2 for r in good) / n) if n else math.nan

    return ResultRow(
        scheme=scheme, sweep_variable=variable, sweep_value=value, trial=SUMMARY,
        status="ok" if n else "infeasible: no feasible trials",
        sum_rate=mean("sum_rate"), mle_rmse=rms("mle_rmse"), crlb_bound=rms("crlb_bound"),
        mean_isr=mean("mean_isr"), expected_isr=mean("expected_isr"), n0=mean("n0"),
        n_li=mean("n_li"), eta0=mean("eta0"), iterations=mean("iterations"), n_ok=n,
    )


def run_experiment(spec: ExperimentSpec, progress=None) -> list:
    """Every (sweep value, trial, scheme) row, then one summary row per
    (sweep value, scheme)."""
    cells = [(v, t) for v in spec.sweep_values for t in range(spec.trials)]
    results: dict = {}
    cache: dict = {}
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            outs = pool.map(_run_cell, [(spec, v, t) for v, t in cells], chunksize=4)
            for (v, t), rows in zip(cells, outs):
                results[(v, t)] = rows
    else:
        for i, (v, t) in enumerate(cells):
            key = _cell_key(spec, v, t)
            if key in cache:
                rows = [dataclasses.replace(r, sweep_value=_fmt_value(v)) for r in cache[key]]
            else:
                rows = _trial_rows(spec, v, t)
                cache[key] = rows
            results[(v, t)] = rows
            if progress:
                progress(i + 1, len(cells))
    out = []
    for v in spec.sweep_values:
        for t in range(spec.trials):
            out.extend(results[(v, t)])
    for v in spec.sweep_values:
        for scheme in spec.schemes:
            sel = [r for t in range(spec.trials) for r in results[(v, t)] if r.scheme == scheme.value]
            out.append(aggregate(sel, scheme.value, spec.sweep_variable, _fmt_value(v)))
    if spec.out_path:
        emit_csv(out, spec.out_path)
    return out


# ---------------------------------------------------------------------------
# CSV


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)  # shortest round-trip form, always with a decimal dot
    return str(x)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def emit_csv(rows, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="ascii") as fh:
            fh.write(rows_to_csv(rows))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


_FLOAT_COLS = {"sum_rate", "mle_rmse", "crlb_bound", "mean_isr", "expected_isr", "n0", "n_li", "eta0", "iterations"}


def read_csv(path) -> list:
    path = Path(path)
    try:
        with path.open(newline="", encoding="ascii") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != COLUMNS:
                raise ConfigError(f"{path}: unexpected header {reader.fieldnames}")
            rows = []
            for rec in reader:
                kw = {}
                for c in COLUMNS:
                    v = rec[c]
                    if c in _FLOAT_COLS:
                        kw[c] = float(v)
                    elif c == "n_ok":
                        kw[c] = int(v)
                    elif c == "trial":
                        kw[c] = v if v == SUMMARY else int(v)
                    else:
                        kw[c] = v
                rows.append(ResultRow(**kw))
            return rows
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
