"""Command-line entry point: ``aris-privacy <command> [options]``.

Commands:

  partition   print the partition plan for one random placement
  optimize    run one scheme once and write the optimiser traces as CSV
  localize    Monte Carlo of the adversary's estimator for one scheme
  experiment  a parameter sweep over all requested schemes

Results go to ``--out`` (CSV) or stdout; diagnostics go to stderr. The exit
status is 0 on success, 2 for bad arguments or configuration and 1 for any
other failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from . import __version__
from .baselines import ALL_SCHEMES, SchemeId, evaluate, plan_for, run_scheme
from .channels import draw_channels
from .errors import ArisError, ConfigError
from .harness import SWEEP_FP, SWEEP_VARIABLES, ExperimentSpec, rows_to_csv, run_experiment
from .kernels import BACKEND
from .localization import SearchConfig
from .scenario import Scenario, _pos, load_scenario, place_nodes
from .units import make_rng


def _scenario(args) -> Scenario:
    return load_scenario(args.config) if args.config else Scenario()


def _placed(args, trial: int = 0):
    s = place_nodes(_scenario(args), make_rng(args.seed, trial, 0))
    full = draw_channels(s, make_rng(args.seed, trial, 1))
    return s, full


def _write(text: str, out) -> None:
    if out:
        with open(out, "w", newline="", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def cmd_partition(args) -> int:
    s, _ = _placed(args)
    plan = plan_for(args.scheme, s)
    if plan is None:
        print("no_aris uses no surface; nothing to partition", file=sys.stderr)
        return 0
    rows = [("ce", -1, plan.n0, plan.rho0, plan.eta0, plan.p0)]
    rows += [("li", e, n, r, x, p) for e, (n, r, x, p) in enumerate(zip(plan.n_e, plan.rho_e, plan.eta_e, plan.p_e))]
    _write(_csv_text(("block", "mu", "elements", "rho", "eta", "power_w"), rows), args.out)
    for w in plan.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_optimize(args) -> int:
    s, full = _placed(args)
    res = run_scheme(args.scheme, s, full, SWEEP_FP if args.fast else _default_fp(), make_rng(args.seed, 0, 2))
    rows = []
    for rec in res.ce.trace:
        for key, val in rec.items():
            if key != "iteration":
                rows.append(("ce", -1, rec["iteration"], key, float(val)))
    for e, st in sorted(res.li.items()):
        for rec in st.trace:
            for key, val in rec.items():
                if key != "iteration":
                    rows.append(("li", e, rec["iteration"], key, float(val)))
    _write(_csv_text(("block", "mu", "iteration", "quantity", "value"), rows), args.out)
    m = evaluate(res, s, make_rng(args.seed, 0, 3), localize=False)
    print(f"scheme={res.scheme.value} sum_rate={m.sum_rate:.6g} mean_isr={m.mean_isr:.6g} "
          f"iterations={res.iterations} crlb_bound={m.crlb_bound:.6g}", file=sys.stderr)
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _default_fp():
    from .comm import FpConfig

    return FpConfig()


def cmd_localize(args) -> int:
    rows = []
    su_err = []
    for t in range(args.trials):
        s, full = _placed(args, t)
        try:
            res = run_scheme(args.scheme, s, full, SWEEP_FP, make_rng(args.seed, t, 2))
            m = evaluate(res, s, make_rng(args.seed, t, 3), SearchConfig())
        except ArisError as exc:
            print(f"trial {t}: infeasible: {exc}", file=sys.stderr)
            continue
        est = m.mle.estimate
        rows.append((t, est.x, est.y, est.z, est.g_r, est.p_s, m.mle_error, m.crlb_bound))
        su_err.append(m.mle_error)
    _write(_csv_text(("trial", "x", "y", "z", "g_r_db", "p_s_dbw", "error_m", "crlb_bound_m"), rows), args.out)
    if su_err:
        rmse = math.sqrt(math.fsum(e * e for e in su_err) / len(su_err))
        print(f"scheme={SchemeId.parse(args.scheme).value} trials={len(su_err)} rmse={rmse:.6g}", file=sys.stderr)
    return 0


def cmd_experiment(args) -> int:
    spec = ExperimentSpec(
        sweep_variable=args.sweep,
        sweep_values=tuple(_split(args.values)),
        trials=args.trials,
        schemes=tuple(_split(args.scheme)) if args.scheme else ALL_SCHEMES,
        base=_scenario(args),
        seed=args.seed,
        workers=args.workers,
    )

    def progress(i, n):
        if args.verbose:
            print(f"\r{i}/{n} cells", end="" if i < n else "\n", file=sys.stderr)

    rows = run_experiment(spec, progress)
    _write(rows_to_csv(rows), args.out)
    bad = sum(1 for r in rows if r.trial != "summary" and not r.ok)
    if bad:
        print(f"{bad} infeasible trial rows recorded", file=sys.stderr)
    return 0


def _split(text: str):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty value list")
    return parts


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aris-privacy", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scheme_default="adaptive"):
        sp.add_argument("--config", help="flat TOML scenario file (defaults are used otherwise)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="CSV output path (stdout if omitted)")
        if scheme_default is not None:
            sp.add_argument("--scheme", default=scheme_default, choices=[x.value for x in SchemeId])

    common(sub.add_parser("partition", help="partition plan for one placement"))
    sp = sub.add_parser("optimize", help="optimiser traces for one instance")
    common(sp)
    sp.add_argument("--fast", action="store_true", help="use the looser settings of the sweeps")
    sp = sub.add_parser("localize", help="adversary Monte Carlo")
    common(sp)
    sp.add_argument("--trials", type=int, default=20)
    sp = sub.add_parser("experiment", help="parameter sweep")
    common(sp, scheme_default=None)
    sp.add_argument("--scheme", help="comma-separated schemes (default: all)")
    sp.add_argument("--sweep", required=True, choices=SWEEP_VARIABLES)
    sp.add_argument("--values", required=True, help="comma-separated sweep values, e.g. 0.1,0.2 or 10mW,20mW")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("-v", "--verbose", action="store_true")
    return p


COMMANDS = {
    "partition": cmd_partition,
    "optimize": cmd_optimize,
    "localize": cmd_localize,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "trials", 1) < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return 2
    try:
        with np.errstate(all="ignore"):
            return COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArisError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
