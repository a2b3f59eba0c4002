"""Command-line front end: ``plmpart {fit,test-linear,test-curves,simulate}``.

Reports are JSON on stdout (and ``report.json`` under ``--out``); curves,
bands and study tables are CSV files under ``--out``. Errors print one line
to stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import PlmError
from .estimator import fit as plm_fit
from .estimator import residualize
from .inference import (
    SIDES,
    LinearHypothesis,
    SmootherConfig,
    _CurvePipeline,
    band_from_report,
    t1_test,
    t2_test,
)
from .partition import CATEGORICAL, COMPONENT, DISTINCT, PCA, SINGLE, ZSpec, group_labels, make_plan
from .smoother import EPANECHNIKOV, GAUSSIAN, backend, local_poly_fit
from .studies import ConfigError, run_config

EXIT_ERROR = 2


def _names(s: str | None) -> tuple[str, ...]:
    if not s:
        return ()
    return tuple(p.strip() for p in s.split(",") if p.strip())


def _bandwidth(s: str):
    if s == "gcv":
        return s
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bandwidth must be 'gcv' or a number, got {s!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return v


def _seed(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plmpart", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--data", required=True, type=Path, help="input CSV with a header row")
    g.add_argument("--response", required=True)
    g.add_argument("--linear", required=True, help="comma-separated linear covariates")
    g.add_argument("--nonparam", default="", help="comma-separated continuous Z columns")
    g.add_argument("--categorical", default="", help="comma-separated categorical Z columns")
    g.add_argument("--cell-size", type=int, help="observations per cell (suggested 5)")
    g.add_argument("--order-by", default=None,
                   help="single | categorical | component:NAME | pca | distinct "
                        "(default: inferred from the Z columns)")
    common.add_argument("--seed", type=_seed, default=0)
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--jobs", type=_positive_int, default=1)

    smooth = argparse.ArgumentParser(add_help=False)
    s = smooth.add_argument_group("smoothing")
    s.add_argument("--kernel", choices=(EPANECHNIKOV, GAUSSIAN), default=EPANECHNIKOV)
    s.add_argument("--bandwidth", type=_bandwidth, default="gcv")
    s.add_argument("--undersmooth", type=float, default=0.8,
                   help="factor applied to the GCV bandwidth (default 0.8)")
    s.add_argument("--grid", type=_positive_int, default=100, help="evaluation grid size")

    f = sub.add_parser("fit", parents=[common, smooth], help="estimate beta and optionally g")
    f.add_argument("--curve", action="store_true", help="write curve CSVs (needs --out)")

    t1 = sub.add_parser("test-linear", parents=[common], help="test A beta = 0")
    t1.add_argument("--constrain", required=True,
                    help="'name=0,name=0' or a CSV file holding the matrix A")
    t1.add_argument("--bootstrap", type=int, default=0)

    t2 = sub.add_parser("test-curves", parents=[common, smooth],
                        help="compare the curves of the two groups of a binary Z")
    t2.add_argument("--bootstrap", type=int, default=500)
    t2.add_argument("--sided", choices=SIDES, default="two")
    t2.add_argument("--band", type=float, metavar="ALPHA", help="write a 1-ALPHA band CSV")

    sim = sub.add_parser("simulate", help="run simulation studies from a config file")
    sim.add_argument("config", type=Path)
    sim.add_argument("--out", type=Path, required=True)
    sim.add_argument("--seed", type=_seed, default=None, help="overrides [general] seed")
    sim.add_argument("--jobs", type=_positive_int, default=None, help="overrides [general] jobs")
    return p


# ----------------------------------------------------------------------------


def _zspec(args) -> ZSpec:
    cont, cat = _names(args.nonparam), _names(args.categorical)
    order = args.order_by
    col = None
    if order is None:
        if len(cont) == 1:
            order = CATEGORICAL if cat else SINGLE
        elif len(cont) > 1 and not cat:
            order = PCA
        else:
            raise PlmError("cannot infer --order-by for these Z columns; pass it explicitly")
    elif order.startswith(COMPONENT):
        m = re.fullmatch(rf"{COMPONENT}:(.+)", order)
        if not m:
            raise PlmError("use --order-by component:NAME")
        order, col = COMPONENT, m.group(1).strip()
    return ZSpec(cont, cat, order, col)


def _load(args):
    spec = io.ModelSpec(args.response, _names(args.linear), _names(args.nonparam),
                        _names(args.categorical))
    ds = io.load_csv(args.data, spec)
    zs = _zspec(args)
    if zs.strategy != DISTINCT and args.cell_size is None:
        raise PlmError("--cell-size is required (suggested: 5) unless --order-by distinct")
    plan = make_plan(ds, zs, None if zs.strategy == DISTINCT else args.cell_size)
    return ds, zs, plan


def _smoother_config(args) -> SmootherConfig:
    if not args.undersmooth > 0:
        raise PlmError("--undersmooth must be positive")
    return SmootherConfig(kernel=args.kernel, bandwidth=args.bandwidth,
                          undersmooth=args.undersmooth, grid_size=args.grid)


def _plan_summary(plan, zs) -> dict:
    return {
        "strategy": zs.strategy,
        "I": plan.target_cell_size,
        "J": plan.n_cells,
        "J_effective": plan.j_effective,
        "n_effective": plan.n_effective,
        "effective_cell_size": plan.effective_cell_size,
    }


def _emit(report: dict, out: Path | None):
    text = io.dumps(report)
    if out is not None:
        io.write_json(out / "report.json", report)
    sys.stdout.write(text)


def _level_name(ds, zs, code) -> str:
    return "|".join(
        f"{c}={ds.zd_levels[ds.zd_names.index(c)][k]}"
        for c, k in zip(zs.categorical, np.atleast_1d(code))
    )


def _safe(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", s)


def _write_curve(path, curve):
    rows = zip(curve.grid, curve.ghat, curve.var_ghat)
    io.write_csv(path, ["grid", "ghat", "var_ghat"], rows)


def cmd_fit(args) -> dict:
    ds, zs, plan = _load(args)
    if args.curve and args.out is None:
        raise PlmError("--curve needs --out")
    f = plm_fit(ds, plan)
    z = np.divide(f.beta, f.se, out=np.full(ds.p, np.nan), where=f.se > 0)
    tss = float(np.sum((ds.y - ds.y.mean()) ** 2))
    xbar = ds.x.mean(axis=0)
    icpt = float(np.mean(ds.y) - xbar @ f.beta)
    icpt_se = math.sqrt(f.sigma2 / plan.n_effective + float(xbar @ f.cov_beta @ xbar))
    report = {
        "kind": "fit",
        "data": str(args.data),
        "n": ds.n,
        "p": ds.p,
        "partition": _plan_summary(plan, zs),
        "sigma2": f.sigma2,
        "rss": f.rss,
        "r_squared": 1.0 - f.rss / tss if tss > 0 else None,
        "intercept": {"estimate": icpt, "se": icpt_se},
        "coefficients": [
            {"name": nm, "estimate": float(b), "se": float(s), "z": float(t)}
            for nm, b, s, t in zip(ds.x_names, f.beta, f.se, z)
        ],
        "covariance": f.cov_beta,
        "backend": backend(),
    }
    if args.curve:
        report["curves"] = _fit_curves(args, ds, zs, f)
    return report


def _fit_curves(args, ds, zs, f):
    if len(zs.continuous) != 1:
        raise PlmError("--curve needs exactly one continuous Z column")
    zc = ds.continuous(zs.continuous[0])
    ystar = residualize(ds, f)
    cfg = _smoother_config(args)
    codes = group_labels(ds, zs) if zs.categorical else np.zeros(ds.n, dtype=np.int64)
    pipe = _CurvePipeline(ystar, zc, codes, cfg)
    h = pipe.bandwidth(pipe.labels)
    out = []
    for code in np.unique(pipe.labels):
        m = pipe.labels == code
        if zs.categorical:
            rows = np.flatnonzero(codes == code)
            name = _level_name(ds, zs, ds.zd[rows[0]][[ds.zd_names.index(c) for c in zs.categorical]])
            fname = f"curve_{_safe(name)}.csv"
        else:
            name, fname = None, "curve.csv"
        c = local_poly_fit(pipe.xs[m], pipe.ys[m], cfg.degree, h, cfg.kernel, pipe.grid,
                           level=name, presorted=True)
        _write_curve(args.out / fname, c)
        out.append({"level": name, "n": int(m.sum()), "bandwidth": c.bandwidth,
                    "sigma2": c.sigma2, "csv": fname})
    return out


def _read_matrix(path: Path, names) -> np.ndarray:
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        raise PlmError(f"{path}: empty constraint file")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    try:
        a = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise PlmError(f"{path}: {exc}") from None
    if header is not None:
        unknown = [h for h in header if h not in names]
        if unknown:
            raise PlmError(f"{path}: unknown coefficient(s) {unknown}; known: {list(names)}")
        full = np.zeros((a.shape[0], len(names)))
        for j, h in enumerate(header):
            full[:, list(names).index(h)] = a[:, j]
        a = full
    if a.ndim != 2 or a.shape[1] != len(names):
        raise PlmError(f"{path}: constraint matrix needs {len(names)} columns")
    return a


def _hypothesis(spec: str, names) -> LinearHypothesis:
    path = Path(spec)
    if path.is_file():
        return LinearHypothesis(_read_matrix(path, names))
    which = []
    for term in spec.split(","):
        term = term.strip()
        if not term:
            continue
        name, _, value = term.partition("=")
        if value and float(value) != 0.0:
            raise PlmError(f"only zero constraints are supported, got {term!r}")
        which.append(name.strip())
    if len(set(which)) != len(which):
        raise PlmError("a coefficient is constrained twice")
    return LinearHypothesis.zero(names, which)


def cmd_test_linear(args) -> dict:
    ds, zs, plan = _load(args)
    if args.bootstrap < 0:
        raise PlmError("--bootstrap must be nonnegative")
    hyp = _hypothesis(args.constrain, ds.x_names)
    rep = t1_test(ds, plan, hyp, args.bootstrap, args.seed, args.jobs)
    return {"kind": "test-linear", "data": str(args.data), "n": ds.n,
            "partition": _plan_summary(plan, zs), "constraint": hyp.a, **rep.to_dict()}


def cmd_test_curves(args) -> dict:
    ds, zs, plan = _load(args)
    if args.bootstrap < 0:
        raise PlmError("--bootstrap must be nonnegative")
    if args.band is not None:
        if args.out is None:
            raise PlmError("--band needs --out")
        if args.bootstrap == 0:
            raise PlmError("--band needs --bootstrap > 0")
    f = plm_fit(ds, plan)
    rep = t2_test(ds, zs, plan, f, _smoother_config(args), args.bootstrap, args.seed,
                  args.sided, args.jobs)
    col = zs.categorical[0]
    levels = ds.zd_levels[ds.zd_names.index(col)]
    codes = np.unique(ds.categorical(col))
    report = {"kind": "test-curves", "data": str(args.data), "n": ds.n,
              "partition": _plan_summary(plan, zs),
              "groups": {"0": f"{col}={levels[codes[0]]}", "1": f"{col}={levels[codes[1]]}"},
              "kernel": args.kernel, **rep.to_dict()}
    if args.out is not None:
        c1, c0 = rep.curves
        for tag, c in (("0", c0), ("1", c1)):
            _write_curve(args.out / f"curve_group{tag}.csv", c)
    if args.band is not None:
        diff, lo, hi = band_from_report(rep, args.band, args.kernel)
        io.write_csv(args.out / "band.csv", ["grid", "diff", "lower", "upper"],
                     zip(rep.curves[0].grid, diff, lo, hi))
        report["band"] = {"alpha": args.band, "csv": "band.csv"}
    return report


def cmd_simulate(args) -> dict:
    summary = run_config(args.config, args.out, args.jobs, args.seed)
    summary["backend"] = backend()
    io.write_json(args.out / "summary.json", summary)
    return summary


COMMANDS = {"fit": cmd_fit, "test-linear": cmd_test_linear, "test-curves": cmd_test_curves,
            "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = COMMANDS[args.command](args)
    except (PlmError, ConfigError, OSError, ValueError) as exc:
        print(f"plmpart {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.command == "simulate":
        sys.stdout.write(io.dumps(report))
    else:
        _emit(report, args.out)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
