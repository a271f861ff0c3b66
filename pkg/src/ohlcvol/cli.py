"""Command-line front end.

Every command writes CSV (to ``--out`` or stdout). When ``--out`` is given a
run manifest ``<out>.manifest.json`` is written next to it; ``ohlcvol
replay <manifest>`` reruns the recorded command line.

Exit codes: 0 success, 2 input error, 3 numerical non-convergence,
4 ill-conditioned system.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .core import DomainError, OhlcBar
from .density import ConvergenceError
from .estimators import (
    classic_diagram,
    diagram_moments,
    efficient_variance_diagram,
    efficient_volatility_diagram,
    estimator_pdf_variance,
    estimator_pdf_volatility,
    gk_variance,
    lower_bound_variance,
    lower_bound_volatility,
    parkinson_variance,
    rs_variance,
)
from .kernels import QuadratureConfig
from .quasi import IllConditionedError, build_quasi, quasi_expectation, quasi_variance, write_weights_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_CONDITION = 4

CURVES = ("bound_V", "bound_W", "mean", "variance", "renorm_variance")


class InputError(Exception):
    """Bad input data or arguments (exit code 2)."""


@dataclass
class RunManifest:
    """Record of one invocation, written next to its output."""

    command: str
    parameters: dict
    seed: int | None
    tool_version: str = __version__
    wall_time: float = 0.0
    argv: list = field(default_factory=list)


# ------------------------------------------------------------------ helpers


def _fmt(x):
    return repr(float(x))


def _count(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if value != int(value) or value < 1:
        raise argparse.ArgumentTypeError(f"not a positive integer: {text!r}")
    return int(value)


def _float_list(text):
    """``a,b,c`` or ``start:stop:step`` (stop included)."""
    try:
        if ":" in text:
            a, b, s = (float(v) for v in text.split(":"))
            if s <= 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / s + 1e-9))
            return [round(a + i * s, 12) for i in range(n + 1)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list: {text!r}")


def _gamma_grid(args):
    return args.gamma if args.gamma is not None else _float_list("-2:2:0.05")


def _quadrature(args):
    kw = {}
    if getattr(args, "tol_radial", None) is not None:
        kw["radial_tol"] = args.tol_radial
    if getattr(args, "tol_angular", None) is not None:
        kw["angular_tol"] = args.tol_angular
    try:
        return QuadratureConfig(**kw)
    except DomainError as exc:
        raise InputError(str(exc))


class _Estimator(argparse.Action):
    """Collect estimator flags, in order, into ``args.estimators``."""

    def __call__(self, parser, namespace, values, option_string=None):
        items = list(getattr(namespace, "estimators", None) or [])
        name = {"--rs": "RS", "--gk": "GK", "--parkinson": "PK", "--eff": "EFF", "--mle": "ML"}[option_string]
        items.append([name, float(values) if isinstance(values, (int, float)) else None])
        namespace.estimators = items


def _add_estimator_flags(p, eff=True, mle=True):
    p.add_argument("--rs", nargs=0, action=_Estimator, help="Rogers-Satchell")
    p.add_argument("--gk", nargs=0, action=_Estimator, help="Garman-Klass")
    p.add_argument("--parkinson", nargs=0, action=_Estimator, help="Parkinson")
    if eff:
        p.add_argument("--eff", type=float, metavar="G0", action=_Estimator,
                       help="most efficient estimator at drift G0 (repeatable)")
    if mle:
        p.add_argument("--mle", nargs=0, action=_Estimator, help="maximum likelihood")
    p.set_defaults(estimators=None)


def _add_quadrature_flags(p):
    p.add_argument("--tol-radial", type=float, default=None)
    p.add_argument("--tol-angular", type=float, default=None)


def _label(name, g0):
    return f"EFF({g0:g})" if name == "EFF" else name


def _diagram(name, g0, quantity, cfg):
    if name in ("RS", "GK", "PK"):
        return classic_diagram(name, quantity)
    if name == "EFF":
        build = efficient_variance_diagram if quantity == "variance" else efficient_volatility_diagram
        return build(g0, cfg)
    if name == "ML":
        from .mle import ml_diagram

        return ml_diagram(quantity)
    raise InputError(f"unknown estimator {name}")


def _need_estimators(args, default=None):
    if not args.estimators:
        if default is None:
            raise InputError("select at least one estimator (--rs, --gk, --parkinson, --eff G0, --mle)")
        return default
    return args.estimators


def _read_bars(path):
    """Parse ``open,high,low,close[,horizon]`` rows; row numbers count data rows from 1."""
    try:
        fh = sys.stdin if path == "-" else open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError("input is empty")
        cols = [h.strip().lower() for h in header]
        need = ["open", "high", "low", "close"]
        if cols[:4] != need or len(cols) > 5 or (len(cols) == 5 and cols[4] != "horizon"):
            raise InputError("header must be open,high,low,close[,horizon]")
        bars = []
        for i, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise InputError(f"row {i}: expected {len(cols)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise InputError(f"row {i}: non-numeric field")
            try:
                bars.append(OhlcBar(*vals))
            except DomainError as exc:
                raise InputError(f"row {i}: {exc}")
    return bars


class _Output:
    def __init__(self, path):
        self.path = path
        self.buf = io.StringIO()
        self.writer = csv.writer(self.buf, lineterminator="\n")

    def row(self, items):
        self.writer.writerow(items)

    def close(self):
        text = self.buf.getvalue()
        if self.path in (None, "-"):
            sys.stdout.write(text)
        else:
            with open(self.path, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)


# ----------------------------------------------------------------- commands


def cmd_estimate(args):
    bars = _read_bars(args.input)
    ests = _need_estimators(args)
    cfg = _quadrature(args)
    out = _Output(args.out)
    header = []
    for name, g0 in ests:
        lab = _label(name, g0).lower()
        header += [f"{lab}_variance", f"{lab}_volatility"]
        if name == "ML":
            header.append("ml_norm_volatility")
    out.row(header)

    diagrams = {}
    for name, g0 in ests:
        if name == "EFF":
            diagrams[(name, g0)] = (
                efficient_variance_diagram(g0, cfg),
                efficient_volatility_diagram(g0, cfg),
            )

    from .estimators import apply_diagram

    for bar in bars:
        row = []
        for name, g0 in ests:
            if name == "RS":
                v = rs_variance(bar)
                row += [v, math.sqrt(max(v, 0.0))]
            elif name == "GK":
                v = gk_variance(bar)
                row += [v, math.sqrt(max(v, 0.0))]
            elif name == "PK":
                v = parkinson_variance(bar)
                row += [v, math.sqrt(v)]
            elif name == "EFF":
                dv, ds = diagrams[(name, g0)]
                row += [apply_diagram(bar, dv).point, apply_diagram(bar, ds).point]
            else:
                from .mle import ml_mean, ml_volatility

                if bar.high == bar.low:
                    row += [0.0, 0.0, 0.0]
                else:
                    s = ml_volatility(bar).sigma_hat
                    row += [s * s, s, s / ml_mean(args.gamma0, cfg)]
        out.row([_fmt(x) for x in row])
    out.close()
    return EXIT_OK


def cmd_curves(args):
    cfg = _quadrature(args)
    grid = _gamma_grid(args)
    out = _Output(args.out)
    out.row(["gamma", "estimator", "value"])
    if args.curve in ("bound_V", "bound_W"):
        fn = lower_bound_variance if args.curve == "bound_V" else lower_bound_volatility
        for g in grid:
            out.row([_fmt(g), args.curve[-1], _fmt(_guard(g, fn, g, cfg))])
        out.close()
        return EXIT_OK
    ests = _need_estimators(args)
    for name, g0 in ests:
        diagram = _diagram(name, g0, args.quantity, cfg)
        for g in grid:
            mean, var = _guard(g, diagram_moments, diagram, g, cfg)
            if args.curve == "mean":
                value = mean
            elif args.curve == "variance":
                value = var
            else:
                value = var / (mean * mean)
            out.row([_fmt(g), _label(name, g0), _fmt(value)])
    out.close()
    return EXIT_OK


class _NumericFailure(Exception):
    pass


def _guard(gamma, fn, *a):
    try:
        value = fn(*a)
    except (ConvergenceError, FloatingPointError, ArithmeticError) as exc:
        raise _NumericFailure(f"quadrature failed at gamma={gamma}: {exc}")
    if not np.all(np.isfinite(value)):
        raise _NumericFailure(f"quadrature failed at gamma={gamma}: non-finite result")
    return value


def cmd_diagram(args):
    cfg = _quadrature(args)
    ests = _need_estimators(args)
    if len(ests) != 1:
        raise InputError("diagram takes exactly one estimator flag")
    name, g0 = ests[0]
    diagram = _diagram(name, g0, args.quantity, cfg)
    if args.out in (None, "-"):
        phi, theta = diagram.grid_angles()
        sys.stdout.write("phi,theta,value\n")
        for p, t, v in zip(phi.ravel(), theta.ravel(), diagram.values.ravel()):
            sys.stdout.write(f"{p:.17g},{t:.17g},{v:.17g}\n")
    else:
        diagram.to_csv(args.out)
    return EXIT_OK


def cmd_pdf(args):
    cfg = _quadrature(args)
    ests = _need_estimators(args)
    if args.u is not None:
        u = np.asarray(args.u)
    else:
        top = 8.0 if args.kind == "variance" else 3.0
        u = np.linspace(0.0, top, 801)
    fn = estimator_pdf_variance if args.kind == "variance" else estimator_pdf_volatility
    out = _Output(args.out)
    out.row(["u", "estimator", "density"])
    for name, g0 in ests:
        diagram = _diagram(name, g0, args.kind, cfg)
        try:
            dens = fn(u, diagram, args.gamma_value, cfg)
        except ConvergenceError as exc:
            raise _NumericFailure(f"pdf failed at gamma={args.gamma_value}: {exc}")
        for x, d in zip(u, dens):
            out.row([_fmt(x), _label(name, g0), _fmt(d)])
    out.close()
    return EXIT_OK


def cmd_quasi(args):
    cfg = _quadrature(args)
    try:
        spec = build_quasi(args.K, args.Gamma, cfg)
    except IllConditionedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    except DomainError as exc:
        raise InputError(str(exc))
    if args.out not in (None, "-"):
        stem, _ = os.path.splitext(args.out)
        write_weights_csv(spec, stem + ".weights.csv")
    else:
        for i, (g, h) in enumerate(zip(spec.nodes, spec.weights), start=-spec.order_K):
            print(f"# weight i={i} gamma_i={g:.17g} h_i={h:.17g}")
    out = _Output(args.out)
    out.row(["gamma", "mean", "variance"])
    for g in _gamma_grid(args):
        mean = _guard(g, quasi_expectation, spec, g, cfg)
        var = _guard(g, quasi_variance, spec, g, cfg)
        out.row([_fmt(g), _fmt(mean), _fmt(var)])
    out.close()
    return EXIT_OK


def _sim_estimators(ests, quantity, cfg):
    from .mle import ml_volatility_arrays

    table = {}
    for name, g0 in ests:
        if name == "ML":

            def ml_vol(h, l, c):
                res = np.zeros(h.shape)
                ok = h > l
                if ok.any():
                    res[ok] = ml_volatility_arrays(h[ok], l[ok], c[ok]).s_hat
                return res

            table["ML-volatility"] = ml_vol
            table["ML-variance"] = lambda h, l, c, f=ml_vol: f(h, l, c) ** 2
        else:
            table[f"{_label(name, g0)}-{quantity}"] = _diagram(name, g0, quantity, cfg)
    return table


def cmd_simulate(args):
    from . import montecarlo as mc

    cfg = _quadrature(args)
    ests = _need_estimators(args, default=[["RS", None]])
    gammas = args.gamma if args.gamma is not None else [0.0]
    try:
        mc.SimConfig(args.N, args.M, 0.0, args.seed, args.innovation, args.nu)
    except DomainError as exc:
        raise InputError(str(exc))
    estimators = _sim_estimators(ests, args.quantity, cfg)
    n_list = args.study if args.study else [args.N]
    out = _Output(args.out)
    out.row(list(mc.STUDY_COLUMNS))
    for n in n_list:
        triples = mc.simulate_triples(n, args.M, gammas, args.seed, args.innovation, args.nu,
                                      workers=args.workers)
        for label, est in estimators.items():
            for j, g in enumerate(gammas):
                t = triples[:, j, :]
                vals = est.estimate(t[:, 0], t[:, 1], t[:, 2]) if hasattr(est, "estimate") else est(
                    t[:, 0], t[:, 1], t[:, 2])
                m = mc.moments_of(vals)
                out.row([n, label, _fmt(g), _fmt(m.mean), _fmt(m.variance), _fmt(m.std_error)])
    out.close()
    return EXIT_OK


def cmd_mle(args):
    from .mle import ml_volatility

    bars = _read_bars(args.input)
    out = _Output(args.out)
    out.row(["mu_hat", "sigma_hat", "d_hat", "loglik", "error"])
    ok = 0
    for bar in bars:
        try:
            r = ml_volatility(bar)
        except DomainError as exc:
            code = "degenerate_range" if bar.high == bar.low else "no_likelihood"
            out.row([_fmt((bar.close - bar.open) / bar.horizon), "", "", "", code])
            continue
        ok += 1
        out.row([_fmt(r.mu_hat), _fmt(r.sigma_hat), _fmt(r.d_hat), _fmt(r.loglik), ""])
    out.close()
    if bars and not ok:
        print("error: no row had a non-degenerate range", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def cmd_replay(args):
    try:
        with open(args.manifest, encoding="utf-8") as fh:
            data = json.load(fh)
        argv = list(data["argv"])
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"cannot read manifest: {exc}")
    return main(argv)


# ------------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="ohlcvol", description="OHLC volatility estimators")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="apply estimators to OHLC bars")
    e.add_argument("input", help="CSV with open,high,low,close[,horizon]; '-' for stdin")
    _add_estimator_flags(e)
    e.add_argument("--gamma0", type=float, default=0.0, help="drift at which the ML volatility is normalized to unit mean")
    _add_quadrature_flags(e)
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("curves", help="moments and bounds as functions of the drift")
    c.add_argument("curve", choices=CURVES)
    _add_estimator_flags(c)
    c.add_argument("--quantity", choices=("variance", "volatility"), default="variance")
    c.add_argument("--gamma", type=_float_list, default=None, help="list a,b,c or range start:stop:step")
    _add_quadrature_flags(c)
    c.add_argument("--out")
    c.set_defaults(func=cmd_curves)

    d = sub.add_parser("diagram", help="tabulate an estimator diagram")
    _add_estimator_flags(d)
    d.add_argument("--quantity", choices=("variance", "volatility"), default="variance")
    _add_quadrature_flags(d)
    d.add_argument("--out")
    d.set_defaults(func=cmd_diagram)

    f = sub.add_parser("pdf", help="density of canonical estimators")
    f.add_argument("kind", choices=("variance", "volatility"))
    _add_estimator_flags(f)
    f.add_argument("--gamma", dest="gamma_value", type=float, default=0.0)
    f.add_argument("--u", type=_float_list, default=None, help="evaluation points")
    _add_quadrature_flags(f)
    f.add_argument("--out")
    f.set_defaults(func=cmd_pdf)

    q = sub.add_parser("quasi", help="quasi-unbiased estimator weights and curves")
    q.add_argument("--K", type=int, default=1)
    q.add_argument("--Gamma", type=float, default=1.0)
    q.add_argument("--gamma", type=_float_list, default=None)
    _add_quadrature_flags(q)
    q.add_argument("--out")
    q.set_defaults(func=cmd_quasi)

    s = sub.add_parser("simulate", help="Monte Carlo estimator moments")
    s.add_argument("--N", type=_count, default=100_000, help="steps per path")
    s.add_argument("--M", type=_count, default=100_000, help="number of paths")
    s.add_argument("--gamma", type=_float_list, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--innovation", choices=("gaussian", "student_t"), default="gaussian")
    s.add_argument("--nu", type=float, default=None)
    s.add_argument("--study", type=lambda t: [_count(v) for v in t.split(",")], default=None,
                   help="comma-separated N values for a convergence study")
    s.add_argument("--quantity", choices=("variance", "volatility"), default="variance")
    s.add_argument("--workers", type=int, default=1)
    _add_estimator_flags(s)
    _add_quadrature_flags(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("mle", help="per-bar maximum-likelihood estimates")
    m.add_argument("input")
    m.add_argument("--out")
    m.set_defaults(func=cmd_mle)

    r = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay)
    return p


def _write_manifest(args, argv, elapsed):
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = RunManifest(args.command, params, getattr(args, "seed", None), __version__, elapsed, argv)
    with open(args.out + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    start = time.perf_counter()
    try:
        code = args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except IllConditionedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    if code == EXIT_OK and args.command != "replay" and args.out not in (None, "-"):
        _write_manifest(args, argv, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
