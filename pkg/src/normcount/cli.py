"""Command-line entry point.

Subcommands: field, density, count, approx, descent, diag.  JSON reports
(with embedded manifests) go to --out, CSV tables to --csv.  Exit codes:
0 success, 2 validation error, 3 budget error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import BudgetError, ValidationError


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.cmd is None:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except BudgetError as err:
        print(f"budget error: {err}", file=sys.stderr)
        return 3


def build_parser():
    p = argparse.ArgumentParser(
        prog="normcount",
        description="trace-norm equation counting at desk scale")
    p.set_defaults(cmd=None)
    sub = p.add_subparsers(dest="cmd")

    def common(sp, spec=True):
        if spec:
            sp.add_argument("--spec", "--field", dest="spec", required=True,
                            help="field spec JSON path or builtin:<name>")
        sp.add_argument("--out", default="-", help="report path (- = stdout)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int,
                        default=int(os.environ.get("NORMCOUNT_THREADS", "1")))

    f = sub.add_parser("field", help="validate a field spec")
    common(f)
    f.add_argument("--check", action="store_true")
    f.set_defaults(func=cmd_field)

    d = sub.add_parser("density", help="local densities and the "
                                       "singular series")
    common(d)
    d.add_argument("--Q", type=int, default=6)
    d.add_argument("--P0", type=int, default=13)
    d.add_argument("--depth", type=int, default=2)
    d.add_argument("--kmax", type=int, default=12)
    d.add_argument("--M", type=int, default=1)
    d.set_defaults(func=cmd_density)

    c = sub.add_parser("count", help="end-to-end counting experiment")
    common(c)
    c.add_argument("--V", type=int, required=True)
    c.add_argument("--H0", type=int, required=True)
    c.add_argument("--G", type=float, required=True)
    c.add_argument("--Q", type=int, default=None)
    c.add_argument("--M", type=int, default=1)
    c.add_argument("--budget", type=int, default=None)
    c.add_argument("--kmax", type=int, default=12)
    c.add_argument("--push-samples", type=int, default=2 * 10**7)
    c.add_argument("--dispersion", action="store_true")
    c.add_argument("--csv", default=None, help="diagnostics CSV path")
    c.set_defaults(func=cmd_count)

    a = sub.add_parser("approx", help="approximation-principle tables")
    common(a)
    a.add_argument("--mode", choices=["synthetic-z", "synthetic-ol"],
                   default="synthetic-z")
    a.add_argument("--instances", type=int, default=10)
    a.add_argument("--csv", default="-")
    a.set_defaults(func=cmd_approx)

    de = sub.add_parser("descent", help="norm representative and descent "
                                        "certificate")
    common(de)
    de.add_argument("--a", type=int, required=True)
    de.add_argument("--c", type=str, required=True,
                    help="rational, e.g. 5 or 3/7")
    de.add_argument("--certificate", action="store_true",
                    help="run the full place-by-place certificate")
    de.add_argument("--check-bound", type=int, default=50)
    de.set_defaults(func=cmd_descent)

    g = sub.add_parser("diag", help="weight and dispersion diagnostics")
    common(g)
    g.add_argument("what", choices=["omega", "dispersion"])
    g.add_argument("--V", type=int, default=21)
    g.add_argument("--H0", type=int, default=3)
    g.add_argument("--G", type=float, default=4.0)
    g.add_argument("--Q0", type=int, default=4)
    g.add_argument("--M", type=int, default=1)
    g.set_defaults(func=cmd_diag)
    return p


def _load(args):
    from .fields import builtin_spec, load_field
    s = args.spec
    if s.startswith("builtin:"):
        spec = builtin_spec(s.split(":", 1)[1])
    else:
        spec = json.loads(Path(s).read_text())
    return spec, load_field(spec)


def cmd_field(args):
    from .report import make_manifest, write_report
    t0 = time.time()
    spec, ctx = _load(args)
    payload = {
        "valid": True,
        "n": ctx.n,
        "a": ctx.params.a,
        "tau_kind": ctx.params.tau_kind,
        "kappa": ctx.params.kappa,
        "monomials_NKQ": len(ctx.norm_form.coeffs),
        "monomials_N1": len(ctx.n1_form.coeffs),
        "monomials_N2": len(ctx.n2_form.coeffs),
        "nonmaximal_warning": ctx.nonmaximal_warning,
    }
    payload["manifest"] = make_manifest("field", spec, {}, args.seed, t0)
    write_report(args.out, payload)
    if args.check:
        print(f"field ok: n={ctx.n}, a={ctx.params.a}, "
              f"kappa={ctx.params.kappa}", file=sys.stderr)
    return 0


def _mdata_for(args, ctx):
    from .densities import MData, augment_mdata, _solve_classes_mod
    n = ctx.n
    md = MData(max(1, args.M), (0,) * n, tuple([1 % max(1, args.M)]
               + [0] * (n - 1)), (0,) * n)
    if args.M > 1:
        sol = _solve_classes_mod(ctx, MData.trivial(n), args.M)
        if sol is not None:
            md = sol
    return augment_mdata(ctx, md)


def cmd_density(args):
    from .densities import singular_series
    from .report import make_manifest, write_report
    t0 = time.time()
    spec, ctx = _load(args)
    md = _mdata_for(args, ctx)
    rep = singular_series(ctx, md, args.Q, P0=args.P0, depth=args.depth,
                          k_cap=args.kmax, threads=args.threads)
    payload = rep.to_jsonable()
    payload["mdata"] = {"M": md.M, "u_class": md.u_class,
                        "v_class": md.v_class, "w_class": md.w_class}
    payload["manifest"] = make_manifest(
        "density", spec,
        {"Q": args.Q, "P0": args.P0, "depth": args.depth,
         "kmax": args.kmax, "M": args.M}, args.seed, t0)
    write_report(args.out, payload)
    return 0


def cmd_count(args):
    from .counting import make_experiment, run_experiment
    from .densities import MData
    from .report import make_manifest, write_csv, write_report
    t0 = time.time()
    spec, ctx = _load(args)
    md = _mdata_for(args, ctx) if args.M > 1 else None
    knobs = {"k_cap": args.kmax, "push_samples": args.push_samples}
    if args.budget:
        knobs["budget"] = args.budget
    config = make_experiment(ctx, args.V, args.H0, args.G, mdata=md,
                             Q=args.Q, seed=args.seed, **knobs)
    report, extras = run_experiment(config, with_dispersion=args.dispersion)
    payload = report.to_jsonable()
    payload["manifest"] = make_manifest(
        "count", spec,
        {"V": args.V, "H0": args.H0, "G": args.G, "Q": config.Q,
         "M": config.mdata.M, "kmax": args.kmax,
         "push_samples": args.push_samples}, args.seed, t0)
    write_report(args.out, payload)
    if args.csv:
        rows = [(k, v) for k, v in sorted(payload["diagnostics"].items())
                if not isinstance(v, dict)]
        write_csv(args.csv, ["key", "value"], rows)
    return 0


def cmd_approx(args):
    from . import approx as apx
    from .report import write_csv
    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(args.instances):
        if args.mode == "synthetic-z":
            sch = apx.synthetic_scheme_Z(int(rng.integers(3, 9)),
                                         int(rng.integers(4, 9)), rng)
            res = apx.defect_Z(sch)
        else:
            from .quad_ring import FieldParams
            params = FieldParams.for_a(-1)
            sch = apx.synthetic_scheme_OL(params, int(rng.integers(2, 5)),
                                          int(rng.integers(2, 4)), rng)
            res = apx.defect_OL(sch)
        for r in res["rows"]:
            rows.append((i, r["h"], str(r["class"] if "class" in r else ""),
                         r.get("S", ""), r.get("Shat", ""), r["defect"],
                         res["cap"]))
        if not res["within_cap"]:
            print(f"instance {i}: defect exceeds cap", file=sys.stderr)
            return 1
    write_csv(args.csv, ["instance", "h", "class", "S", "Shat", "defect",
                         "cap"], rows)
    return 0


def cmd_descent(args):
    from . import descent
    from .fields import load_field
    from .report import make_manifest, write_report
    t0 = time.time()
    spec, ctx = _load(args)
    c = Fraction(args.c)
    payload = {"a": args.a, "c": str(c)}
    try:
        delta0 = descent.solve_hasse_norm(c, args.a, params=ctx.params)
        payload["delta0"] = [str(Fraction(delta0.c1)),
                             str(Fraction(delta0.c2))]
    except ValidationError as err:
        payload["insoluble"] = str(err)
        payload["obstruction"] = str(getattr(err, "obstruction", None))
        write_report(args.out, payload)
        return 0
    if args.certificate:
        places = standard_places(ctx)
        cert = descent.reduce_to_relative(ctx, c, places,
                                          check_bound=args.check_bound,
                                          delta0=delta0)
        payload["delta"] = [str(Fraction(cert.delta.c1)),
                            str(Fraction(cert.delta.c2))]
        payload["gamma"] = [str(v) for v in cert.gamma]
        payload["S"] = cert.S
        payload["witnesses"] = cert.witnesses
        payload["all_verified"] = cert.all_verified()
    payload["manifest"] = make_manifest(
        "descent", spec, {"a": args.a, "c": str(c)}, args.seed, t0)
    write_report(args.out, payload)
    return 0


def standard_places(ctx):
    """Trivial local data (t, x) = (0, e1) at the bad places of the
    shipped fixtures; valid whenever c = 1."""
    from . import descent
    x0 = tuple([Fraction(1)] + [Fraction(0)] * (ctx.n - 1))
    places = [descent.PlaceData("inf", Fraction(0), x0)]
    for p in sorted(descent.ramified_superset(ctx)):
        places.append(descent.PlaceData(p, Fraction(0), x0))
    return places


def cmd_diag(args):
    from .counting import make_experiment
    from .report import make_manifest, write_report
    t0 = time.time()
    spec, ctx = _load(args)
    config = make_experiment(ctx, args.V, args.H0, args.G, seed=args.seed)
    wf = config.wf
    if args.what == "omega":
        from .weights import omega
        rng = np.random.default_rng(args.seed)
        xc1, xc2 = wf.image_pair(wf.center_u()[None, :])
        lip = []
        for _ in range(40):
            x = (float(xc1[0]) + rng.uniform(-1, 1) * wf.U**2 / 8,
                 float(xc2[0]) + rng.uniform(-1, 1) * wf.U**2 / 8)
            h = rng.uniform(1, 50)
            d = abs(omega(wf, (x[0] + h, x[1])) - omega(wf, x))
            lip.append(d / h * wf.U ** (ctx.n / 2))
        payload = {
            "pivot": wf.pivot, "lam": wf.lam, "perturbed": wf.perturbed,
            "j_min": wf.j_min, "j_scale": wf.j_scale,
            "support_radius": wf.support_radius,
            "omega_center": wf.omega_lb,
            "omega_sup_seen": wf.omega_sup,
            "lipschitz_scaled_max": max(lip),
        }
    else:
        from .approx import alpha_family, dispersion_sum
        fam = alpha_family(ctx, wf, config.mdata, config.Q,
                           push_samples=config.push_samples, seed=args.seed)
        payload = dispersion_sum(fam, args.Q0)
    payload["manifest"] = make_manifest(
        f"diag {args.what}", spec,
        {"V": args.V, "H0": args.H0, "G": args.G, "Q0": args.Q0},
        args.seed, t0)
    write_report(args.out, payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
