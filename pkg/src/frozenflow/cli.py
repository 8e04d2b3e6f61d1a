"""``frozenflow`` command line.

Exit status: 0 on success, 1 when the input is invalid (unknown names,
malformed files, bad flags), 2 when a requested check fails.
"""

from __future__ import annotations

import argparse
import difflib
import sys
from fractions import Fraction

from . import experiments as ex
from .forests import ForestError, enumerate_forests, enumerate_trees
from .order_theory import NAMED_TABLEAUX, TableauError, load_tableau, order_conditions, report_csv
from .rng import NOISE_KINDS, moment_check


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


_MANIFOLD_EXPERIMENT = {"so3": "so3_brownian", "sphere2": "sphere_langevin", "cauchy": "cauchy", "rn": "ou"}


def _h_list(text):
    try:
        return tuple(ex.eval_number(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad step list {text!r}")


def _number(text):
    try:
        return ex.eval_number(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number {text!r}")


def _run_flags(p):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--experiment", choices=ex.EXPERIMENTS)
    p.add_argument("--seed", type=int)
    p.add_argument("--traj", dest="M", type=int, metavar="M")
    p.add_argument("--h", type=_number)
    p.add_argument("--h-list", type=_h_list)
    p.add_argument("--T", type=_number)
    p.add_argument("--burn-in", type=_number, help="start of the time average")
    p.add_argument("--scheme")
    p.add_argument("--manifold")
    p.add_argument("--noise", choices=sorted(NOISE_KINDS))
    p.add_argument("--reference")
    p.add_argument("--h-ref", type=_number)
    p.add_argument("--test-function")
    p.add_argument("--beta", type=float)
    p.add_argument("--strength", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--block-size", type=int)
    p.add_argument("--out")
    p.add_argument("--assert", dest="check", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="frozenflow", description="Exotic forests, order conditions and frozen-flow experiments.")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in ("forests", "trees"):
        p = sub.add_parser(name, help=f"list exotic {name} grouped by order")
        p.add_argument("--max-order", type=int, default=3)
        p.add_argument("--out")

    p = sub.add_parser("check-order", help="order-condition residuals of a tableau")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--scheme")
    g.add_argument("--tableau", help="path to a tableau file")
    p.add_argument("-p", "--order", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--assert", dest="check", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("convergence", help="weak error against step size")
    _run_flags(p)
    p = sub.add_parser("ergodic", help="long-time averages (sphere) or decay series (cauchy)")
    _run_flags(p)

    p = sub.add_parser("moments", help="empirical moments of a noise source")
    p.add_argument("--noise", choices=sorted(NOISE_KINDS), default="gaussian")
    p.add_argument("-n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--assert", dest="check", action="store_true")
    p.add_argument("--out")
    return top


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _group_label(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def cmd_listing(args, enum) -> int:
    if args.max_order < 0:
        raise ValidationError("--max-order must be non-negative")
    lines = []
    for twice in range(1, 2 * args.max_order + 1):
        q = Fraction(twice, 2)
        items = enum(float(q) if q.denominator == 2 else int(q))
        lines.append(f"# order {_group_label(q)}: {len(items)}")
        lines.extend(str(f) for f in items)
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_check_order(args) -> int:
    if args.scheme is not None and args.scheme not in NAMED_TABLEAUX:
        known = sorted(NAMED_TABLEAUX)
        hint = difflib.get_close_matches(args.scheme, known, n=2)
        raise ValidationError(f"unknown scheme {args.scheme!r}; known: {', '.join(known)}"
                              + (f" (did you mean {', '.join(hint)}?)" if hint else ""))
    try:
        t = load_tableau(args.scheme or args.tableau)
    except OSError as e:
        raise ValidationError(f"cannot read tableau file {args.tableau!r}: {e.strerror}")
    rows = order_conditions(args.order, t)
    _emit(report_csv(rows), args.out)
    if args.check:
        bad = [r for r in rows if not r.residual_float() < args.tol]
        if bad:
            r = bad[0]
            print(f"FAIL {t.name}: first failing forest ({r.forest}) at order {r.order}, "
                  f"residual {r.residual_float():.3g} > tol {args.tol:g}", file=sys.stderr)
            return 2
        print(f"OK {t.name}: {len(rows)} conditions up to order {args.order} within {args.tol:g}",
              file=sys.stderr)
    return 0


def config_from_args(args) -> ex.ExperimentConfig:
    flags = {k: getattr(args, k) for k in
             ("seed", "M", "h_list", "T", "scheme", "manifold", "noise", "reference", "h_ref",
              "test_function", "beta", "strength", "workers", "block_size", "burn_in")}
    if args.h is not None:
        if args.h_list is not None:
            raise ValidationError("give --h or --h-list, not both")
        flags["h_list"] = (args.h,)
    if args.manifold is not None and args.manifold not in ex.geometry.MANIFOLDS:
        hint = difflib.get_close_matches(args.manifold, list(ex.geometry.MANIFOLDS), n=2)
        raise ValidationError(f"unknown manifold {args.manifold!r}; known: {', '.join(ex.geometry.MANIFOLDS)}"
                              + (f" (did you mean {', '.join(hint)}?)" if hint else ""))
    experiment = args.experiment
    if experiment is None and args.manifold is not None:
        experiment = _MANIFOLD_EXPERIMENT[args.manifold]
    flags["experiment"] = experiment
    return ex.load_config(args.config, **flags)


def cmd_convergence(args) -> int:
    cfg = config_from_args(args)
    table = ex.run_weak_error(cfg)
    _emit(table.to_csv(), args.out)
    slope = "n/a" if table.slope is None else f"{table.slope:.4f}"
    print(f"# slope {slope} fit over h in {table.fit_range}", file=sys.stderr)
    return 0


def cmd_ergodic(args) -> int:
    cfg = config_from_args(args)
    if cfg.manifold == "sphere2":
        table = ex.run_sphere_ergodic(cfg)
        _emit(table.to_csv(), args.out)
        print(f"# resample rate {table.stats.get('resamples', 0) / max(1, table.stats.get('steps', 1)):.3g}",
              file=sys.stderr)
        return 0
    if cfg.manifold == "cauchy":
        res = ex.run_cauchy_ergodic(cfg)
        fn = cfg.test_function if cfg.test_function in res.series else "cauchy_phi1"
        _emit(res.series[fn].to_csv(), args.out)
        for name, s in res.series.items():
            rate = "n/a" if s.rate is None else f"{s.rate:.4f}"
            print(f"# {name} decay rate {rate} over t in {s.window}", file=sys.stderr)
        print(f"# resample rate {res.resample_rate:.3g}" + (" FLAGGED" if res.flagged else ""),
              file=sys.stderr)
        return 2 if (args.check and res.flagged) else 0
    raise ValidationError(f"ergodic runs need manifold sphere2 or cauchy, not {cfg.manifold}")


def cmd_moments(args) -> int:
    if args.n < 2:
        raise ValidationError("-n must be at least 2")
    rep = moment_check(args.noise, args.n, args.seed)
    _emit("kind,p,moment,target,stderr\n" + "".join(line + "\n" for line in rep.lines()), args.out)
    return 2 if (args.check and not rep.within()) else 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "forests":
            return cmd_listing(args, enumerate_forests)
        if args.command == "trees":
            return cmd_listing(args, enumerate_trees)
        if args.command == "check-order":
            return cmd_check_order(args)
        if args.command == "convergence":
            return cmd_convergence(args)
        if args.command == "ergodic":
            return cmd_ergodic(args)
        return cmd_moments(args)
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except (ValidationError, TableauError, ForestError, KeyError, ValueError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
