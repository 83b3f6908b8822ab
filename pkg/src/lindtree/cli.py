"""Command-line driver: ``lindstedt <command> --model M.json ...``.

Exit status: 0 all requested checks pass, 2 bad configuration or arguments,
3 model load failure, 4 a check failed, 5 numerical failure (resonance, pole,
zero division).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .frequency import (ScalePartition, check_divisor_separation, check_scale_separation,
                        partition_sweep)
from .lindstedt import ResonanceError, check_invariants, solve_up_to
from .model import ModelError, load_model

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_ASSERT, EXIT_NUMERIC = 0, 2, 3, 4, 5

COMMANDS = ("expand", "eta", "verify-trees", "verify-symmetry", "verify-cancellation",
            "verify-counting", "divisors", "residual")


class ConfigError(ValueError):
    pass


def default_precision():
    raw = os.environ.get("LINDSTEDT_PRECISION_BITS")
    if raw is None:
        return 256
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"LINDSTEDT_PRECISION_BITS={raw!r} is not an integer") from exc


def table_to_dict(table):
    """Canonical JSON form of a series table keyed by (k, j, nu)."""
    out = {"model": table.model.name, "variant": table.variant, "K": table.K, "d": table.d}
    stores = {"x": table.x} if table.variant == "real-x" else {"z": table.z, "w": table.w}
    for name, store in stores.items():
        rows = []
        for k in range(0, table.K + 1):
            for (j, nu), p in sorted(store.get(k, {}).items()):
                if not p.is_zero():
                    rows.append({"k": k, "j": j, "nu": list(nu), "poly": str(p)})
        out[name] = rows
    out["eta"] = _eta_rows(table)
    return out


def _eta_rows(table):
    rows = []
    for k in range(1, table.K + 1):
        for j in range(1, table.d + 1):
            for s in (1, -1):
                if s < 0 and table.variant == "real-x":
                    continue
                rows.append({"k": k, "j": j, "sigma": "+" if s > 0 else "-",
                             "poly": str(table.eta_c(k, j, s))})
    return rows


def _dump(obj, out):
    text = json.dumps(obj, sort_keys=True, indent=2, default=str) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _split(text):
    return [t.strip() for t in text.split(",") if t.strip()]


# -- commands --------------------------------------------------------------------------


def cmd_expand(args, model):
    table = solve_up_to(model, args.order)
    _dump(table_to_dict(table), args.out or "table.json")
    fails = check_invariants(table)
    for f in fails:
        print(f"invariant: {f}", file=sys.stderr)
    return not fails


def cmd_eta(args, model):
    table = solve_up_to(model, args.order)
    fails = check_invariants(table)
    _dump({"model": model.name, "K": args.order, "eta": _eta_rows(table),
           "failures": fails, "ok": not fails}, args.out)
    return not fails


def cmd_verify_trees(args, model):
    from .trees import verify_trees

    rep = verify_trees(model, args.order)
    rep["model"] = model.name
    rep["K"] = args.order
    rep["result"] = "match: all (k,j,nu)" if not rep["mismatches"] else "mismatch"
    _dump(rep, args.out)
    print("match: all (k,j,ν)" if not rep["mismatches"]
          else f"mismatch: {len(rep['mismatches'])} entries", file=sys.stderr)
    return not rep["mismatches"]


def cmd_verify_symmetry(args, model):
    from .selfenergy import verify_symmetry_lemmas

    n = args.scale if args.scale is not None else 3
    rep = verify_symmetry_lemmas(model, k_max=args.order or 2, n=n,
                                 force_localize=args.force_localize)
    _dump(rep, args.out)
    return rep["ok"]


def cmd_verify_cancellation(args, model):
    from .selfenergy import verify_cancellation

    top = args.scale if args.scale is not None else 6
    rep = verify_cancellation(model, k_max=args.order or 2, window=range(top - 7, top + 1),
                              force_localize=args.force_localize, prec=args.precision)
    _dump(rep, args.out)
    return rep["ok"]


def cmd_verify_counting(args, model):
    from .selfenergy import verify_counting

    rep = verify_counting(model, k_max=args.order or 3)
    _dump(rep, args.out)
    return rep["ok"]


def cmd_divisors(args, model):
    spec = model.spec
    radius = args.radius if args.radius is not None else 6
    n_max = args.scale if args.scale is not None else 12
    sep = check_divisor_separation(spec, radius)
    scl = check_scale_separation(spec, radius, n_max)
    part = ScalePartition(spec.gamma, prec=args.precision)
    sweep = partition_sweep(part, seed=args.seed)
    sweep_ok = (sweep["max_deviation"] <= 2.0 ** -64 and sweep["max_multiplicity"] <= 2
                and not sweep["window_violations"])
    ok = not sep["violations"] and not sep["criterion_mismatches"] and not scl["violations"]
    _dump({"model": model.name, "radius": radius, "n_max": n_max,
           "divisor_separation": sep, "scale_separation": scl, "partition": sweep,
           "ok": bool(ok and sweep_ok)}, args.out)
    return ok and sweep_ok


def _residual_chunk(path, order, c, eps, prec):
    from .validator import residual_sweep

    model = load_model(path)
    return residual_sweep(model, solve_up_to(model, order), c, eps, prec=prec)


def cmd_residual(args, model):
    from .validator import DEFAULT_EPS, fit_slope, residual_sweep, _eps_value

    d = model.spec.d
    c = _split(args.c) if args.c else ["3/10"] * d
    if len(c) != d:
        raise ConfigError(f"--c needs {d} amplitudes")
    eps = _split(args.eps) if args.eps else list(DEFAULT_EPS)
    order = args.order if args.order is not None else 2
    jobs = max(1, min(args.jobs, len(eps)))
    if jobs == 1:
        parts = [residual_sweep(model, solve_up_to(model, order), c, eps, prec=args.precision)]
    else:
        chunks = [eps[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_residual_chunk, [args.model] * jobs, [order] * jobs,
                                  [c] * jobs, chunks, [args.precision] * jobs))
    rows = {}
    for rep in parts:
        for row in rep.csv_rows()[1:]:
            rows[row[0]] = row
    head = parts[0].csv_rows()[0]
    ordered = [rows[e] for e in eps]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    w.writerows(ordered)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    slope = fit_slope([_eps_value(e, args.precision) for e in eps], [float(r[1]) for r in ordered])
    if slope is not None:
        print(f"slope {slope:.4f} (expected {order + 1})", file=sys.stderr)
    return True


HANDLERS = {
    "expand": cmd_expand,
    "eta": cmd_eta,
    "verify-trees": cmd_verify_trees,
    "verify-symmetry": cmd_verify_symmetry,
    "verify-cancellation": cmd_verify_cancellation,
    "verify-counting": cmd_verify_counting,
    "divisors": cmd_divisors,
    "residual": cmd_residual,
}


def build_parser():
    p = argparse.ArgumentParser(prog="lindstedt", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--order", type=int, default=None, help="perturbation order K")
    p.add_argument("--scale", type=int, default=None,
                   help="scale n (symmetry), top of the 8-scale window (cancellation), "
                        "largest scale scanned (divisors)")
    p.add_argument("--force-localize", action="store_true",
                   help="apply localisation regardless of the size cutoff")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--radius", type=int, default=None, help="|nu| scan radius")
    p.add_argument("--c", default=None, help="comma-separated amplitudes c_1,...,c_d")
    p.add_argument("--eps", default=None, help="comma-separated epsilon grid (10^-2.5 allowed)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized sweeps")
    p.add_argument("--precision", type=int, default=None, help="big-float precision in bits")
    return p


def _configure(args):
    if args.precision is None:
        args.precision = default_precision()
    if args.precision < 64:
        raise ConfigError("precision must be at least 64 bits")
    if args.order is not None and args.order < 0:
        raise ConfigError("order must be >= 0")
    if args.command in ("expand", "eta", "verify-trees") and args.order is None:
        args.order = 2
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")


def main(argv=None):
    from .selfenergy import PoleError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        _configure(args)
        model = load_model(args.model)
        ok = HANDLERS[args.command](args, model)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ResonanceError, PoleError, ZeroDivisionError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except AssertionError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if ok else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
