"""Command-line front end.

Every command prints one JSON document on stdout (``--pretty`` switches to
a readable layout).  Exit status is 0 on success, 1 when ``verify`` finds a
deviation above tolerance, and 2 for invalid arguments.  Relative
``--output`` paths are resolved against ``$FEKERNEL_OUTPUT_DIR`` when set.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .assembly import KERNELS, bench
from .codegen import BACKEND_ALIASES, BACKENDS, QUADRATIC_IR, builtin_quadratic_ledger, emit_source
from .optimizer import map_count, optimize_tensor
from .tabulation import ParameterError
from .trilinear import ADVECTION_IR, ADVECTION_IR_FOLDED, advection_ledger, optimize_advection
from .verification import DEFAULT_SEED, check_scope, kernel_ir, reference_tensor, verify

OUTPUT_ENV = "FEKERNEL_OUTPUT_DIR"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _resolve(path):
    p = Path(path)
    base = os.environ.get(OUTPUT_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _write(args, text):
    """Send ``text`` to ``--output`` if given, else return it for stdout."""
    if not args.output:
        return None
    p = _resolve(args.output)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)
    return str(p)


def _dump(doc, pretty):
    return json.dumps(doc, indent=2 if pretty else None)


def cmd_tabulate(args):
    check_scope(args.form, args.degree, args.dim)
    T = reference_tensor(args.form, args.degree, args.dim)
    text = T.to_json()
    where = _write(args, text)
    if where is None:
        return EXIT_OK, json.loads(text)
    return EXIT_OK, {"command": "tabulate", "form": args.form, "degree": args.degree,
                     "dim": args.dim, "shape": list(T.entries.shape), "output": where}


def cmd_optimize(args):
    check_scope(args.form, args.degree, args.dim)
    T = reference_tensor(args.form, args.degree, args.dim)
    if args.form == "laplacian":
        graph = optimize_tensor(T)
    else:
        graph = optimize_advection(T)
    report = map_count(graph, args.degree, args.dim, args.form)
    if args.form == "advection" and (args.degree, args.dim) == (1, 3):
        report["hand_schedule"] = advection_ledger()
    if args.form == "laplacian" and (args.degree, args.dim) == (2, 2):
        report["hand_schedule"] = builtin_quadratic_ledger()
    where = _write(args, json.dumps(report, indent=2))
    if where:
        report = dict(report, output=where)
    return EXIT_OK, report


def _select_ir(args):
    if args.hand:
        if args.form == "advection" and (args.degree, args.dim) == (1, 3):
            return ADVECTION_IR_FOLDED if args.fold_scale else ADVECTION_IR
        if args.form == "laplacian" and (args.degree, args.dim) == (2, 2) and not args.fold_scale:
            return QUADRATIC_IR
        raise UsageError("--hand exists for advection degree 1 dim 3 and laplacian degree 2 dim 2")
    if args.fold_scale:
        raise UsageError("--fold-scale needs --hand with advection degree 1 dim 3")
    return kernel_ir(args.form, args.degree, args.dim)


def cmd_codegen(args):
    check_scope(args.form, args.degree, args.dim)
    ir = _select_ir(args)
    src = emit_source(ir, args.backend)
    where = _write(args, src.text)
    doc = {"command": "codegen", "backend": src.backend, "symbol": src.symbol,
           "metadata": src.metadata}
    if where:
        doc["output"] = where
    else:
        doc["source"] = src.text
    return EXIT_OK, doc


def cmd_verify(args):
    report = verify(args.form, args.degree, args.dim, seed=args.seed, samples=args.samples)
    _write(args, json.dumps(report, indent=2))
    return (EXIT_OK if report["passed"] else EXIT_FAIL), report


def cmd_bench(args):
    if args.form != "laplacian":
        raise UsageError("bench assembles the Laplacian only")
    check_scope(args.form, args.degree, args.dim)
    if args.threads < 1:
        raise UsageError("--threads must be positive")
    rows = bench(args.sizes, args.degree, args.kernels, dim=args.dim, threads=args.threads)
    text = "".join(json.dumps(r) + "\n" for r in rows)
    _write(args, text)
    return EXIT_OK, rows


COMMANDS = {
    "tabulate": cmd_tabulate,
    "optimize": cmd_optimize,
    "codegen": cmd_codegen,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--form", choices=("laplacian", "advection"), default="laplacian")
    common.add_argument("--degree", type=int, default=1)
    common.add_argument("--dim", type=int, choices=(2, 3), default=2)
    common.add_argument("--output", "-o", help="write the main artifact here")
    common.add_argument("--pretty", action="store_true", help="indented, human-oriented output")

    parser = argparse.ArgumentParser(prog="fekernel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("tabulate", parents=[common], help="exact reference tensor as JSON")
    opt = sub.add_parser("optimize", parents=[common], help="dependency report with MAP counts")
    # the report is always produced; the flag is accepted for compatibility
    opt.add_argument("--report", action="store_true")
    p = sub.add_parser("codegen", parents=[common], help="emit kernel source or IR")
    p.add_argument("--backend", default="python",
                   choices=sorted(set(BACKENDS) | set(BACKEND_ALIASES)))
    p.add_argument("--hand", action="store_true", help="use the hand-written schedule")
    p.add_argument("--fold-scale", action="store_true",
                   help="with --hand advection: expect gamma pre-multiplied by 1/120")
    p = sub.add_parser("verify", parents=[common], help="random-element cross-check")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--samples", type=int, default=1000)
    p = sub.add_parser("bench", parents=[common], help="assembly timings as JSON lines")
    p.add_argument("--sizes", type=int, nargs="+", default=[16, 32])
    p.add_argument("--kernels", nargs="+", choices=KERNELS, default=["quadrature", "native"])
    p.add_argument("--threads", type=int, default=1)
    return parser


def _pretty(command, doc):
    if command == "bench":
        lines = [f"{'kernel':<11}{'n':>5}{'cells':>9}{'local s/M':>12}{'insert s/M':>12}"]
        for r in doc:
            lines.append(f"{r['kernel']:<11}{r['n']:>5}{r['cells']:>9}"
                         f"{r['local_time']:>12.3f}{r['insert_time']:>12.3f}")
        return "\n".join(lines)
    if command == "codegen" and "source" in doc:
        return doc["source"]
    return json.dumps(doc, indent=2)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        status, doc = COMMANDS[args.command](args)
    except (UsageError, ParameterError) as exc:
        print(json.dumps({"command": args.command, "status": EXIT_USAGE, "error": str(exc)}))
        print(f"fekernel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.pretty:
        print(_pretty(args.command, doc))
    elif args.command == "bench":
        sys.stdout.write("".join(json.dumps(r) + "\n" for r in doc))
    else:
        print(_dump(doc, False))
    return status


if __name__ == "__main__":
    sys.exit(main())
