"""Command-line front end: ``coneglm {fit,seq,agg,fair-sweep}``.

Exit codes: 0 optimal, 1 input error, 2 infeasible, 3 solver limit or
numerical failure.  Errors are reported on stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .backends import CapabilityError
from .conic import SolveStatus
from .constraints import specs_from_json
from .families import DEFAULT_LINK, Family, FamilyLink, GlmModel
from .fairness import fair_sweep
from .fit import hglm_fit, hglm_seq
from .formula import FormulaError, agg_binomial, build_model_matrix, parse_formula, read_csv

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3


class InputError(Exception):
    pass


def _exit_for(status: str) -> int:
    if status == SolveStatus.OPTIMAL.value:
        return EXIT_OK
    if status == SolveStatus.INFEASIBLE.value:
        return EXIT_INFEASIBLE
    return EXIT_SOLVER


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def _common(p: argparse.ArgumentParser, model: bool = True):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--formula", required=True)
    p.add_argument("--out", help="write the report here instead of stdout")
    if not model:
        return
    p.add_argument("--family", default="gaussian", choices=[f.value for f in Family])
    p.add_argument("--link", default=None)
    p.add_argument("--constraints", help="JSON file with a list of constraint objects")
    p.add_argument("--big-m", type=float, default=100.0)
    p.add_argument("--scaler", default="auto")
    p.add_argument("--backend", default="auto")
    p.add_argument("--format", choices=("text", "json"), default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coneglm", description="GLMs under holistic constraints")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_fit = sub.add_parser("fit", help="fit one model")
    _common(p_fit)
    p_fit.add_argument("--dry-run", action="store_true", help="write the conic program as JSON, do not solve")
    p_seq = sub.add_parser("seq", help="fit the k_max sequence")
    _common(p_seq)
    p_seq.add_argument("--k", help="comma-separated k values (default 1..p)")
    p_agg = sub.add_parser("agg", help="aggregate a binary-response table to counts")
    _common(p_agg, model=False)
    p_fs = sub.add_parser("fair-sweep", help="fairness/accuracy trade-off over an alpha grid")
    _common(p_fs)
    p_fs.add_argument("--sensitive", required=True, help="comma-separated 0/1 columns")
    p_fs.add_argument("--alphas", default="0,0.25,0.5,0.75,1")
    p_fs.add_argument("--threshold", type=float, default=0.5)
    return parser


def _load_model(args):
    try:
        table = read_csv(args.data)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from None
    try:
        formula = parse_formula(args.formula)
        frame = build_model_matrix(formula, table)
        family = Family(args.family)
        link = args.link or DEFAULT_LINK[family].value
        fl = FamilyLink.of(family, link)
        model = GlmModel(frame.X, frame.y, fl, frame.column_names, frame.weights, frame.intercept)
    except (FormulaError, KeyError, ValueError) as exc:
        raise InputError(str(exc).strip("'\"")) from None
    specs = []
    if getattr(args, "constraints", None):
        try:
            with open(args.constraints, encoding="utf-8") as fh:
                specs = specs_from_json(json.load(fh), table)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise InputError(f"constraints: {exc}") from None
    return table, frame, model, specs


def _backend(args) -> str:
    return os.environ.get("CONEGLM_BACKEND") or args.backend


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _cmd_fit(args) -> int:
    _, _, model, specs = _load_model(args)
    kw = dict(big_m=args.big_m, scaler=args.scaler, backend=_backend(args))
    if args.dry_run:
        program = hglm_fit(model, specs, dry_run=True, **kw)
        _emit(args, program.to_json())
        return EXIT_OK
    fit = hglm_fit(model, specs, **kw)
    _emit(args, fit.to_json(indent=2) if args.format == "json" else fit.report())
    return _exit_for(fit.status)


def _cmd_seq(args) -> int:
    _, _, model, specs = _load_model(args)
    ks = None
    if args.k:
        try:
            ks = [int(v) for v in args.k.split(",")]
        except ValueError:
            raise InputError(f"bad --k list {args.k!r}") from None
    table = hglm_seq(model, specs, ks, big_m=args.big_m, scaler=args.scaler, backend=_backend(args))
    _emit(args, json.dumps(table.to_dict(), indent=2) if args.format == "json" else table.to_text())
    statuses = [r.status for r in table.rows]
    return EXIT_OK if all(s == "optimal" for s in statuses) else max(_exit_for(s) for s in statuses)


def _cmd_agg(args) -> int:
    try:
        table = read_csv(args.data)
        out = agg_binomial(args.formula, table)
    except (OSError, FormulaError, KeyError, ValueError) as exc:
        raise InputError(str(exc).strip("'\"")) from None
    text = out.to_csv(index=False)
    _emit(args, text)
    return EXIT_OK


def _cmd_fair(args) -> int:
    table, frame, model, _ = _load_model(args)
    names = [s for s in args.sensitive.split(",") if s]
    missing = [s for s in names if s not in table.columns]
    if missing:
        raise InputError(f"unknown sensitive columns: {missing}")
    W = np.column_stack([table[s].to_numpy(dtype=float)[frame.row_index] for s in names])
    try:
        alphas = [float(a) for a in args.alphas.split(",")]
    except ValueError:
        raise InputError(f"bad --alphas list {args.alphas!r}") from None
    if any(not 0 <= a <= 1 for a in alphas):
        raise InputError("alphas must lie in [0, 1]")
    rows = fair_sweep(model, W, alphas, args.threshold, names, big_m=args.big_m, scaler=args.scaler,
                      backend=_backend(args))
    if args.format == "json":
        payload = [{"alpha": r.alpha, "status": r.status, "bounds": r.bounds.tolist(),
                    "covariance": [None if not np.isfinite(v) else float(v) for v in r.covariance],
                    "disparate_impact": [None if not np.isfinite(v) else float(v) for v in r.disparate_impact],
                    "accuracy": None if not np.isfinite(r.accuracy) else r.accuracy,
                    "auc": None if not np.isfinite(r.auc) else r.auc} for r in rows]
        _emit(args, json.dumps(payload, indent=2))
    else:
        head = f"{'alpha':>6} {'accuracy':>9} {'auc':>7} " + " ".join(f"{'DI[' + n + ']':>12}" for n in names)
        lines = [head]
        for r in rows:
            di = " ".join(f"{v:12.4f}" for v in r.disparate_impact)
            lines.append(f"{r.alpha:6.2f} {r.accuracy:9.4f} {r.auc:7.4f} {di}  {r.status}")
        _emit(args, "\n".join(lines))
    statuses = [r.status for r in rows]
    return EXIT_OK if all(s == "optimal" for s in statuses) else max(_exit_for(s) for s in statuses)


_COMMANDS = {"fit": _cmd_fit, "seq": _cmd_seq, "agg": _cmd_agg, "fair-sweep": _cmd_fair}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except InputError as exc:
        return _fail("input", str(exc), EXIT_INPUT)
    except CapabilityError as exc:
        return _fail("capability", str(exc), EXIT_SOLVER)
    except (ValueError, KeyError) as exc:
        return _fail("input", str(exc).strip("'\""), EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
