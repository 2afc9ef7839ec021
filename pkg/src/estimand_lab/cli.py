"""Command-line interface.

Exit codes: 0 success, 1 invalid model or options, 2 numeric failure
(no relevance, too many invalid units, or a reproduce-paper row outside
its band).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .builtins import BUILTINS, PAPER, PAPER_EXPECTED
from .engine import ModelDomainError
from .estimands import (
    InsufficientDataError,
    RelevanceError,
    ace,
    ade,
    diagnostics,
    grid_values,
    reduced_form_dydz,
    scan_gap,
    wald_observational,
    wald_true,
)
from .model import ModelError, SourceDiagnostic
from .parser import check_source, parse_model, parse_template
from .report import estimate_row, new_document, render, scan_row, set_assumptions, set_gap
from .symbolic import check_assumptions

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
ESTIMANDS = ("ade", "wald", "wald-obs", "ace", "reduced-form")
MIN_BAND = 0.1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--model", metavar="FILE", help="model file (.scm)")
    src.add_argument("--builtin", choices=sorted(BUILTINS), help="built-in model")
    common.add_argument("--n", type=_positive_int, default=1_000_000, help="simulated units (default 1e6)")
    common.add_argument("--seed", type=_seed, default=1, help="random seed (default 1)")
    common.add_argument("--format", choices=("text", "json", "csv"), default="text")

    parser = _Parser(prog="estimand-lab", description="Wald estimand versus average derivative effect.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("validate", parents=[common], help="parse and validate a model")
    sub.add_parser("check", parents=[common], help="symbolic assumption checks")
    est = sub.add_parser("estimate", parents=[common], help="Monte Carlo estimands")
    est.add_argument("--estimand", default="ade,wald", help=f"comma list from {', '.join(ESTIMANDS)}")
    est.add_argument("--ace-from", type=float, help="ACE reference exposure level")
    est.add_argument("--ace-to", type=float, help="ACE target exposure level")
    sub.add_parser("reproduce-paper", parents=[common], help="rerun the built-in counterexample")
    scan = sub.add_parser("scan", parents=[common], help="Wald-minus-ADE gap over a parameter grid")
    scan.add_argument(
        "--param", action="append", default=[], metavar="NAME=LO:HI:STEP", help="grid for a free parameter"
    )
    return parser


def _source(args) -> tuple[str, str]:
    if args.model:
        path = Path(args.model)
        try:
            return str(path), path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise UsageError(f"cannot read model file {path}: {exc}") from None
    name = args.builtin or "paper"
    return f"builtin:{name}", BUILTINS[name]


def _config(args, model_label: str, simulate: bool = True, **extra) -> dict:
    cfg = {"model": model_label, "format": args.format}
    if simulate:
        cfg.update(n=args.n, seed=args.seed)
    cfg.update(extra)
    return cfg


def _parse_grid(specs: Sequence[str]) -> dict[str, list[float]]:
    if not specs:
        raise UsageError("scan needs at least one --param NAME=LO:HI:STEP")
    grid: dict[str, list[float]] = {}
    for spec in specs:
        name, sep, rng = spec.partition("=")
        name = name.strip()
        if not sep or not name.isidentifier():
            raise UsageError(f"bad --param {spec!r}; expected NAME=LO:HI:STEP")
        if name in grid:
            raise UsageError(f"--param {name} given twice")
        parts = rng.split(":")
        try:
            nums = [float(p) for p in parts]
            if len(nums) == 1:
                grid[name] = grid_values(nums[0], nums[0], 0.0)
            elif len(nums) == 3:
                grid[name] = grid_values(*nums)
            else:
                raise ValueError("expected LO:HI:STEP or a single value")
        except ValueError as exc:
            raise UsageError(f"bad --param {spec!r}: {exc}") from None
    return grid


def _emit(doc: dict, fmt: str, out) -> None:
    out.write(render(doc, fmt))


# -- commands ---------------------------------------------------------------


def cmd_validate(args, out) -> int:
    label, text = _source(args)
    model, diags = check_source(text)
    doc = new_document("validate", _config(args, label, simulate=False))
    doc["diagnostics"] = [d.to_dict() for d in diags]
    doc["status"] = "ok" if model is not None else "invalid"
    _emit(doc, args.format, out)
    return EXIT_OK if model is not None else EXIT_INVALID


def cmd_check(args, out) -> int:
    label, text = _source(args)
    model = parse_model(text)
    doc = new_document("check", _config(args, label, simulate=False))
    set_assumptions(doc, check_assumptions(model))
    _emit(doc, args.format, out)
    return EXIT_OK


def cmd_estimate(args, out) -> int:
    label, text = _source(args)
    wanted = [w.strip() for w in args.estimand.split(",") if w.strip()]
    unknown = [w for w in wanted if w not in ESTIMANDS]
    if unknown or not wanted:
        raise UsageError(f"unknown estimand(s) {', '.join(unknown) or '(none)'}; choose from {', '.join(ESTIMANDS)}")
    if "ace" in wanted and (args.ace_from is None or args.ace_to is None):
        raise UsageError("--estimand ace needs --ace-from and --ace-to")
    model = parse_model(text)
    extra = {"estimand": wanted}
    if "ace" in wanted:
        extra.update(ace_from=args.ace_from, ace_to=args.ace_to)
    doc = new_document("estimate", _config(args, label, **extra))
    run = {"n": args.n, "seed": args.seed}
    for w in wanted:
        if w == "ade":
            doc["estimates"].append(estimate_row("ade", ade(model, **run)))
        elif w == "wald":
            doc["estimates"].append(estimate_row("wald_true", wald_true(model, **run)))
        elif w == "wald-obs":
            doc["estimates"].append(estimate_row("wald_obs", wald_observational(model, **run)))
        elif w == "reduced-form":
            doc["estimates"].append(estimate_row("reduced_form_dydz", reduced_form_dydz(model, **run)))
        elif w == "ace":
            doc["estimates"].append(estimate_row("ace", ace(model, args.ace_from, args.ace_to, **run)))
    _emit(doc, args.format, out)
    return EXIT_OK


def cmd_reproduce_paper(args, out) -> int:
    model = parse_model(PAPER)
    doc = new_document("reproduce-paper", _config(args, "builtin:paper"))
    report = diagnostics(model, args.n, args.seed)
    set_gap(doc, report)
    computed = dict(report.estimates())
    all_pass = True
    wide = False
    for quantity, expected, exact in PAPER_EXPECTED:
        est = computed[quantity]
        if exact:
            band = 0.0
            ok = est.value == expected and est.mc_se == 0.0
        else:
            band = max(MIN_BAND, 3.0 * est.mc_se)
            wide |= 3.0 * est.mc_se > MIN_BAND
            ok = abs(est.value - expected) <= band
        all_pass &= ok
        doc["rows"].append(
            {"quantity": quantity, "expected": expected, "computed": est.value, "mc_se": est.mc_se,
             "band": band, "pass": ok}
        )
    if wide:
        doc["warnings"].append(
            f"Monte Carlo error is large at n={args.n}; bands widened to 3*mc_se. Increase --n for a decisive check."
        )
    doc["status"] = "ok" if all_pass else "fail"
    _emit(doc, args.format, out)
    return EXIT_OK if all_pass else EXIT_NUMERIC


def cmd_scan(args, out) -> int:
    if args.model:
        label, text = _source(args)
    else:
        name = args.builtin or "paper-family"
        label, text = f"builtin:{name}", BUILTINS[name]
    grid = _parse_grid(args.param)
    template = parse_template(text, list(grid))
    doc = new_document("scan", _config(args, label, params={k: v for k, v in grid.items()}))
    rows = scan_gap(template, grid, args.n, args.seed)
    doc["rows"] = [scan_row(r) for r in rows]
    failed = [r for r in rows if r.error]
    if failed:
        doc["warnings"].append(f"{len(failed)} of {len(rows)} grid points failed")
    doc["warnings"].append("scan output is exploratory; no multiple-comparison correction is applied")
    _emit(doc, args.format, out)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "check": cmd_check,
    "estimate": cmd_estimate,
    "reproduce-paper": cmd_reproduce_paper,
    "scan": cmd_scan,
}


def main(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INVALID
    except ModelError as exc:
        for d in exc.diagnostics:
            err.write(f"{d}\n")
        return EXIT_INVALID
    except (RelevanceError, InsufficientDataError, ModelDomainError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_NUMERIC


def run() -> None:
    sys.exit(main())


__all__ = ["main", "build_parser", "SourceDiagnostic"]
