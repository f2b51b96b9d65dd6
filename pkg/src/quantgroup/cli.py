"""Command line interface.

Exit status: 0 when every metric passes, 1 when any metric fails, 2 for
configuration or input errors, 3 for unsupported (group, check) pairs.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys

import numpy as np

from . import checks, config, io, presets
from . import groups as G
from . import quantization as Q
from .dual import DualError, dual_model
from .grids import GridError
from .oracle import UnsupportedGroupError
from .report import Report, metadata

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_UNSUPPORTED = 0, 1, 2, 3

CHECK_COMMANDS = tuple(checks.CHECKS)
COMMANDS = CHECK_COMMANDS + ("op-apply", "wigner", "refine-study")


class UsageError(ValueError):
    """Raised for inconsistent command line arguments."""


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantgroup", description="Quantization on concrete groups.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration; missing fields come from the preset")
        p.add_argument("--group", help="group of the preset when no configuration names one")
        p.add_argument("--out", help="output path (stdout when omitted)")
        p.add_argument("--format", choices=config.FORMATS, help="report format")
        p.add_argument("--levels", type=int, help="number of refinement levels")
        p.add_argument("--seed", type=int, help="random seed")
        if name == "op-apply":
            p.add_argument("--symbol", required=True, help="symbol CSV or builtin JSON")
            p.add_argument("--input", required=True, help="function CSV or builtin JSON")
            p.add_argument("--tau", help="ordering map")
        if name == "wigner":
            p.add_argument("--input", required=True, help="function u (CSV or builtin JSON)")
            p.add_argument("--input2", help="function v (defaults to u)")
            p.add_argument("--tau", help="ordering map")
        if name == "refine-study":
            p.add_argument("--check", help="check to refine (defaults to the config's check field)")
    return parser


def _load_config(args, check: str) -> config.RunConfig:
    data = config.read_json(args.config) if args.config else {}
    check_field = data.get("check")
    group = data.get("group", args.group)
    preset_name = check
    if check == "refine-study":
        preset_name = args.check or check_field
        if preset_name is None:
            raise UsageError("refine-study needs --check or a 'check' field in the configuration")
        if preset_name not in checks.CHECKS:
            raise checks.UnsupportedCheckError(f"unknown check {preset_name!r}")
    try:
        defaults = presets.preset(preset_name, group)
    except presets.PresetError:
        if "grid" not in data:
            raise
        defaults = {}
    except G.GroupSpecError as exc:
        raise config.ConfigError(f"group: {exc}") from exc
    if group is not None:
        data["group"] = group
    if args.levels is not None:
        data["levels"] = args.levels
    if args.seed is not None:
        data["seed"] = args.seed
    if getattr(args, "tau", None):
        data["tau"] = [args.tau]
    cfg = config.from_dict(data, defaults)
    cfg.check = preset_name
    return cfg


def _symbol(source: str, cfg: config.RunConfig, model):
    """Symbol from a CSV file or a builtin ``{"x": spec, "kernel": spec}``.

    The builtin symbol is ``A(x, xi) = f(x) (P w)(xi)`` with ``f`` and ``w``
    builtin test functions.
    """
    grid = model.grid
    if source.lstrip().startswith("{"):
        spec = io.parse_builtin(source)
        if not {"x", "kernel"} <= set(spec):
            raise io.InputError("a builtin symbol needs 'x' and 'kernel' function descriptions")
        f = io.load_function(_json(spec["x"]), grid).values
        w = io.load_function(_json(spec["kernel"]), grid).values
        rows = checks._symbol_rows(cfg, grid)
        rows_i = np.flatnonzero(np.abs(f) > 0) if rows is None else rows
        prof = model.plancherel_forward(w[None, :])[0]
        vals = f[rows_i, None, None, None] * prof[None]
        return Q.SymbolField(model, vals, rows_i)
    return Q.SymbolField(model, io.read_symbol(source, model))


def _json(spec) -> str:
    return json.dumps(spec)


def _emit_text(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_report(cfg: config.RunConfig, args) -> Report:
    if args.command == "refine-study":
        report = checks.refine_study(cfg, cfg.check)
    else:
        report = checks.run_check(cfg, args.command)
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    report.metadata = metadata(cfg.digest(), stamp)
    report.metadata["check"] = cfg.check
    return report


def _op_apply(cfg: config.RunConfig, args) -> int:
    grid = cfg.grid(0)
    model = checks._quantization_model(cfg, grid, dual_model(grid, cfg.dual))
    A = _symbol(args.symbol, cfg, model)
    u = io.load_function(args.input, grid)
    out = Q.op_tau(A, cfg.tau[0])(u)
    _write_array(io.axis_names(grid), out.values.reshape(grid.shape), args.out)
    return EXIT_OK


def _wigner(cfg: config.RunConfig, args) -> int:
    grid = cfg.grid(0)
    model = checks._quantization_model(cfg, grid, dual_model(grid, cfg.dual))
    u = io.load_function(args.input, grid)
    v = io.load_function(args.input2, grid) if args.input2 else u
    W = Q.wig_rank_one(u, v, cfg.tau[0], model, rows=checks._symbol_rows(cfg, grid))
    full = W.restrict(None).values
    shape = grid.shape + (model.n_dual, model.M, model.M)
    _write_array(io.symbol_names(grid), full.reshape(shape), args.out)
    return EXIT_OK


def _write_array(names, values, out):
    io.write_array(out if out else sys.stdout, values, names)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        check = args.command
        cfg = _load_config(args, check)
        if check == "op-apply":
            return _op_apply(cfg, args)
        if check == "wigner":
            return _wigner(cfg, args)
        report = _run_report(cfg, args)
    except (config.ConfigError, UsageError, checks.PreconditionError, io.InputError, io.DimensionError,
            GridError, DualError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (checks.UnsupportedCheckError, UnsupportedGroupError, Q.QuantizationError) as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except presets.PresetError as exc:
        print(f"unsupported: {exc.args[0]}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    fmt = args.format or cfg.output.get("format", "csv")
    out = args.out or cfg.output.get("path")
    text = report.to_csv() if fmt == "csv" else report.to_json()
    _emit_text(text, out)
    for row in report.failures():
        print(f"FAIL {row.check} {row.group} level {row.level} {row.metric} = {row.value!r} > {row.tolerance!r}",
              file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
