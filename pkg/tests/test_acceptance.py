"""Acceptance suite: one test and one summary line per criterion.

Tolerances are pinned here and checked against the measured values, not
only against the pass flags stored in the reports.
"""

import csv
import io as _io
import json
import time

import pytest

from quantgroup import checks, cli, config, presets
from quantgroup.report import Report

ORACLE_TOL = 1e-8
EXACT_TOL = 1e-10
BASE_TOL = 5e-2
DECAY_TOL = 0.7

pytestmark = pytest.mark.acceptance


def run_preset(check, group, **overrides):
    data = presets.preset(check, group)
    data.update(overrides)
    cfg = config.from_dict(data)
    start = time.perf_counter()
    report = checks.run_check(cfg, check)
    return report, time.perf_counter() - start


def judged(report, value_tol):
    """Worst value and worst decay ratio, with the pinned tolerances applied to every measured row."""
    worst = worst_decay = 0.0
    ok = report.passed
    for row in report.rows:
        if row.tolerance is None:
            continue
        if row.metric.endswith("_decay"):
            worst_decay = max(worst_decay, row.value)
            ok &= row.value <= DECAY_TOL
        else:
            worst = max(worst, row.value)
            ok &= row.value <= value_tol
    return ok, worst, worst_decay


def levels_present(report, count):
    return {row.level for row in report.rows} == set(range(count))


def test_criterion_1_abelian_oracle(line):
    report, secs = run_preset("check-abelian-oracle", "euclidean(1)")
    pipeline = [r for r in report.rows if r.metric.startswith("pipeline_vs_oracle")]
    worst = max(r.value for r in pipeline)
    closed = [r for r in report.rows if r.metric.startswith("oracle_")]
    ok = (len(pipeline) == 3 and worst <= ORACLE_TOL and all(r.value <= 1e-6 for r in closed)
          and report.passed and secs <= 60)
    line(1, "abelian oracle", ok, f"worst pipeline gap {worst:.1e} over 3 orderings x 5 draws, {secs:.0f} s")
    assert ok


def test_criterion_2_semi_invariance(line):
    total, worst, ok = 0.0, 0.0, True
    for group in ("affine", "bianchi(V)", "bianchi(VII,1)"):
        report, secs = run_preset("check-semiinvariance", group)
        good, w, _ = judged(report, EXACT_TOL)
        ok &= good
        worst = max(worst, w)
        total += secs
    ok &= total <= 30
    line(2, "semi-invariance", ok, f"worst residual {worst:.1e} over 50 shift-exact z per group, {total:.0f} s")
    assert ok


def test_criterion_3_plancherel(line):
    total, worst, decay, ok = 0.0, 0.0, 0.0, True
    for group in ("euclidean(1)", "affine", "bianchi(V)"):
        report, secs = run_preset("check-plancherel", group)
        good, w, d = judged(report, BASE_TOL)
        ok &= good and levels_present(report, 3)
        worst, decay, total = max(worst, w), max(decay, d), total + secs
    ok &= total <= 600
    line(3, "Parseval/Plancherel", ok, f"worst residual {worst:.1e}, worst decay {decay:.2f} over 3 levels, {total:.0f} s")
    assert ok


def _quantization_criterion(check):
    report, secs = run_preset(check, "euclidean(1)")
    ok, exact, _ = judged(report, EXACT_TOL)
    total, worst, decay = secs, 0.0, 0.0
    for group in ("affine", "bianchi(V)"):
        report, secs = run_preset(check, group)
        good, w, d = judged(report, BASE_TOL)
        ok &= good and levels_present(report, 2) and d > 0
        worst, decay, total = max(worst, w), max(decay, d), total + secs
    return ok, f"euclidean {exact:.1e}; affine and bianchi(V) worst {worst:.1e}, decay {decay:.2f}", total


def test_criterion_4_roundtrip(line):
    ok, detail, secs = _quantization_criterion("check-roundtrip")
    ok &= secs <= 600
    line(4, "Op/Wig round trip and unitarity", ok, f"{detail}, {secs:.0f} s")
    assert ok


def test_criterion_5_duality(line):
    ok, detail, secs = _quantization_criterion("check-duality")
    line(5, "duality", ok, f"{detail}, 10 draws per group, {secs:.0f} s")
    assert ok


def test_criterion_6_covariance(line):
    ok, detail, secs = _quantization_criterion("check-covariance")
    line(6, "covariance and its factor identities", ok, f"{detail}, {secs:.0f} s")
    assert ok


def test_criterion_7_product_rule(line):
    euclid, _ = run_preset("check-product", "euclidean(2)")
    ok, gap, _ = judged(euclid, EXACT_TOL)
    report, _ = run_preset("check-product", "affine_line")
    tensor = Report([r for r in report.rows if "tensor" in r.metric])
    planch = Report([r for r in report.rows if r.check == "check-plancherel"])
    good, tensor_gap, _ = judged(tensor, EXACT_TOL)
    ok &= good and len(tensor.rows) > 0
    good, w, d = judged(planch, BASE_TOL)
    ok &= good and levels_present(planch, 3) and len(planch.rows) + len(tensor.rows) == len(report.rows)
    line(7, "product rule", ok, f"euclidean(1)^2 defect {gap:.1e}; affine_line tensor gaps {tensor_gap:.1e}, "
                                f"Plancherel {w:.1e} with decay {d:.2f}")
    assert ok


def _cli_rows(argv, capsys):
    code = cli.main(argv)
    out, _ = capsys.readouterr()
    return code, [r for r in csv.reader(_io.StringIO(out))]


def test_criterion_8_cli_contract(line, tmp_path, capsys):
    argv = ["check-plancherel", "--group", "affine"]
    code1, rows1 = _cli_rows(argv, capsys)
    code2, rows2 = _cli_rows(argv, capsys)
    cfg = tmp_path / "strict.json"
    cfg.write_text(json.dumps({"group": "affine", "tolerances": {"parseval_residual": 1e-12}}), encoding="utf-8")
    code3, _ = _cli_rows(["check-plancherel", "--config", str(cfg)], capsys)
    ok = code1 == 0 and rows1 == rows2 and len(rows1) > 1 and code3 != 0
    line(8, "CLI determinism and exit status", ok,
         f"{len(rows1) - 1} identical rows, exit {code1} when passing, exit {code3} with an injected tolerance")
    assert ok
