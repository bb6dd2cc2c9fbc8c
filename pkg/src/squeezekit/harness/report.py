"""Archive reporting: metric JSON, ratio tables, Pareto scatter data."""

import csv
import json
import os
from collections import defaultdict

from ..errors import SqueezekitError
from ..metrics import EvalRecord, compute_report
from .runner import BASELINE_METHOD


def records_from_archive(archive):
    return [EvalRecord.from_dict(d) for d in archive.records]


def build_report(archive, agreement="exact"):
    """Metrics + diagnostics for one archive.

    Configs whose cells are incomplete (missing baselines, undefined
    ratios) are reported in `diagnostics` per method rather than silently
    dropped or imputed.
    """
    records = records_from_archive(archive)
    ok = [r for r in records if r.status == "ok"]
    baseline_keys = {
        (r.model, r.benchmark) for r in ok if r.method == BASELINE_METHOD
    }
    diagnostics = []
    usable = []
    by_config = defaultdict(list)
    for r in ok:
        by_config[r.config_id].append(r)
    for (method, budget), recs in sorted(by_config.items()):
        missing = sorted({
            (r.model, r.benchmark) for r in recs
            if (r.model, r.benchmark) not in baseline_keys
        })
        if missing:
            diagnostics.append(
                f"{method}@{budget}: no baseline for cells {missing}; excluded"
            )
            continue
        usable.extend(recs)
    for r in records:
        if r.status == "error":
            diagnostics.append(
                f"{r.method}@{r.budget} on ({r.model},{r.benchmark}) failed: {r.error}"
            )
    try:
        report = compute_report(usable, agreement=agreement)
    except SqueezekitError as e:
        diagnostics.append(f"metric aggregation failed: {e}")
        report = compute_report([r for r in usable if r.method == BASELINE_METHOD],
                                agreement=agreement)
    return report, diagnostics


def pareto_rows(report):
    """One (method, budget) point per row: OP (model-averaged) vs speedups."""
    op_by_config = defaultdict(list)
    for (model, method, budget), v in report.op.items():
        op_by_config[(method, budget)].append(v)
    rows = []
    for (method, budget), ops in sorted(op_by_config.items()):
        oe = report.oe.get((method, budget))
        rows.append({
            "method": method,
            "budget": budget,
            "op": sum(ops) / len(ops),
            "oe": oe[0] if oe else "",
            "ttft_speedup": oe[1] if oe and oe[1] is not None else "",
            "decode_speedup": oe[2] if oe and oe[2] is not None else "",
        })
    return rows


def write_report(archive, out_dir=None, agreement="exact"):
    """Emit report.json, ratios.csv and pareto.csv next to the archive."""
    out_dir = out_dir or archive.out_dir
    os.makedirs(out_dir, exist_ok=True)
    report, diagnostics = build_report(archive, agreement=agreement)
    payload = report.to_json_dict()
    payload["diagnostics"] = diagnostics
    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)

    ratios_path = os.path.join(out_dir, "ratios.csv")
    with open(ratios_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["method", "budget", "model", "benchmark", "ratio"])
        for row in report.ratios:
            w.writerow(row)

    pareto_path = os.path.join(out_dir, "pareto.csv")
    with open(pareto_path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=[
            "method", "budget", "op", "oe", "ttft_speedup", "decode_speedup"
        ])
        w.writeheader()
        for row in pareto_rows(report):
            w.writerow(row)
    return report_path, ratios_path, pareto_path, diagnostics
