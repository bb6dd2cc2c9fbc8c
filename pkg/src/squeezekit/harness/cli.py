"""Command-line interface.

Verbs: run <spec>, report <archive>, export-traces, replay, bench.
SQUEEZEKIT_OUT_ROOT sets the default output root for run archives.
"""

import argparse
import csv
import json
import os
import sys

from ..sim.config import ModelConfig
from ..sim.model import build_model
from . import replay as replay_mod
from . import report as report_mod
from . import runner
from .runspec import load_runspec_file


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"invalid JSON: {e}") from None


def build_parser():
    p = argparse.ArgumentParser(
        prog="squeezekit",
        description="Compression-policy benchmark harness for the toy "
                    "multimodal transformer",
    )
    sub = p.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run spec")
    p_run.add_argument("spec", help="path to the JSON run spec")
    p_run.add_argument("--seed", type=int, help="override the spec seed")
    p_run.add_argument("--jobs", type=int, help="parallel grid cells")
    p_run.add_argument("--budgets", help="comma-separated budget fractions")
    p_run.add_argument("--out", help="archive output directory")

    p_rep = sub.add_parser("report", help="aggregate metrics from an archive")
    p_rep.add_argument("archive", help="archive directory (holds records.jsonl)")
    p_rep.add_argument("--out", help="report output directory")
    p_rep.add_argument("--agreement", choices=["exact", "token_f1"],
                       default="exact", help="loyalty agreement function")

    p_exp = sub.add_parser("export-traces", help="prefill a task and store the trace")
    p_exp.add_argument("out", help="trace file to write")
    p_exp.add_argument("--model", type=_json_arg, required=True,
                       help='model config JSON, e.g. \'{"num_layers":3,...}\'')
    p_exp.add_argument("--task", type=_json_arg, required=True,
                       help='task JSON: {"kind","seed","params"}')

    p_rpl = sub.add_parser("replay", help="apply a KV policy to a stored trace")
    p_rpl.add_argument("trace", help="trace file")
    p_rpl.add_argument("--policy", type=_json_arg, required=True,
                       help='KV policy JSON, e.g. \'{"method":"snapkv","budget":0.05}\'')
    p_rpl.add_argument("--out", help="output directory (default: stdout summary)")

    p_bench = sub.add_parser("bench", help="compare kernel backends")
    p_bench.add_argument("--repeats", type=int, default=3)
    return p


def cmd_run(args):
    spec = load_runspec_file(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    if args.jobs is not None:
        spec.jobs = args.jobs
    if args.budgets:
        spec.budgets = [float(b) for b in args.budgets.split(",")]
    archive = runner.run(spec, out_dir=args.out)
    print(f"archive: {archive.out_dir}")
    print(f"records: {len(archive.records)} ({archive.failed} failed cells)")
    return 1 if archive.failed else 0


def cmd_report(args):
    archive = runner.load_archive(args.archive)
    report_path, ratios_path, pareto_path, diagnostics = report_mod.write_report(
        archive, out_dir=args.out, agreement=args.agreement
    )
    print(f"report:  {report_path}")
    print(f"ratios:  {ratios_path}")
    print(f"pareto:  {pareto_path}")
    for d in diagnostics:
        print(f"diagnostic: {d}", file=sys.stderr)
    return 0


def cmd_export_traces(args):
    model = build_model(ModelConfig.from_dict(args.model))
    task = args.task
    replay_mod.export_task_trace(
        model, task["kind"], task.get("params", {}), task.get("seed", 0), args.out
    )
    print(f"trace written: {args.out}")
    return 0


def cmd_replay(args):
    mask, rows = replay_mod.replay(args.trace, args.policy)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        budgets_path = os.path.join(args.out, "layer_budgets.csv")
        with open(budgets_path, "w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(f, fieldnames=["layer", "quota", "uniform_avg", "ratio"])
            w.writeheader()
            for r in rows:
                w.writerow({k: r[k] for k in w.fieldnames})
        retained_path = os.path.join(args.out, "retained_indices.json")
        with open(retained_path, "w", encoding="utf-8") as f:
            json.dump({str(r["layer"]): r["retained"] for r in rows}, f)
        print(f"layer budgets: {budgets_path}")
        print(f"retained:      {retained_path}")
    else:
        for r in rows:
            print(f"layer {r['layer']}: quota={r['quota']} "
                  f"(x{r['ratio']:.2f} of uniform avg {r['uniform_avg']:.1f})")
    return 0


def cmd_bench(args):
    from ..benchmark import available_backends, format_rows, run_benchmark

    print(f"backends: {', '.join(available_backends())}")
    print(format_rows(run_benchmark(repeats=args.repeats)))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {
        "run": cmd_run,
        "report": cmd_report,
        "export-traces": cmd_export_traces,
        "replay": cmd_replay,
        "bench": cmd_bench,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
