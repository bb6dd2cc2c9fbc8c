"""Experiment runner: expands the (policy x budget x task) grid, runs
every cell against every model, and streams EvalRecords to an archive.

Baseline (uncompressed) cells always run first; their scores, predictions
and timings ride along into every policy cell so records are
self-contained. One failing cell yields an error record and a nonzero
exit status without touching any other cell. With timing="counters"
(default) two runs of the same spec produce byte-identical record
streams; wall-clock mode is available but inherently noisy.
"""

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import __version__, kernels
from ..kv.methods import KVPolicySpec, make_policy
from ..metrics import EvalRecord
from ..pipeline import TokenPolicySpec, generate, make_token_policy
from ..sim.config import ModelConfig
from ..sim.model import build_model
from ..sim.tasks import make_task, score_prediction
from ..weights import (
    SEMI_2_4,
    QuantSpec,
    awq_quantize,
    calibration_tasks,
    capture_calibration,
    ecoflap_prune,
    gptq_quantize,
    rtn_quantize,
    sparsegpt_prune,
    wanda_prune,
)

BASELINE_METHOD = "original"
BASELINE_BUDGET = "100%"


def budget_label(b):
    pct = 100.0 * b
    return f"{pct:g}%"


def param_budget_label(policy):
    method = policy["method"]
    if method in ("rtn", "awq", "gptq"):
        bits = policy.get("bits", 4)
        gs = policy.get("group_size", 128)
        return f"w{bits}g{gs}"
    if policy.get("pattern") == SEMI_2_4:
        return SEMI_2_4
    return f"p={policy.get('sparsity', 0.5):g}"


def compress_model_weights(model, policy, seed=0):
    """Apply a param-compression policy; returns (model, payloads)."""
    method = policy["method"]
    calib_seqs = calibration_tasks(model, count=policy.get("calib_samples", 128),
                                   seed=seed)
    calib = capture_calibration(model, calib_seqs)
    payloads = {}
    if method == "ecoflap":
        zo_seqs = calib_seqs[: policy.get("zo_samples", 8)]
        new_model, masks, _, _ = ecoflap_prune(
            model, zo_seqs, policy.get("sparsity", 0.5), calib,
            temperature=policy.get("temperature", 1.0),
            eps=policy.get("eps", 1e-2), trials=policy.get("trials", 32),
            seed=seed, pattern=policy.get("pattern"),
        )
        for name, w in new_model.weight_tensors().items():
            payloads[name] = (masks[name].mask.T, w)
        return new_model, payloads

    new_named = {}
    for name, w in model.weight_tensors().items():
        wt = w.T  # [out, in] convention for the compression kernels
        if method in ("wanda", "sparsegpt"):
            pattern = policy.get("pattern", "unstructured")
            p = policy.get("sparsity", 0.5)
            if method == "wanda":
                pruned, mask = wanda_prune(wt, calib[name], pattern, p=p)
            else:
                pruned, mask = sparsegpt_prune(wt, calib[name], pattern, p=p,
                                               lam=policy.get("lam", 1e-2))
            new_named[name] = pruned.T
            payloads[name] = (mask.mask.T, pruned.T)
        elif method in ("rtn", "awq", "gptq"):
            spec = QuantSpec(bits=policy.get("bits", 4),
                             group_size=policy.get("group_size", 128))
            if method == "rtn":
                deq, qt = rtn_quantize(wt, spec)
            elif method == "awq":
                deq, qt = awq_quantize(wt, calib[name], spec)
            else:
                deq, qt = gptq_quantize(wt, calib[name], spec,
                                        lam=policy.get("lam", 1e-2))
            new_named[name] = deq.T
            payloads[name] = qt
        else:
            raise ValueError(f"unknown param method {method!r}")
    return model.clone_with_weights(new_named), payloads


def _policies_for_cell(policy, budget):
    token_policy = kv_policy = None
    if policy is not None and policy["family"] == "token":
        rest = {k: v for k, v in policy.items() if k != "family"}
        token_policy = make_token_policy(TokenPolicySpec.from_dict(
            {**rest, "budget": budget}))
    elif policy is not None and policy["family"] == "kv":
        rest = {k: v for k, v in policy.items() if k != "family"}
        kv_policy = make_policy(KVPolicySpec.from_dict({**rest, "budget": budget}))
    return token_policy, kv_policy


def evaluate_cell(args):
    """Run one grid cell; returns an EvalRecord dict. Never raises."""
    try:
        model = build_model(ModelConfig.from_dict(args["model_cfg"]))
        policy = args["policy"]
        if policy is not None and policy["family"] == "param":
            model, _ = compress_model_weights(model, policy, seed=args["seed"])
            token_policy = kv_policy = None
        else:
            token_policy, kv_policy = _policies_for_cell(policy, args["budget"])

        suite = args["suite"]
        wall = args["timing"] == "wallclock"
        scores, preds = [], []
        t_total = ttft = 0.0
        retained = 0
        for i in range(suite["samples"]):
            seq, expected = make_task(suite["kind"], suite["params"],
                                      seed=suite["seed"] + i, model=model)
            steps = max(len(expected), args["decode_steps"])
            t0 = time.perf_counter()
            out = generate(model, seq, steps, token_policy=token_policy,
                           kv_policy=kv_policy)
            elapsed = time.perf_counter() - t0
            res = out.result
            scores.append(score_prediction(expected, res.output_ids))
            preds.append(" ".join(str(t) for t in res.output_ids))
            if wall:
                frac = res.prefill_attention_ops / max(res.total_ops(), 1)
                ttft += elapsed * frac
                t_total += elapsed
            else:
                ttft += res.prefill_attention_ops
                t_total += res.total_ops()
            retained += res.retained_cache_entries

        base = args.get("base")
        rec = EvalRecord(
            method=BASELINE_METHOD if policy is None else policy["method"],
            model=args["model_name"],
            benchmark=suite["name"],
            budget=args["budget_label"],
            score=float(np.mean(scores)),
            predictions=preds,
            t_total=t_total,
            ttft=ttft,
            n_samples=suite["samples"],
            seed=args["seed"],
            extra={"retained_cache_entries": retained,
                   "variant": (policy or {}).get("variant"),
                   "family": (policy or {}).get("family", "baseline")},
        )
        if base is None:  # baseline row scores itself
            rec.score_base = rec.score
            rec.predictions_base = list(preds)
            rec.t_total_base = t_total
            rec.ttft_base = ttft
        else:
            rec.score_base = base["score"]
            rec.predictions_base = base["predictions"]
            rec.t_total_base = base["t_total"]
            rec.ttft_base = base["ttft"]
        return rec.to_dict()
    except Exception as e:  # crash isolation: one cell never kills the run
        return EvalRecord(
            method=(args.get("policy") or {}).get("method", BASELINE_METHOD),
            model=args.get("model_name", "?"),
            benchmark=args.get("suite", {}).get("name", "?"),
            budget=args.get("budget_label", "?"),
            score=0.0, status="error",
            error=f"{type(e).__name__}: {e}",
        ).to_dict()


@dataclass
class ResultsArchive:
    out_dir: str
    records: list
    meta: dict

    @property
    def records_path(self):
        return os.path.join(self.out_dir, "records.jsonl")

    @property
    def failed(self):
        return sum(1 for r in self.records if r.get("status") == "error")


def _grid(spec):
    """Yield cell argument dicts in deterministic grid order."""
    shared = {"decode_steps": spec.decode_steps, "timing": spec.timing,
              "seed": spec.seed}
    for model_name, cfg in spec.models:
        for suite in spec.tasks:
            sd = suite.__dict__.copy()
            yield {**shared, "model_name": model_name, "model_cfg": cfg.to_dict(),
                   "suite": sd, "policy": None, "budget": None,
                   "budget_label": BASELINE_BUDGET, "base": None}
    for policy in spec.policies:
        budgets = [None] if policy["family"] == "param" else spec.budgets
        for budget in budgets:
            label = param_budget_label(policy) if budget is None else budget_label(budget)
            for model_name, cfg in spec.models:
                for suite in spec.tasks:
                    yield {**shared, "model_name": model_name,
                           "model_cfg": cfg.to_dict(), "suite": suite.__dict__.copy(),
                           "policy": policy, "budget": budget,
                           "budget_label": label, "base": "pending"}


def run(spec, out_dir=None):
    """Execute the full grid and write the archive."""
    out_dir = out_dir or spec.out or default_out_dir(spec)
    os.makedirs(out_dir, exist_ok=True)
    cells = list(_grid(spec))
    baseline_cells = [c for c in cells if c["policy"] is None]
    policy_cells = [c for c in cells if c["policy"] is not None]

    baseline_records = _run_cells(baseline_cells, spec.jobs)
    base_by_key = {}
    for rec in baseline_records:
        base_by_key[(rec["model"], rec["benchmark"])] = {
            "score": rec["score"], "predictions": rec.get("predictions"),
            "t_total": rec.get("t_total"), "ttft": rec.get("ttft"),
        }
    for c in policy_cells:
        c["base"] = base_by_key.get((c["model_name"], c["suite"]["name"]))
    records = baseline_records + _run_cells(policy_cells, spec.jobs)

    meta = {
        "spec": spec.canonical_dict(),
        "spec_hash": spec.spec_hash(),
        "tool_version": __version__,
        "kernel_backend": kernels.active_backend(),
        "record_count": len(records),
        "failed_cells": sum(1 for r in records if r.get("status") == "error"),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    archive = ResultsArchive(out_dir, records, meta)
    with open(archive.records_path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    return archive


def _run_cells(cells, jobs):
    if jobs <= 1 or len(cells) <= 1:
        return [evaluate_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(evaluate_cell, cells))  # order-preserving


def default_out_dir(spec):
    root = os.environ.get("SQUEEZEKIT_OUT_ROOT", "runs")
    return os.path.join(root, spec.spec_hash()[:12])


def load_archive(out_dir):
    records = []
    with open(os.path.join(out_dir, "records.jsonl"), "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(json.loads(line))
    meta_path = os.path.join(out_dir, "meta.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
    return ResultsArchive(out_dir, records, meta)
