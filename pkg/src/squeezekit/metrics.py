"""The four evaluation metrics over collections of eval records.

A compression configuration c is identified by (method, budget label).
For scores EM and their uncompressed baselines EM_base:

* OP (overall performance, per model and c): root-mean-square over
  benchmarks of the per-benchmark mean score ratio.
* OG (generalization, per c): coefficient of variation across benchmarks
  of the model-averaged ratio; population standard deviation, lower is
  better.
* OL (loyalty, per c): mean prediction agreement with the uncompressed
  model; exact string match by default, token-F1 >= 0.5 as the shipped
  alternative.
* OE (efficiency, per c): mean speedup T_base / T, with TTFT-only and
  decode-only decompositions emitted alongside.

Missing cells fail loudly (MissingBaseline / UndefinedMetric); partial
aggregates are never reported silently.
"""

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingBaseline, ShapeMismatch, UndefinedMetric

METRIC_CONVENTIONS = {
    "sigma": "population",
    "agreement": "exact_match (token_f1>=0.5 available)",
    "og_model_averaging": "per-(model,benchmark) ratios first, then over models",
}


@dataclass
class EvalRecord:
    """One (method, model, benchmark, budget) evaluation cell."""

    method: str
    model: str
    benchmark: str
    budget: str
    score: float
    score_base: float = None
    predictions: list = None
    predictions_base: list = None
    t_total: float = None
    t_total_base: float = None
    ttft: float = None
    ttft_base: float = None
    n_samples: int = 0
    seed: int = 0
    status: str = "ok"
    error: str = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items() if v is not None and k != "extra"}
        if self.extra:
            d["extra"] = self.extra
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})

    @property
    def config_id(self):
        return (self.method, str(self.budget))


def _ratio(rec):
    if rec.score_base is None:
        raise MissingBaseline(f"no baseline score for benchmark {rec.benchmark!r}")
    if rec.score_base <= 0:
        raise UndefinedMetric(
            f"baseline score must be > 0 to form a ratio ({rec.benchmark!r})"
        )
    return rec.score / rec.score_base


def _cell_means(records):
    """{(model, benchmark): mean ratio} with per-cell record averaging."""
    cells = defaultdict(list)
    for r in records:
        cells[(r.model, r.benchmark)].append(_ratio(r))
    return {k: float(np.mean(v)) for k, v in cells.items()}


def overall_performance(records):
    """OP for records of one (model, config): RMS of per-benchmark ratios."""
    if not records:
        raise MissingBaseline("no records")
    models = {r.model for r in records}
    if len(models) != 1:
        raise ShapeMismatch(f"OP needs a single model, got {sorted(models)}")
    per_bench = defaultdict(list)
    for r in records:
        per_bench[r.benchmark].append(_ratio(r))
    means = np.array([np.mean(v) for v in per_bench.values()])
    return float(np.sqrt(np.mean(means**2)))


def generalization(records):
    """OG for records of one config across models and benchmarks."""
    cells = _cell_means(records)
    benches = sorted({b for (_, b) in cells})
    if len(benches) < 2:
        raise UndefinedMetric("OG needs at least 2 benchmarks")
    per_bench = [
        float(np.mean([v for (m, b), v in cells.items() if b == bench]))
        for bench in benches
    ]
    grand = float(np.mean(list(cells.values())))
    if grand == 0:
        raise UndefinedMetric("OG undefined: zero mean ratio")
    return float(np.std(per_bench) / grand)  # population sigma


def exact_match(a, b):
    return 1.0 if a == b else 0.0


def token_f1_agreement(a, b, threshold=0.5):
    ta, tb = a.split(), b.split()
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    overlap = 0
    pool = list(tb)
    for t in ta:
        if t in pool:
            pool.remove(t)
            overlap += 1
    f1 = 2.0 * overlap / (len(ta) + len(tb))
    return 1.0 if f1 >= threshold else 0.0


AGREEMENT_FUNCTIONS = {"exact": exact_match, "token_f1": token_f1_agreement}


def loyalty(records, agreement="exact"):
    """OL: mean agreement between compressed and baseline predictions."""
    fn = AGREEMENT_FUNCTIONS[agreement] if isinstance(agreement, str) else agreement
    hits = []
    for r in records:
        if r.predictions is None or r.predictions_base is None:
            raise MissingBaseline(f"no paired predictions for {r.benchmark!r}")
        if len(r.predictions) != len(r.predictions_base):
            raise ShapeMismatch("prediction lists must pair up sample by sample")
        hits.extend(fn(p, q) for p, q in zip(r.predictions, r.predictions_base))
    if not hits:
        raise UndefinedMetric("OL undefined: no paired samples")
    return float(np.mean(hits))


def _speedup_cells(records, value, base):
    cells = defaultdict(list)
    for r in records:
        t = getattr(r, value)
        t0 = getattr(r, base)
        if t is None or t0 is None:
            continue
        if t <= 0 or t0 <= 0:
            raise UndefinedMetric(f"nonpositive timing in {r.benchmark!r}")
        cells[(r.model, r.benchmark)].append(t0 / t)
    return {k: float(np.mean(v)) for k, v in cells.items()}


def efficiency(records):
    """OE plus per-phase speedups; returns (oe, ttft_speedup, decode_speedup)."""
    total = _speedup_cells(records, "t_total", "t_total_base")
    if not total:
        raise UndefinedMetric("OE undefined: no timings")
    oe = float(np.mean(list(total.values())))
    ttft = _speedup_cells(records, "ttft", "ttft_base")
    ttft_speedup = float(np.mean(list(ttft.values()))) if ttft else None
    decode = defaultdict(list)
    for r in records:
        if None in (r.t_total, r.ttft, r.t_total_base, r.ttft_base):
            continue
        d, d0 = r.t_total - r.ttft, r.t_total_base - r.ttft_base
        if d > 0 and d0 > 0:
            decode[(r.model, r.benchmark)].append(d0 / d)
    decode_speedup = (
        float(np.mean([np.mean(v) for v in decode.values()])) if decode else None
    )
    return oe, ttft_speedup, decode_speedup


@dataclass
class MetricReport:
    op: dict          # {(model, method, budget): OP}
    og: dict          # {(method, budget): OG}
    ol: dict          # {(method, budget): OL}
    oe: dict          # {(method, budget): (OE, ttft, decode)}
    ratios: list      # rows (method, budget, model, benchmark, ratio)
    conventions: dict = field(default_factory=lambda: dict(METRIC_CONVENTIONS))

    def to_json_dict(self):
        return {
            "conventions": self.conventions,
            "op": [
                {"model": m, "method": c, "budget": b, "value": v}
                for (m, c, b), v in sorted(self.op.items())
            ],
            "og": [
                {"method": c, "budget": b, "value": v}
                for (c, b), v in sorted(self.og.items())
            ],
            "ol": [
                {"method": c, "budget": b, "value": v}
                for (c, b), v in sorted(self.ol.items())
            ],
            "oe": [
                {"method": c, "budget": b, "value": v[0],
                 "ttft_speedup": v[1], "decode_speedup": v[2]}
                for (c, b), v in sorted(self.oe.items())
            ],
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def compute_report(records, agreement="exact"):
    """Aggregate OP/OG/OL/OE over ok-status records grouped by config."""
    ok = [r for r in records if r.status == "ok"]
    by_config = defaultdict(list)
    for r in ok:
        by_config[r.config_id].append(r)
    op, og, ol, oe, ratio_rows = {}, {}, {}, {}, []
    for (method, budget), recs in sorted(by_config.items()):
        by_model = defaultdict(list)
        for r in recs:
            by_model[r.model].append(r)
        for model, mrecs in sorted(by_model.items()):
            op[(model, method, budget)] = overall_performance(mrecs)
        benches = {r.benchmark for r in recs}
        if len(benches) >= 2:
            og[(method, budget)] = generalization(recs)
        if all(r.predictions is not None and r.predictions_base is not None
               for r in recs):
            ol[(method, budget)] = loyalty(recs, agreement=agreement)
        if all(r.t_total is not None and r.t_total_base is not None for r in recs):
            oe[(method, budget)] = efficiency(recs)
        for (m, b), v in sorted(_cell_means(recs).items()):
            ratio_rows.append((method, budget, m, b, v))
    return MetricReport(op, og, ol, oe, ratio_rows)
