"""Declarative run specifications.

A run spec is a JSON document with models, task suites, a policy grid and
the shared budget list. `spec_hash` over the canonical form plus the
seeds fully determines every number in the archive.

Schema (informal, validated below):

{
  "seed": 0,
  "jobs": 1,
  "decode_steps": 4,
  "timing": "counters",            # or "wallclock"
  "budgets": [0.01, 0.05, 0.10, 0.20, 0.40],
  "models": [{"name": "toy-a", "num_layers": 3, "num_heads": 4,
               "head_dim": 16, "vocab_size": 512, "seed": 1}],
  "tasks":  [{"name": "needle", "kind": "needle", "samples": 32,
               "seed": 100, "params": {"l_v": 480, "l_t": 32}}],
  "policies": [
    {"family": "token", "method": "fastv", "layer": 2},
    {"family": "kv", "method": "snapkv", "head_adaptive": true},
    {"family": "param", "method": "awq", "bits": 4, "group_size": 128}
  ]
}
"""

import hashlib
import json
from dataclasses import dataclass, field

from ..errors import InvalidConfig
from ..kv.methods import KVMethod, KVPolicySpec, make_policy
from ..pipeline import TokenPolicySpec, make_token_policy
from ..sim.config import ModelConfig
from ..sim.tasks import TaskKind

DEFAULT_BUDGETS = [0.01, 0.05, 0.10, 0.20, 0.40]
PARAM_METHODS = ("wanda", "sparsegpt", "ecoflap", "rtn", "awq", "gptq")
TOKEN_METHODS = ("fastv", "visionzip", "prumerge")


@dataclass
class TaskSuite:
    name: str
    kind: str
    samples: int = 32
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        TaskKind(self.kind)
        if self.samples < 1:
            raise InvalidConfig("task suite needs at least one sample")


@dataclass
class RunSpec:
    models: list
    tasks: list
    policies: list
    budgets: list = field(default_factory=lambda: list(DEFAULT_BUDGETS))
    seed: int = 0
    jobs: int = 1
    decode_steps: int = 4
    timing: str = "counters"
    out: str = None

    def canonical_dict(self):
        return {
            "models": [{"name": n, **c.to_dict()} for n, c in self.models],
            "tasks": [t.__dict__ for t in self.tasks],
            "policies": self.policies,
            "budgets": self.budgets,
            "seed": self.seed,
            "decode_steps": self.decode_steps,
            "timing": self.timing,
        }

    def spec_hash(self):
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _validate_policy(entry):
    family = entry.get("family")
    rest = {k: v for k, v in entry.items() if k != "family"}
    if family == "token":
        if rest.get("method") not in TOKEN_METHODS:
            raise InvalidConfig(f"unknown token method {rest.get('method')!r}")
        make_token_policy(TokenPolicySpec.from_dict({**rest, "budget": 1.0}))
    elif family == "kv":
        KVMethod(rest.get("method"))
        make_policy(KVPolicySpec.from_dict({**rest, "budget": 1.0}))
    elif family == "param":
        if rest.get("method") not in PARAM_METHODS:
            raise InvalidConfig(f"unknown param method {rest.get('method')!r}")
        if rest.get("pattern") not in (None, "unstructured", "2:4"):
            raise InvalidConfig(f"unknown sparsity pattern {rest.get('pattern')!r}")
    else:
        raise InvalidConfig(f"policy family must be token/kv/param, got {family!r}")
    return entry


def load_runspec(data):
    """Build a validated RunSpec from a dict (parsed JSON)."""
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    try:
        models = []
        for m in data.get("models", []):
            name = m.get("name") or f"model-{len(models)}"
            models.append((name, ModelConfig.from_dict(m)))
        if not models:
            raise InvalidConfig("run spec needs at least one model")
        tasks = [
            TaskSuite(
                name=t.get("name") or t["kind"], kind=t["kind"],
                samples=t.get("samples", 32), seed=t.get("seed", 0),
                params=t.get("params", {}),
            )
            for t in data.get("tasks", [])
        ]
        if not tasks:
            raise InvalidConfig("run spec needs at least one task suite")
        policies = [_validate_policy(dict(p)) for p in data.get("policies", [])]
        budgets = [float(b) for b in data.get("budgets", DEFAULT_BUDGETS)]
        for b in budgets:
            if not 0.0 < b <= 1.0:
                raise InvalidConfig(f"budgets must lie in (0, 1], got {b}")
        timing = data.get("timing", "counters")
        if timing not in ("counters", "wallclock"):
            raise InvalidConfig(f"timing must be counters or wallclock, got {timing!r}")
        return RunSpec(
            models=models, tasks=tasks, policies=policies, budgets=budgets,
            seed=int(data.get("seed", 0)), jobs=int(data.get("jobs", 1)),
            decode_steps=int(data.get("decode_steps", 4)), timing=timing,
            out=data.get("out"),
        )
    except KeyError as e:
        raise InvalidConfig(f"run spec missing required key {e}") from None


def load_runspec_file(path):
    with open(path, "r", encoding="utf-8") as f:
        return load_runspec(json.load(f))
