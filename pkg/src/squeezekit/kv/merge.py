"""Evicted-row merging.

MERGE_INTO_RETAINED folds every evicted K/V row into its nearest retained
row (weighted average, equal weights by default). MODALITY_SPECIFIC is
the same mechanics with targets restricted to the evicted row's own
modality; evicted rows of a modality with no retained target are dropped
and flagged. CONCAT_CENTROIDS clusters the evicted rows and appends the
cluster centroids as synthetic cache rows instead (the cache grows by k).
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from ..cluster import farthest_point_init, kmeans
from ..errors import InvalidConfig

CONCAT_K_DIVISOR = 6.4


class MergeStrategy(str, enum.Enum):
    NONE = "none"
    MERGE_INTO_RETAINED = "merge_into_retained"
    CONCAT_CENTROIDS = "concat_centroids"
    MODALITY_SPECIFIC = "modality_specific"


@dataclass
class MergePlan:
    strategy: MergeStrategy
    assignments: list = field(default_factory=list)  # (evicted_idx, target_idx)
    dropped: list = field(default_factory=list)
    cluster_members: list = field(default_factory=list)  # for CONCAT, per centroid


def build_plan(strategy, evicted, retained, keys, modality=None, k=None):
    """Assignment plan for one (layer, head).

    keys: [l, d] original key rows (used for nearest-target matching and
    clustering). modality: uint8 [l], required for MODALITY_SPECIFIC.
    """
    strategy = MergeStrategy(strategy)
    plan = MergePlan(strategy)
    evicted = np.asarray(evicted, dtype=np.int64)
    retained = np.asarray(retained, dtype=np.int64)
    if strategy is MergeStrategy.NONE or not len(evicted):
        return plan

    if strategy is MergeStrategy.CONCAT_CENTROIDS:
        if k is None or k < 0:
            raise InvalidConfig("concat merging needs a centroid count k >= 0")
        k = min(int(k), len(evicted))
        if k:
            pts = keys[evicted]
            init = farthest_point_init(pts, k)
            _, assign = kmeans(pts, k, init_indices=init)
            plan.cluster_members = [
                [int(j) for j in evicted[assign == c]] for c in range(k)
            ]
        return plan

    def nearest(src_rows, target_ids):
        d2 = ((keys[src_rows][:, None, :] - keys[target_ids][None, :, :]) ** 2).sum(axis=2)
        return target_ids[np.argmin(d2, axis=1)]

    if strategy is MergeStrategy.MERGE_INTO_RETAINED:
        if not len(retained):
            plan.dropped = [int(j) for j in evicted]
            return plan
        tgt = nearest(evicted, retained)
        plan.assignments = [(int(e), int(t)) for e, t in zip(evicted, tgt)]
        return plan

    if strategy is MergeStrategy.MODALITY_SPECIFIC:
        if modality is None:
            raise InvalidConfig("modality-specific merging needs modality tags")
        for tag in np.unique(modality[evicted]):
            ev = evicted[modality[evicted] == tag]
            targets = retained[modality[retained] == tag]
            if not len(targets):
                plan.dropped.extend(int(j) for j in ev)
                continue
            tgt = nearest(ev, targets)
            plan.assignments.extend((int(e), int(t)) for e, t in zip(ev, tgt))
        plan.assignments.sort()
        return plan

    raise InvalidConfig(f"unknown merge strategy {strategy!r}")  # pragma: no cover


def apply_plan(plan, keys, values, retained, weighting="equal", scores=None):
    """Merged (keys, values, extra_keys, extra_values) for one head.

    keys/values: [l, d] original rows; retained: the head's retained
    indices. Rows without assignees are returned bit-identical.
    """
    retained = np.asarray(retained, dtype=np.int64)
    new_k = keys[retained].copy()
    new_v = values[retained].copy()
    extra_k = extra_v = None

    if plan.strategy in (MergeStrategy.MERGE_INTO_RETAINED,
                         MergeStrategy.MODALITY_SPECIFIC) and plan.assignments:
        row_of = {int(t): i for i, t in enumerate(retained)}
        groups = {}
        for e, t in plan.assignments:
            groups.setdefault(t, []).append(e)
        for t, members in sorted(groups.items()):
            rows = np.concatenate([[t], members])
            if weighting == "equal":
                w = np.ones(len(rows))
            elif weighting == "score":
                if scores is None:
                    raise InvalidConfig("score weighting needs a score vector")
                w = np.maximum(np.asarray(scores)[rows], 1e-12)
            else:
                raise InvalidConfig(f"unknown merge weighting {weighting!r}")
            i = row_of[t]
            new_k[i] = (w[:, None] * keys[rows]).sum(axis=0) / w.sum()
            new_v[i] = (w[:, None] * values[rows]).sum(axis=0) / w.sum()
    elif plan.strategy is MergeStrategy.CONCAT_CENTROIDS and plan.cluster_members:
        extra_k = np.vstack([keys[m].mean(axis=0) for m in plan.cluster_members])
        extra_v = np.vstack([values[m].mean(axis=0) for m in plan.cluster_members])
    return new_k, new_v, extra_k, extra_v
