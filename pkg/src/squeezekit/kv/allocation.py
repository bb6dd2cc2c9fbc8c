"""Per-layer cache budget allocation.

The uniform per-layer quota is U = max(1, floor(b * l)); a whole-model
budget is U * L rows. ADAPTIVE distributes that total proportionally to a
per-layer density statistic: the minimal fraction of keys covering 99% of
the post-vision attention mass (diffuse layers need more keys, so they
receive more budget, reproducing the front-loaded allocations seen in
layer-adaptive methods). HYBRID(alpha) spreads alpha of every layer's
uniform share evenly and allocates the rest adaptively; PYRAMID decays
linearly from 1.5x to 0.5x of the uniform share.

Every allocation conserves the total exactly, keeps each layer within
[1, l], and force-reserves a recent window of ceil(0.10 * quota) rows.
"""

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig

COVERAGE_MASS = 0.99
RECENT_WINDOW_FRACTION = 0.10


class AllocationMode(str, enum.Enum):
    UNIFORM = "uniform"
    ADAPTIVE = "adaptive"
    HYBRID = "hybrid"
    PYRAMID = "pyramid"


@dataclass
class BudgetAllocation:
    mode: AllocationMode
    fraction: float
    quotas: np.ndarray
    seq_len: int
    alpha: float = None

    @property
    def total(self):
        return int(self.quotas.sum())

    def recent_window(self, layer):
        return max(1, int(np.ceil(RECENT_WINDOW_FRACTION * self.quotas[layer])))


def uniform_layer_quota(b, l):
    return max(1, int(np.floor(b * l)))


def layer_density_stat(trace):
    """Fraction of keys covering 99% of post-vision mass, per layer."""
    stats = []
    l = trace.seq_len
    for li in range(trace.num_layers):
        a = trace.head_mean(li)
        mass = a[trace.l_v:, :].sum(axis=0) if trace.l_t > 0 else a.sum(axis=0)
        total = mass.sum()
        if total <= 0:
            stats.append(1.0)
            continue
        ordered = np.sort(mass)[::-1]
        covered = np.cumsum(ordered)
        count = int(np.searchsorted(covered, COVERAGE_MASS * total) + 1)
        stats.append(count / l)
    return np.asarray(stats)


def _integerize(weights, total, cap):
    """Largest-remainder rounding of total * w / sum(w), then push every
    layer into [1, cap] while conserving the total. Deterministic ties."""
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    w = np.where(np.isfinite(w) & (w > 0), w, 0.0)
    if w.sum() == 0:
        w = np.ones(n)
    raw = total * w / w.sum()
    base = np.floor(raw).astype(np.int64)
    frac = raw - base
    order = np.lexsort((np.arange(n), -frac))
    for i in order[: total - int(base.sum())]:
        base[i] += 1
    # floor at 1
    while True:
        low = np.flatnonzero(base < 1)
        if not len(low):
            break
        donor = int(np.lexsort((np.arange(n), -base))[0])
        base[donor] -= 1
        base[low[0]] += 1
    # cap at the sequence length
    while True:
        over = np.flatnonzero(base > cap)
        if not len(over):
            break
        excess = int((base[over] - cap).sum())
        base[over] = cap
        room = np.flatnonzero(base < cap)
        take = np.lexsort((room, -w[room]))
        for j in range(excess):
            base[room[take[j % len(take)]]] += 1
    return base


def allocate(mode, b, num_layers, trace=None, seq_len=None, alpha=None):
    """Build a BudgetAllocation for the given mode."""
    mode = AllocationMode(mode)
    if not 0.0 < b <= 1.0:
        raise InvalidConfig(f"budget fraction must be in (0, 1], got {b}")
    if num_layers < 2:
        raise InvalidConfig("allocation needs at least 2 layers")
    if seq_len is None:
        if trace is None:
            raise InvalidConfig("allocate needs a trace or an explicit seq_len")
        seq_len = trace.seq_len
    u = uniform_layer_quota(b, seq_len)
    total = u * num_layers

    if mode is AllocationMode.UNIFORM:
        quotas = np.full(num_layers, u, dtype=np.int64)
        return BudgetAllocation(mode, b, quotas, seq_len)

    if mode is AllocationMode.PYRAMID:
        weights = np.linspace(1.5, 0.5, num_layers)
        quotas = _integerize(weights, total, seq_len)
        return BudgetAllocation(mode, b, quotas, seq_len)

    if trace is None:
        raise InvalidConfig(f"{mode.value} allocation needs an attention trace")
    if trace.num_layers != num_layers:
        raise InvalidConfig("trace depth does not match num_layers")
    weights = layer_density_stat(trace)

    if mode is AllocationMode.ADAPTIVE:
        quotas = _integerize(weights, total, seq_len)
        return BudgetAllocation(mode, b, quotas, seq_len)

    # HYBRID(alpha): alpha of each uniform share spread evenly, the rest
    # follows the adaptive statistic. alpha=1 reduces exactly to UNIFORM.
    if alpha is None or not 0.0 <= alpha <= 1.0:
        raise InvalidConfig(f"hybrid allocation needs alpha in [0, 1], got {alpha}")
    floor_each = int(np.floor(alpha * u))
    remainder = total - floor_each * num_layers
    if remainder:
        room = np.full(num_layers, seq_len - floor_each, dtype=np.int64)
        extra = _largest_remainder_zero_floor(weights, remainder, room)
        quotas = floor_each + extra
    else:
        quotas = np.full(num_layers, floor_each, dtype=np.int64)
    while True:  # the global floor of 1 row per layer still applies
        low = np.flatnonzero(quotas < 1)
        if not len(low):
            break
        donor = int(np.lexsort((np.arange(num_layers), -quotas))[0])
        quotas[donor] -= 1
        quotas[low[0]] += 1
    return BudgetAllocation(mode, b, quotas, seq_len, alpha=alpha)


def _largest_remainder_zero_floor(weights, total, room):
    """Largest-remainder rounding with per-layer capacity and floor 0."""
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    w = np.where(np.isfinite(w) & (w > 0), w, 0.0)
    if w.sum() == 0:
        w = np.ones(n)
    raw = total * w / w.sum()
    base = np.minimum(np.floor(raw).astype(np.int64), room)
    frac = raw - np.floor(raw)
    left = total - int(base.sum())
    order = np.lexsort((np.arange(n), -frac))
    while left > 0:
        progressed = False
        for i in order:
            if left == 0:
                break
            if base[i] < room[i]:
                base[i] += 1
                left -= 1
                progressed = True
        if not progressed:
            raise InvalidConfig("budget exceeds total capacity")
    return base
