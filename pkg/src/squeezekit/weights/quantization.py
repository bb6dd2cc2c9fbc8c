"""Post-training weight quantization: RTN, AWQ, GPTQ.

All three share one affine grid: per (output row, input group) of
`group_size` consecutive weights, scale = (max - min) / (2^bits - 1),
codes = round((W - min) / scale) clipped to the grid, dequantized value
= scale * code + min. Constant groups store scale 0 and reproduce the
constant exactly.

AWQ folds a per-input-channel scaling t_j = (||X_j|| / geomean)^alpha
into the weights before gridding and searches alpha over a fixed grid
for the lowest ||WX - W_hat X||_F^2; alpha = 0 is plain RTN, so AWQ can
never do worse on its own objective. GPTQ quantizes column by column,
spreading each column's rounding error over not-yet-quantized columns
through the inverse-Hessian Cholesky factor.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidConfig, ShapeMismatch

AWQ_GRID_POINTS = 20


@dataclass(frozen=True)
class QuantSpec:
    bits: int = 4
    group_size: int = 128

    def __post_init__(self):
        if self.bits < 2:
            raise InvalidConfig(f"need at least 2 bits, got {self.bits}")
        if self.group_size < 1:
            raise InvalidConfig("group_size must be positive")

    @property
    def levels(self):
        return (1 << self.bits) - 1


@dataclass
class QuantizedTensor:
    """Integer codes plus per-group affine grid (and the AWQ fold, if any)."""

    spec: QuantSpec
    codes: np.ndarray           # uint16 [m, n]
    scales: np.ndarray          # float64 [m, groups]
    offsets: np.ndarray         # float64 [m, groups]
    col_scale: np.ndarray = None  # float64 [n], AWQ per-channel fold
    meta: dict = field(default_factory=dict)

    def dequantize(self):
        m, n = self.codes.shape
        g = self.spec.group_size
        w = np.empty((m, n), dtype=np.float64)
        for gi in range(self.scales.shape[1]):
            sl = slice(gi * g, min((gi + 1) * g, n))
            w[:, sl] = (self.scales[:, gi:gi + 1] * self.codes[:, sl]
                        + self.offsets[:, gi:gi + 1])
        if self.col_scale is not None:
            w = w / self.col_scale[None, :]
        return w


def _grid_quantize(w, spec):
    """Per-(row, group) min-max affine rounding. Returns codes/scales/offsets."""
    m, n = w.shape
    g = spec.group_size
    groups = (n + g - 1) // g
    codes = np.zeros((m, n), dtype=np.uint16)
    scales = np.zeros((m, groups))
    offsets = np.zeros((m, groups))
    for gi in range(groups):
        sl = slice(gi * g, min((gi + 1) * g, n))
        block = w[:, sl]
        lo = block.min(axis=1)
        hi = block.max(axis=1)
        s = (hi - lo) / spec.levels
        offsets[:, gi] = lo
        scales[:, gi] = s
        safe = np.where(s > 0, s, 1.0)
        c = np.rint((block - lo[:, None]) / safe[:, None])
        codes[:, sl] = np.clip(c, 0, spec.levels).astype(np.uint16)
        codes[:, sl][s == 0] = 0
    return codes, scales, offsets


def rtn_quantize(w, spec=QuantSpec()):
    """Round-to-nearest onto the per-group grid."""
    w = np.asarray(w, dtype=np.float64)
    codes, scales, offsets = _grid_quantize(w, spec)
    qt = QuantizedTensor(spec, codes, scales, offsets)
    return qt.dequantize(), qt


def quant_objective(w, w_hat, calib):
    """||W X - W_hat X||_F^2 on the calibration set."""
    d = (w - w_hat) @ calib.x
    return float(np.sum(d * d))


def awq_quantize(w, calib, spec=QuantSpec(), n_grid=AWQ_GRID_POINTS):
    """Activation-aware grid search over per-channel scaling exponents."""
    w = np.asarray(w, dtype=np.float64)
    if calib.n_features != w.shape[1]:
        raise ShapeMismatch("calibration features != weight columns")
    norms = calib.feature_norms()
    live = norms > 0
    ratios = np.ones_like(norms)
    if live.any():
        geomean = np.exp(np.mean(np.log(norms[live])))
        ratios[live] = norms[live] / geomean
    best = None
    for alpha in np.linspace(0.0, 1.0, n_grid):
        t = ratios**alpha
        deq, qt = rtn_quantize(w * t[None, :], spec)
        w_hat = deq / t[None, :]
        err = quant_objective(w, w_hat, calib)
        if best is None or err < best[0]:
            qt.col_scale = t
            qt.meta["alpha"] = float(alpha)
            best = (err, w_hat, qt)
    err, w_hat, qt = best
    qt.meta["objective"] = err
    return w_hat, qt


def gptq_quantize(w, calib, spec=QuantSpec(), lam=1e-2):
    """Column-wise quantization with Hessian-guided compensation.

    Group grids are fixed when the sweep enters each group (from the
    weights as already compensated); each column's rounding error is
    folded into the columns to its right via the upper Cholesky factor
    of the inverse Hessian. Orthogonal calibration columns make every
    compensation term vanish, reducing GPTQ to plain RTN.
    """
    w = np.asarray(w, dtype=np.float64)
    if calib.n_features != w.shape[1]:
        raise ShapeMismatch("calibration features != weight columns")
    if lam <= 0:
        raise InvalidConfig("gptq damping lam must be > 0")
    m, n = w.shape
    h = calib.x @ calib.x.T + lam * np.eye(n)
    u = np.linalg.cholesky(np.linalg.inv(h)).T

    g = spec.group_size
    groups = (n + g - 1) // g
    work = w.copy()
    out = np.empty_like(w)
    codes = np.zeros((m, n), dtype=np.uint16)
    scales = np.zeros((m, groups))
    offsets = np.zeros((m, groups))
    lo = hi = s = None
    for j in range(n):
        gi = j // g
        if j % g == 0:
            sl = slice(gi * g, min((gi + 1) * g, n))
            block = work[:, sl]
            lo = block.min(axis=1)
            hi = block.max(axis=1)
            s = (hi - lo) / spec.levels
            offsets[:, gi] = lo
            scales[:, gi] = s
        safe = np.where(s > 0, s, 1.0)
        c = np.clip(np.rint((work[:, j] - lo) / safe), 0, spec.levels)
        c[s == 0] = 0
        codes[:, j] = c.astype(np.uint16)
        q = s * c + lo
        out[:, j] = q
        err = (work[:, j] - q) / u[j, j]
        if j + 1 < n:
            work[:, j + 1:] -= np.outer(err, u[j, j + 1:])
    qt = QuantizedTensor(spec, codes, scales, offsets)
    qt.meta["objective"] = quant_objective(w, out, calib)
    return out, qt
