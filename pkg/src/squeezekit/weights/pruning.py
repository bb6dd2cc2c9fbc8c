"""Post-training weight pruning: Wanda, SparseGPT, EcoFLAP.

Conventions: W is [m, n] acting as y = W x, so column j is coupled to
input feature j and calibration X is [n, samples]. Unstructured masks
keep exactly round(p * m * n) weights: per-output-row quotas (the Wanda
comparison group) with a largest-remainder correction, extra slots going
to the rows whose best excluded weight scores highest. 2:4 masks keep
exactly two weights per contiguous group of four along the input dim.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig, ShapeMismatch

SEMI_2_4 = "2:4"
ECOFLAP_EPS = 1e-2
ECOFLAP_TRIALS = 32


@dataclass
class SparsityMask:
    mask: np.ndarray  # uint8 [m, n], 1 = keep
    pattern: str      # "unstructured" or "2:4"
    keep_fraction: float = None

    @property
    def nnz(self):
        return int(self.mask.sum())


def _check_calib(w, calib):
    if calib.n_features != w.shape[1]:
        raise ShapeMismatch(
            f"calibration features {calib.n_features} != weight columns {w.shape[1]}"
        )


def wanda_scores(w, calib):
    """|W_ij| * ||X_j||_2."""
    _check_calib(w, calib)
    return np.abs(w) * calib.feature_norms()[None, :]


def sparsegpt_scores(w, calib, lam=1e-2):
    """W_ij^2 / [(X X^T + lam I)^{-1}]_jj."""
    _check_calib(w, calib)
    if lam <= 0:
        raise InvalidConfig("sparsegpt damping lam must be > 0")
    h = calib.x @ calib.x.T + lam * np.eye(calib.n_features)
    diag_inv = np.diag(np.linalg.inv(h))
    return w**2 / diag_inv[None, :]


def unstructured_mask(scores, p=None, count=None):
    """Keep the top-p fraction: exactly round(p * m * n) ones (or exactly
    `count` when an integer target is given)."""
    m, n = scores.shape
    if count is None:
        if p is None or not 0.0 < p <= 1.0:
            raise InvalidConfig(f"keep fraction must be in (0, 1], got {p}")
        total = int(np.round(p * m * n))
    else:
        total = int(count)
    total = max(min(total, m * n), 0)
    base = min(total // m, n)
    mask = np.zeros((m, n), dtype=np.uint8)
    order = np.argsort(-scores, axis=1, kind="stable")
    for i in range(m):
        mask[i, order[i, :base]] = 1
    extra = total - base * m
    if extra > 0:
        nxt = scores[np.arange(m), order[:, base]] if base < n else np.full(m, -np.inf)
        rows = np.lexsort((np.arange(m), -nxt))[:extra]
        for i in rows:
            mask[i, order[i, base]] = 1
    return SparsityMask(mask, "unstructured", keep_fraction=p)


def semi24_mask(scores):
    """Exactly 2 kept per contiguous group of 4 along the input dim."""
    m, n = scores.shape
    if n % 4 != 0:
        raise InvalidConfig("2:4 sparsity needs the input dim divisible by 4")
    g = scores.reshape(m, n // 4, 4)
    order = np.argsort(-g, axis=2, kind="stable")
    mask = np.zeros_like(g, dtype=np.uint8)
    np.put_along_axis(mask, order[:, :, :2], 1, axis=2)
    return SparsityMask(mask.reshape(m, n), SEMI_2_4, keep_fraction=0.5)


def wanda_prune(w, calib, pattern, p=None, count=None):
    """Mask W by Wanda scores; returns (pruned W, SparsityMask)."""
    scores = wanda_scores(w, calib)
    mask = semi24_mask(scores) if pattern == SEMI_2_4 \
        else unstructured_mask(scores, p, count=count)
    return w * mask.mask, mask


def _upper_cholesky_of_inverse(h):
    """U upper-triangular with H^{-1} = U^T U (the compensation operator)."""
    h_inv = np.linalg.inv(h)
    return np.linalg.cholesky(h_inv).T


def sparsegpt_prune(w, calib, pattern, p=None, lam=1e-2):
    """Column-sequential pruning with second-order error compensation.

    Unstructured masks are fixed up front from the inverse-Hessian scores
    (the global cardinality contract must hold exactly); 2:4 masks are
    chosen group-by-group inside the sweep from the compensated weights.
    Returns (compensated pruned W, SparsityMask).
    """
    _check_calib(w, calib)
    if lam <= 0:
        raise InvalidConfig("sparsegpt damping lam must be > 0")
    m, n = w.shape
    h = calib.x @ calib.x.T + lam * np.eye(n)
    u = _upper_cholesky_of_inverse(h)
    diag_inv = np.diag(np.linalg.inv(h))

    work = w.astype(np.float64).copy()
    if pattern == SEMI_2_4:
        if n % 4 != 0:
            raise InvalidConfig("2:4 sparsity needs the input dim divisible by 4")
        mask = np.ones((m, n), dtype=np.uint8)
    else:
        mask = unstructured_mask(sparsegpt_scores(w, calib, lam), p).mask

    out = work.copy()
    for j in range(n):
        if pattern == SEMI_2_4 and j % 4 == 0:
            block_scores = work[:, j:j + 4] ** 2 / diag_inv[j:j + 4][None, :]
            order = np.argsort(-block_scores, axis=1, kind="stable")
            block_mask = np.zeros((m, 4), dtype=np.uint8)
            np.put_along_axis(block_mask, order[:, :2], 1, axis=1)
            mask[:, j:j + 4] = block_mask
        col = work[:, j].copy()
        kept = mask[:, j].astype(bool)
        q = np.where(kept, col, 0.0)
        out[:, j] = q
        err = (col - q) / u[j, j]
        if j + 1 < n:
            work[:, j + 1:] -= np.outer(err, u[j, j + 1:])
    sp = SparsityMask(mask, SEMI_2_4 if pattern == SEMI_2_4 else "unstructured",
                      keep_fraction=0.5 if pattern == SEMI_2_4 else p)
    return out, sp


def reconstruction_error(w, w_hat, calib):
    """||W X - W_hat X||_F on the calibration set."""
    return float(np.linalg.norm((w - w_hat) @ calib.x))


def zo_gradient_norm(loss_fn, w, eps=ECOFLAP_EPS, trials=ECOFLAP_TRIALS, rng=None):
    """Expected zeroth-order gradient magnitude of loss_fn at w.

    Estimates E_z |(L(w + eps z) - L(w - eps z)) / (2 eps)| with z drawn
    standard normal per trial; the data expectation belongs inside
    loss_fn (it sees the full perturbed parameter).
    """
    if eps <= 1e-12:
        raise InvalidConfig("zeroth-order eps below numeric floor")
    if trials < 1:
        raise InvalidConfig("need at least one trial")
    rng = np.random.default_rng(0) if rng is None else rng
    w = np.asarray(w, dtype=np.float64)
    acc = 0.0
    for _ in range(trials):
        z = rng.standard_normal(w.shape)
        acc += abs(loss_fn(w + eps * z) - loss_fn(w - eps * z)) / (2.0 * eps)
    return acc / trials


def next_token_loss(model, seqs):
    """Mean next-token cross-entropy of the toy model over sequences."""
    from ..sim.model import prefill

    total, count = 0.0, 0
    for seq in seqs:
        logits = prefill(model, seq).logits
        ids = seq.ids
        valid = np.flatnonzero(ids[1:] >= 0)  # skip synthetic next-tokens
        if not len(valid):
            continue
        lg = logits[valid]
        lg = lg - lg.max(axis=1, keepdims=True)
        logz = np.log(np.exp(lg).sum(axis=1))
        total += float(np.sum(logz - lg[np.arange(len(valid)), ids[1:][valid]]))
        count += len(valid)
    return total / max(count, 1)


def ecoflap_layer_scores(model, seqs, eps=ECOFLAP_EPS, trials=ECOFLAP_TRIALS, seed=0):
    """Per-layer importance via the zeroth-order estimator.

    Each trial perturbs every projection of one transformer block with
    an independent Gaussian direction and differences the next-token
    loss on the calibration sequences.
    """
    rng = np.random.default_rng(seed)
    scores = []
    for li in range(model.config.num_layers):
        names = list(model.layers[li].named(li).keys())
        shapes = {nm: model.weight_tensors()[nm].shape for nm in names}

        def loss_with_offsets(offsets):
            named = {
                nm: model.weight_tensors()[nm] + offsets[nm] for nm in names
            }
            return next_token_loss(model.clone_with_weights(named), seqs)

        acc = 0.0
        for _ in range(trials):
            zs = {nm: rng.standard_normal(shapes[nm]) for nm in names}
            plus = loss_with_offsets({nm: eps * z for nm, z in zs.items()})
            minus = loss_with_offsets({nm: -eps * z for nm, z in zs.items()})
            acc += abs(plus - minus) / (2.0 * eps)
        scores.append(acc / trials)
    return np.asarray(scores)


def ecoflap_keep_fractions(layer_scores, p, temperature=1.0, layer_sizes=None):
    """Importance -> per-layer keep fractions hitting global density p.

    Softmax-tempered tilt on standardized scores, then water-filling so
    no layer exceeds keep fraction 1 while the weighted mean stays p.
    """
    if not 0.0 < p <= 1.0:
        raise InvalidConfig(f"global keep fraction must be in (0, 1], got {p}")
    s = np.asarray(layer_scores, dtype=np.float64)
    L = len(s)
    sizes = np.ones(L) if layer_sizes is None else np.asarray(layer_sizes, np.float64)
    std = s.std()
    z = np.zeros(L) if std == 0 else (s - s.mean()) / std
    tilt = np.exp(z / temperature)
    weights = sizes / sizes.sum()
    keep = p * tilt / float((weights * tilt).sum())
    # water-fill the clipped surplus back into unclipped layers
    for _ in range(L):
        over = keep > 1.0
        if not over.any():
            break
        surplus = float((weights[over] * (keep[over] - 1.0)).sum())
        keep[over] = 1.0
        free = ~over
        if not free.any() or surplus <= 0:
            break
        keep[free] += surplus * keep[free] / max(float((weights[free] * keep[free]).sum()), 1e-300)
    return np.clip(keep, 1e-9, 1.0)


def ecoflap_prune(model, seqs, p, calib, temperature=1.0,
                  eps=ECOFLAP_EPS, trials=ECOFLAP_TRIALS, seed=0, pattern=None):
    """Coarse layer allocation then Wanda locally; returns (model, masks)."""
    scores = ecoflap_layer_scores(model, seqs, eps=eps, trials=trials, seed=seed)
    sizes = [sum(w.size for w in model.layers[li].named(li).values())
             for li in range(model.config.num_layers)]
    if pattern == SEMI_2_4:
        keep = np.full(len(scores), 0.5)
    else:
        keep = ecoflap_keep_fractions(scores, p, temperature, sizes)
    # exact integer targets per tensor (largest remainder over all tensors)
    names, raw = [], []
    for li in range(model.config.num_layers):
        for name, w in model.layers[li].named(li).items():
            names.append(name)
            raw.append(keep[li] * w.size)
    raw = np.asarray(raw)
    targets = np.floor(raw).astype(np.int64)
    want = int(np.round(p * sum(sizes))) if pattern != SEMI_2_4 else None
    if want is not None:
        frac = raw - targets
        order = np.lexsort((np.arange(len(raw)), -frac))
        short = want - int(targets.sum())
        for i in order[:max(short, 0)]:
            targets[i] += 1
    new_named, masks = {}, {}
    for i, name in enumerate(names):
        w = model.weight_tensors()[name]
        if pattern == SEMI_2_4:
            pruned, mask = wanda_prune(w.T, calib[name], SEMI_2_4)
        else:
            pruned, mask = wanda_prune(w.T, calib[name], "unstructured",
                                       count=int(targets[i]))
        new_named[name] = pruned.T
        masks[name] = mask
    return model.clone_with_weights(new_named), masks, scores, keep
