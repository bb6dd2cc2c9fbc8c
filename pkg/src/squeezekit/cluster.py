"""Deterministic k-means used for token recycling and cache merges.

Initialization is farthest-point: the first center is the point with the
highest priority (ties: lowest index), each next center maximizes the
minimum distance to the chosen set. Lloyd iterations break assignment
ties toward the lower center index and keep a center in place when its
cluster empties, so results are reproducible bit-for-bit.
"""

import numpy as np


def farthest_point_init(points, k, priority=None):
    """Indices of k initial centers."""
    n = len(points)
    k = min(k, n)
    if priority is None:
        priority = np.zeros(n)
    chosen = [int(np.lexsort((np.arange(n), -np.asarray(priority)))[0])]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        nxt = int(np.lexsort((np.arange(n), -d2))[0])
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return np.asarray(chosen, dtype=np.int64)


def kmeans(points, k, init_indices=None, priority=None, max_iter=20):
    """Lloyd's algorithm; returns (centroids [k, d], assignment [n])."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    k = min(k, n)
    if init_indices is None:
        init_indices = farthest_point_init(points, k, priority)
    centers = points[np.asarray(init_indices[:k])].copy()
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)  # argmin takes the lowest index on ties
        if np.array_equal(new_assign, assign) and _ > 0:
            break
        assign = new_assign
        for c in range(k):
            members = points[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return centers, assign
