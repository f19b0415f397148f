"""Shared initialisation helpers for the streaming estimators.

Both BMM and online EM seed their component locations from the first
``max(10 M, 100)`` rows of the stream, so the two are compared from the same
starting point.
"""

from __future__ import annotations

import numpy as np


def head_size(n_components):
    return max(10 * n_components, 100)


def _sq_dists(points, centers):
    return np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=-1)


def kmeanspp_centers(points, n_centers, rng, n_trials=None):
    """Pick ``n_centers`` rows of ``points`` by greedy k-means++ seeding.

    Each round draws ``n_trials`` candidates with probability proportional to
    the squared distance to the nearest chosen center and keeps the one that
    lowers the total potential most.
    """
    rng = np.random.default_rng(rng)
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n == 0:
        raise ValueError("cannot seed centers from an empty sample")
    if n_trials is None:
        n_trials = 2 + int(np.log(n_centers))
    idx = [int(rng.integers(n))]
    d2 = np.sum((points - points[idx[0]]) ** 2, axis=1)
    for _ in range(1, n_centers):
        total = d2.sum()
        if total <= 0:
            # fewer distinct points than centers
            idx.append(int(rng.integers(n)))
            continue
        cand = rng.choice(n, size=n_trials, p=d2 / total)
        cand_d2 = np.minimum(d2[None, :], _sq_dists(points, points[cand]).T)
        best = int(np.argmin(cand_d2.sum(axis=1)))
        idx.append(int(cand[best]))
        d2 = cand_d2[best]
    return points[idx].copy()


def kmeans(points, n_centers, rng, n_iter=10):
    """Greedy k-means++ followed by ``n_iter`` Lloyd iterations.

    Returns ``(centers, labels)``.  Empty clusters keep their previous center.
    """
    points = np.asarray(points, dtype=float)
    centers = kmeanspp_centers(points, n_centers, rng)
    labels = np.argmin(_sq_dists(points, centers), axis=1)
    for _ in range(n_iter):
        for k in range(n_centers):
            members = points[labels == k]
            if len(members):
                centers[k] = members.mean(axis=0)
        new = np.argmin(_sq_dists(points, centers), axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
    return centers, labels


def data_scale(points):
    """Mean per-coordinate variance of a sample, floored away from zero."""
    points = np.asarray(points, dtype=float)
    if points.shape[0] < 2:
        return 1.0
    s2 = float(np.mean(np.var(points, axis=0)))
    return s2 if s2 > 1e-12 else 1.0


def within_scale(points, centers, labels):
    """Mean per-coordinate residual variance around the assigned centers."""
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    k = len(centers)
    if n <= k:
        return data_scale(points)
    s2 = float(np.sum((points - centers[labels]) ** 2) / ((n - k) * d))
    return s2 if s2 > 1e-12 else data_scale(points)


def seed_locations(head, n_components, rng):
    """Component locations and a per-coordinate variance scale from a data head."""
    head = np.asarray(head, dtype=float)
    centers, labels = kmeans(head, n_components, rng)
    return centers, within_scale(head, centers, labels)
