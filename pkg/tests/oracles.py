"""Independent reference implementations used to check the fast paths.

Everything here is written for clarity over speed and stays deliberately
separate from the library code: a naive quadratic DBSCAN, exhaustive
simple-path enumeration, a per-pixel splat renderer, and a two-pass
mean/std recomputation.
"""

import math

import numpy as np


def naive_dbscan(positions, eps, min_pts):
    """Textbook queue-based DBSCAN over a full distance matrix.

    Returns (clusters, noise) exactly like the library: border points join
    the first cluster (in seed index order) that reaches them.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    if n == 0:
        return [], np.array([], dtype=np.intp)
    d = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    neighbors = [np.flatnonzero(d[i] <= eps) for i in range(n)]
    core = [len(nb) >= min_pts for nb in neighbors]
    label = [-1] * n
    cid = 0
    for seed in range(n):
        if label[seed] != -1 or not core[seed]:
            continue
        label[seed] = cid
        queue = [seed]
        while queue:
            q = queue.pop(0)
            for nb in neighbors[q]:
                if label[nb] == -1:
                    label[nb] = cid
                    if core[nb]:
                        queue.append(nb)
        cid += 1
    clusters = [np.flatnonzero(np.array(label) == c) for c in range(cid)]
    noise = np.flatnonzero(np.array(label) == -1)
    return clusters, noise


def cluster_signature(clusters):
    """Order-free representation: a sorted tuple of sorted member tuples."""
    return tuple(sorted(tuple(sorted(int(i) for i in c)) for c in clusters))


def all_simple_paths(adjacency, source, targets):
    """Every loop-free path from source to any target, by DFS."""
    out = []
    stack = [(source, (source,))]
    while stack:
        node, path = stack.pop()
        if node in targets:
            out.append(path)
        for nxt in adjacency.get(node, ()):
            if nxt not in path:
                stack.append((nxt, path + (nxt,)))
    return out


def brute_force_k_paths(adjacency, costs, source, targets, m):
    """Reference ranking: enumerate, drop infinite-cost vertices, sort by
    (total vertex cost, length, lexicographic ids), take the first m."""
    finite = {v for v, c in costs.items() if math.isfinite(c)}
    if source not in finite:
        return []
    adj = {u: [v for v in vs if v in finite]
           for u, vs in adjacency.items() if u in finite}
    paths = all_simple_paths(adj, source, set(targets) & finite)
    ranked = sorted(paths, key=lambda p: (sum(costs[v] for v in p), len(p), p))
    return [(tuple(p), sum(costs[v] for v in p)) for p in ranked[:m]]


def render_oracle(positions, camera_pose, K, image_size, splat_side):
    """Per-pixel exhaustive splat render.

    For every pixel, test every point's projected square; the nearest
    covering point wins, ties to the lowest index. Returns (index_map,
    coverage) matching the library renderer's semantics exactly.
    """
    H, W = image_size
    pts_cam = camera_pose.transform_inverse(np.asarray(positions, dtype=np.float64))
    fx, fy, cx, cy = K[0, 0], K[1, 1], K[0, 2], K[1, 2]
    index_map = np.full((H, W), -1, dtype=np.int64)
    n = len(positions)
    projected = []
    for i in range(n):
        x, y, z = pts_cam[i]
        if z <= 0.0:
            projected.append(None)
            continue
        u = fx * x / z + cx
        v = fy * y / z + cy
        hu = (splat_side / 2.0) * fx / z
        hv = (splat_side / 2.0) * fy / z
        projected.append((u, v, hu, hv, z))
    for row in range(H):
        for col in range(W):
            best = None
            for i in range(n):
                if projected[i] is None:
                    continue
                u, v, hu, hv, z = projected[i]
                if (u - hu) <= col <= (u + hu) and (v - hv) <= row <= (v + hv):
                    if best is None or z < best[0] or (z == best[0] and i < best[1]):
                        best = (z, i)
            if best is not None:
                index_map[row, col] = best[1]
    coverage = np.bincount(index_map[index_map >= 0].ravel(), minlength=n)
    return index_map, coverage.astype(np.int64)


def two_pass_mean_std(samples):
    """Streaming two-pass mean and unbiased std over axis 0, accumulated in
    plain left-to-right order (elementwise IEEE adds, no numpy reductions)."""
    T = samples.shape[0]
    mean = np.zeros(samples.shape[1:])
    for t in range(T):
        mean = mean + samples[t]
    mean = mean / T
    acc = np.zeros(samples.shape[1:])
    for t in range(T):
        diff = samples[t] - mean
        acc = acc + diff * diff
    return mean, np.sqrt(acc / (T - 1))
