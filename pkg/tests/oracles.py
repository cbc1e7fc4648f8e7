"""Independent brute-force oracles used by the test suite.

These deliberately re-derive every answer by the most literal method
available (explicit transitive closure, full sorts, per-rank scans) and
share no code with the implementations they check.
"""

import numpy as np


def dbscan_oracle(dist, eps, min_pts):
    """Classify points by explicit density-reachability closure.

    Returns (core mask, list of core-point index frozensets = clusters,
    border mask, noise mask). Border points are non-core points within
    eps of at least one core point; which cluster claims them is
    order-dependent and deliberately left open here.
    """
    dist = np.asarray(dist)
    n = dist.shape[0]
    within = dist <= eps
    core = within.sum(axis=1) >= min_pts

    # transitive closure of core-core adjacency by boolean matrix powers
    adj = within & core[:, None] & core[None, :]
    np.fill_diagonal(adj, False)
    reach = adj | np.eye(n, dtype=bool)
    while True:
        nxt = reach | (reach @ reach)
        if np.array_equal(nxt, reach):
            break
        reach = nxt

    clusters = []
    seen = np.zeros(n, dtype=bool)
    for i in range(n):
        if core[i] and not seen[i]:
            members = np.flatnonzero(reach[i] & core)
            seen[members] = True
            clusters.append(frozenset(int(m) for m in members))

    border = ~core & (within & core[None, :]).any(axis=1)
    noise = ~core & ~border
    return core, clusters, border, noise


def partition_of_core_points(labels, core):
    """Group core-point indices by their assigned label."""
    out = {}
    for i in np.flatnonzero(core):
        out.setdefault(int(labels[i]), set()).add(int(i))
    return {frozenset(v) for v in out.values()}


def topk_by_full_sort(sims, k, descending=True):
    """Indices of the k best similarities via a full stable sort."""
    keys = -np.asarray(sims) if descending else np.asarray(sims)
    order = sorted(range(len(sims)), key=lambda i: (keys[i], i))
    return order[:k]


def average_precision_oracle(ranked_ids, query_id):
    """Walk the ranking rank by rank, accumulating precision at each hit."""
    hits = 0
    precisions = []
    for rank, gid in enumerate(ranked_ids, start=1):
        if gid == query_id:
            hits += 1
            precisions.append(hits / rank)
    if hits == 0:
        return None
    return sum(precisions) / hits


def cmc_oracle(all_ranked_ids, query_ids, k_max):
    """First-match scan per query, ignoring queries without positives."""
    totals = np.zeros(k_max)
    valid = 0
    for ranked_ids, qid in zip(all_ranked_ids, query_ids):
        first = None
        for rank, gid in enumerate(ranked_ids, start=1):
            if gid == qid:
                first = rank
                break
        if first is None:
            continue
        valid += 1
        for k in range(k_max):
            if first <= k + 1:
                totals[k] += 1
    return totals / valid if valid else None
