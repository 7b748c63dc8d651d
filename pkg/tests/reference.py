"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (python
loops, dense matrices) and shares no code with the package beyond numpy,
so agreement is evidence rather than tautology.
"""

import math

import numpy as np


def dense_normalized_adjacency(num_users, num_items, edges):
    """D^{-1/2} A D^{-1/2} assembled entry by entry."""
    n = num_users + num_items
    a = np.zeros((n, n))
    for u, i in edges:
        a[u, num_users + i] = 1.0
        a[num_users + i, u] = 1.0
    deg = a.sum(axis=1)
    out = np.zeros_like(a)
    for r in range(n):
        for c in range(n):
            if a[r, c] != 0.0:
                out[r, c] = 1.0 / math.sqrt(deg[r] * deg[c])
    return out


def dense_propagate(dense_adj, view):
    """Column n of the output aggregates neighbor columns, one at a time."""
    d, n = view.shape
    out = np.zeros_like(view)
    for col in range(n):
        for m in range(n):
            if dense_adj[col, m] != 0.0:
                out[:, col] += dense_adj[col, m] * view[:, m]
    return out


def mlp_gate(summary, weights, biases):
    """Node-by-node forward through the exciter ladder."""
    n = summary.shape[1]
    d = weights[-1].shape[0]
    out = np.zeros((d, n))
    for col in range(n):
        h = np.array([summary[0, col]])
        for k, (wk, bk) in enumerate(zip(weights, biases)):
            z = wk @ h + bk
            if k == len(weights) - 1:
                h = 1.0 / (1.0 + np.exp(-z))
            else:
                h = np.where(z > 0.0, z, 0.0)
        out[:, col] = h
    return out


def dense_pipeline(embeddings, weights, biases, edges, num_users, num_items,
                   n_layers, noise_bar, noise_tilde, mode):
    """Monolithic end-to-end recomputation of the forward pass.

    ``noise_bar``/``noise_tilde`` are lists of recorded noise draws (one
    matrix for mode "final", one per layer view for "all", empty for
    "none").
    """
    adj = dense_normalized_adjacency(num_users, num_items, edges)
    views = [embeddings]
    for _ in range(n_layers):
        views.append(dense_propagate(adj, views[-1]))
    f = sum(views) / (n_layers + 1)

    def perturbed(noises):
        if mode == "none":
            return f.copy()
        if mode == "final":
            pviews = views[:-1] + [views[-1] + noises[0]]
        else:
            pviews = [v + nz for v, nz in zip(views, noises)]
        return sum(pviews) / (n_layers + 1)

    out = {"f": f, "f_bar": perturbed(noise_bar), "f_tilde": perturbed(noise_tilde)}
    for tag in ("bar", "tilde"):
        fp = out[f"f_{tag}"]
        s = fp.sum(axis=0, keepdims=True) / fp.shape[0]
        t = mlp_gate(s, weights, biases)
        out[f"s_{tag}"] = s
        out[f"t_{tag}"] = t
        out[f"r_{tag}"] = t * fp
    return out


def central_difference(fn, arr, h=1e-6):
    """Central finite differences of a scalar function over one array."""
    grad = np.zeros_like(arr)
    for idx in np.ndindex(*arr.shape):
        orig = arr[idx]
        arr[idx] = orig + h
        fp = fn()
        arr[idx] = orig - h
        fm = fn()
        arr[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def assert_grads_close(analytic, numeric, rtol=1e-4, floor=1e-8, label=""):
    """Relative comparison with an absolute floor, entry by entry."""
    a = np.asarray(analytic).ravel()
    b = np.asarray(numeric).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    rel = np.abs(a - b) / denom
    worst = float(rel.max())
    assert worst <= rtol, f"{label}: worst relative gradient error {worst:.3e} > {rtol}"


def brute_force_report(f, ds, phase, ks=(10, 20)):
    """Re-derive Recall@K / NDCG@K with python sorting and loops."""
    def items_of(pairs, user):
        return {i for u, i in pairs if u == user}

    per_k = {k: [0.0, 0.0] for k in ks}
    n_users = 0
    ranked_lists = {}
    for u in range(ds.num_users):
        relevant = items_of(ds.val if phase == "val" else ds.test, u)
        if not relevant:
            continue
        masked = items_of(ds.train, u)
        if phase == "test":
            masked |= items_of(ds.val, u)
        scores = {}
        for i in range(ds.num_items):
            if i in masked:
                continue
            scores[i] = float(np.dot(f[:, u], f[:, ds.num_users + i]))
        ranked = sorted(scores, key=lambda i: (-scores[i], i))
        ranked_lists[u] = ranked
        n_users += 1
        for k in ks:
            top = ranked[:k]
            hits = [pos for pos, item in enumerate(top) if item in relevant]
            recall = len(hits) / len(relevant)
            dcg = sum(1.0 / math.log2(pos + 2) for pos in hits)
            idcg = sum(1.0 / math.log2(pos + 2) for pos in range(min(k, len(relevant))))
            per_k[k][0] += recall
            per_k[k][1] += dcg / idcg
    metrics = {k: (v[0] / n_users, v[1] / n_users) if n_users else (0.0, 0.0)
               for k, v in per_k.items()}
    return metrics, n_users, ranked_lists


def random_bipartite(rng, num_users, num_items, p=0.4):
    """Random edge list with every node covered at least once."""
    edges = {(u, i) for u in range(num_users) for i in range(num_items)
             if rng.random() < p}
    for u in range(num_users):
        if not any(e[0] == u for e in edges):
            edges.add((u, int(rng.integers(num_items))))
    for i in range(num_items):
        if not any(e[1] == i for e in edges):
            edges.add((int(rng.integers(num_users)), i))
    return sorted(edges)
