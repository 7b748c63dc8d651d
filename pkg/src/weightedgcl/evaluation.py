"""Full-ranking top-K evaluation: Recall@K and NDCG@K averaged over users.

Every unmasked item is ranked (no sampled candidates).  Ties break by
ascending item id so independent implementations agree exactly.  Users
with an empty relevant set are excluded from the averages.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, interactions_by_user


@dataclass(frozen=True)
class EvalReport:
    """Per-K (recall, ndcg) means plus the number of users averaged over."""

    metrics: dict            # K -> (recall, ndcg)
    num_evaluated_users: int

    def to_json(self) -> str:
        payload = {str(k): {"recall": r, "ndcg": n} for k, (r, n) in sorted(self.metrics.items())}
        payload["users"] = self.num_evaluated_users
        return json.dumps(payload, indent=2)


def rank_items(f: np.ndarray, user: int, masked_items, num_users: int) -> np.ndarray:
    """All items ordered by descending score f_u . f_i, ties by ascending id.

    ``masked_items`` (typically the user's training interactions) never
    appear in the output.
    """
    scores = f[:, num_users:].T @ f[:, user]
    candidates = np.arange(scores.shape[0], dtype=np.int64)
    masked = np.asarray(sorted(masked_items), dtype=np.int64)
    if masked.size:
        keep = np.ones(scores.shape[0], dtype=bool)
        keep[masked] = False
        candidates = candidates[keep]
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order]


def recall_at_k(ranked, relevant: set, k: int) -> float:
    """|top-K intersect relevant| / |relevant|."""
    hits = sum(1 for item in ranked[:k] if item in relevant)
    return hits / len(relevant)


def ndcg_at_k(ranked, relevant: set, k: int) -> float:
    """Binary-gain NDCG: hits discounted by 1/log2(rank+1), divided by the
    ideal prefix sum over min(K, |relevant|) positions."""
    dcg = sum(1.0 / math.log2(pos + 2) for pos, item in enumerate(ranked[:k]) if item in relevant)
    idcg = sum(1.0 / math.log2(pos + 2) for pos in range(min(k, len(relevant))))
    return dcg / idcg


def evaluate(f: np.ndarray, ds: Dataset, phase: str, ks=(10, 20)) -> EvalReport:
    """Mean Recall@K / NDCG@K over users with a non-empty ``phase`` set.

    Validation masks each user's train items; test masks train and val
    items (held-out leak prevention).  Users are visited in ascending id
    order so the reduction is reproducible.
    """
    if phase not in ("val", "test"):
        raise ValueError(f"phase must be 'val' or 'test', got {phase!r}")
    train_by_user = interactions_by_user(ds.train)
    val_by_user = interactions_by_user(ds.val)
    relevant_by_user = val_by_user if phase == "val" else interactions_by_user(ds.test)

    sums = {k: [0.0, 0.0] for k in ks}
    n_users = 0
    for u in range(ds.num_users):
        relevant = relevant_by_user.get(u)
        if not relevant:
            continue
        masked = set(train_by_user.get(u, ()))
        if phase == "test":
            masked |= val_by_user.get(u, set())
        ranked = rank_items(f, u, masked, ds.num_users)
        n_users += 1
        for k in ks:
            sums[k][0] += recall_at_k(ranked, relevant, k)
            sums[k][1] += ndcg_at_k(ranked, relevant, k)

    if n_users == 0:
        return EvalReport({k: (0.0, 0.0) for k in ks}, 0)
    return EvalReport({k: (sums[k][0] / n_users, sums[k][1] / n_users) for k in ks}, n_users)
