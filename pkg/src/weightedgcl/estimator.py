"""Scikit-learn style estimator over the full pipeline.

``WeightedGCL.fit`` takes raw (user, item) interaction pairs, runs k-core
filtering and the random split internally, trains, and keeps the best
checkpoint; ``recommend``/``predict`` answer in the caller's original id
space.  Hyperparameters follow sklearn conventions (stored verbatim in
``__init__``), so ``get_params``/``set_params``/``clone`` and grid-search
tooling work out of the box.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import Dataset, Interaction, SplitSpec, kcore_filter, split
from .errors import DataError
from .evaluation import evaluate, rank_items
from .graph import build_adjacency, graph_from_dataset
from .training import TrainConfig, clean_aggregate, train_loop


def check_interactions(X) -> list[Interaction]:
    """Validate and normalize interaction input to a deduplicated pair list.

    Accepts any (n, 2) array-like of user/item ids (ints or strings);
    duplicates collapse keeping first occurrence.
    """
    rows = list(X)
    if not rows:
        raise DataError("interaction input is empty")
    seen: dict[Interaction, None] = {}
    for idx, row in enumerate(rows):
        pair = tuple(np.asarray(row).ravel().tolist()) if isinstance(row, np.ndarray) else tuple(row)
        if len(pair) < 2:
            raise DataError(f"row {idx} does not hold a (user, item) pair: {row!r}")
        seen.setdefault(Interaction(pair[0], pair[1]), None)
    return list(seen)


class WeightedGCL(BaseEstimator):
    """Graph-contrastive collaborative filtering recommender.

    Parameters mirror the training configuration; ``variant`` selects the
    perturbation strategy ("wgcl", "all-pert", "no-pert") or the plain
    backbone ("lightgcn").  ``random_state`` seeds the split, the
    initialization, and the sampling/noise stream.
    """

    def __init__(self, embedding_dim=64, n_layers=2, granularity=2, lambda_c=0.1,
                 tau=0.2, reg_weight=1e-4, learning_rate=1e-4, batch_size=4096,
                 max_epochs=500, patience=30, variant="wgcl", cl_pool="batch",
                 k_core=1, split_ratios=(0.8, 0.1, 0.1), random_state=0):
        self.embedding_dim = embedding_dim
        self.n_layers = n_layers
        self.granularity = granularity
        self.lambda_c = lambda_c
        self.tau = tau
        self.reg_weight = reg_weight
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.variant = variant
        self.cl_pool = cl_pool
        self.k_core = k_core
        self.split_ratios = split_ratios
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            embedding_dim=self.embedding_dim,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lambda_c=self.lambda_c,
            tau=self.tau,
            n_layers=self.n_layers,
            reg_weight=self.reg_weight,
            granularity=self.granularity,
            patience=self.patience,
            max_epochs=self.max_epochs,
            seed=self.random_state,
            variant=self.variant,
            cl_pool=self.cl_pool,
        )

    def fit(self, X, y=None):
        """Filter, split, and train on raw (user, item) pairs.

        Returns self; fitted state lives in ``dataset_``, ``params_``,
        ``embeddings_`` (the clean aggregate), and ``history_``.
        """
        interactions = check_interactions(X)
        filtered = kcore_filter(interactions, self.k_core)
        if not filtered:
            raise DataError(f"no interactions survive {self.k_core}-core filtering")
        ds = split(filtered, SplitSpec(tuple(self.split_ratios), self.random_state))
        result = train_loop(ds, self._train_config())

        self.dataset_ = ds
        self.params_ = result.params
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.n_users_ = ds.num_users
        self.n_items_ = ds.num_items
        self._adjacency = build_adjacency(graph_from_dataset(ds))
        self.embeddings_ = clean_aggregate(self._adjacency, result.params, self.n_layers)
        self._item_backward = {v: k for k, v in ds.item_forward.items()}
        return self

    def _require_fitted(self):
        if not hasattr(self, "embeddings_"):
            raise NotFittedError("this WeightedGCL instance is not fitted yet; call fit first")

    def predict(self, X) -> np.ndarray:
        """Preference scores for (user, item) pairs in original id space.

        Pairs whose user or item fell out during filtering score 0.
        """
        self._require_fitted()
        ds: Dataset = self.dataset_
        out = np.zeros(len(list(X)) if not hasattr(X, "__len__") else len(X))
        for row_idx, row in enumerate(X):
            u, i = tuple(row)[:2]
            cu, ci = ds.user_forward.get(u), ds.item_forward.get(i)
            if cu is None or ci is None:
                continue
            out[row_idx] = float(self.embeddings_[:, cu] @ self.embeddings_[:, self.n_users_ + ci])
        return out

    def recommend(self, user, n_items: int = 10, exclude_seen: bool = True) -> list:
        """Top-N original item ids for one original user id."""
        self._require_fitted()
        ds: Dataset = self.dataset_
        cu = ds.user_forward.get(user)
        if cu is None:
            raise DataError(f"unknown user {user!r} (absent or filtered out)")
        masked = set()
        if exclude_seen:
            masked = {i for u, i in ds.train if u == cu}
            masked |= {i for u, i in ds.val if u == cu}
            masked |= {i for u, i in ds.test if u == cu}
        ranked = rank_items(self.embeddings_, cu, masked, self.n_users_)
        return [self._item_backward[int(i)] for i in ranked[:n_items]]

    def score(self, X=None, y=None) -> float:
        """Recall@20 on the internal held-out test split (X, y ignored)."""
        self._require_fitted()
        report = evaluate(self.embeddings_, self.dataset_, "test", ks=(20,))
        return report.metrics[20][0]
