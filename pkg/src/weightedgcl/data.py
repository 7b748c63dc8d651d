"""Interaction ingestion, k-core filtering, and the random 8:1:1 split.

Raw input is a UTF-8 TSV with one ``<user>\\t<item>`` pair per line (extra
columns ignored, ``#`` lines skipped).  Ratings and timestamps are never
read: the model consumes implicit feedback only, and duplicate pairs
collapse to one because the interaction graph is unweighted.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConfigError, DataError, ParseError


class Interaction(NamedTuple):
    """A single user-item interaction.

    Ids are opaque strings before id-mapping and contiguous non-negative
    integers afterwards (users in [0, num_users), items in [0, num_items)).
    """

    user: object
    item: object


@dataclass(frozen=True)
class SplitSpec:
    """Fractions and seed for the random train/val/test split."""

    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise ConfigError(f"split ratios must be three non-negative fractions, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-12:
            raise ConfigError(f"split ratios must sum to 1, got {self.ratios}")


@dataclass(frozen=True)
class Dataset:
    """Filtered, id-mapped interactions partitioned into train/val/test.

    ``user_forward``/``item_forward`` map original ids to contiguous ids;
    they cover every id in the filtered set, so val/test never reference an
    unmapped node.  Instances are immutable and safe for concurrent reads.
    """

    num_users: int
    num_items: int
    train: list[Interaction]
    val: list[Interaction]
    test: list[Interaction]
    user_forward: dict = field(repr=False)
    item_forward: dict = field(repr=False)

    def all_interactions(self) -> list[Interaction]:
        return list(self.train) + list(self.val) + list(self.test)


def load_interactions(path: str | os.PathLike) -> list[Interaction]:
    """Read and deduplicate raw interactions, preserving first occurrence.

    Raises ParseError (with the line number) on a line without a tab and
    DataError when the file yields no interactions.
    """
    seen: dict[Interaction, None] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2 or not parts[0] or not parts[1]:
                raise ParseError(f"{path}: malformed line {lineno}: expected '<user>\\t<item>'")
            seen.setdefault(Interaction(parts[0], parts[1]), None)
    if not seen:
        raise DataError(f"{path}: no interactions found")
    return list(seen)


def kcore_filter(interactions: list[Interaction], k: int) -> list[Interaction]:
    """Iteratively drop users/items with degree < k until a fixpoint.

    The result is the maximal sub-table in which every surviving user and
    item has at least k interactions; k=1 is the identity on deduplicated
    input.  An empty result is valid.
    """
    if k < 1:
        raise ConfigError(f"k-core threshold must be >= 1, got {k}")
    current = list(interactions)
    while True:
        user_deg: dict = {}
        item_deg: dict = {}
        for u, i in current:
            user_deg[u] = user_deg.get(u, 0) + 1
            item_deg[i] = item_deg.get(i, 0) + 1
        kept = [iv for iv in current if user_deg[iv.user] >= k and item_deg[iv.item] >= k]
        if len(kept) == len(current):
            return kept
        current = kept


def split(interactions: list[Interaction], spec: SplitSpec) -> Dataset:
    """Globally shuffle under ``spec.seed`` and cut into train/val/test.

    Id maps are built over the full filtered set (first-occurrence order)
    before splitting, so every val/test id resolves.  First floor(r0*n)
    shuffled pairs become train, the next floor(r1*n) val, the rest test.
    Deterministic for a fixed (input, seed).
    """
    if not interactions:
        raise DataError("cannot split an empty interaction list")
    user_forward: dict = {}
    item_forward: dict = {}
    for u, i in interactions:
        if u not in user_forward:
            user_forward[u] = len(user_forward)
        if i not in item_forward:
            item_forward[i] = len(item_forward)
    mapped = [Interaction(user_forward[u], item_forward[i]) for u, i in interactions]

    n = len(mapped)
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = math.floor(spec.ratios[0] * n)
    n_val = math.floor(spec.ratios[1] * n)
    train = [mapped[j] for j in order[:n_train]]
    val = [mapped[j] for j in order[n_train:n_train + n_val]]
    test = [mapped[j] for j in order[n_train + n_val:]]
    return Dataset(
        num_users=len(user_forward),
        num_items=len(item_forward),
        train=train,
        val=val,
        test=test,
        user_forward=user_forward,
        item_forward=item_forward,
    )


def compute_sparsity(num_users: int, num_items: int, num_interactions: int) -> float:
    """1 - interactions / (users * items), as a fraction in [0, 1]."""
    if num_users <= 0 or num_items <= 0:
        raise DataError("sparsity undefined for empty user or item set")
    return 1.0 - num_interactions / (num_users * num_items)


def sparsity_percent(sparsity: float) -> str:
    """Render a sparsity fraction to 5 decimal places as a percentage."""
    return f"{sparsity * 100:.3f}%"


def dataset_stats(ds: Dataset) -> tuple[int, int, int, float]:
    """(num_users, num_items, num_interactions, sparsity) over all splits."""
    n = len(ds.train) + len(ds.val) + len(ds.test)
    return ds.num_users, ds.num_items, n, compute_sparsity(ds.num_users, ds.num_items, n)


def interactions_by_user(interactions: Iterable[Interaction]) -> dict[int, set[int]]:
    """Group mapped interactions into per-user item sets."""
    out: dict[int, set[int]] = {}
    for u, i in interactions:
        out.setdefault(u, set()).add(i)
    return out


_SPLIT_FILES = {"train": "train.tsv", "val": "val.tsv", "test": "test.tsv"}


def save_dataset(ds: Dataset, out_dir: str | os.PathLike) -> None:
    """Persist the split as three contiguous-id TSVs plus stats.json."""
    os.makedirs(out_dir, exist_ok=True)
    for name, fname in _SPLIT_FILES.items():
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8") as fh:
            for u, i in getattr(ds, name):
                fh.write(f"{u}\t{i}\n")
    users, items, n, sparsity = dataset_stats(ds)
    stats = {
        "num_users": users,
        "num_items": items,
        "num_interactions": n,
        "sparsity": round(sparsity, 5),
        "sparsity_percent": sparsity_percent(sparsity),
    }
    with open(os.path.join(out_dir, "stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2)
        fh.write("\n")


def load_dataset(in_dir: str | os.PathLike) -> Dataset:
    """Load a dataset previously written by :func:`save_dataset`."""
    stats_path = os.path.join(in_dir, "stats.json")
    if not os.path.exists(stats_path):
        raise DataError(f"{in_dir}: not a prepared dataset directory (missing stats.json)")
    with open(stats_path, "r", encoding="utf-8") as fh:
        stats = json.load(fh)
    splits = {}
    for name, fname in _SPLIT_FILES.items():
        part = []
        with open(os.path.join(in_dir, fname), "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError(f"{fname}: malformed line {lineno}")
                part.append(Interaction(int(parts[0]), int(parts[1])))
        splits[name] = part
    num_users = int(stats["num_users"])
    num_items = int(stats["num_items"])
    return Dataset(
        num_users=num_users,
        num_items=num_items,
        train=splits["train"],
        val=splits["val"],
        test=splits["test"],
        user_forward={u: u for u in range(num_users)},
        item_forward={i: i for i in range(num_items)},
    )
