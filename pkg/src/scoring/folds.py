"""
Subject-level k-fold splits: fold i tests on group i, validates on
group (i + 1) mod k and trains on the rest (8:1:1 for k = 10).
"""
import logging
from typing import List, Sequence

import numpy as np
from pydantic import BaseModel

from ..errors import ConfigInvalid, TooFewSubjects

logger = logging.getLogger(__name__)


class FoldSplit(BaseModel):
    fold_index: int
    train: List[str]
    val: List[str]
    test: List[str]

    def role_of(self, subject_id: str) -> str:
        if subject_id in self.test:
            return "test"
        if subject_id in self.val:
            return "val"
        return "train"


def make_folds(subjects: Sequence[str], k: int = 10, seed: int = 0) -> List[FoldSplit]:
    """
    Partition subjects into k seeded groups and rotate test/validation roles

    Args:
        subjects: Subject ids (duplicates, e.g. one per night, are collapsed)
        k: Number of folds
        seed: Shuffle seed

    Returns:
        k FoldSplit objects with pairwise-disjoint subject sets
    """
    if k < 3:
        raise ConfigInvalid(f"disjoint train/validation/test groups need k >= 3, got {k}", module="events-metrics")
    unique = sorted(set(subjects))
    if len(unique) < k:
        raise TooFewSubjects(f"{len(unique)} subjects cannot fill {k} folds")

    rng = np.random.default_rng(seed)
    order = [unique[i] for i in rng.permutation(len(unique))]
    groups = [list(g) for g in np.array_split(np.array(order, dtype=object), k)]

    folds = []
    for i in range(k):
        test = sorted(groups[i])
        val = sorted(groups[(i + 1) % k])
        train = sorted(s for j, g in enumerate(groups) if j not in (i, (i + 1) % k) for s in g)
        folds.append(FoldSplit(fold_index=i, train=train, val=val, test=test))

    logger.info(f"Built {k} subject-level folds over {len(unique)} subjects (seed {seed})")
    return folds
