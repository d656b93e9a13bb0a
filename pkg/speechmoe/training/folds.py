from typing import Sequence

import numpy as np

from speechmoe.errors import ValidationError
from speechmoe.logger import get_logger
from speechmoe.schema import ManifestEntry
from speechmoe.tensor import RngStream

_logger = get_logger()


def kfold_split(
    entries: Sequence[ManifestEntry], folds: int = 5, run_seed: int = 0
) -> list[tuple[np.ndarray, np.ndarray]]:
    """
    Subject-disjoint, label-stratified k-fold split.

    Each class is shuffled by a stream keyed on `run_seed` and dealt round-robin into the
    folds, the deal continuing across classes so fold sizes differ by at most one. Returns
    sorted (train, test) index arrays into `entries`, one pair per fold.

    Raises:
        ValidationError: fewer subjects than folds, duplicate subjects
    """
    n = len(entries)
    if folds < 2:
        raise ValidationError(f"need at least 2 folds, got {folds}")
    if n < folds:
        raise ValidationError(f"{n} subjects cannot fill {folds} folds")
    subjects = [e.subject_id for e in entries]
    if len(set(subjects)) != n:
        raise ValidationError("subjects must be unique for a subject-disjoint split")

    targets = np.array([e.target for e in entries])
    rng = RngStream(run_seed).split("kfold")
    assignment = np.empty(n, dtype=np.int64)
    position = 0
    for label in (0, 1):
        members = np.flatnonzero(targets == label)
        members = members[rng.split(label).permutation(members.size)]
        assignment[members] = (position + np.arange(members.size)) % folds
        position += members.size

    splits = []
    for fold in range(folds):
        test = np.flatnonzero(assignment == fold)
        train = np.flatnonzero(assignment != fold)
        splits.append((train, test))
    _logger.debug(
        f"kfold seed={run_seed}: test sizes {[len(t) for _, t in splits]}"
    )
    return splits
