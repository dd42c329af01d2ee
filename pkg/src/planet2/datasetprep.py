"""Dataset hygiene: sequence clustering, leakage filtering, decoy selection,
and the 4:1 split.

Clustering is a greedy longest-first pass: each sequence joins the first
cluster whose representative shares at least the identity threshold, where
identity = matches / alignment length under global alignment with match +1,
mismatch 0, gap -1. A training record is a soft overlap (and is removed) iff
its protein clusters with a test protein AND its ligand has Tanimoto > 0.9 to
a test ligand in that cluster.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .featurize import druglikeness, tanimoto

IDENTITY_THRESHOLD = 0.9
SOFT_OVERLAP_TANIMOTO = 0.9
DECOY_MAX_TANIMOTO = 0.2
DECOY_MIN_RO5_RULES = 3


def global_alignment_identity(a: str, b: str) -> float:
    """Identity of the optimal global alignment (match +1, mismatch 0, gap -1).

    Ties in the traceback prefer diagonal, then up, then left, making the
    match count deterministic.
    """
    if not a or not b:
        raise ParseError("empty sequence")
    n, m = len(a), len(b)
    score = np.zeros((n + 1, m + 1), dtype=np.int32)
    score[:, 0] = -np.arange(n + 1)
    score[0, :] = -np.arange(m + 1)
    for i in range(1, n + 1):
        ai = a[i - 1]
        row = score[i]
        prev = score[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (1 if ai == b[j - 1] else 0)
            up = prev[j] - 1
            left = row[j - 1] - 1
            row[j] = max(diag, up, left)
    matches = 0
    length = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            diag = score[i - 1, j - 1] + (1 if a[i - 1] == b[j - 1] else 0)
            if score[i, j] == diag:
                matches += int(a[i - 1] == b[j - 1])
                i -= 1
                j -= 1
                length += 1
                continue
        if i > 0 and score[i, j] == score[i - 1, j] - 1:
            i -= 1
            length += 1
            continue
        j -= 1
        length += 1
    return matches / length


@dataclass(frozen=True)
class SeqCluster:
    cluster_id: int
    representative: str           # protein id
    members: tuple[str, ...]      # protein ids, representative first


def cluster_sequences(sequences: dict[str, str],
                      threshold: float = IDENTITY_THRESHOLD) -> list[SeqCluster]:
    """Greedy longest-first clustering against cluster representatives."""
    for pid, seq in sequences.items():
        if not seq:
            raise ParseError(f"empty sequence for protein {pid!r}")
    order = sorted(sequences, key=lambda pid: (-len(sequences[pid]), pid))
    clusters: list[list[str]] = []
    for pid in order:
        placed = False
        for members in clusters:
            rep = members[0]
            if global_alignment_identity(sequences[pid], sequences[rep]) >= threshold:
                members.append(pid)
                placed = True
                break
        if not placed:
            clusters.append([pid])
    return [SeqCluster(i, members[0], tuple(members))
            for i, members in enumerate(clusters)]


def cluster_index(clusters: list[SeqCluster]) -> dict[str, int]:
    return {pid: c.cluster_id for c in clusters for pid in c.members}


def soft_overlap_filter(
    train: list[tuple[str, str, int]],
    test: list[tuple[str, int]],
    threshold: float = SOFT_OVERLAP_TANIMOTO,
) -> tuple[list[int], list[int]]:
    """Split training records into (retained, removed) index lists.

    ``train`` holds (record id, ligand fingerprint, protein cluster id) as
    (id, fp, cluster); ``test`` holds (fp, cluster) pairs. A record is removed
    iff a test record in the same cluster has ligand Tanimoto > threshold.
    """
    by_cluster: dict[int, list[str]] = {}
    for fp, cluster in test:
        by_cluster.setdefault(cluster, []).append(fp)
    retained, removed = [], []
    for idx, (_, fp, cluster) in enumerate(train):
        hits = by_cluster.get(cluster, ())
        if any(tanimoto(int(fp), int(t)) > threshold for t in hits):
            removed.append(idx)
        else:
            retained.append(idx)
    return retained, removed


def select_decoys(candidates, active_fp: int,
                  candidate_logps: list[float | None] | None = None) -> list[int]:
    """Indices of candidates suitable as decoys for one active ligand:
    at least 3 of the 4 druglikeness rules pass and ECFP4 Tanimoto to the
    active is below 0.2 (strict)."""
    from .featurize import ecfp4

    accepted = []
    for i, mol in enumerate(candidates):
        logp = candidate_logps[i] if candidate_logps else None
        if druglikeness(mol, logp).ro5_pass_count < DECOY_MIN_RO5_RULES:
            continue
        if tanimoto(ecfp4(mol), active_fp) >= DECOY_MAX_TANIMOTO:
            continue
        accepted.append(i)
    return accepted


def split_records(records: list, seed: int = 0,
                  train_fraction: float = 0.8) -> tuple[list, list]:
    """Deterministic shuffled split; train gets ceil(train_fraction * n)."""
    import math

    if len(records) < 5:
        raise ParseError("split needs at least 5 records")
    order = list(range(len(records)))
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    n_train = math.ceil(train_fraction * len(records))
    train = [records[i] for i in order[:n_train]]
    val = [records[i] for i in order[n_train:]]
    return train, val
