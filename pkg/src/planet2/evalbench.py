"""Evaluation protocols: scoring, ranking with BCa intervals, docking power,
funnel analysis, screening metrics, contact-map metrics, RMSD.

Tie policy: rank statistics use average ranks, so AUROC equals the pairwise
win-rate with half credit for ties, exactly. Enrichment counts actives in the
top ceil(f*N) of the stable descending sort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import MetricError

_NORMAL = NormalDist()


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise MetricError(f"{name} must be one-dimensional")
    if not np.isfinite(arr).all():
        raise MetricError(f"{name} contains non-finite values")
    return arr


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        raise MetricError("correlation undefined for zero variance")
    return float(xc @ yc) / denom


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    return pearson(average_ranks(np.asarray(x, dtype=np.float64)),
                   average_ranks(np.asarray(y, dtype=np.float64)))


def scoring_power(predictions, labels) -> dict[str, float]:
    p = _as_float_array(predictions, "predictions")
    l = _as_float_array(labels, "labels")
    if len(p) != len(l):
        raise MetricError(f"length mismatch: {len(p)} predictions vs {len(l)} labels")
    if len(p) < 3:
        raise MetricError("scoring power needs at least 3 paired values")
    err = p - l
    return {
        "pearson": pearson(p, l),
        "mae": float(np.abs(err).mean()),
        "rmse": float(np.sqrt((err * err).mean())),
    }


# -- ranking ----------------------------------------------------------------

def _jackknife_acceleration(values: np.ndarray) -> float:
    n = len(values)
    totals = values.sum()
    jack = (totals - values) / (n - 1)
    centered = jack.mean() - jack
    denom = (centered ** 2).sum() ** 1.5
    if denom == 0.0:
        return 0.0
    return float((centered ** 3).sum() / (6.0 * denom))


def bca_interval(boot: np.ndarray, point: float, per_unit: np.ndarray,
                 level: float = 0.90) -> tuple[float, float]:
    """Bias-corrected accelerated interval from bootstrap replicates.

    ``per_unit`` holds the per-resampling-unit statistics used for the
    jackknife acceleration term.
    """
    if boot.std() == 0.0:
        return float(boot[0]), float(boot[0])
    b = len(boot)
    frac = np.count_nonzero(boot < point) / b
    frac = min(max(frac, 0.5 / b), 1.0 - 0.5 / b)
    z0 = _NORMAL.inv_cdf(frac)
    a = _jackknife_acceleration(per_unit)
    alpha = 0.5 * (1.0 - level)
    lo_q, hi_q = [], []
    for q in (alpha, 1.0 - alpha):
        zq = _NORMAL.inv_cdf(q)
        adj = _NORMAL.cdf(z0 + (z0 + zq) / (1.0 - a * (z0 + zq)))
        (lo_q if q < 0.5 else hi_q).append(adj)
    lo = float(np.quantile(boot, lo_q[0]))
    hi = float(np.quantile(boot, hi_q[0]))
    return lo, hi


def ranking_power(clusters: list[tuple[np.ndarray, np.ndarray]],
                  cluster_size: int = 5, bootstrap_reps: int = 2000,
                  seed: int = 0, level: float = 0.90) -> dict[str, float]:
    """Mean per-cluster Spearman plus a BCa confidence interval.

    Each cluster is (scores, labels) for exactly ``cluster_size`` complexes
    of one target; the bootstrap resamples clusters with replacement.
    """
    if not clusters:
        raise MetricError("ranking power needs at least one cluster")
    per_cluster = []
    for idx, (scores, labels) in enumerate(clusters):
        s = _as_float_array(scores, f"cluster {idx} scores")
        l = _as_float_array(labels, f"cluster {idx} labels")
        if len(s) != cluster_size or len(l) != cluster_size:
            raise MetricError(f"cluster {idx} must contain exactly {cluster_size} members")
        per_cluster.append(spearman(s, l))
    per_cluster = np.asarray(per_cluster)
    point = float(per_cluster.mean())
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, len(per_cluster), size=(bootstrap_reps, len(per_cluster)))
    boot = per_cluster[draws].mean(axis=1)
    lo, hi = bca_interval(boot, point, per_cluster, level=level)
    return {"mean_spearman": point, "ci_low": lo, "ci_high": hi,
            "n_clusters": float(len(per_cluster))}


# -- docking ----------------------------------------------------------------

@dataclass(frozen=True)
class PoseSet:
    complex_id: str
    rmsds: np.ndarray   # Angstrom, >= 0; the native pose carries exactly 0
    scores: np.ndarray  # pose potential U, lower is better

    def __post_init__(self):
        r = _as_float_array(self.rmsds, "rmsds")
        s = _as_float_array(self.scores, "scores")
        if len(r) == 0:
            raise MetricError(f"pose set {self.complex_id!r} is empty")
        if len(r) != len(s):
            raise MetricError(f"pose set {self.complex_id!r} has mismatched lengths")
        if (r < 0).any():
            raise MetricError(f"pose set {self.complex_id!r} has negative RMSD")
        object.__setattr__(self, "rmsds", r)
        object.__setattr__(self, "scores", s)

    @property
    def native_included(self) -> bool:
        return bool((self.rmsds == 0.0).any())


def _topk_success(rmsds: np.ndarray, scores: np.ndarray, k: int,
                  threshold: float = 2.0) -> bool:
    order = np.argsort(scores, kind="stable")
    return bool((rmsds[order[:k]] < threshold).any())


def docking_power(pose_sets: list[PoseSet], max_k: int = 3,
                  threshold: float = 2.0) -> dict[str, float]:
    """Fraction of complexes whose top-k scored poses contain a near-native
    one, with and without the native pose in the candidate set."""
    if not pose_sets:
        raise MetricError("docking power needs at least one pose set")
    out: dict[str, float] = {}
    for k in range(1, max_k + 1):
        out[f"top{k}"] = float(np.mean([
            _topk_success(ps.rmsds, ps.scores, k, threshold) for ps in pose_sets]))
    counted = 0
    wins = np.zeros(max_k)
    for ps in pose_sets:
        keep = ps.rmsds > 0.0
        if not keep.any():
            continue
        counted += 1
        for k in range(1, max_k + 1):
            wins[k - 1] += _topk_success(ps.rmsds[keep], ps.scores[keep], k, threshold)
    for k in range(1, max_k + 1):
        out[f"top{k}_native_excluded"] = float(wins[k - 1] / counted) if counted else math.nan
    out["n_complexes"] = float(len(pose_sets))
    return out


def funnel_analysis(rmsds, scores, max_window: int = 10) -> dict[str, float | None]:
    """Spearman between RMSD and score inside growing windows [0, w] Angstrom.

    Windows with fewer than 3 poses or zero variance are reported as absent
    (None), not as zero.
    """
    r = _as_float_array(rmsds, "rmsds")
    s = _as_float_array(scores, "scores")
    if len(r) != len(s):
        raise MetricError("rmsds and scores must have equal length")
    out: dict[str, float | None] = {}
    for w in range(2, max_window + 1):
        keep = r <= w
        if keep.sum() < 3:
            out[f"0-{w}"] = None
            continue
        try:
            out[f"0-{w}"] = spearman(r[keep], s[keep])
        except MetricError:
            out[f"0-{w}"] = None
    return out


# -- screening ----------------------------------------------------------------

def auroc(scores: np.ndarray, actives: np.ndarray) -> float:
    """Rank-statistic AUROC; ties contribute half credit (Mann-Whitney)."""
    s = _as_float_array(scores, "scores")
    a = np.asarray(actives, dtype=bool)
    n_pos = int(a.sum())
    n_neg = len(a) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC needs both actives and inactives")
    ranks = average_ranks(s)
    return float((ranks[a].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auprc(scores: np.ndarray, actives: np.ndarray) -> float:
    """Trapezoidal area under precision-recall, grouping tied scores."""
    s = _as_float_array(scores, "scores")
    a = np.asarray(actives, dtype=bool)
    n_pos = int(a.sum())
    if n_pos == 0 or n_pos == len(a):
        raise MetricError("AUPRC needs both actives and inactives")
    order = np.argsort(-s, kind="stable")
    sorted_scores = s[order]
    sorted_actives = a[order]
    area = 0.0
    prev_recall = 0.0
    tp = fp = 0
    i = 0
    n = len(s)
    first_precision = None
    prev_precision = None
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        tp += int(sorted_actives[i:j + 1].sum())
        fp += (j - i + 1) - int(sorted_actives[i:j + 1].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        if first_precision is None:
            first_precision = precision
            area += precision * recall  # rectangle from recall 0
        else:
            area += 0.5 * (precision + prev_precision) * (recall - prev_recall)
        prev_recall, prev_precision = recall, precision
        i = j + 1
    return float(area)


def enrichment_factor(scores: np.ndarray, actives: np.ndarray,
                      fraction: float = 0.01) -> float:
    """(actives recovered in the top ceil(f*N)) / (total actives) / f."""
    s = _as_float_array(scores, "scores")
    a = np.asarray(actives, dtype=bool)
    n_pos = int(a.sum())
    if n_pos == 0:
        raise MetricError("enrichment needs at least one active")
    if not 0 < fraction <= 1:
        raise MetricError("fraction must be in (0, 1]")
    n_top = math.ceil(fraction * len(s))
    order = np.argsort(-s, kind="stable")
    hits = int(a[order[:n_top]].sum())
    return (hits / n_pos) / fraction


def screening_metrics(scores, actives, fraction: float = 0.01) -> dict[str, float]:
    return {
        "auroc": auroc(scores, actives),
        "auprc": auprc(scores, actives),
        "ef": enrichment_factor(scores, actives, fraction),
        "fraction": fraction,
    }


def filtered_screen(scores, druglike, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Druglikeness-adjusted screening scores.

    mode "ro5" drops molecules failing any of the four rules (keep mask goes
    False); mode "le" divides scores by heavy atom count; "both" composes
    them; "none" passes through. Returns (adjusted scores, keep mask).
    """
    s = _as_float_array(scores, "scores")
    if len(s) != len(druglike):
        raise MetricError("scores and descriptors must align")
    if mode not in ("none", "ro5", "le", "both"):
        raise MetricError(f"unknown filter mode {mode!r}")
    keep = np.ones(len(s), dtype=bool)
    adjusted = s.copy()
    if mode in ("ro5", "both"):
        keep = np.array([d.ro5_pass_count >= 4 for d in druglike])
    if mode in ("le", "both"):
        counts = np.array([d.heavy_atom_count for d in druglike], dtype=np.float64)
        if (counts <= 0).any():
            raise MetricError("ligand efficiency needs a positive heavy atom count")
        adjusted = adjusted / counts
    return adjusted, keep


def contact_map_metrics(predicted: np.ndarray, true: np.ndarray) -> dict[str, float]:
    """Cosine similarity plus AUROC/AUPRC over off-diagonal entries."""
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(true, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise MetricError("contact maps must be square matrices of equal shape")
    off = ~np.eye(p.shape[0], dtype=bool)
    pv, tv = p[off], t[off]
    norm = np.linalg.norm(pv) * np.linalg.norm(tv)
    if np.linalg.norm(tv) == 0.0:
        raise MetricError("cosine similarity undefined for an all-zero true map")
    cosine = float(pv @ tv / norm) if norm > 0 else 0.0
    labels = tv > 0.5
    return {
        "cosine": cosine,
        "auroc": auroc(pv, labels),
        "auprc": auprc(pv, labels),
    }


def rmsd(pose_a: np.ndarray, pose_b: np.ndarray) -> float:
    """Root-mean-square coordinate deviation without alignment or symmetry
    correction; atom counts and ordering must match."""
    a = np.asarray(pose_a, dtype=np.float64)
    b = np.asarray(pose_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise MetricError(f"pose shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt((d * d).sum(axis=1).mean()))
