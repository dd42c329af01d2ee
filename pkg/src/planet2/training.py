"""Multi-objective training: weighted loss, Adam with step decay, batching.

Six weighted terms: squared error on labeled affinities, binary cross-entropy
on the intra-ligand contact map, mixture negative log-likelihood at observed
atom-residue distances, the below-5-Angstrom probability mass on decoy
records, and 10-way/20-way node type recovery on atoms and residues. Terms a
record cannot supply (no label, no pose, not a decoy) contribute nothing for
that record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import diffcore as dc
from . import gmm
from . import network as net
from .chemio.sdf import Molecule
from .complexes import ComplexRecord
from .errors import NumericsError, TrainingError

CONTACT_THRESHOLD = 4.0  # Angstrom, intra-ligand heavy-atom contacts
_LOG_EPS = 1e-12


@dataclass
class LossWeights:
    affinity: float = 2.0
    contact: float = 0.1
    mdn: float = 1.0
    decoy: float = 0.2
    aux: float = 0.001

    def __post_init__(self):
        for name in ("affinity", "contact", "mdn", "decoy", "aux"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    decay_factor: float = 0.9
    decay_interval: int = 50_000
    batch_size: int = 8
    seed: int = 0
    max_steps: int = 1000

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must be in (0, 1]")


def contact_labels(mol: Molecule, threshold: float = CONTACT_THRESHOLD) -> np.ndarray:
    """Symmetric 0/1 matrix over heavy atoms: 1 iff 3D distance < threshold."""
    heavy = mol.heavy_indices()
    coords = np.asarray([mol.atoms[i].coords for i in heavy], dtype=np.float64)
    if not np.isfinite(coords).all():
        raise TrainingError("contact labels need finite reference coordinates")
    dist = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    labels = (dist < threshold).astype(np.float64)
    np.fill_diagonal(labels, 0.0)
    return labels


def _cross_entropy(logits: dc.Tensor, class_idx: np.ndarray, n_classes: int) -> dc.Tensor:
    one_hot = np.zeros((len(class_idx), n_classes))
    one_hot[np.arange(len(class_idx)), class_idx] = 1.0
    log_probs = dc.tlog(dc.add(dc.softmax(logits, axis=1), _LOG_EPS))
    return dc.neg(dc.tmean(dc.tsum(dc.mul(log_probs, one_hot), axis=1)))


def _contact_bce(pred: dc.Tensor, labels: np.ndarray) -> dc.Tensor:
    nh = labels.shape[0]
    off = ~np.eye(nh, dtype=bool)
    n_pairs = max(int(off.sum()), 1)
    mask = off.astype(np.float64)
    pos = dc.mul(dc.tlog(dc.add(pred, _LOG_EPS)), labels)
    negt = dc.mul(dc.tlog(dc.add(dc.sub(1.0, pred), _LOG_EPS)), 1.0 - labels)
    per_pair = dc.mul(dc.add(pos, negt), mask)
    return dc.mul(dc.tsum(per_pair), -1.0 / n_pairs)


def record_loss_terms(record: ComplexRecord, params: net.ModelParams) -> dict[str, dc.Tensor]:
    """Per-record loss terms; keys present only where the record supplies data."""
    va, vr = net.encode_complex(record.lgraph, record.pgraph, params)
    pair = net.mdn_heads(va, vr, record.lgraph.heavy_canonical_pos, params)
    aux = net.auxiliary_heads(va, vr, record.lgraph.heavy_canonical_pos, params)
    terms: dict[str, dc.Tensor] = {}
    if record.labeled:
        pred = dc.tsum(gmm.expectation_energy(pair))
        diff = dc.sub(pred, float(record.pkd))
        terms["aff"] = dc.mul(diff, diff)
    if record.decoy:
        terms["decoy"] = dc.tmean(gmm.prob_mass_below(pair, gmm.DECOY_DISTANCE))
    else:
        if record.pose_dists is None:
            raise TrainingError(f"record {record.id!r} is labeled but has no pose")
        terms["mdn"] = dc.tmean(gmm.pair_nll(pair, record.pose_dists))
        rows = record.lgraph.heavy_input_rows
        labels = contact_labels(record.ligand)[np.ix_(rows, rows)]
        terms["lig"] = _contact_bce(aux.contact_prob, labels)
    terms["atom"] = _cross_entropy(aux.atom_logits, record.lgraph.heavy_class_idx, 10)
    terms["resi"] = _cross_entropy(aux.resi_logits, record.pgraph.class_idx, 20)
    return terms


_TERM_ORDER = ("aff", "lig", "mdn", "decoy", "atom", "resi")


def composite_loss(records: Sequence[ComplexRecord], params: net.ModelParams,
                   weights: LossWeights = LossWeights(),
                   ) -> tuple[dc.Tensor, dict[str, float]]:
    """Weighted multi-objective loss over a batch, with a per-term breakdown.

    Each term averages over the records that contribute it; absent terms
    count as zero.
    """
    collected: dict[str, list[dc.Tensor]] = {t: [] for t in _TERM_ORDER}
    for record in records:
        for key, value in record_loss_terms(record, params).items():
            collected[key].append(value)
    means: dict[str, dc.Tensor | None] = {}
    for key, values in collected.items():
        if not values:
            means[key] = None
            continue
        acc = values[0]
        for v in values[1:]:
            acc = dc.add(acc, v)
        means[key] = dc.mul(acc, 1.0 / len(values))
    w = {
        "aff": weights.affinity, "lig": weights.contact, "mdn": weights.mdn,
        "decoy": weights.decoy, "atom": weights.aux, "resi": weights.aux,
    }
    total: dc.Tensor | None = None
    breakdown: dict[str, float] = {}
    for key in _TERM_ORDER:
        term = means[key]
        breakdown[key] = 0.0 if term is None else term.item()
        if term is None or w[key] == 0.0:
            continue
        weighted = dc.mul(term, w[key])
        total = weighted if total is None else dc.add(total, weighted)
    if total is None:
        raise TrainingError("batch produced no loss terms")
    breakdown["total"] = total.item()
    for key, value in breakdown.items():
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss term {key!r}")
    return total, breakdown


class Adam:
    """Adam with in-place parameter updates, iterated in sorted name order."""

    def __init__(self, params: net.ModelParams, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.tensors.items()}

    def step(self, lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name in sorted(self.params.tensors):
            tensor = self.params.tensors[name]
            grad = tensor.grad
            if grad is None:
                continue
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad * grad
            m_hat = self.m[name] / b1c
            v_hat = self.v[name] / b2c
            tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for tensor in self.params.tensors.values():
            tensor.grad = None


def validate_training_records(records: Sequence[ComplexRecord]) -> None:
    for r in records:
        if not r.decoy and r.pkd is None:
            raise TrainingError(f"non-decoy record {r.id!r} is missing its pkd label")
    if not any(r.labeled for r in records):
        raise TrainingError("training needs at least one labeled complex")


def learning_rate_at(cfg: TrainConfig, step: int) -> float:
    return cfg.learning_rate * cfg.decay_factor ** ((step - 1) // cfg.decay_interval)


def train(records: Sequence[ComplexRecord], net_cfg: net.NetConfig,
          cfg: TrainConfig, weights: LossWeights = LossWeights(),
          ) -> tuple[net.ModelParams, list[dict[str, float]]]:
    """Deterministic single-threaded training run; returns params and trace."""
    validate_training_records(records)
    actives = [r for r in records if not r.decoy]
    decoys = [r for r in records if r.decoy]
    params = net.ModelParams.init(net_cfg, seed=cfg.seed)
    optimizer = Adam(params)
    sampler = np.random.default_rng(cfg.seed + 1)
    trace: list[dict[str, float]] = []
    for step in range(1, cfg.max_steps + 1):
        if decoys:
            n_act = max(cfg.batch_size // 2, 1)
            n_dec = max(cfg.batch_size - n_act, 1)
            batch = [actives[i] for i in sampler.integers(0, len(actives), size=n_act)]
            batch += [decoys[i] for i in sampler.integers(0, len(decoys), size=n_dec)]
        else:
            batch = [actives[i] for i in sampler.integers(0, len(actives),
                                                          size=min(cfg.batch_size, len(actives)))]
        lr = learning_rate_at(cfg, step)
        optimizer.zero_grad()
        try:
            total, breakdown = composite_loss(batch, params, weights)
        except NumericsError as exc:
            raise TrainingError(f"non-finite value at step {step}: {exc}") from exc
        total.backward()
        optimizer.step(lr)
        breakdown["step"] = step
        breakdown["lr"] = lr
        trace.append(breakdown)
    return params, trace


TRACE_COLUMNS = ("step", "total", "aff", "lig", "mdn", "decoy", "atom", "resi", "lr")


def trace_to_csv(trace: list[dict[str, float]]) -> str:
    lines = [",".join(TRACE_COLUMNS)]
    for row in trace:
        cells = []
        for col in TRACE_COLUMNS:
            value = row[col]
            cells.append(str(int(value)) if col == "step" else f"{value:.6g}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
