"""Encoder stack and mixture heads.

Pipeline: directed-edge message passing over the ligand graph (shared weights,
multi-head attention over incoming messages excluding the reverse edge), a
distance-gated attention network plus equivariant graph convolutions over the
pocket (only inter-residue distances enter, so residue embeddings are
invariant under rigid motions and reflections), two rounds of cross-attention
communication between the two sets, and per-pair linear heads emitting the
dual distance mixtures (normalized probability head, signed energy head).

All learnable tensors live in ``ModelParams`` under dotted names and
round-trip through the binary weights container bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import diffcore as dc
from .chemio.weights import read_tensor_table, write_tensor_table
from .errors import WeightsError
from .featurize import (
    ATOM_FEATURE_DIM,
    BOND_FEATURE_DIM,
    RESIDUE_FEATURE_DIM,
    LigandGraph,
    PocketGraph,
)
from .gmm import PairGMM

RESIDUE_DIM = RESIDUE_FEATURE_DIM


@dataclass
class NetConfig:
    hidden_dim: int = 128
    heads: int = 4
    mixtures: int = 10
    key_dim: int | None = None
    msg_layers: int = 10
    dan_layers: int = 5
    egcl_layers: int = 5
    comm_iters: int = 2
    gate_hidden: int = 32
    contact_hidden: int = 64

    def __post_init__(self):
        if self.key_dim is None:
            self.key_dim = max(self.hidden_dim // self.heads, 4)
        if self.mixtures < 1:
            raise ValueError("mixtures must be >= 1")


def _param_specs(cfg: NetConfig) -> list[tuple[str, tuple[int, ...], int]]:
    d, h, k, dk = cfg.hidden_dim, cfg.heads, cfg.mixtures, cfg.key_dim
    g, c = cfg.gate_hidden, cfg.contact_hidden
    fa, fb, fr = ATOM_FEATURE_DIM, BOND_FEATURE_DIM, RESIDUE_DIM
    specs: list[tuple[str, tuple[int, ...], int]] = [
        ("ligand.W_atom", (d, fa), fa),
        ("ligand.W_bond", (d, fb), fb),
        ("ligand.W_message", (d, d), d),
        ("ligand.b_message", (d,), 0),
        ("ligand.W_Q", (h, dk, d), d),
        ("ligand.W_K", (h, dk, d), d),
        ("ligand.W_V", (h, d, d), d),
        ("ligand.W_out", (d, fa + d), fa + d),
        ("ligand.b_out", (d,), 0),
        ("dan.W_resi", (d, fr), fr),
        ("dan.gate.W1", (g, 2 * d + 30), 2 * d + 30),
        ("dan.gate.b1", (g,), 0),
        ("dan.gate.W2", (1, g), g),
        ("dan.gate.b2", (1,), 0),
        ("dan.W_Q", (h, dk, fr), fr),
        ("dan.W_K", (h, dk, fr), fr),
        ("dan.W_V", (h, fr, fr), fr),
        ("dan.W_dist", (fr, fr), fr),
        ("dan.b_dist", (fr,), 0),
        ("dan.read.W1", (d, d + fr), d + fr),
        ("dan.read.b1", (d,), 0),
        ("dan.read.W2", (d, d), d),
        ("dan.read.b2", (d,), 0),
    ]
    for layer in range(cfg.egcl_layers):
        p = f"egcl.{layer}"
        specs += [
            (f"{p}.edge.W1", (d, 2 * d + 1), 2 * d + 1),
            (f"{p}.edge.b1", (d,), 0),
            (f"{p}.edge.W2", (d, d), d),
            (f"{p}.edge.b2", (d,), 0),
            (f"{p}.inf.W", (1, d), d),
            (f"{p}.inf.b", (1,), 0),
            (f"{p}.node.W1", (d, 2 * d), 2 * d),
            (f"{p}.node.b1", (d,), 0),
            (f"{p}.node.W2", (d, d), d),
            (f"{p}.node.b2", (d,), 0),
        ]
    specs += [
        ("comm.W_qk_lig", (dk, d), d),
        ("comm.W_qk_pro", (dk, d), d),
        ("comm.W_V_lig", (d, d), d),
        ("comm.W_V_pro", (d, d), d),
        ("comm.W_att_lig", (d, d), d),
        ("comm.b_att_lig", (d,), 0),
        ("comm.W_att_pro", (d, d), d),
        ("comm.b_att_pro", (d,), 0),
    ]
    for head in ("p", "e"):
        specs += [
            (f"mdn.{head}.W_lig", (d, d), d),
            (f"mdn.{head}.W_pro", (d, d), d),
            (f"mdn.{head}.W_rho", (k, 2 * d), 2 * d),
            (f"mdn.{head}.b_rho", (k,), 0),
            (f"mdn.{head}.W_mu", (k, 2 * d), 2 * d),
            (f"mdn.{head}.b_mu", (k,), 0),
            (f"mdn.{head}.W_sigma", (k, 2 * d), 2 * d),
            (f"mdn.{head}.b_sigma", (k,), 0),
        ]
    specs += [
        ("aux.contact.W1", (c, d), d),
        ("aux.contact.b1", (c,), 0),
        ("aux.contact.W2", (1, c), c),
        ("aux.contact.b2", (1,), 0),
        ("aux.atom_type.W", (10, d), d),
        ("aux.atom_type.b", (10,), 0),
        ("aux.resi_type.W", (20, d), d),
        ("aux.resi_type.b", (20,), 0),
    ]
    return specs


@dataclass
class ModelParams:
    """Named learnable tensors plus the architecture hyperparameters."""

    config: NetConfig
    tensors: dict[str, dc.Tensor] = field(default_factory=dict)

    @staticmethod
    def init(cfg: NetConfig, seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        tensors: dict[str, dc.Tensor] = {}
        for name, shape, fan_in in _param_specs(cfg):
            if fan_in == 0:
                data = np.zeros(shape, dtype=np.float64)
            else:
                data = rng.standard_normal(shape) / math.sqrt(fan_in)
            tensors[name] = dc.parameter(data)
        return ModelParams(cfg, tensors)

    def __getitem__(self, name: str) -> dc.Tensor:
        return self.tensors[name]

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def astype(self, dtype) -> "ModelParams":
        converted = {
            name: dc.Tensor(t.data.astype(dtype), requires_grad=True)
            for name, t in self.tensors.items()
        }
        return ModelParams(self.config, converted)

    def to_tensor_table(self) -> dict[str, np.ndarray]:
        table = {name: t.data.astype(np.float32) for name, t in self.tensors.items()}
        # shared-weight layer counts are not recoverable from shapes
        table["meta.arch"] = np.array(
            [self.config.msg_layers, self.config.dan_layers, self.config.comm_iters],
            dtype=np.float32)
        return table

    @classmethod
    def from_tensor_table(cls, table: dict[str, np.ndarray]) -> "ModelParams":
        if "meta.arch" not in table:
            raise WeightsError("missing meta.arch tensor")
        arch = table["meta.arch"]
        if arch.shape != (3,):
            raise WeightsError("meta.arch must hold 3 entries")
        required = ("ligand.W_message", "ligand.W_Q", "mdn.p.W_rho",
                    "dan.gate.W1", "aux.contact.W1")
        for name in required:
            if name not in table:
                raise WeightsError(f"missing tensor {name!r}")
        egcl_layers = len({n.split(".")[1] for n in table if n.startswith("egcl.")})
        cfg = NetConfig(
            hidden_dim=table["ligand.W_message"].shape[0],
            heads=table["ligand.W_Q"].shape[0],
            mixtures=table["mdn.p.W_rho"].shape[0],
            key_dim=table["ligand.W_Q"].shape[1],
            msg_layers=int(arch[0]),
            dan_layers=int(arch[1]),
            egcl_layers=egcl_layers,
            comm_iters=int(arch[2]),
            gate_hidden=table["dan.gate.W1"].shape[0],
            contact_hidden=table["aux.contact.W1"].shape[0],
        )
        expected = {name: shape for name, shape, _ in _param_specs(cfg)}
        extra = set(table) - set(expected) - {"meta.arch"}
        if extra:
            raise WeightsError(f"unexpected tensors: {sorted(extra)}")
        tensors: dict[str, dc.Tensor] = {}
        for name, shape in expected.items():
            if name not in table:
                raise WeightsError(f"missing tensor {name!r}")
            arr = table[name]
            if arr.shape != shape:
                raise WeightsError(f"tensor {name!r} has shape {arr.shape}, expected {shape}")
            tensors[name] = dc.parameter(arr.astype(np.float64))
        return cls(cfg, tensors)

    def to_bytes(self) -> bytes:
        return write_tensor_table(self.to_tensor_table())

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelParams":
        _, table = read_tensor_table(data)
        return cls.from_tensor_table(table)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelParams":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _const(arr: np.ndarray, dtype) -> dc.Tensor:
    return dc.as_tensor(np.asarray(arr, dtype=dtype))


def _per_head(x: dc.Tensor, weight: dc.Tensor) -> dc.Tensor:
    """(N, F) x (H, dk, F) -> (H, N, dk)."""
    n, f = x.shape
    return dc.matmul(dc.reshape(x, (1, n, f)), dc.transpose(weight, (0, 2, 1)))


def ligand_encode_canonical(graph: LigandGraph, params: ModelParams) -> dc.Tensor:
    """Atom embeddings (N, D) in canonical atom order."""
    cfg = params.config
    dtype = params.dtype
    feats = _const(graph.atom_feats, dtype)
    n, e = graph.n_atoms, len(graph.edge_src)
    if e == 0:
        pooled = _const(np.zeros((n, cfg.hidden_dim)), dtype)
    else:
        efeats = _const(graph.edge_feats, dtype)
        base = dc.add(
            dc.gather_rows(dc.linear(feats, params["ligand.W_atom"]), graph.edge_src),
            dc.linear(efeats, params["ligand.W_bond"]),
        )
        scale = 1.0 / math.sqrt(cfg.key_dim)
        in_mask = graph.in_edge_mask[None, :, :]
        m = _const(np.zeros((e, cfg.hidden_dim)), dtype)
        for _ in range(cfg.msg_layers):
            q = _per_head(m, params["ligand.W_Q"])
            kk = _per_head(m, params["ligand.W_K"])
            scores = dc.mul(dc.matmul(q, dc.transpose(kk, (0, 2, 1))), scale)
            alpha = dc.masked_softmax(scores, in_mask, axis=2)
            values = _per_head(m, params["ligand.W_V"])
            agg = dc.tmean(dc.matmul(alpha, values), axis=0)
            m = dc.leaky_relu(dc.add(
                dc.add(base, dc.linear(agg, params["ligand.W_message"])),
                params["ligand.b_message"]))
        pooled = dc.matmul(_const(graph.atom_in_mask.astype(np.float64), dtype), m)
    return dc.leaky_relu(dc.linear(dc.concat([feats, pooled], axis=1),
                                   params["ligand.W_out"], params["ligand.b_out"]))


def ligand_encode(graph: LigandGraph, params: ModelParams) -> dc.Tensor:
    """Atom embeddings (N, D) in the molecule's input atom order."""
    return dc.gather_rows(ligand_encode_canonical(graph, params), graph.to_input_order)


def _distance_gate(graph: PocketGraph, params: ModelParams, projected: dc.Tensor,
                   dtype) -> dc.Tensor:
    """(M, M) gate in (0, 1) from residue features and pair distances."""
    m = graph.n_residues
    d = params.config.hidden_dim
    left = dc.broadcast_to(dc.reshape(projected, (m, 1, d)), (m, m, d))
    right = dc.broadcast_to(dc.reshape(projected, (1, m, d)), (m, m, d))
    gate_in = dc.concat([left, right, _const(graph.rbf_ca, dtype),
                         _const(graph.rbf_fc, dtype)], axis=2)
    hidden = dc.leaky_relu(dc.linear(gate_in, params["dan.gate.W1"], params["dan.gate.b1"]))
    gate = dc.sigmoid(dc.linear(hidden, params["dan.gate.W2"], params["dan.gate.b2"]))
    return dc.reshape(gate, (m, m))


def pocket_encode(graph: PocketGraph, params: ModelParams) -> dc.Tensor:
    """Residue embeddings (M, D); distances are the only geometric input."""
    cfg = params.config
    dtype = params.dtype
    m = graph.n_residues
    vinit = _const(graph.res_feats, dtype)
    projected = dc.linear(vinit, params["dan.W_resi"])

    if m > 1:
        offdiag = ~np.eye(m, dtype=bool)
        gate = dc.mul(_distance_gate(graph, params, projected, dtype),
                      _const(offdiag.astype(np.float64), dtype))
        v = dc.add(vinit, dc.matmul(gate, vinit))
        scale = 1.0 / math.sqrt(cfg.key_dim)
        gate3 = dc.reshape(gate, (1, m, m))
        for _ in range(cfg.dan_layers):
            q = _per_head(v, params["dan.W_Q"])
            kk = _per_head(v, params["dan.W_K"])
            scores = dc.mul(dc.matmul(q, dc.transpose(kk, (0, 2, 1))), scale)
            raw = dc.masked_softmax(scores, offdiag[None, :, :], axis=2)
            gated = dc.mul(raw, gate3)
            alpha = dc.div(gated, dc.add(dc.tsum(gated, axis=2, keepdims=True), 1e-9))
            values = _per_head(v, params["dan.W_V"])
            mixed = dc.tmean(dc.matmul(alpha, values), axis=0)
            v = dc.leaky_relu(dc.linear(mixed, params["dan.W_dist"], params["dan.b_dist"]))
    else:
        v = vinit  # no neighbors: attention stages pass the features through

    read_in = dc.concat([projected, v], axis=1)
    hidden = dc.leaky_relu(dc.linear(read_in, params["dan.read.W1"], params["dan.read.b1"]))
    out = dc.leaky_relu(dc.linear(hidden, params["dan.read.W2"], params["dan.read.b2"]))

    if len(graph.egcl_src):
        has_nb = _const(graph.has_neighbor, dtype)
        keep = _const(1.0 - graph.has_neighbor, dtype)
        d2 = _const(graph.egcl_d2, dtype)
        for layer in range(cfg.egcl_layers):
            p = f"egcl.{layer}"
            vi = dc.gather_rows(out, graph.egcl_src)
            vj = dc.gather_rows(out, graph.egcl_dst)
            edge_in = dc.concat([vi, vj, d2], axis=1)
            msg = dc.leaky_relu(dc.linear(
                dc.leaky_relu(dc.linear(edge_in, params[f"{p}.edge.W1"], params[f"{p}.edge.b1"])),
                params[f"{p}.edge.W2"], params[f"{p}.edge.b2"]))
            weight = dc.sigmoid(dc.linear(msg, params[f"{p}.inf.W"], params[f"{p}.inf.b"]))
            agg = dc.scatter_add_rows(dc.mul(msg, weight), graph.egcl_src, m)
            upd = dc.linear(
                dc.leaky_relu(dc.linear(dc.concat([out, agg], axis=1),
                                        params[f"{p}.node.W1"], params[f"{p}.node.b1"])),
                params[f"{p}.node.W2"], params[f"{p}.node.b2"])
            out = dc.add(dc.mul(has_nb, upd), dc.mul(keep, out))
    return out


def communicate(atom_emb: dc.Tensor, resi_emb: dc.Tensor,
                params: ModelParams) -> tuple[dc.Tensor, dc.Tensor]:
    """Cross-attention rounds between atoms and residues (shared weights)."""
    cfg = params.config
    n, m = atom_emb.shape[0], resi_emb.shape[0]
    scale = 1.0 / math.sqrt(cfg.key_dim)
    va, vr = atom_emb, resi_emb
    for _ in range(cfg.comm_iters):
        qa = dc.linear(va, params["comm.W_qk_lig"])
        qr = dc.linear(vr, params["comm.W_qk_pro"])
        scores = dc.mul(dc.matmul(qa, dc.transpose(qr)), scale)  # (N, M)
        attend_res = dc.softmax(scores, axis=1)
        pooled_a = dc.mul(dc.matmul(attend_res, dc.linear(vr, params["comm.W_V_lig"])),
                          1.0 / m)
        va_new = dc.linear(dc.add(pooled_a, va),
                           params["comm.W_att_lig"], params["comm.b_att_lig"])
        attend_atoms = dc.softmax(scores, axis=0)
        pooled_r = dc.mul(dc.matmul(dc.transpose(attend_atoms),
                                    dc.linear(va, params["comm.W_V_pro"])), 1.0 / n)
        vr_new = dc.linear(dc.add(pooled_r, vr),
                           params["comm.W_att_pro"], params["comm.b_att_pro"])
        va, vr = va_new, vr_new
    return va, vr


def _pair_features(atom_emb: dc.Tensor, resi_emb: dc.Tensor, heavy_indices,
                   w_lig: dc.Tensor, w_pro: dc.Tensor) -> dc.Tensor:
    heavy = dc.gather_rows(atom_emb, heavy_indices)
    nh, d = heavy.shape
    m = resi_emb.shape[0]
    pl = dc.linear(heavy, w_lig)
    pp = dc.linear(resi_emb, w_pro)
    left = dc.broadcast_to(dc.reshape(pl, (nh, 1, d)), (nh, m, d))
    right = dc.broadcast_to(dc.reshape(pp, (1, m, d)), (nh, m, d))
    return dc.concat([left, right], axis=2)


def mdn_heads(atom_emb: dc.Tensor, resi_emb: dc.Tensor, heavy_indices,
              params: ModelParams) -> PairGMM:
    """Dual K-component mixtures for every (heavy atom, residue) pair."""

    def head(tag: str):
        pair = _pair_features(atom_emb, resi_emb, heavy_indices,
                              params[f"mdn.{tag}.W_lig"], params[f"mdn.{tag}.W_pro"])
        rho_raw = dc.linear(pair, params[f"mdn.{tag}.W_rho"], params[f"mdn.{tag}.b_rho"])
        mu = dc.add(dc.elu(dc.linear(pair, params[f"mdn.{tag}.W_mu"],
                                     params[f"mdn.{tag}.b_mu"])), 1.0)
        sigma = dc.add(dc.elu(dc.linear(pair, params[f"mdn.{tag}.W_sigma"],
                                        params[f"mdn.{tag}.b_sigma"])), 1.1)
        return rho_raw, mu, sigma

    rho_p_raw, mu_p, sigma_p = head("p")
    rho_e_raw, mu_e, sigma_e = head("e")
    return PairGMM(
        rho_p=dc.softmax(rho_p_raw, axis=2),
        mu_p=mu_p, sigma_p=sigma_p,
        rho_e=dc.tanh(rho_e_raw),
        mu_e=mu_e, sigma_e=sigma_e,
    )


class AuxiliaryOutputs(NamedTuple):
    contact_prob: dc.Tensor   # (Nh, Nh) symmetric probabilities
    atom_logits: dc.Tensor    # (Nh, 10)
    resi_logits: dc.Tensor    # (M, 20)


def auxiliary_heads(atom_emb: dc.Tensor, resi_emb: dc.Tensor, heavy_indices,
                    params: ModelParams) -> AuxiliaryOutputs:
    heavy = dc.gather_rows(atom_emb, heavy_indices)
    nh, d = heavy.shape
    pair_sum = dc.add(dc.broadcast_to(dc.reshape(heavy, (nh, 1, d)), (nh, nh, d)),
                      dc.broadcast_to(dc.reshape(heavy, (1, nh, d)), (nh, nh, d)))
    hidden = dc.leaky_relu(dc.linear(pair_sum, params["aux.contact.W1"],
                                     params["aux.contact.b1"]))
    logits = dc.linear(hidden, params["aux.contact.W2"], params["aux.contact.b2"])
    contact = dc.sigmoid(dc.reshape(logits, (nh, nh)))
    atom_logits = dc.linear(heavy, params["aux.atom_type.W"], params["aux.atom_type.b"])
    resi_logits = dc.linear(resi_emb, params["aux.resi_type.W"], params["aux.resi_type.b"])
    return AuxiliaryOutputs(contact, atom_logits, resi_logits)


def encode_complex(lgraph: LigandGraph, pgraph: PocketGraph,
                   params: ModelParams) -> tuple[dc.Tensor, dc.Tensor]:
    """Communicated (atom, residue) embeddings; atoms in canonical order so
    downstream reductions are independent of the input atom labeling."""
    va = ligand_encode_canonical(lgraph, params)
    vr = pocket_encode(pgraph, params)
    return communicate(va, vr, params)


def predict_pair_gmm(lgraph: LigandGraph, pgraph: PocketGraph,
                     params: ModelParams) -> PairGMM:
    va, vr = encode_complex(lgraph, pgraph, params)
    return mdn_heads(va, vr, lgraph.heavy_canonical_pos, params)


def _leaky(x: np.ndarray) -> np.ndarray:
    # max(x, 0.01 x) equals LeakyReLU(x) exactly for either sign
    scaled = x * x.dtype.type(0.01)
    return np.maximum(x, scaled, out=scaled)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    pos = x >= 0
    e = np.exp(np.where(pos, -x, x))
    return np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def _elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.exp(np.minimum(x, 0.0)) - 1.0).astype(x.dtype, copy=False)


def _masked_softmax_np(scores: np.ndarray, neg_fill: np.ndarray, axis: int) -> np.ndarray:
    """Softmax with an additive -1e30 fill on masked entries.

    Masked entries underflow to exactly 0 after the shifted exp; rows with no
    unmasked entry produce all zeros (the shift is clamped so their exp
    arguments stay hugely negative instead of overflowing).
    """
    masked = scores + neg_fill
    mx = masked.max(axis=axis, keepdims=True)
    np.maximum(mx, scores.dtype.type(-1e29), out=mx)
    e = np.exp(masked - mx)
    den = e.sum(axis=axis, keepdims=True)
    np.maximum(den, scores.dtype.type(1e-30), out=den)
    e /= den
    return e


def _softmax_np(scores: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(scores - scores.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


class FastScorer:
    """Fused pure-numpy inference path mirroring the tensor forward exactly.

    Scoring large manifests through the tape is dominated by per-op
    bookkeeping; this path runs the same math on raw arrays (float32 by
    default) and is the engine behind the score/rescore/screen commands.
    Agreement with the tensor path is pinned by tests.
    """

    def __init__(self, params: ModelParams, dtype=np.float32):
        self.cfg = params.config
        self.dtype = np.dtype(dtype)
        self.w: dict[str, np.ndarray] = {
            name: np.ascontiguousarray(t.data, dtype=dtype)
            for name, t in params.tensors.items()
        }
        cfg = self.cfg
        # per-head stacks flattened and fused so q/k/v come from one GEMM
        self._lqkv = np.concatenate([
            self.w["ligand.W_Q"].reshape(cfg.heads * cfg.key_dim, cfg.hidden_dim),
            self.w["ligand.W_K"].reshape(cfg.heads * cfg.key_dim, cfg.hidden_dim),
            self.w["ligand.W_V"].reshape(cfg.heads * cfg.hidden_dim, cfg.hidden_dim),
        ]).T.copy()
        self._dqkv = np.concatenate([
            self.w["dan.W_Q"].reshape(cfg.heads * cfg.key_dim, RESIDUE_DIM),
            self.w["dan.W_K"].reshape(cfg.heads * cfg.key_dim, RESIDUE_DIM),
            self.w["dan.W_V"].reshape(cfg.heads * RESIDUE_DIM, RESIDUE_DIM),
        ]).T.copy()
        self._t = {name: arr.T.copy() if arr.ndim == 2 else arr
                   for name, arr in self.w.items()}

    def _lin(self, x: np.ndarray, name: str, bias: str | None = None) -> np.ndarray:
        out = x @ self._t[name]
        if bias is not None:
            out += self.w[bias]
        return out

    # -- encoders ---------------------------------------------------------

    def ligand_canonical(self, graph: LigandGraph) -> np.ndarray:
        cfg = self.cfg
        feats = graph.atom_feats.astype(self.dtype)
        n, e = graph.n_atoms, len(graph.edge_src)
        if e == 0:
            pooled = np.zeros((n, cfg.hidden_dim), dtype=self.dtype)
        else:
            base = (self._lin(feats, "ligand.W_atom")[graph.edge_src]
                    + self._lin(graph.edge_feats.astype(self.dtype), "ligand.W_bond"))
            base += self.w["ligand.b_message"]
            scale = self.dtype.type(1.0 / math.sqrt(cfg.key_dim))
            neg_fill = np.where(graph.in_edge_mask[None, :, :], self.dtype.type(0),
                                self.dtype.type(-1e30))
            m = np.zeros((e, cfg.hidden_dim), dtype=self.dtype)
            h, dk, d = cfg.heads, cfg.key_dim, cfg.hidden_dim
            split1, split2 = h * dk, 2 * h * dk
            inv_h = self.dtype.type(1.0 / h)
            for _ in range(cfg.msg_layers):
                qkv = m @ self._lqkv
                q = qkv[:, :split1].reshape(e, h, dk).transpose(1, 0, 2)
                kk = qkv[:, split1:split2].reshape(e, h, dk).transpose(1, 0, 2)
                values = qkv[:, split2:].reshape(e, h, d).transpose(1, 0, 2)
                scores = np.matmul(q, kk.transpose(0, 2, 1))
                scores *= scale
                alpha = _masked_softmax_np(scores, neg_fill, axis=2)
                # mean over heads of alpha_h @ v_h as one GEMM over (h, e)
                agg = (alpha.transpose(1, 0, 2).reshape(e, h * e)
                       @ np.ascontiguousarray(values).reshape(h * e, d)) * inv_h
                m = _leaky(base + agg @ self._t["ligand.W_message"])
            pooled = graph.atom_in_mask.astype(self.dtype) @ m
        return _leaky(np.concatenate([feats, pooled], axis=1) @ self._t["ligand.W_out"]
                      + self.w["ligand.b_out"])

    def ligand(self, graph: LigandGraph) -> np.ndarray:
        return self.ligand_canonical(graph)[graph.to_input_order]

    def pocket(self, graph: PocketGraph) -> np.ndarray:
        cfg = self.cfg
        m = graph.n_residues
        vinit = graph.res_feats.astype(self.dtype)
        projected = self._lin(vinit, "dan.W_resi")

        if m > 1:
            offdiag = ~np.eye(m, dtype=bool)
            fdim = 2 * cfg.hidden_dim + 30
            gate_in = np.empty((m, m, fdim), dtype=self.dtype)
            gate_in[:, :, :cfg.hidden_dim] = projected[:, None, :]
            gate_in[:, :, cfg.hidden_dim:2 * cfg.hidden_dim] = projected[None, :, :]
            gate_in[:, :, 2 * cfg.hidden_dim:2 * cfg.hidden_dim + 15] = graph.rbf_ca
            gate_in[:, :, 2 * cfg.hidden_dim + 15:] = graph.rbf_fc
            hidden = _leaky(gate_in.reshape(m * m, fdim) @ self._t["dan.gate.W1"]
                            + self.w["dan.gate.b1"])
            gate = _sigmoid(hidden @ self._t["dan.gate.W2"] + self.w["dan.gate.b2"])
            gate = gate.reshape(m, m) * offdiag
            v = vinit + gate @ vinit
            scale = self.dtype.type(1.0 / math.sqrt(cfg.key_dim))
            neg_fill = np.where(offdiag[None], self.dtype.type(0), self.dtype.type(-1e30))
            h, dk = cfg.heads, cfg.key_dim
            split1, split2 = h * dk, 2 * h * dk
            inv_h = self.dtype.type(1.0 / h)
            for _ in range(cfg.dan_layers):
                qkv = v @ self._dqkv
                q = qkv[:, :split1].reshape(m, h, dk).transpose(1, 0, 2)
                kk = qkv[:, split1:split2].reshape(m, h, dk).transpose(1, 0, 2)
                values = qkv[:, split2:].reshape(m, h, RESIDUE_DIM).transpose(1, 0, 2)
                scores = np.matmul(q, kk.transpose(0, 2, 1))
                scores *= scale
                raw = _masked_softmax_np(scores, neg_fill, axis=2)
                gated = raw * gate[None]
                alpha = gated / (gated.sum(axis=2, keepdims=True) + self.dtype.type(1e-9))
                mixed = (alpha.transpose(1, 0, 2).reshape(m, h * m)
                         @ np.ascontiguousarray(values).reshape(h * m, RESIDUE_DIM)) * inv_h
                v = _leaky(mixed @ self._t["dan.W_dist"] + self.w["dan.b_dist"])
        else:
            v = vinit

        read_in = np.concatenate([projected, v], axis=1)
        out = _leaky(_leaky(read_in @ self._t["dan.read.W1"] + self.w["dan.read.b1"])
                     @ self._t["dan.read.W2"] + self.w["dan.read.b2"])

        if len(graph.egcl_src):
            has = graph.has_neighbor.astype(self.dtype)
            keep = 1.0 - has
            d2 = graph.egcl_d2.astype(self.dtype)
            # scatter-add as a GEMM against the incidence matrix
            incidence = (graph.egcl_src[None, :] == np.arange(m)[:, None]).astype(self.dtype)
            for layer in range(cfg.egcl_layers):
                p = f"egcl.{layer}"
                edge_in = np.concatenate([out[graph.egcl_src], out[graph.egcl_dst], d2],
                                         axis=1)
                msg = _leaky(_leaky(edge_in @ self._t[f"{p}.edge.W1"]
                                    + self.w[f"{p}.edge.b1"])
                             @ self._t[f"{p}.edge.W2"] + self.w[f"{p}.edge.b2"])
                weight = _sigmoid(msg @ self._t[f"{p}.inf.W"] + self.w[f"{p}.inf.b"])
                msg *= weight
                agg = incidence @ msg
                upd = (_leaky(np.concatenate([out, agg], axis=1) @ self._t[f"{p}.node.W1"]
                              + self.w[f"{p}.node.b1"])
                       @ self._t[f"{p}.node.W2"] + self.w[f"{p}.node.b2"])
                out = has * upd + keep * out
        return out

    def communicate(self, va: np.ndarray, vr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        n, m = len(va), len(vr)
        scale = self.dtype.type(1.0 / math.sqrt(cfg.key_dim))
        for _ in range(cfg.comm_iters):
            scores = (va @ self._t["comm.W_qk_lig"]) @ (vr @ self._t["comm.W_qk_pro"]).T
            scores *= scale
            pooled_a = _softmax_np(scores, axis=1) @ (vr @ self._t["comm.W_V_lig"])
            va_new = ((pooled_a * self.dtype.type(1.0 / m) + va) @ self._t["comm.W_att_lig"]
                      + self.w["comm.b_att_lig"])
            pooled_r = _softmax_np(scores, axis=0).T @ (va @ self._t["comm.W_V_pro"])
            vr_new = ((pooled_r * self.dtype.type(1.0 / n) + vr) @ self._t["comm.W_att_pro"]
                      + self.w["comm.b_att_pro"])
            va, vr = va_new, vr_new
        return va, vr

    def pair_params(self, lgraph: LigandGraph, pgraph: PocketGraph) -> dict[str, np.ndarray]:
        """Flat (P, K) mixture parameter arrays for all heavy-atom/residue pairs."""
        va = self.ligand_canonical(lgraph)
        vr = self.pocket(pgraph)
        va, vr = self.communicate(va, vr)
        heavy = va[lgraph.heavy_canonical_pos]
        k = self.cfg.mixtures
        d = self.cfg.hidden_dim
        out: dict[str, np.ndarray] = {}
        for tag in ("p", "e"):
            pl = heavy @ self._t[f"mdn.{tag}.W_lig"]
            pp = vr @ self._t[f"mdn.{tag}.W_pro"]

            def head(name: str) -> np.ndarray:
                w = self.w[f"mdn.{tag}.{name}"]
                b = self.w[f"mdn.{tag}.{name.replace('W_', 'b_')}"]
                lhs = pl @ w[:, :d].T
                rhs = pp @ w[:, d:].T
                return (lhs[:, None, :] + rhs[None, :, :] + b).reshape(-1, k)

            rho_raw = head("W_rho")
            if tag == "p":
                out["rho_p"] = _softmax_np(rho_raw, axis=1)
                out["mu_p"] = _elu(head("W_mu")) + self.dtype.type(1.0)
                out["sigma_p"] = _elu(head("W_sigma")) + self.dtype.type(1.1)
            else:
                out["rho_e"] = np.tanh(rho_raw)
                out["mu_e"] = _elu(head("W_mu")) + self.dtype.type(1.0)
                out["sigma_e"] = _elu(head("W_sigma")) + self.dtype.type(1.1)
        return out

    def affinity(self, lgraph: LigandGraph, pgraph: PocketGraph) -> float:
        from . import gmm as gmm_mod

        p = self.pair_params(lgraph, pgraph)
        return gmm_mod.affinity_arrays(p["rho_p"], p["mu_p"], p["sigma_p"],
                                       p["rho_e"], p["mu_e"], p["sigma_e"])
