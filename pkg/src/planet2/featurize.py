"""Initial node/edge features, pocket geometry, fingerprints, druglikeness.

Ligand atoms featurize into a 36-dim one-hot vector (element 10 | degree 6 |
charge 5 | hybridization 4 | aromatic 1 | attached-H 5 | in-ring 1 |
chirality 4) and bonds into a 10-dim vector (order 4 | conjugated 1 |
in-ring 1 | stereo 4). Pocket residues get 65 dims: a BLOSUM62 row plus RBF
encodings of the Calpha->site, functional-center->site and
Calpha->functional-center distances.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass

import numpy as np

from .chemio.pdb import AA3, AA_INDEX, Residue, ResidueSet
from .chemio.sdf import Bond, Molecule, _norm_symbol
from .errors import NumericsError, ParseError

logger = logging.getLogger(__name__)

ELEMENT_CLASSES = ("C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "other")
_ELEMENT_INDEX = {sym: i for i, sym in enumerate(ELEMENT_CLASSES)}

ATOM_FEATURE_DIM = 36
BOND_FEATURE_DIM = 10
RESIDUE_FEATURE_DIM = 65
RBF_CENTERS = np.arange(1.0, 16.0)  # 15 centers, 1..15 Angstrom
RBF_SIGMA = 1.0
FINGERPRINT_BITS = 2048
POCKET_RADIUS = 12.0       # residues kept within this distance of the site centroid
RESIDUE_EDGE_CUTOFF = 6.0  # Calpha-Calpha distance below which residues are linked

ATOMIC_MASS = {
    "H": 1.008, "He": 4.003, "Li": 6.94, "Be": 9.012, "B": 10.81, "C": 12.011,
    "N": 14.007, "O": 15.999, "F": 18.998, "Ne": 20.18, "Na": 22.99,
    "Mg": 24.305, "Al": 26.982, "Si": 28.085, "P": 30.974, "S": 32.06,
    "Cl": 35.45, "Ar": 39.95, "K": 39.098, "Ca": 40.078, "Fe": 55.845,
    "Cu": 63.546, "Zn": 65.38, "Se": 78.971, "Br": 79.904, "I": 126.904,
}
_FALLBACK_MASS = 12.011  # unknown elements weigh in as carbon-like

# BLOSUM62 over the 20 standard residues, row/column order ARNDCQEGHILKMFPSTWYV.
BLOSUM62 = np.array([
    [4, -1, -2, -2, 0, -1, -1, 0, -2, -1, -1, -1, -1, -2, -1, 1, 0, -3, -2, 0],
    [-1, 5, 0, -2, -3, 1, 0, -2, 0, -3, -2, 2, -1, -3, -2, -1, -1, -3, -2, -3],
    [-2, 0, 6, 1, -3, 0, 0, 0, 1, -3, -3, 0, -2, -3, -2, 1, 0, -4, -2, -3],
    [-2, -2, 1, 6, -3, 0, 2, -1, -1, -3, -4, -1, -3, -3, -1, 0, -1, -4, -3, -3],
    [0, -3, -3, -3, 9, -3, -4, -3, -3, -1, -1, -3, -1, -2, -3, -1, -1, -2, -2, -1],
    [-1, 1, 0, 0, -3, 5, 2, -2, 0, -3, -2, 1, 0, -3, -1, 0, -1, -2, -1, -2],
    [-1, 0, 0, 2, -4, 2, 5, -2, 0, -3, -3, 1, -2, -3, -1, 0, -1, -3, -2, -2],
    [0, -2, 0, -1, -3, -2, -2, 6, -2, -4, -4, -2, -3, -3, -2, 0, -2, -2, -3, -3],
    [-2, 0, 1, -1, -3, 0, 0, -2, 8, -3, -3, -1, -2, -1, -2, -1, -2, -2, 2, -3],
    [-1, -3, -3, -3, -1, -3, -3, -4, -3, 4, 2, -3, 1, 0, -3, -2, -1, -3, -1, 3],
    [-1, -2, -3, -4, -1, -2, -3, -4, -3, 2, 4, -2, 2, 0, -3, -2, -1, -2, -1, 1],
    [-1, 2, 0, -1, -3, 1, 1, -2, -1, -3, -2, 5, -1, -3, -1, 0, -1, -3, -2, -2],
    [-1, -1, -2, -3, -1, 0, -2, -3, -2, 1, 2, -1, 5, 0, -2, -1, -1, -1, -1, 1],
    [-2, -3, -3, -3, -2, -3, -3, -3, -1, 0, 0, -3, 0, 6, -4, -2, -2, 1, 3, -1],
    [-1, -2, -2, -1, -3, -1, -1, -2, -2, -3, -3, -1, -2, -4, 7, -1, -1, -4, -3, -2],
    [1, -1, 1, 0, -1, 0, 0, 0, -1, -2, -2, 0, -1, -2, -1, 4, 1, -3, -2, -2],
    [0, -1, 0, -1, -1, -1, -1, -2, -2, -1, -1, -1, -1, -2, -1, 1, 5, -2, -2, 0],
    [-3, -3, -4, -4, -2, -2, -3, -2, -2, -3, -2, -3, -1, 1, -4, -3, -2, 11, 2, -3],
    [-2, -2, -2, -3, -2, -1, -2, -3, 2, -1, -1, -2, -1, 3, -3, -2, -2, 2, 7, -1],
    [0, -3, -3, -3, -1, -2, -2, -3, -3, 3, 1, -2, 1, -1, -2, -2, 0, -3, -1, 4],
], dtype=np.float64)
_BLOSUM_ORDER = "ARNDCQEGHILKMFPSTWYV"
BLOSUM_ROW_BY_AA3 = {aa3: BLOSUM62[_BLOSUM_ORDER.index(one)]
                     for aa3, one in zip(AA3, "ARNDCQEGHILKMFPSTWYV")}

# Side-chain atom subsets whose unweighted mean defines the functional center.
FUNCTIONAL_CENTER_ATOMS: dict[str, tuple[str, ...]] = {
    "ALA": ("CB",), "VAL": ("CB",), "LEU": ("CG",), "ILE": ("CG1",), "PRO": ("CG",),
    "PHE": ("CG", "CD1", "CD2", "CE1", "CE2", "CZ"),
    "TYR": ("CG", "CD1", "CD2", "CE1", "CE2", "CZ"),
    "TRP": ("CG", "CD1", "CD2", "NE1", "CE2", "CE3", "CZ2", "CZ3", "CH2"),
    "MET": ("SD",), "CYS": ("SG",), "SER": ("OG",), "THR": ("OG1",),
    "ASN": ("CG", "OD1", "ND2"), "GLN": ("CD", "OE1", "NE2"),
    "ASP": ("CG", "OD1", "OD2"), "GLU": ("CD", "OE1", "OE2"),
    "LYS": ("NZ",), "ARG": ("CZ", "NH1", "NH2"),
    "HIS": ("CG", "ND1", "CD2", "CE1", "NE2"),
    "GLY": ("CA",),
}

# Coarse per-atom lipophilicity contributions used when the manifest supplies
# no logP; aromatic/sp3 carbons and halogens dominate, heteroatoms subtract.
_LOGP_CONTRIB = {
    "C_aromatic": 0.30, "C_sp3": 0.14, "C_other": 0.08,
    "N": -0.60, "O": -0.40, "S": 0.25, "P": 0.86,
    "F": 0.14, "Cl": 0.65, "Br": 0.86, "I": 1.10,
    "H_on_carbon": 0.12, "H_on_hetero": -0.30, "other": 0.0,
}


def element_class(symbol: str) -> str:
    s = _norm_symbol(symbol)
    return s if s in _ELEMENT_INDEX else "other"


def element_class_index(symbol: str) -> int:
    return _ELEMENT_INDEX[element_class(symbol)]


def _one_hot(index: int, width: int) -> np.ndarray:
    v = np.zeros(width)
    v[index] = 1.0
    return v


def _hybridization_from_nbs(nbs_i) -> int:
    """0 sp, 1 sp2, 2 sp3, 3 other; inferred from bond orders and degree."""
    orders = [b.order for _, b in nbs_i]
    if not orders:
        return 3
    n_double = sum(1 for o in orders if o == 2)
    if any(o == 3 for o in orders) or n_double >= 2:
        return 0
    if n_double == 1 or any(o == 4 for o in orders):
        return 1
    return 2


def _atom_features(mol: Molecule, nbs, idx: int) -> np.ndarray:
    atom = mol.atoms[idx]
    nbs_i = nbs[idx]
    degree = min(len(nbs_i), 5)
    charge = int(np.clip(atom.charge, -2, 2))
    n_h = min(sum(1 for j, _ in nbs_i if not mol.atoms[j].heavy), 4)
    aromatic = any(b.order == 4 for _, b in nbs_i)
    in_ring = any(b.in_ring for _, b in nbs_i)
    chirality = atom.parity if atom.parity in (0, 1, 2) else 3
    out = np.zeros(ATOM_FEATURE_DIM)
    out[element_class_index(atom.element)] = 1.0
    out[10 + degree] = 1.0
    out[16 + charge + 2] = 1.0
    out[21 + _hybridization_from_nbs(nbs_i)] = 1.0
    out[25] = 1.0 if aromatic else 0.0
    out[26 + n_h] = 1.0
    out[31] = 1.0 if in_ring else 0.0
    out[32 + chirality] = 1.0
    return out


def atom_features(mol: Molecule, idx: int) -> np.ndarray:
    """36-dim one-hot feature vector for one atom."""
    return _atom_features(mol, mol.neighbors(), idx)


def _has_multiple_bond(nbs_i, excluding: Bond | None = None) -> bool:
    for _, b in nbs_i:
        if b is excluding:
            continue
        if b.order in (2, 3, 4):
            return True
    return False


def _bond_features(nbs, bond: Bond) -> np.ndarray:
    if bond.order == 4:
        conjugated = True
    elif bond.order in (2, 3):
        conjugated = (_has_multiple_bond(nbs[bond.a], excluding=bond)
                      or _has_multiple_bond(nbs[bond.b], excluding=bond))
    else:
        conjugated = (_has_multiple_bond(nbs[bond.a]) and _has_multiple_bond(nbs[bond.b]))
    stereo = {0: 0, 1: 1, 6: 2}.get(bond.stereo, 3)
    out = np.zeros(BOND_FEATURE_DIM)
    out[bond.order - 1] = 1.0
    out[4] = 1.0 if conjugated else 0.0
    out[5] = 1.0 if bond.in_ring else 0.0
    out[6 + stereo] = 1.0
    return out


def bond_features(mol: Molecule, bond: Bond) -> np.ndarray:
    return _bond_features(mol.neighbors(), bond)


def rbf_encode(d: float) -> np.ndarray:
    """Map a distance to 15 Gaussian responses at centers 1..15 Angstrom."""
    if not math.isfinite(d):
        raise NumericsError("rbf_encode requires a finite distance")
    if d < 0:
        raise NumericsError("rbf_encode requires a non-negative distance")
    return np.exp(-((d - RBF_CENTERS) ** 2) / (2.0 * RBF_SIGMA ** 2))


def _rbf_matrix(dist: np.ndarray) -> np.ndarray:
    return np.exp(-((dist[..., None] - RBF_CENTERS) ** 2) / (2.0 * RBF_SIGMA ** 2))


def functional_center(residue: Residue) -> np.ndarray:
    """Unweighted mean of the residue's side-chain anchor atoms (CA for GLY)."""
    names = FUNCTIONAL_CENTER_ATOMS[residue.name]
    coords = []
    for name in names:
        atom = residue.atom(name)
        if atom is None:
            logger.warning("residue %s %s%d missing %s; functional center falls back to CA",
                           residue.name, residue.chain, residue.seqnum, name)
            return np.asarray(residue.ca.coords, dtype=np.float64)
        coords.append(atom.coords)
    return np.asarray(coords, dtype=np.float64).mean(axis=0)


@dataclass(frozen=True)
class PocketResidue:
    name: str
    class_index: int
    ca: np.ndarray
    func_center: np.ndarray
    features: np.ndarray  # 65-dim


@dataclass(frozen=True)
class Pocket:
    residues: tuple[PocketResidue, ...]
    edges: tuple[tuple[int, int], ...]  # i < j, Calpha distance < 6 A
    centroid: np.ndarray

    @property
    def size(self) -> int:
        return len(self.residues)


def residue_init_features(ca: np.ndarray, func_center: np.ndarray,
                          residue_name: str, centroid: np.ndarray) -> np.ndarray:
    d_ca = float(np.linalg.norm(ca - centroid))
    d_fc = float(np.linalg.norm(func_center - centroid))
    d_internal = float(np.linalg.norm(ca - func_center))
    return np.concatenate([
        BLOSUM_ROW_BY_AA3[residue_name],
        rbf_encode(d_ca),
        rbf_encode(d_fc),
        rbf_encode(d_internal),
    ])


def ligand_mass_centroid(mol: Molecule) -> np.ndarray:
    coords, masses = [], []
    for atom in mol.atoms:
        if not atom.heavy:
            continue
        coords.append(atom.coords)
        masses.append(ATOMIC_MASS.get(_norm_symbol(atom.element), _FALLBACK_MASS))
    if not coords:
        raise ParseError("ligand has no heavy atoms")
    coords = np.asarray(coords, dtype=np.float64)
    masses = np.asarray(masses, dtype=np.float64)
    return (coords * masses[:, None]).sum(axis=0) / masses.sum()


def _rbf_block(d: np.ndarray) -> np.ndarray:
    return np.exp(-((d[:, None] - RBF_CENTERS) ** 2) / (2.0 * RBF_SIGMA ** 2))


def _build_pocket(residues: list[Residue], centroid: np.ndarray) -> Pocket:
    cas = np.asarray([r.ca.coords for r in residues], dtype=np.float64)
    fcs = np.asarray([functional_center(r) for r in residues])
    d_ca = np.linalg.norm(cas - centroid, axis=1)
    d_fc = np.linalg.norm(fcs - centroid, axis=1)
    d_int = np.linalg.norm(cas - fcs, axis=1)
    blocks = np.concatenate([
        np.asarray([BLOSUM_ROW_BY_AA3[r.name] for r in residues]),
        _rbf_block(d_ca), _rbf_block(d_fc), _rbf_block(d_int),
    ], axis=1)
    built = tuple(
        PocketResidue(r.name, AA_INDEX[r.name], cas[i], fcs[i], blocks[i])
        for i, r in enumerate(residues)
    )
    pair_d = np.linalg.norm(cas[:, None, :] - cas[None, :, :], axis=2)
    ii, jj = np.where(np.triu(pair_d < RESIDUE_EDGE_CUTOFF, k=1))
    edges = tuple((int(i), int(j)) for i, j in zip(ii, jj))
    return Pocket(built, edges, centroid)


def extract_pocket(residue_set: ResidueSet, ligand: Molecule) -> Pocket:
    """Keep residues with any heavy atom within 12 A (inclusive) of the
    ligand's heavy-atom mass centroid; link residues with Calpha pairs
    closer than 6 A."""
    centroid = ligand_mass_centroid(ligand)
    kept = []
    for res in residue_set.residues:
        heavies = res.heavy_atoms() or res.atoms
        dists = np.linalg.norm(
            np.asarray([a.coords for a in heavies], dtype=np.float64) - centroid, axis=1
        )
        if dists.min() <= POCKET_RADIUS:
            kept.append(res)
    if not kept:
        raise ParseError("no residue within the pocket radius; mis-specified site?")
    return _build_pocket(kept, centroid)


def build_site_pocket(residue_set: ResidueSet) -> Pocket:
    """Pocket for records without a trusted ligand pose (decoys, screening):
    the site centroid is the mean of the residues' functional centers and no
    radius filter is applied, so results never depend on candidate coordinates."""
    residues = list(residue_set.residues)
    fcs = np.asarray([functional_center(r) for r in residues])
    return _build_pocket(residues, fcs.mean(axis=0))


# -- circular fingerprints ---------------------------------------------------

def _stable_hash(payload: tuple) -> int:
    digest = hashlib.blake2b(repr(payload).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _heavy_adjacency(mol: Molecule) -> dict[int, list[tuple[int, int]]]:
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in mol.heavy_indices()}
    for b in mol.bonds:
        if mol.atoms[b.a].heavy and mol.atoms[b.b].heavy:
            adj[b.a].append((b.b, b.order))
            adj[b.b].append((b.a, b.order))
    return adj


def _initial_invariants(mol: Molecule) -> dict[int, int]:
    nbs = mol.neighbors()
    out = {}
    for i in mol.heavy_indices():
        atom = mol.atoms[i]
        heavy_deg = sum(1 for j, _ in nbs[i] if mol.atoms[j].heavy)
        n_h = sum(1 for j, _ in nbs[i] if not mol.atoms[j].heavy)
        ring = any(b.in_ring for _, b in nbs[i])
        arom = any(b.order == 4 for _, b in nbs[i])
        out[i] = _stable_hash((element_class(atom.element), heavy_deg, n_h,
                               atom.charge, ring, arom))
    return out


def ecfp4(mol: Molecule, n_bits: int = FINGERPRINT_BITS) -> int:
    """Circular substructure fingerprint of radius 2 folded to ``n_bits`` bits,
    returned as a big integer bitset. Invariant under atom relabeling."""
    adj = _heavy_adjacency(mol)
    ids = _initial_invariants(mol)
    features = set(ids.values())
    for radius in (1, 2):
        nxt = {}
        for i, current in ids.items():
            env = sorted((order, ids[j]) for j, order in adj[i])
            nxt[i] = _stable_hash((radius, current, tuple(env)))
        ids = nxt
        features.update(ids.values())
    bits = 0
    for f in features:
        bits |= 1 << (f % n_bits)
    return bits


def tanimoto(a: int, b: int) -> float:
    """|a & b| / |a | b|; defined as 0 when both bitsets are empty."""
    union = (a | b).bit_count()
    if union == 0:
        return 0.0
    return (a & b).bit_count() / union


# -- druglikeness ------------------------------------------------------------

@dataclass(frozen=True)
class Druglikeness:
    mw: float
    logp: float
    hbd: int
    hba: int
    ro5_pass_count: int
    heavy_atom_count: int


def _crippen_like_logp(mol: Molecule) -> float:
    nbs = mol.neighbors()
    total = 0.0
    for i, atom in enumerate(mol.atoms):
        cls = element_class(atom.element)
        if not atom.heavy:
            carbon_nb = any(element_class(mol.atoms[j].element) == "C" for j, _ in nbs[i])
            total += _LOGP_CONTRIB["H_on_carbon" if carbon_nb else "H_on_hetero"]
        elif cls == "C":
            if any(b.order == 4 for _, b in nbs[i]):
                total += _LOGP_CONTRIB["C_aromatic"]
            elif _hybridization_from_nbs(nbs[i]) == 2:
                total += _LOGP_CONTRIB["C_sp3"]
            else:
                total += _LOGP_CONTRIB["C_other"]
        else:
            total += _LOGP_CONTRIB.get(cls, _LOGP_CONTRIB["other"])
    return total


def druglikeness(mol: Molecule, logp: float | None = None) -> Druglikeness:
    nbs = mol.neighbors()
    mw = sum(ATOMIC_MASS.get(_norm_symbol(a.element), _FALLBACK_MASS) for a in mol.atoms)
    hbd = hba = 0
    for i, atom in enumerate(mol.atoms):
        if element_class(atom.element) in ("N", "O"):
            hba += 1
            if any(not mol.atoms[j].heavy for j, _ in nbs[i]):
                hbd += 1
    logp_value = float(logp) if logp is not None else _crippen_like_logp(mol)
    passes = sum([mw <= 500.0, logp_value <= 5.0, hbd <= 5, hba <= 10])
    return Druglikeness(mw, logp_value, hbd, hba, passes, len(mol.heavy_indices()))


# -- network-facing graph bundles --------------------------------------------

def _feature_tables(mol: Molecule, nbs) -> tuple[np.ndarray, list[np.ndarray]]:
    atom_table = np.asarray([_atom_features(mol, nbs, i) for i in range(len(mol.atoms))])
    bond_table = [_bond_features(nbs, b) for b in mol.bonds]
    return atom_table, bond_table


def _canonical_order(mol: Molecule, nbs, atom_table: np.ndarray,
                     bond_table: list[np.ndarray]) -> np.ndarray:
    """Deterministic atom ordering from iterated neighborhood color refinement.

    Isomorphic inputs map to the same ordered arrays up to swaps of atoms the
    refinement cannot distinguish, and such atoms carry identical features, so
    downstream numerics are reproducible under relabeling.
    """
    n = len(mol.atoms)
    bond_key = {}
    for b, bf in zip(mol.bonds, bond_table):
        key = bf.tobytes()
        bond_key[(b.a, b.b)] = key
        bond_key[(b.b, b.a)] = key
    colors = [_stable_hash(("atom", atom_table[i].tobytes())) for i in range(n)]
    distinct = len(set(colors))
    for _ in range(n):
        nxt = []
        for i in range(n):
            env = sorted((bond_key[(j, i)], colors[j]) for j, _ in nbs[i])
            nxt.append(_stable_hash(("wl", colors[i], tuple(env))))
        now = len(set(nxt))
        colors = nxt
        if now == distinct:
            break
        distinct = now
    return np.array(sorted(range(n), key=lambda i: colors[i]), dtype=np.intp)


def canonical_atom_order(mol: Molecule) -> np.ndarray:
    nbs = mol.neighbors()
    atom_table, bond_table = _feature_tables(mol, nbs)
    return _canonical_order(mol, nbs, atom_table, bond_table)


@dataclass
class LigandGraph:
    """Arrays for the ligand encoder, laid out in canonical atom order.

    All pair-level outputs (mixtures, contact maps, type logits) enumerate
    heavy atoms in canonical order; the ``heavy_*`` arrays below are aligned
    with that enumeration so labels and pose coordinates line up without
    further bookkeeping.
    """
    n_atoms: int
    atom_feats: np.ndarray        # (N, 36) canonical order
    edge_src: np.ndarray          # (E,) canonical indices, directed
    edge_dst: np.ndarray          # (E,)
    edge_rev: np.ndarray          # (E,) index of the reversed edge
    edge_feats: np.ndarray        # (E, 10)
    in_edge_mask: np.ndarray      # (E, E) bool: incoming to src, excluding reverse
    atom_in_mask: np.ndarray      # (N, E) bool: edges pointing at each atom
    to_input_order: np.ndarray    # (N,) canonical position of each input atom
    heavy_canonical_pos: np.ndarray   # (Nh,) canonical positions, ascending
    heavy_original_atoms: np.ndarray  # (Nh,) input-order atom indices, aligned
    heavy_input_rows: np.ndarray  # (Nh,) row in the input-order heavy list
    heavy_coords: np.ndarray      # (Nh, 3) reference coordinates, aligned
    heavy_class_idx: np.ndarray   # (Nh,) 10-way element class labels, aligned


def build_ligand_graph(mol: Molecule) -> LigandGraph:
    nbs = mol.neighbors()
    atom_table, bond_table = _feature_tables(mol, nbs)
    order = _canonical_order(mol, nbs, atom_table, bond_table)
    n = len(mol.atoms)
    pos = np.empty(n, dtype=np.intp)
    pos[order] = np.arange(n, dtype=np.intp)

    feats = atom_table[order]
    directed = []
    for b, bf in zip(mol.bonds, bond_table):
        directed.append((int(pos[b.a]), int(pos[b.b]), bf))
        directed.append((int(pos[b.b]), int(pos[b.a]), bf))
    directed.sort(key=lambda t: (t[0], t[1]))
    e = len(directed)
    src = np.array([t[0] for t in directed], dtype=np.intp)
    dst = np.array([t[1] for t in directed], dtype=np.intp)
    efeats = (np.asarray([t[2] for t in directed])
              if directed else np.zeros((0, BOND_FEATURE_DIM)))
    index = {(int(s), int(d)): k for k, (s, d, _) in enumerate(directed)}
    rev = np.array([index[(int(d), int(s))] for s, d in zip(src, dst)], dtype=np.intp)

    in_edge = dst[None, :] == src[:, None]
    if e:
        in_edge[np.arange(e), rev] = False
    atom_in = dst[None, :] == np.arange(n)[:, None]

    heavy_input = list(mol.heavy_indices())
    aligned = sorted(heavy_input, key=lambda i: pos[i])
    canon_pos = np.array([pos[i] for i in aligned], dtype=np.intp)
    input_rows = np.array([heavy_input.index(i) for i in aligned], dtype=np.intp)
    coords = np.asarray([mol.atoms[i].coords for i in aligned], dtype=np.float64)
    classes = np.array([element_class_index(mol.atoms[i].element) for i in aligned],
                       dtype=np.intp)
    return LigandGraph(
        n_atoms=n, atom_feats=feats, edge_src=src, edge_dst=dst, edge_rev=rev,
        edge_feats=efeats, in_edge_mask=in_edge, atom_in_mask=atom_in,
        to_input_order=pos,
        heavy_canonical_pos=canon_pos,
        heavy_original_atoms=np.array(aligned, dtype=np.intp),
        heavy_input_rows=input_rows,
        heavy_coords=coords, heavy_class_idx=classes,
    )


@dataclass
class PocketGraph:
    """Arrays for the pocket encoder, residue order as given by the Pocket."""
    n_residues: int
    res_feats: np.ndarray     # (M, 65)
    ca: np.ndarray            # (M, 3)
    func_centers: np.ndarray  # (M, 3)
    rbf_ca: np.ndarray        # (M, M, 15) of Calpha-Calpha distances
    rbf_fc: np.ndarray        # (M, M, 15) of functional-center distances
    egcl_src: np.ndarray      # (Eg,) directed edges of the < 6 A graph
    egcl_dst: np.ndarray
    egcl_d2: np.ndarray       # (Eg, 1) squared Calpha distances
    has_neighbor: np.ndarray  # (M, 1) float 0/1
    class_idx: np.ndarray     # (M,) 20-way residue labels


def build_pocket_graph(pocket: Pocket) -> PocketGraph:
    m = pocket.size
    feats = np.asarray([r.features for r in pocket.residues])
    ca = np.asarray([r.ca for r in pocket.residues])
    fc = np.asarray([r.func_center for r in pocket.residues])
    d_ca = np.linalg.norm(ca[:, None, :] - ca[None, :, :], axis=2)
    d_fc = np.linalg.norm(fc[:, None, :] - fc[None, :, :], axis=2)
    src, dst = [], []
    for i, j in pocket.edges:
        src.extend((i, j))
        dst.extend((j, i))
    src = np.array(src, dtype=np.intp)
    dst = np.array(dst, dtype=np.intp)
    d2 = ((ca[src] - ca[dst]) ** 2).sum(axis=1)[:, None] if len(src) else np.zeros((0, 1))
    has_nb = np.zeros((m, 1))
    if len(src):
        has_nb[np.unique(src), 0] = 1.0
    return PocketGraph(
        n_residues=m, res_feats=feats, ca=ca, func_centers=fc,
        rbf_ca=_rbf_matrix(d_ca), rbf_fc=_rbf_matrix(d_fc),
        egcl_src=src, egcl_dst=dst, egcl_d2=d2, has_neighbor=has_nb,
        class_idx=np.array([r.class_index for r in pocket.residues], dtype=np.intp),
    )
