"""Assembly of pocket/ligand pairs into network-ready records.

Records with a trusted ligand pose (non-decoy entries) define the pocket site
by the ligand's heavy-atom mass centroid; decoy records never touch candidate
coordinates, so their pocket is built from the residue set alone. This keeps
decoy losses and screening scores independent of whatever placeholder
geometry a candidate SDF carries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diffcore as dc
from . import featurize as ft
from . import gmm
from . import network as net
from .chemio import ManifestRecord, parse_ligand_sdf, parse_manifest, parse_pocket_pdb
from .chemio.pdb import ResidueSet
from .chemio.sdf import Molecule
from .errors import TrainingError


@dataclass
class ComplexRecord:
    id: str
    ligand: Molecule
    pocket: ft.Pocket
    lgraph: ft.LigandGraph
    pgraph: ft.PocketGraph
    pkd: float | None
    decoy: bool
    pose_dists: np.ndarray | None  # (Nh, M) heavy atom -> functional center

    @property
    def labeled(self) -> bool:
        return self.pkd is not None


def pose_distances(heavy_coords: np.ndarray, pocket: ft.Pocket) -> np.ndarray:
    centers = np.asarray([r.func_center for r in pocket.residues])
    return np.linalg.norm(heavy_coords[:, None, :] - centers[None, :, :], axis=2)


def build_record(rid: str, residues: ResidueSet, mol: Molecule,
                 pkd: float | None, decoy: bool) -> ComplexRecord:
    if decoy:
        pocket = ft.build_site_pocket(residues)
    else:
        pocket = ft.extract_pocket(residues, mol)
    lgraph = ft.build_ligand_graph(mol)
    pgraph = ft.build_pocket_graph(pocket)
    pose = None if decoy else pose_distances(lgraph.heavy_coords, pocket)
    return ComplexRecord(rid, mol, pocket, lgraph, pgraph, pkd, decoy, pose)


def load_record(entry: ManifestRecord, base_dir: Path) -> ComplexRecord:
    base = Path(base_dir)
    residues = parse_pocket_pdb((base / entry.pocket).read_text())
    mol = parse_ligand_sdf((base / entry.ligand).read_text())
    return build_record(entry.id, residues, mol, entry.pkd, entry.decoy)


def load_manifest_records(manifest_path: Path) -> list[tuple[ManifestRecord, ComplexRecord]]:
    path = Path(manifest_path)
    entries = parse_manifest(path.read_text())
    base = path.parent
    return [(e, load_record(e, base)) for e in entries]


def score_affinity(record: ComplexRecord, params: net.ModelParams) -> float:
    """Predicted pKd for one record via the reference tensor path (no tape)."""
    with dc.no_grad():
        pair = net.predict_pair_gmm(record.lgraph, record.pgraph, params)
    return gmm.affinity(pair)


def score_affinity_fast(record: ComplexRecord, scorer: net.FastScorer) -> float:
    """Predicted pKd via the fused numpy inference path."""
    return scorer.affinity(record.lgraph, record.pgraph)


def rescore_poses(record: ComplexRecord, scorer: net.FastScorer,
                  poses: list[Molecule]) -> list[float]:
    """Pose potential U for each pose molecule (same atoms as the ligand)."""
    p = scorer.pair_params(record.lgraph, record.pgraph)
    shape = (len(record.lgraph.heavy_canonical_pos), record.pgraph.n_residues,
             scorer.cfg.mixtures)
    rho = p["rho_p"].reshape(shape).astype(np.float64)
    mu = p["mu_p"].reshape(shape).astype(np.float64)
    sigma = p["sigma_p"].reshape(shape).astype(np.float64)
    out = []
    for i, pose in enumerate(poses):
        if len(pose.atoms) != len(record.ligand.atoms):
            raise TrainingError(
                f"pose {i} of record {record.id!r} has {len(pose.atoms)} atoms; "
                f"the ligand has {len(record.ligand.atoms)}")
        coords = np.asarray([pose.atoms[int(k)].coords for k in record.lgraph.heavy_original_atoms])
        if not np.isfinite(coords).all():
            raise TrainingError(f"pose {i} of record {record.id!r} has non-finite coordinates")
        dists = pose_distances(coords, record.pocket)
        out.append(gmm.pose_potential_arrays(rho, mu, sigma, dists))
    return out
