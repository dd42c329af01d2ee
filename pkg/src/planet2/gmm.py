"""Gaussian-mixture math shared by training, scoring, and pose rescoring.

Every atom-residue pair carries two K-component mixtures over distance: a
normalized probability density F(x) (simplex weights) and an unnormalized
signed energy curve E(x) (weights in (-1, 1)). The pair's affinity
contribution is the short-range expectation integral of F times E over
[0, 3] Angstrom, evaluated with fixed 64-point Gauss-Legendre quadrature so
it stays deterministic and differentiable. Summing pair contributions gives
the predicted pKd; summing pair negative log-likelihoods at a pose's observed
distances gives the pose potential U (lower U = better pose).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import NumericsError, ShapeError

NLL_FLOOR = 1e-10
INTEGRATION_UPPER = 3.0       # short-range window in Angstrom
QUADRATURE_POINTS = 64
DECOY_DISTANCE = 5.0          # CDF threshold used by the decoy objective
POSE_PAIR_CUTOFF = 12.0       # pairs farther than this are skipped in U

_nodes01, _weights01 = np.polynomial.legendre.leggauss(QUADRATURE_POINTS)
GL_NODES = 0.5 * INTEGRATION_UPPER * (_nodes01 + 1.0)
GL_WEIGHTS = 0.5 * INTEGRATION_UPPER * _weights01


@dataclass
class PairGMM:
    """Mixture parameters for one or many pairs; arrays end in a K axis."""

    rho_p: dc.Tensor
    mu_p: dc.Tensor
    sigma_p: dc.Tensor
    rho_e: dc.Tensor
    mu_e: dc.Tensor
    sigma_e: dc.Tensor

    @property
    def n_components(self) -> int:
        return self.rho_p.shape[-1]

    @property
    def leading_shape(self) -> tuple[int, ...]:
        return self.rho_p.shape[:-1]

    @staticmethod
    def from_arrays(rho_p, mu_p, sigma_p, rho_e, mu_e, sigma_e) -> "PairGMM":
        return PairGMM(*(dc.as_tensor(np.asarray(a, dtype=np.float64))
                         for a in (rho_p, mu_p, sigma_p, rho_e, mu_e, sigma_e)))


def _expand_point(d, leading: tuple[int, ...]):
    arr = np.asarray(d.data if isinstance(d, dc.Tensor) else d, dtype=np.float64)
    if arr.shape not in ((), leading):
        raise ShapeError(f"point shape {arr.shape} does not match pairs {leading}")
    return (d if isinstance(d, dc.Tensor) else dc.as_tensor(arr))


def _mixture_at(rho, mu, sigma, d) -> dc.Tensor:
    point = _expand_point(d, mu.shape[:-1])
    point = dc.reshape(point, point.shape + (1,)) if point.shape else point
    return dc.tsum(dc.mul(rho, dc.gaussian_pdf(point, mu, sigma)), axis=-1)


def density(gmm: PairGMM, d) -> dc.Tensor:
    """F(d) = sum_k rho_p_k N(d; mu_k, sigma_k); broadcasts over pairs."""
    return _mixture_at(gmm.rho_p, gmm.mu_p, gmm.sigma_p, d)


def energy(gmm: PairGMM, d) -> dc.Tensor:
    """E(d) = sum_k rho_e_k N(d; mu_k, sigma_k); may take either sign."""
    return _mixture_at(gmm.rho_e, gmm.mu_e, gmm.sigma_e, d)


def prob_mass_below(gmm: PairGMM, t) -> dc.Tensor:
    """P(d <= t) via the mixture CDF."""
    point = _expand_point(t, gmm.mu_p.shape[:-1])
    point = dc.reshape(point, point.shape + (1,)) if point.shape else point
    return dc.tsum(dc.mul(gmm.rho_p, dc.gaussian_cdf(point, gmm.mu_p, gmm.sigma_p)), axis=-1)


def _flatten_pairs(gmm: PairGMM) -> tuple[PairGMM, tuple[int, ...]]:
    lead = gmm.leading_shape
    k = gmm.n_components
    if len(lead) <= 1:
        return gmm, lead
    p = int(np.prod(lead))
    flat = PairGMM(*(dc.reshape(t, (p, k)) for t in (
        gmm.rho_p, gmm.mu_p, gmm.sigma_p, gmm.rho_e, gmm.mu_e, gmm.sigma_e)))
    return flat, lead


def expectation_energy(gmm: PairGMM) -> dc.Tensor:
    """Per-pair expectation integral over the short-range window.

    64-point Gauss-Legendre on [0, 3] A, exact for polynomial degree <= 127;
    differentiable with respect to all six parameter blocks.
    """
    flat, lead = _flatten_pairs(gmm)
    k = flat.n_components
    dtype = flat.mu_p.dtype
    nodes = dc.as_tensor(GL_NODES.astype(dtype).reshape(1, 1, -1))
    if flat.leading_shape == ():
        shape3 = (1, k, 1)
        out_shape = ()
    else:
        shape3 = (flat.leading_shape[0], k, 1)
        out_shape = lead

    def curve(rho, mu, sigma):
        pdf = dc.gaussian_pdf(nodes, dc.reshape(mu, shape3), dc.reshape(sigma, shape3))
        return dc.tsum(dc.mul(dc.reshape(rho, shape3), pdf), axis=1)  # (P, Q)

    f = curve(flat.rho_p, flat.mu_p, flat.sigma_p)
    e = curve(flat.rho_e, flat.mu_e, flat.sigma_e)
    w = dc.as_tensor(GL_WEIGHTS.astype(dtype).reshape(-1, 1))
    per_pair = dc.reshape(dc.matmul(dc.mul(f, e), w), (-1,))
    if out_shape == ():
        return dc.reshape(per_pair, ())
    return dc.reshape(per_pair, out_shape)


def affinity(gmm: PairGMM) -> float:
    """Predicted pKd: exact, enumeration-order-independent sum of the per-pair
    expectation energies. Returns 0.0 for degenerate zero-pair input."""
    if int(np.prod(gmm.leading_shape)) == 0:
        return 0.0
    with dc.no_grad():
        per_pair = expectation_energy(gmm).data
    return math.fsum(np.asarray(per_pair, dtype=np.float64).reshape(-1).tolist())


def pair_nll(gmm: PairGMM, d) -> dc.Tensor:
    """-log(F(d) + 1e-10): mixture negative log-likelihood per pair."""
    return dc.neg(dc.tlog(dc.add(density(gmm, d), NLL_FLOOR)))


# -- fused array fast paths (inference; mirror the tensor formulas) ----------

_QUAD_BASIS = np.stack([GL_NODES ** 2, GL_NODES, np.ones_like(GL_NODES)])  # (3, Q)


_QUAD_BASIS1 = np.concatenate([_QUAD_BASIS, np.ones((1, QUADRATURE_POINTS))])  # (4, Q)


def mixture_curves_arrays(rho: np.ndarray, mu: np.ndarray, sigma: np.ndarray,
                          basis: np.ndarray | None = None) -> np.ndarray:
    """Mixture values at the quadrature nodes for (P, K) parameter arrays.

    The log of each weighted component is quadratic in x, so one
    (P*K, 4) @ (4, Q) product evaluates everything; negative weights carry
    their sign outside the exp.
    """
    if basis is None:
        basis = _QUAD_BASIS1.astype(rho.dtype)
    p, k = rho.shape
    inv = 0.5 / (sigma * sigma)
    amp = np.abs(rho) / (sigma * math.sqrt(2.0 * math.pi))
    with np.errstate(divide="ignore"):
        log_amp = np.log(amp)  # -inf for zero weights: the component vanishes
    coeff = np.empty((p, k, 4), dtype=rho.dtype)
    coeff[..., 0] = -inv
    coeff[..., 1] = 2.0 * mu * inv
    coeff[..., 2] = -mu * mu * inv
    coeff[..., 3] = log_amp
    expo = coeff.reshape(p * k, 4) @ basis
    comp = np.exp(expo, out=expo)
    sign = np.signbit(rho).reshape(p * k, 1)
    np.negative(comp, out=comp, where=sign)
    return comp.reshape(p, k, -1).sum(axis=1)  # (P, Q)


def expectation_energy_arrays(rho_p, mu_p, sigma_p, rho_e, mu_e, sigma_e) -> np.ndarray:
    """Per-pair expectation integrals from flat (P, K) parameter arrays."""
    basis = _QUAD_BASIS1.astype(rho_p.dtype)
    p = rho_p.shape[0]
    # both heads share one exponent GEMM and one exp pass
    both = mixture_curves_arrays(
        np.concatenate([rho_p, rho_e]), np.concatenate([mu_p, mu_e]),
        np.concatenate([sigma_p, sigma_e]), basis)
    f = both[:p]
    f *= both[p:]
    return f @ GL_WEIGHTS.astype(rho_p.dtype)


def affinity_arrays(rho_p, mu_p, sigma_p, rho_e, mu_e, sigma_e) -> float:
    if rho_p.size == 0:
        return 0.0
    per_pair = expectation_energy_arrays(rho_p, mu_p, sigma_p, rho_e, mu_e, sigma_e)
    return math.fsum(np.asarray(per_pair, dtype=np.float64).reshape(-1).tolist())


def nll_arrays(rho: np.ndarray, mu: np.ndarray, sigma: np.ndarray,
               d: np.ndarray) -> np.ndarray:
    """-log(F(d) + floor) for (..., K) parameters and matching distances."""
    z = (d[..., None] - mu) / sigma
    comp = np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))
    return -np.log((rho * comp).sum(axis=-1) + NLL_FLOOR)


def pose_potential(gmm: PairGMM, distances: np.ndarray,
                   cutoff: float = POSE_PAIR_CUTOFF) -> float:
    """Statistical pose score U: the sum of per-pair negative log-likelihoods
    at the pose's observed distances. Pairs beyond ``cutoff`` are skipped to
    bound the work on large poses; lower U means a better pose."""
    dists = np.asarray(distances, dtype=np.float64)
    if dists.shape != gmm.leading_shape:
        raise ShapeError(
            f"distance matrix {dists.shape} does not match pairs {gmm.leading_shape}")
    if not np.isfinite(dists).all():
        raise NumericsError("pose distances contain non-finite values")
    return pose_potential_arrays(gmm.rho_p.data, gmm.mu_p.data, gmm.sigma_p.data,
                                 dists, cutoff=cutoff)


def pose_potential_arrays(rho: np.ndarray, mu: np.ndarray, sigma: np.ndarray,
                          distances: np.ndarray,
                          cutoff: float = POSE_PAIR_CUTOFF) -> float:
    keep = distances <= cutoff
    if not keep.any():
        return 0.0
    nll = nll_arrays(rho[keep], mu[keep], sigma[keep], distances[keep])
    return math.fsum(np.asarray(nll, dtype=np.float64).reshape(-1).tolist())
