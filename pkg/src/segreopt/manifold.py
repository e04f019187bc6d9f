"""Geometry of the manifold of nonzero rank-one tensors.

Points are stored as a scalar weight plus unit factor vectors.  The sign
convention used throughout: each factor's largest-magnitude entry is made
positive and any residual sign parity is absorbed into the weight, so a
tensor has one canonical representative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    check_tensor,
    contract_all_but,
    contract_all_modes,
    fro_norm,
    outer_rank_one,
    unfold,
)

logger = logging.getLogger(__name__)

_UNIT_TOL = 1e-6
_POWER_TOL = 1e-12
_POWER_MAX_ITERS = 500


class DegenerateInputError(ValueError):
    """Raised when an operation receives an input it cannot represent
    (zero tensor to retract, zero weight, ...)."""


@dataclass(frozen=True)
class SegrePoint:
    """One rank-one component: weight ``lam`` times unit factors ``u_l``.

    The constructor checks each factor is unit norm (within 1e-6) and then
    renormalizes to machine precision, so stored factors always satisfy
    ``| ||u_l|| - 1 | <= 1e-12``.
    """

    weight: float
    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.weight == 0 or not np.isfinite(self.weight):
            raise ValueError(f"weight must be nonzero and finite, got {self.weight}")
        if len(self.factors) < 2:
            raise ValueError("need at least two factor vectors")
        fixed = []
        for l, f in enumerate(self.factors):
            f = np.asarray(f, dtype=np.float64)
            if f.ndim != 1 or f.size == 0:
                raise ValueError(f"factor {l} must be a nonempty vector")
            nrm = np.linalg.norm(f)
            if abs(nrm - 1.0) > _UNIT_TOL:
                raise ValueError(f"factor {l} is not unit norm (||u|| = {nrm})")
            fixed.append(f / nrm)
        object.__setattr__(self, "factors", tuple(fixed))
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.size for f in self.factors)

    @property
    def order(self) -> int:
        return len(self.factors)

    def embed(self) -> np.ndarray:
        """The rank-one tensor ``weight * u_0 ⊗ ... ⊗ u_{d-1}``."""
        return outer_rank_one(self.weight, self.factors)


@dataclass(frozen=True)
class CPModel:
    """Ordered list of rank-one components sharing a shape."""

    components: tuple[SegrePoint, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("model needs at least one component")
        shape = comps[0].shape
        if any(c.shape != shape for c in comps):
            raise ValueError("all components must share one shape")
        object.__setattr__(self, "components", comps)

    @property
    def rank(self) -> int:
        return len(self.components)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.components[0].shape

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def factor_matrix(self, mode: int) -> np.ndarray:
        """Mode-``mode`` factors stacked as columns, one per component."""
        return np.column_stack([c.factors[mode] for c in self.components])

    def embed(self) -> np.ndarray:
        out = self.components[0].embed()
        for c in self.components[1:]:
            out += c.embed()
        return out

    @classmethod
    def from_factors(cls, weights, factor_matrices) -> "CPModel":
        """Build from a weight vector and per-mode ``p_l x r`` factor matrices."""
        r = len(weights)
        comps = tuple(
            SegrePoint(float(weights[i]), tuple(u[:, i] for u in factor_matrices))
            for i in range(r)
        )
        return cls(comps)


def project_tangent(point: SegrePoint, x: np.ndarray) -> np.ndarray:
    """Orthogonal projection of ``x`` onto the tangent space at ``point``.

    The tangent space of the rank-one manifold at ``u_0 ⊗ ... ⊗ u_{d-1}`` is
    spanned by the core direction (all factors) plus, per mode ``k``, the
    directions with ``u_k`` replaced by any vector orthogonal to it.  The
    projector applies ``P_l = u_l u_l^T`` in every mode for the core term and
    ``I - P_k`` in mode ``k`` (``P_l`` elsewhere) for the mode terms.
    """
    x = np.asarray(x)
    if x.shape != point.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs point shape {point.shape}")
    us = point.factors
    vs = [contract_all_but(x, us, k) for k in range(point.order)]
    core = float(np.dot(vs[0], us[0]))
    out = outer_rank_one(core, us)
    for k, (u, v) in enumerate(zip(us, vs)):
        h = v - np.dot(u, v) * u
        fs = list(us)
        fs[k] = h
        out += outer_rank_one(1.0, fs)
    return out


def _complement_basis(u: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of the complement of the unit vector ``u``,
    as a ``p x (p-1)`` matrix."""
    q, _, _ = np.linalg.svd(u[:, None], full_matrices=True)
    return q[:, 1:]


@dataclass(frozen=True)
class TangentBasis:
    """Orthonormal ambient basis of the tangent space at ``point``.

    ``vectors`` has shape ``(df,) + point.shape`` with ``df = 1 + sum(p_l - 1)``.
    Coordinate layout: index 0 is the core direction, followed by one block of
    ``p_k - 1`` entries per mode ``k`` in ascending mode order.  Blocks use the
    column order of the deterministic complement bases, so coordinates map
    back to ambient tensors via :func:`tangent_from_coords`.
    """

    point: SegrePoint
    vectors: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]


def tangent_dim(shape: tuple[int, ...]) -> int:
    return 1 + sum(p - 1 for p in shape)


def tangent_basis(point: SegrePoint) -> TangentBasis:
    """Materialize the orthonormal tangent basis at ``point``."""
    us = point.factors
    shape = point.shape
    df = tangent_dim(shape)
    vectors = np.empty((df,) + shape)
    vectors[0] = outer_rank_one(1.0, us)
    pos = 1
    for k, u in enumerate(us):
        comp = _complement_basis(u)
        for j in range(comp.shape[1]):
            fs = list(us)
            fs[k] = comp[:, j]
            vectors[pos] = outer_rank_one(1.0, fs)
            pos += 1
    return TangentBasis(point=point, vectors=vectors)


def complement_bases(point: SegrePoint) -> list[np.ndarray]:
    """Per-mode complement bases matching the :class:`TangentBasis` layout."""
    return [_complement_basis(u) for u in point.factors]


def tangent_from_coords(point: SegrePoint, comps: list[np.ndarray], coords: np.ndarray) -> np.ndarray:
    """Ambient tangent tensor with the given basis coordinates.

    ``comps`` must come from :func:`complement_bases` (or the matching
    :class:`TangentBasis` construction) for the coordinate layout to agree.
    """
    us = point.factors
    out = outer_rank_one(float(coords[0]), us)
    pos = 1
    for k, q in enumerate(comps):
        nk = q.shape[1]
        h = q @ coords[pos : pos + nk]
        fs = list(us)
        fs[k] = h
        out += outer_rank_one(1.0, fs)
        pos += nk
    return out


def _leading_eigvec(g: np.ndarray) -> np.ndarray:
    """Dominant eigenvector of a symmetric PSD matrix by power iteration,
    falling back to a full decomposition when 500 iterations do not reach
    a 1e-12 successive-iterate change."""
    p = g.shape[0]
    if p == 1:
        return np.ones(1)
    v = np.zeros(p)
    v[int(np.argmax(np.diag(g)))] = 1.0
    for _ in range(_POWER_MAX_ITERS):
        w = g @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            break
        w /= nrm
        if min(np.linalg.norm(w - v), np.linalg.norm(w + v)) <= _POWER_TOL:
            return w
        v = w
    evals, evecs = np.linalg.eigh(g)
    if p > 1 and evals[-1] - evals[-2] <= 1e-12 * max(evals[-1], 1e-300):
        logger.warning("leading singular value is (near-)tied; taking the lowest-index vector")
    return evecs[:, -1]


def _sign_fix(u: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude entry is positive (first index on ties)."""
    j = int(np.argmax(np.abs(u)))
    return -u if u[j] < 0 else u


def leading_singular_vector(m: np.ndarray) -> np.ndarray:
    """Sign-fixed leading left singular vector of a matrix."""
    g = m @ m.T
    return _sign_fix(_leading_eigvec(g))


def retract_thosvd(x: np.ndarray) -> SegrePoint:
    """Rank-one retraction: per-mode leading singular vectors of the unfoldings,
    weight set by projecting ``x`` onto the resulting direction.

    For matrices (``d = 2``) this is the best rank-one approximation.
    """
    x = check_tensor(x)
    if fro_norm(x) == 0.0:
        raise DegenerateInputError("cannot retract the zero tensor")
    us = tuple(leading_singular_vector(unfold(x, k)) for k in range(x.ndim))
    lam = contract_all_modes(x, us)
    if lam == 0.0:
        raise DegenerateInputError("retraction produced a zero weight")
    return SegrePoint(lam, us)


def incoherence(model: CPModel) -> tuple[list[float], float]:
    """Per-mode incoherence ``mu_l = p_l * max_{i != j} <u_{l,i}, u_{l,j}>^2``
    and the worst-mode root ``eta = max_l sqrt(mu_l / p_l)``.

    By convention a rank-one model has ``mu_l = 0`` and ``eta = 0``.
    """
    if model.rank < 2:
        return [0.0] * len(model.shape), 0.0
    mus = []
    eta = 0.0
    for l, p in enumerate(model.shape):
        u = model.factor_matrix(l)
        gram = u.T @ u
        off = np.abs(gram - np.diag(np.diag(gram))).max()
        mus.append(p * off**2)
        eta = max(eta, off)
    return mus, float(eta)


@dataclass(frozen=True)
class ErrorReport:
    """Result of matching an estimated model against a reference model."""

    max_component_error: float
    rel_frobenius_error: float
    permutation: tuple[int, ...]
    sign_flips: tuple[int, ...]
    aligned: CPModel


def _factor_inner(a: SegrePoint, b: SegrePoint) -> float:
    """``<embed(a), embed(b)>`` via the factorization identity."""
    out = a.weight * b.weight
    for ua, ub in zip(a.factors, b.factors):
        out *= float(np.dot(ua, ub))
    return out


def align_and_error(estimate: CPModel, truth: CPModel) -> ErrorReport:
    """Greedily match estimate components to truth components and report errors.

    Matching maximizes the absolute normalized inner product of embedded
    components (without replacement; ties broken by lowest index pair).
    Matched estimates get their weight sign flipped so each pairs
    nonnegatively with its truth component.  Reported errors:
    ``max_i ||E_i - T_i|| / |lam_i|`` over matched pairs, and the relative
    Frobenius error of the summed aligned estimate.
    """
    if estimate.rank != truth.rank:
        raise ValueError(f"rank mismatch: {estimate.rank} vs {truth.rank}")
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    r = estimate.rank
    corr = np.empty((r, r))
    for i, e in enumerate(estimate.components):
        for j, t in enumerate(truth.components):
            corr[i, j] = abs(_factor_inner(e, t)) / (abs(e.weight) * abs(t.weight))
    perm = [-1] * r
    scratch = corr.copy()
    for _ in range(r):
        i, j = np.unravel_index(int(np.argmax(scratch)), scratch.shape)
        perm[j] = int(i)
        scratch[i, :] = -1.0
        scratch[:, j] = -1.0

    aligned = []
    flips = []
    for j, t in enumerate(truth.components):
        e = estimate.components[perm[j]]
        s = -1 if _factor_inner(e, t) < 0 else 1
        flips.append(s)
        aligned.append(e if s == 1 else SegrePoint(-e.weight, e.factors))
    aligned_model = CPModel(tuple(aligned))

    max_err = 0.0
    total_diff = np.zeros(truth.shape)
    total_truth = np.zeros(truth.shape)
    for e, t in zip(aligned_model.components, truth.components):
        et = t.embed()
        diff = e.embed() - et
        max_err = max(max_err, fro_norm(diff) / abs(t.weight))
        total_diff += diff
        total_truth += et
    rel = fro_norm(total_diff) / fro_norm(total_truth)
    return ErrorReport(
        max_component_error=max_err,
        rel_frobenius_error=rel,
        permutation=tuple(perm),
        sign_flips=tuple(flips),
        aligned=aligned_model,
    )
