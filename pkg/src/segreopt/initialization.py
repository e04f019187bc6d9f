"""Initialization strategies: random unit-sphere starts (optionally refined
by greedy deflation), composite-PCA spectral starts, and the regression warm
start built on the operator adjoint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .manifold import (
    CPModel,
    DegenerateInputError,
    SegrePoint,
    leading_singular_vector,
    retract_thosvd,
)
from .operators import GaussianDesignOp
from .rng import substream
from .tensor import check_tensor, contract_all_modes, fro_norm, unfold

logger = logging.getLogger(__name__)

InitMethod = str  # "random" | "cpca" | "adjoint-cpca"


@dataclass(frozen=True)
class InitSpec:
    """How to build the starting model.

    ``cpca_split`` optionally pins the mode subset used by the balanced
    unfolding; ``None`` selects it automatically.  ``refine_sweeps`` applies
    that many greedy rank-one deflation passes after a random draw (full
    observations only); see :func:`refine_by_deflation`.
    """

    method: InitMethod = "random"
    seed: int = 0
    cpca_split: tuple[int, ...] | None = None
    refine_sweeps: int = 0

    def __post_init__(self):
        if self.method not in ("random", "cpca", "adjoint-cpca"):
            raise ValueError(f"unknown init method {self.method!r}")
        if self.refine_sweeps < 0:
            raise ValueError("refine_sweeps must be >= 0")

    def to_config(self) -> dict:
        return {
            "method": self.method,
            "seed": int(self.seed),
            "cpca_split": list(self.cpca_split) if self.cpca_split is not None else None,
            "refine_sweeps": self.refine_sweeps,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "InitSpec":
        split = cfg.get("cpca_split")
        return cls(
            method=cfg.get("method", "random"),
            seed=int(cfg.get("seed", 0)),
            cpca_split=tuple(split) if split is not None else None,
            refine_sweeps=int(cfg.get("refine_sweeps", 0)),
        )


def choose_split(shape: tuple[int, ...]) -> tuple[int, ...]:
    """Mode subset for the balanced unfolding.

    Among nonempty proper subsets ``S`` whose row-dimension dominates
    (``p_S >= p*/p_S``), maximize ``min(p_S, p*/p_S)``; break ties by the
    smallest subset, then lexicographically.
    """
    d = len(shape)
    p_star = int(np.prod(shape, dtype=np.int64))
    best: tuple[int, ...] | None = None
    best_key = None
    for size in range(1, d):
        for s in combinations(range(d), size):
            p_s = int(np.prod([shape[l] for l in s], dtype=np.int64))
            p_c = p_star // p_s
            if p_s < p_c:
                continue
            key = (-min(p_s, p_c), len(s), s)
            if best_key is None or key < best_key:
                best_key = key
                best = s
    assert best is not None
    return best


def _multi_unfold(t: np.ndarray, split: tuple[int, ...]) -> np.ndarray:
    """Matricization with the modes in ``split`` grouped as rows (both index
    groups enumerated in the C-order convention of :mod:`segreopt.tensor`)."""
    d = t.ndim
    rest = tuple(l for l in range(d) if l not in split)
    perm = tuple(split) + rest
    p_s = int(np.prod([t.shape[l] for l in split], dtype=np.int64))
    return np.transpose(t, perm).reshape(p_s, -1)


def _extract_mode_vectors(vec: np.ndarray, dims: tuple[int, ...]) -> list[np.ndarray]:
    """Leading per-mode singular vectors of ``vec`` refolded to ``dims``."""
    if len(dims) == 1:
        u = vec / np.linalg.norm(vec)
        j = int(np.argmax(np.abs(u)))
        return [-u if u[j] < 0 else u]
    sub = vec.reshape(dims)
    return [leading_singular_vector(unfold(sub, k)) for k in range(len(dims))]


def cpca(t: np.ndarray, r: int, split: tuple[int, ...] | None = None) -> CPModel:
    """Composite-PCA spectral estimate of ``r`` rank-one components.

    Unfolds ``t`` along a balanced mode split, takes the top-``r`` SVD, and
    extracts each mode's factor as the leading singular vector of the refolded
    singular vectors.  Component weights are the projections
    ``<t, u_0 ⊗ ... ⊗ u_{d-1}>`` (their magnitudes track the unfolding's
    singular values; the sign parity of the extracted factors is absorbed).
    Components are ordered by descending absolute weight.
    """
    t = check_tensor(t)
    if fro_norm(t) == 0.0:
        raise DegenerateInputError("cannot run spectral initialization on the zero tensor")
    d = t.ndim
    if split is None:
        split = choose_split(t.shape)
    else:
        split = tuple(sorted(int(l) for l in split))
        if not split or len(split) >= d or any(not 0 <= l < d for l in split):
            raise ValueError(f"split {split} must be a nonempty proper mode subset")
    rest = tuple(l for l in range(d) if l not in split)
    mat = _multi_unfold(t, split)
    if r > min(mat.shape):
        raise ValueError(f"rank {r} exceeds the {mat.shape} unfolding bound")
    left, _, right_t = np.linalg.svd(mat, full_matrices=False)
    dims_s = tuple(t.shape[l] for l in split)
    dims_c = tuple(t.shape[l] for l in rest)
    comps = []
    for j in range(r):
        by_mode = dict(zip(split, _extract_mode_vectors(left[:, j], dims_s)))
        by_mode.update(zip(rest, _extract_mode_vectors(right_t[j, :], dims_c)))
        us = tuple(by_mode[l] for l in range(d))
        lam = contract_all_modes(t, us)
        if lam == 0.0:
            raise DegenerateInputError(f"spectral component {j} has zero projection weight")
        comps.append(SegrePoint(lam, us))
    comps.sort(key=lambda c: -abs(c.weight))
    return CPModel(tuple(comps))


def random_model(y: np.ndarray, r: int, rng: np.random.Generator) -> CPModel:
    """Factors i.i.d. uniform on each unit sphere; weights set by projecting
    ``y`` onto each random rank-one direction."""
    y = check_tensor(y)
    comps = []
    for _ in range(r):
        us = []
        for p in y.shape:
            u = rng.standard_normal(p)
            us.append(u / np.linalg.norm(u))
        lam = contract_all_modes(y, us)
        if lam == 0.0:
            raise DegenerateInputError("random direction has zero projection weight")
        comps.append(SegrePoint(lam, tuple(us)))
    return CPModel(tuple(comps))


def refine_by_deflation(y: np.ndarray, model: CPModel, sweeps: int = 1) -> CPModel:
    """Greedy rank-one deflation passes over a starting model.

    Each pass replaces component ``i`` by the best rank-one fit (via the
    rank-one truncated multilinear SVD) of the residual with every other
    component subtracted, updating the running sum as it goes.  Independent
    random starts frequently place two components in the attraction basin of
    the same dominant structure; one pass assigns each component a distinct
    basin, after which the manifold iterations contract locally.  A component
    whose deflated residual degenerates is left unchanged.
    """
    comps = list(model.components)
    embeds = [c.embed() for c in comps]
    total = np.sum(embeds, axis=0)
    for _ in range(sweeps):
        for i in range(len(comps)):
            rhs = y - (total - embeds[i])
            try:
                comps[i] = retract_thosvd(rhs)
            except DegenerateInputError:
                logger.warning("deflation pass left component %d unchanged (degenerate residual)", i)
                continue
            new_embed = comps[i].embed()
            total += new_embed - embeds[i]
            embeds[i] = new_embed
    return CPModel(tuple(comps))


def init_decomposition(y: np.ndarray, r: int, spec: InitSpec) -> CPModel:
    """Starting model for full-observation problems."""
    if spec.method == "random":
        model = random_model(y, r, substream(spec.seed, "init"))
        if spec.refine_sweeps:
            model = refine_by_deflation(y, model, spec.refine_sweeps)
        return model
    if spec.method == "cpca":
        return cpca(y, r, spec.cpca_split)
    raise ValueError(f"init method {spec.method!r} needs a design operator")


def init_regression(op: GaussianDesignOp, y: np.ndarray, r: int,
                    split: tuple[int, ...] | None = None) -> CPModel:
    """Warm start for regression: spectral estimate of the adjoint
    ``sum_m y_m X̃_m`` of the (rescaled) observations."""
    if not isinstance(op, GaussianDesignOp):
        raise ValueError("regression initialization needs a Gaussian design operator")
    if not op.rescaled:
        raise ValueError("design operator must be rescaled")
    return cpca(op.adjoint(y), r, split)
