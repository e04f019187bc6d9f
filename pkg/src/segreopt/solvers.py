"""Iterative solvers: Riemannian gradient descent and Riemannian Gauss-Newton
over products of rank-one manifolds.

Both methods update all components of one iteration from the residual frozen
at iteration start (Jacobi style); a Gauss-Seidel variant that refreshes the
residual after each component sits behind a config flag.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .manifold import (
    CPModel,
    DegenerateInputError,
    SegrePoint,
    align_and_error,
    complement_bases,
    project_tangent,
    retract_thosvd,
    tangent_dim,
    tangent_from_coords,
)
from .operators import GaussianDesignOp, IdentityOp, MeasurementOp
from .tensor import batched_contract_all_but

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("iter", "rel_fro_err", "max_comp_err", "residual", "wall_ms")


class SolverError(RuntimeError):
    """An iteration could not proceed (e.g. an update annihilated a component).

    Carries the offending component index and, when raised out of
    :func:`run`, the partial convergence trace.
    """

    def __init__(self, message: str, component: int | None = None,
                 trace: "ConvergenceTrace | None" = None):
        super().__init__(message)
        self.component = component
        self.trace = trace


@dataclass(frozen=True)
class Problem:
    """One recovery instance: operator, observations, target rank, and an
    optional reference model used only for tracing."""

    op: MeasurementOp
    y: np.ndarray
    rank: int
    truth: CPModel | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.shape != (self.op.output_dim,):
            raise ValueError(f"observation length {y.shape} does not match operator output "
                             f"{self.op.output_dim}")
        object.__setattr__(self, "y", y)
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if isinstance(self.op, GaussianDesignOp) and not self.op.rescaled:
            raise ValueError("solvers require a rescaled design operator")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "rgn"  # "rgd" | "rgn"
    step_size: float | Callable[[int], float] = 0.2
    max_iters: int = 50
    stop_tol: float = 1e-12
    pinv_tol: float = 1e-10
    gauss_seidel: bool = False

    def __post_init__(self):
        if self.method not in ("rgd", "rgn"):
            raise ValueError(f"unknown method {self.method!r}")
        if not callable(self.step_size) and not 0 < self.step_size <= 1:
            raise ValueError("step size must lie in (0, 1]")
        if self.stop_tol <= 0 or self.pinv_tol <= 0:
            raise ValueError("tolerances must be positive")

    def alpha(self, t: int) -> float:
        return float(self.step_size(t)) if callable(self.step_size) else float(self.step_size)


@dataclass(frozen=True)
class SolverState:
    model: CPModel
    iteration: int
    residual: np.ndarray  # y - op(sum of components)

    @classmethod
    def initial(cls, problem: Problem, model: CPModel) -> "SolverState":
        return cls(model, 0, _residual(problem, model))


def _residual(problem: Problem, model: CPModel) -> np.ndarray:
    return problem.y - problem.op.apply(model.embed())


def _retract_component(cand: np.ndarray, i: int) -> SegrePoint:
    try:
        return retract_thosvd(cand)
    except DegenerateInputError as exc:
        raise SolverError(f"update annihilated component {i}: {exc}", component=i) from exc


def _rgd_update(state: SolverState, problem: Problem, alpha: float,
                gauss_seidel: bool) -> SolverState:
    op = problem.op
    embeds = [c.embed() for c in state.model.components]
    total = np.sum(embeds, axis=0)
    misfit = op.apply(total) - problem.y
    ambient = op.adjoint(misfit)
    new_comps: list[SegrePoint] = []
    for i, point in enumerate(state.model.components):
        if gauss_seidel and i > 0:
            ambient = op.adjoint(op.apply(total) - problem.y)
        g = project_tangent(point, ambient)
        new_point = _retract_component(embeds[i] - alpha * g, i)
        new_comps.append(new_point)
        if gauss_seidel:
            total = total - embeds[i] + new_point.embed()
    model = CPModel(tuple(new_comps))
    return SolverState(model, state.iteration + 1, _residual(problem, model))


def rgd_step(state: SolverState, problem: Problem, alpha: float,
             gauss_seidel: bool = False) -> SolverState:
    """One gradient step: project the ambient gradient of the squared misfit
    onto each component's tangent space, step, retract."""
    if not 0 < alpha <= 1:
        raise ValueError("step size must lie in (0, 1]")
    return _rgd_update(state, problem, alpha, gauss_seidel)


def _design_tangent_matrix(op: GaussianDesignOp, point: SegrePoint,
                           comps: list[np.ndarray]) -> np.ndarray:
    """The n x df matrix of design tensors paired with the tangent basis at
    ``point`` (same column layout as :func:`segreopt.manifold.tangent_basis`),
    computed by mode contractions instead of materializing basis tensors."""
    us = point.factors
    n = op.output_dim
    cols = np.empty((n, tangent_dim(point.shape)))
    pos = 1
    for k in range(point.order):
        vk = batched_contract_all_but(op.designs, us, k)
        if k == 0:
            cols[:, 0] = vk @ us[0]
        cols[:, pos : pos + comps[k].shape[1]] = vk @ comps[k]
        pos += comps[k].shape[1]
    return cols


def solve_tangent_ls(point: SegrePoint, op: MeasurementOp, rhs: np.ndarray,
                     pinv_tol: float = 1e-10) -> np.ndarray:
    """Least-squares fit of ``rhs`` over the tangent space at ``point``.

    Returns the ambient tangent tensor minimizing ``||rhs - op(xi)||`` via the
    df x df normal equations, solved by pseudo-inverse with eigenvalues below
    ``pinv_tol`` times the largest dropped.  A rank-deficient system is
    flagged and the minimum-norm solution returned.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (op.output_dim,):
        raise ValueError(f"rhs length {rhs.shape} does not match operator output {op.output_dim}")
    if isinstance(op, IdentityOp):
        # P A*A P = P: the tangent projection solves the subproblem exactly.
        return project_tangent(point, rhs.reshape(op.shape))
    comps = complement_bases(point)
    design = _design_tangent_matrix(op, point, comps)
    gram = design.T @ design
    b = design.T @ rhs
    evals, evecs = np.linalg.eigh(gram)
    cutoff = pinv_tol * max(evals[-1], 0.0)
    keep = evals > cutoff
    if not np.any(keep):
        logger.warning("tangent normal system is numerically zero; returning zero update")
        return np.zeros(op.shape)
    if np.count_nonzero(keep) < evals.size:
        logger.warning(
            "tangent normal system rank-deficient (%d/%d kept); minimum-norm solution",
            int(np.count_nonzero(keep)), evals.size,
        )
    coords = evecs[:, keep] @ ((evecs[:, keep].T @ b) / evals[keep])
    return tangent_from_coords(point, comps, coords)


def _rgn_update(state: SolverState, problem: Problem, pinv_tol: float,
                gauss_seidel: bool) -> SolverState:
    op = problem.op
    if isinstance(op, IdentityOp):
        # With full observations the Gauss-Newton step coincides with a unit
        # step of gradient descent; share the code path so they match exactly.
        return _rgd_update(state, problem, 1.0, gauss_seidel)
    embeds = [c.embed() for c in state.model.components]
    applied = [op.apply(e) for e in embeds]
    total_applied = np.sum(applied, axis=0)
    new_comps: list[SegrePoint] = []
    for i, point in enumerate(state.model.components):
        rhs = problem.y - (total_applied - applied[i])
        xi = solve_tangent_ls(point, op, rhs, pinv_tol)
        new_point = _retract_component(xi, i)
        new_comps.append(new_point)
        if gauss_seidel:
            new_applied = op.apply(new_point.embed())
            total_applied += new_applied - applied[i]
            applied[i] = new_applied
    model = CPModel(tuple(new_comps))
    return SolverState(model, state.iteration + 1, _residual(problem, model))


def rgn_step(state: SolverState, problem: Problem, pinv_tol: float = 1e-10,
             gauss_seidel: bool = False) -> SolverState:
    """One Gauss-Newton step: each component is replaced by the retracted
    tangent-space least-squares fit of its leave-one-out residual."""
    return _rgn_update(state, problem, pinv_tol, gauss_seidel)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    rel_fro_err: float
    max_comp_err: float
    residual: float
    wall_ms: float
    sign_aligned: bool = True  # monitored only; not part of the CSV contract


@dataclass
class ConvergenceTrace:
    """Per-iteration diagnostics of one solver run."""

    records: list[TraceRecord] = field(default_factory=list)

    def append(self, rec: TraceRecord) -> None:
        self.records.append(rec)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name if name != "iter" else "iteration") for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([r.iteration, repr(r.rel_fro_err), repr(r.max_comp_err),
                        repr(r.residual), repr(r.wall_ms)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([
            {"iter": r.iteration, "rel_fro_err": r.rel_fro_err, "max_comp_err": r.max_comp_err,
             "residual": r.residual, "wall_ms": r.wall_ms}
            for r in self.records
        ])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _trace_record(state: SolverState, truth: CPModel | None, wall_ms: float) -> TraceRecord:
    rel = math.nan
    comp = math.nan
    aligned = True
    if truth is not None:
        report = align_and_error(state.model, truth)
        rel = report.rel_frobenius_error
        comp = report.max_component_error
        aligned = all(s == 1 for s in report.sign_flips)
    return TraceRecord(
        iteration=state.iteration,
        rel_fro_err=rel,
        max_comp_err=comp,
        residual=float(np.linalg.norm(state.residual)),
        wall_ms=wall_ms,
        sign_aligned=aligned,
    )


def run(problem: Problem, config: SolverConfig, init: CPModel) -> tuple[CPModel, ConvergenceTrace]:
    """Iterate the configured solver from ``init`` until ``max_iters`` or the
    relative residual change drops below ``stop_tol``."""
    if init.rank != problem.rank:
        raise ValueError(f"init rank {init.rank} does not match problem rank {problem.rank}")
    if init.shape != problem.op.shape:
        raise ValueError(f"init shape {init.shape} does not match operator shape {problem.op.shape}")
    state = SolverState.initial(problem, init)
    trace = ConvergenceTrace()
    trace.append(_trace_record(state, problem.truth, 0.0))
    prev_res = float(np.linalg.norm(state.residual))
    for t in range(config.max_iters):
        tic = time.perf_counter()
        try:
            if config.method == "rgd":
                state = _rgd_update(state, problem, config.alpha(t), config.gauss_seidel)
            else:
                state = _rgn_update(state, problem, config.pinv_tol, config.gauss_seidel)
        except SolverError as exc:
            exc.trace = trace
            raise
        wall_ms = (time.perf_counter() - tic) * 1e3
        trace.append(_trace_record(state, problem.truth, wall_ms))
        res = float(np.linalg.norm(state.residual))
        if res == 0.0 or abs(res - prev_res) < config.stop_tol * max(prev_res, 1e-300):
            break
        prev_res = res
    return state.model, trace
