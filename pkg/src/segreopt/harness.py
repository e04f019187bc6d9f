"""Synthetic instance generation, the experiment runner, and aggregation.

Instances follow two factor regimes: ``rho=None`` draws factors i.i.d.
uniformly on the unit sphere; a numeric ``rho`` builds coherence-controlled
factors from an order-one autoregressive Gram matrix followed by a Haar
rotation, so the worst pairwise factor alignment equals ``rho`` per mode.

Aggregation across replicates reports, per iteration and method, the square
root of the mean of squared relative errors.  Replicates whose trace stopped
early are carried forward at their final row so every iteration aggregates
all replicates.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from . import __version__
from .als import cp_als_decompose, cp_als_regress
from .initialization import InitSpec, init_decomposition, init_regression
from .manifold import CPModel, align_and_error, incoherence
from .operators import GaussianDesignOp, IdentityOp
from .rng import substream, substream_seed
from .solvers import ConvergenceTrace, Problem, SolverConfig, SolverError, run

METHODS = ("rgd", "rgn", "als")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment bit-for-bit."""

    task: str  # "decompose" | "regress"
    dims: tuple[int, ...] = (30, 30, 30)
    rank: int = 3
    rho: float | None = None          # None: sphere factors; value: AR(1) coherence
    weight_law: str = "unif-scaled"   # "unif-scaled" | "geometric-kappa"
    kappa: float = 1.0
    noise_sd: float = 1.0
    n_samples: int | None = None      # regression only; None -> floor(2 * pbar^1.5 * r)
    design_scale: float = 1.0
    methods: tuple[str, ...] = ("rgd", "rgn")
    init_method: str | None = None    # None -> random (decompose) / adjoint-cpca (regress)
    init_refine_sweeps: int = 0       # greedy deflation passes after a random init
    cpca_split: tuple[int, ...] | None = None
    replicates: int = 20
    seed: int = 0
    max_iters: int = 30
    step_size: float = 0.2
    stop_tol: float = 1e-12
    pinv_tol: float = 1e-10
    gauss_seidel: bool = False

    def __post_init__(self):
        if self.task not in ("decompose", "regress"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.rho is not None and not 0 <= self.rho < 1:
            raise ValueError("coherence must lie in [0, 1)")
        if self.weight_law not in ("unif-scaled", "geometric-kappa"):
            raise ValueError(f"unknown weight law {self.weight_law!r}")
        if self.kappa < 1:
            raise ValueError("condition number must be >= 1")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if any(m not in METHODS for m in self.methods):
            raise ValueError(f"methods must be among {METHODS}")
        object.__setattr__(self, "dims", tuple(int(p) for p in self.dims))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.cpca_split is not None:
            object.__setattr__(self, "cpca_split", tuple(self.cpca_split))

    @property
    def pbar(self) -> int:
        return max(self.dims)

    def sample_size(self) -> int:
        if self.n_samples is not None:
            return int(self.n_samples)
        return int(math.floor(2.0 * self.pbar**1.5 * self.rank))

    def to_dict(self) -> dict:
        d = {
            "task": self.task, "dims": list(self.dims), "rank": self.rank,
            "rho": self.rho, "weight_law": self.weight_law, "kappa": self.kappa,
            "noise_sd": self.noise_sd, "n_samples": self.n_samples,
            "design_scale": self.design_scale, "methods": list(self.methods),
            "init_method": self.init_method,
            "init_refine_sweeps": self.init_refine_sweeps,
            "cpca_split": list(self.cpca_split) if self.cpca_split else None,
            "replicates": self.replicates, "seed": self.seed,
            "max_iters": self.max_iters, "step_size": self.step_size,
            "stop_tol": self.stop_tol, "pinv_tol": self.pinv_tol,
            "gauss_seidel": self.gauss_seidel,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        for key in ("dims", "methods", "cpca_split"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def gen_coherent_factors(p: int, r: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """A ``p x r`` factor matrix with unit columns whose Gram matrix is
    ``rho^|i-j|``, rotated by a Haar-random orthogonal matrix."""
    if r > p:
        raise ValueError(f"rank {r} exceeds dimension {p}")
    if not 0 <= rho < 1:
        raise ValueError("coherence must lie in [0, 1)")
    idx = np.arange(r)
    gram = rho ** np.abs(idx[:, None] - idx[None, :])
    chol = np.linalg.cholesky(gram)
    q0 = np.zeros((p, r))
    q0[:r, :] = np.eye(r)
    m = q0 @ chol.T
    m /= np.linalg.norm(m, axis=0)
    z = rng.standard_normal((p, p))
    q, rr = np.linalg.qr(z)
    signs = np.sign(np.diag(rr))
    signs[signs == 0] = 1.0
    return (q * signs) @ m


def _truth_weights(config: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    d = len(config.dims)
    scale = math.sqrt(d) + 1.0
    pbar = config.pbar
    r = config.rank
    if config.weight_law == "unif-scaled":
        if config.task == "decompose":
            lo, hi = pbar**0.75, 2.0 * pbar**0.75
        else:
            lo, hi = 0.5, 1.5
        return scale * rng.uniform(lo, hi, size=r)
    if config.task == "decompose":
        return np.array([2.0 * config.kappa ** ((i - 1) / 2.0) * pbar**0.75 * math.sqrt(r)
                         for i in range(1, r + 1)])
    return np.array([2.0 * config.kappa ** ((i - 2) / 2.0) for i in range(1, r + 1)])


def gen_truth(config: ExperimentConfig, replicate: int = 0) -> CPModel:
    """Ground-truth model for one replicate, from the seeded substreams."""
    r = config.rank
    if config.rho is None:
        rng = substream(config.seed, "factors", replicate)
        mats = []
        for p in config.dims:
            u = rng.standard_normal((p, r))
            mats.append(u / np.linalg.norm(u, axis=0))
    else:
        rng = substream(config.seed, "rotation", replicate)
        mats = [gen_coherent_factors(p, r, config.rho, rng) for p in config.dims]
    weights = _truth_weights(config, substream(config.seed, "weights", replicate))
    return CPModel.from_factors(weights, mats)


def gen_instance(config: ExperimentConfig, replicate: int = 0) -> Problem:
    """Full problem instance (operator, observations, truth attached)."""
    truth = gen_truth(config, replicate)
    signal = truth.embed()
    noise_rng = substream(config.seed, "noise", replicate)
    if config.task == "decompose":
        y = signal + config.noise_sd * noise_rng.standard_normal(signal.shape)
        op = IdentityOp(config.dims)
        return Problem(op=op, y=y.ravel(), rank=config.rank, truth=truth)
    n = config.sample_size()
    op = GaussianDesignOp.from_seed(config.seed, config.dims, n,
                                    scale=config.design_scale, replicate=replicate)
    # raw observations <X_m, T> + noise, stored rescaled by 1/(sqrt(n)*scale)
    # so they pair with the rescaled designs
    y = op.apply(signal)
    y += config.noise_sd * noise_rng.standard_normal(n) / (math.sqrt(n) * config.design_scale)
    return Problem(op=op, y=y, rank=config.rank, truth=truth)


def _initial_model(config: ExperimentConfig, problem: Problem, replicate: int) -> CPModel:
    method = config.init_method
    if method is None:
        method = "random" if config.task == "decompose" else "adjoint-cpca"
    if method == "adjoint-cpca":
        return init_regression(problem.op, problem.y, config.rank, config.cpca_split)
    spec = InitSpec(method=method, seed=substream_seed(config.seed, "init", replicate),
                    cpca_split=config.cpca_split, refine_sweeps=config.init_refine_sweeps)
    y_tensor = (problem.y.reshape(config.dims) if config.task == "decompose"
                else problem.op.adjoint(problem.y))
    return init_decomposition(y_tensor, config.rank, spec)


def _run_method(method: str, config: ExperimentConfig, problem: Problem,
                init: CPModel) -> ConvergenceTrace:
    if method in ("rgd", "rgn"):
        cfg = SolverConfig(method=method, step_size=config.step_size,
                           max_iters=config.max_iters, stop_tol=config.stop_tol,
                           pinv_tol=config.pinv_tol, gauss_seidel=config.gauss_seidel)
        _, trace = run(problem, cfg, init)
        return trace
    if config.task == "decompose":
        _, trace = cp_als_decompose(problem.y.reshape(config.dims), config.rank,
                                    init, config.max_iters, truth=problem.truth)
    else:
        _, trace = cp_als_regress(problem.op, problem.y, config.rank, init,
                                  config.max_iters, truth=problem.truth)
    return trace


@dataclass
class ReplicateSummary:
    """Outcome of one experiment: per-method traces and the RMS aggregate."""

    config: ExperimentConfig
    traces: dict[str, list[ConvergenceTrace | None]] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    init_errors: list[float] = field(default_factory=list)
    measured_eta: list[float] = field(default_factory=list)

    def aggregate(self) -> dict[str, dict[str, np.ndarray]]:
        """Per method: iteration grid plus RMS curves of both error metrics,
        short traces carried forward at their final row."""
        out = {}
        for method, traces in self.traces.items():
            done = [t for t in traces if t is not None and t.records]
            if not done:
                continue
            horizon = max(len(t.records) for t in done)
            rel = np.empty((len(done), horizon))
            comp = np.empty((len(done), horizon))
            for i, t in enumerate(done):
                r = t.column("rel_fro_err")
                c = t.column("max_comp_err")
                rel[i, : r.size] = r
                rel[i, r.size :] = r[-1]
                comp[i, : c.size] = c
                comp[i, c.size :] = c[-1]
            out[method] = {
                "iter": np.arange(horizon),
                "rel_fro_err": np.sqrt(np.mean(rel**2, axis=0)),
                "max_comp_err": np.sqrt(np.mean(comp**2, axis=0)),
            }
        return out

    def final_error(self, method: str) -> float:
        agg = self.aggregate()[method]
        return float(agg["rel_fro_err"][-1])


def run_experiment(config: ExperimentConfig, out_dir: str | os.PathLike | None = None) -> ReplicateSummary:
    """Run every configured method on every replicate and aggregate.

    When ``out_dir`` is given, writes ``trace_<method>_<rep>.csv`` per run,
    ``aggregate.csv``, and ``manifest.json``.  Solver failures are recorded
    and skipped; a method failing on all replicates raises ``SolverError``.
    """
    summary = ReplicateSummary(config=config, traces={m: [] for m in config.methods})
    for rep in range(config.replicates):
        problem = gen_instance(config, rep)
        summary.measured_eta.append(incoherence(problem.truth)[1])
        init = _initial_model(config, problem, rep)
        summary.init_errors.append(align_and_error(init, problem.truth).rel_frobenius_error)
        for method in config.methods:
            try:
                trace = _run_method(method, config, problem, init)
            except SolverError as exc:
                summary.failures.append({
                    "method": method, "replicate": rep,
                    "component": exc.component, "message": str(exc),
                })
                trace = exc.trace
            summary.traces[method].append(trace)
    for method in config.methods:
        if all(t is None or not t.records for t in summary.traces[method]):
            raise SolverError(f"method {method!r} failed on every replicate")
    if out_dir is not None:
        write_outputs(summary, out_dir)
    return summary


def write_outputs(summary: ReplicateSummary, out_dir: str | os.PathLike) -> None:
    os.makedirs(out_dir, exist_ok=True)
    config = summary.config
    for method, traces in summary.traces.items():
        for rep, trace in enumerate(traces):
            if trace is None:
                continue
            trace.write_csv(os.path.join(out_dir, f"trace_{method}_{rep}.csv"))
    agg = summary.aggregate()
    with open(os.path.join(out_dir, "aggregate.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "iter", "rel_fro_err", "max_comp_err"])
        for method in config.methods:
            if method not in agg:
                continue
            a = agg[method]
            for i in range(a["iter"].size):
                w.writerow([method, int(a["iter"][i]),
                            repr(float(a["rel_fro_err"][i])),
                            repr(float(a["max_comp_err"][i]))])
    manifest = {
        "config": config.to_dict(),
        "replicate_seeds": {
            purpose: [substream_seed(config.seed, purpose, rep)
                      for rep in range(config.replicates)]
            for purpose in ("factors", "rotation", "noise", "designs", "init", "weights")
        },
        "measured_eta": summary.measured_eta,
        "init_rel_errors": summary.init_errors,
        "failures": summary.failures,
        "versions": {"segreopt": __version__, "numpy": np.__version__},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- presets -----------------------------------------------------------------

def preset_names() -> list[str]:
    files = resources.files("segreopt").joinpath("presets")
    return sorted(f.name[: -len(".json")] for f in files.iterdir() if f.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("segreopt").joinpath("presets", f"{name}.json")
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ValueError(f"unknown preset {name!r}; available: {preset_names()}") from None
    return json.loads(text)


def config_from_preset(name: str, **overrides) -> ExperimentConfig:
    d = load_preset(name)
    d.pop("grid", None)
    d.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(d)


def expand_grid(preset: dict) -> list[ExperimentConfig]:
    """A preset may carry a ``grid`` of per-field value lists; expand it into
    one config per combination (fields iterate in sorted name order)."""
    grid = preset.get("grid")
    base = dict(preset)
    base.pop("grid", None)
    cfg = ExperimentConfig.from_dict(base)
    if not grid:
        return [cfg]
    configs = [cfg]
    for key in sorted(grid):
        configs = [replace(c, **{key: v}) for c in configs for v in grid[key]]
    return configs
