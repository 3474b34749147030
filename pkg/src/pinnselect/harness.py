"""Experiment orchestration: metrics, timing, training runs, CSV output, ablations."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import baselines, geometry, pinn, selection
from .pinn import LossWeights, MlpParams, TrainConfig, TrainingSets
from .reference import (BurgersProblem, ReferenceSolution, sample_reference, save_reference,
                        solve_reference)
from .scoring import CandidatePool, sample_pool, score_candidates
from .selection import PipelineConfig, Selection, stage_seed

log = logging.getLogger(__name__)

METHODS = ("uniform", "random", "topk", "topk-anchors", "kcenter",
           "dense-qubo", "sparse-bqm", "hybrid-bqm")
SELECTION_STAGES = selection.STAGES
TIMING_FIELDS = ("t_warm",) + SELECTION_STAGES + ("t_train",)


# -- metrics ---------------------------------------------------------------

def rel_l2(u_pred, u_ref) -> float:
    u_pred = np.asarray(u_pred, dtype=np.float64)
    u_ref = np.asarray(u_ref, dtype=np.float64)
    if u_pred.shape != u_ref.shape:
        raise ValueError(f"shape mismatch {u_pred.shape} vs {u_ref.shape}")
    denom = float(np.linalg.norm(u_ref))
    if denom == 0.0:
        raise ValueError("reference field has zero norm")
    return float(np.linalg.norm(u_pred - u_ref)) / denom


def linf_error(u_pred, u_ref) -> float:
    u_pred = np.asarray(u_pred, dtype=np.float64)
    u_ref = np.asarray(u_ref, dtype=np.float64)
    if u_pred.shape != u_ref.shape:
        raise ValueError(f"shape mismatch {u_pred.shape} vs {u_ref.shape}")
    return float(np.max(np.abs(u_pred - u_ref)))


def nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile: the ceil(q n)-th order statistic."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    rank = max(1, math.ceil(q * len(v) - 1e-12))
    return float(v[rank - 1])


def residual_stats(params: MlpParams, heldout, nu: float) -> tuple[float, float]:
    """Mean and nearest-rank 95th percentile of r^2 on held-out points."""
    pts = np.asarray(heldout, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 20:
        raise ValueError(f"need at least 20 held-out points, got {len(pts)}")
    r = pinn.residual(params, pts[:, 0], pts[:, 1], nu)
    r2 = np.asarray(r) ** 2
    return float(np.mean(r2)), nearest_rank(r2, 0.95)


@dataclass
class TimingBreakdown:
    t_warm: float = 0.0
    t_score: float = 0.0
    t_prefilter: float = 0.0
    t_graph: float = 0.0
    t_qubo_build: float = 0.0
    t_qubo_solve: float = 0.0
    t_repair: float = 0.0
    t_train: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")

    @property
    def t_selection(self) -> float:
        return sum(getattr(self, k) for k in SELECTION_STAGES)

    @property
    def t_total(self) -> float:
        return self.t_warm + self.t_selection + self.t_train

    def add(self, stages: dict[str, float]) -> None:
        for k, v in stages.items():
            setattr(self, k, getattr(self, k) + v)


def overhead_ratio(timing: TimingBreakdown) -> float:
    if not timing.t_train > 0:
        raise ValueError("training time must be positive")
    return timing.t_selection / timing.t_train


def time_to_accuracy(checkpoints, epsilon: float) -> float | None:
    """Elapsed time of the first checkpoint with rel_l2 < epsilon, else None."""
    prev = -math.inf
    for elapsed, _ in checkpoints:
        if elapsed < prev:
            raise ValueError("checkpoints must be ordered by elapsed time")
        prev = elapsed
    for elapsed, err in checkpoints:
        if err < epsilon:
            return float(elapsed)
    return None


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    problem: BurgersProblem = BurgersProblem()
    pipeline: PipelineConfig = PipelineConfig()
    method: str = "hybrid-bqm"
    train_steps: int = 10000
    seeds: tuple[int, ...] = (0,)
    eval_nx: int = 256
    eval_nt: int = 101
    ref_nx: int = 1024
    epsilon: float | None = None
    out_dir: str = "results"
    widths: tuple[int, ...] = pinn.DEFAULT_WIDTHS
    lr: float = 1e-3
    lr_decay: float = 1.0
    decay_every: int = 1000
    loss_weights: LossWeights = LossWeights()
    n_ic: int = 256
    n_bc: int = 128          # per boundary
    n_warm: int = 512
    n_heldout: int = 2048
    checkpoint_every: int = 250
    refresh: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")
        if self.train_steps < 1:
            raise ValueError("train_steps must be >= 1")


# key -> (section, attribute, parser)
_KEYS = {
    "nu": ("problem", "nu", float), "T": ("problem", "T", float),
    "method": (None, "method", str), "train_steps": (None, "train_steps", int),
    "seeds": (None, "seeds", lambda v: tuple(int(s) for s in v.split(",") if s.strip())),
    "eval_nx": (None, "eval_nx", int), "eval_nt": (None, "eval_nt", int),
    "ref_nx": (None, "ref_nx", int),
    "epsilon": (None, "epsilon", lambda v: None if v.lower() in ("", "none") else float(v)),
    "out_dir": (None, "out_dir", str),
    "widths": (None, "widths", lambda v: tuple(int(s) for s in v.split(","))),
    "lr": (None, "lr", float), "lr_decay": (None, "lr_decay", float),
    "decay_every": (None, "decay_every", int),
    "lambda_ic": ("loss", "lambda_ic", float), "lambda_bc": ("loss", "lambda_bc", float),
    "lambda_pde": ("loss", "lambda_pde", float),
    "n_ic": (None, "n_ic", int), "n_bc": (None, "n_bc", int), "n_warm": (None, "n_warm", int),
    "n_heldout": (None, "n_heldout", int), "checkpoint_every": (None, "checkpoint_every", int),
    "refresh": (None, "refresh", lambda v: v.lower() in ("1", "true", "yes", "on")),
    "N": ("pipeline", "N", int), "M": ("pipeline", "M", int), "K": ("pipeline", "K", int),
    "beta": ("pipeline", "beta", float), "rho": ("pipeline", "rho", float),
    "k": ("pipeline", "k", int), "mu_mode": ("pipeline", "mu_mode", str),
    "clip_quantile": ("pipeline", "clip_quantile", float),
    "norm_mode": ("pipeline", "norm_mode", str),
    "ell_x": ("pipeline", "ell_x", float), "ell_t": ("pipeline", "ell_t", float),
    "ell_factor": ("pipeline", "ell_factor", float),
    "S_warm": ("pipeline", "S_warm", int), "refresh_every": ("pipeline", "refresh_every", int),
    "burn_in": ("pipeline", "burn_in", int),
    "alpha": ("weights", "alpha", float), "gamma": ("weights", "gamma", float),
    "lambda_card": ("weights", "lambda_card", float),
    "sa_sweeps": ("sa", "sweeps", int), "sa_restarts": ("sa", "restarts", int),
    "sa_beta_init": ("sa", "beta_init", float), "sa_beta_final": ("sa", "beta_final", float),
}


def apply_overrides(config: ExperimentConfig, values: dict[str, str]) -> ExperimentConfig:
    """Apply flat ``key -> string`` settings (config file or CLI) to a config."""
    top, prob, pipe, wts, sa, lw = {}, {}, {}, {}, {}, {}
    sections = {None: top, "problem": prob, "pipeline": pipe, "weights": wts, "sa": sa,
                "loss": lw}
    for key, raw in values.items():
        if key not in _KEYS:
            raise KeyError(f"unknown configuration key {key!r}")
        section, attr, parse = _KEYS[key]
        sections[section][attr] = parse(raw.strip())
    pipeline = config.pipeline
    if wts:
        pipeline = replace(pipeline, weights=replace(pipeline.weights, **wts))
    if sa:
        pipeline = replace(pipeline, sa=replace(pipeline.sa, **sa))
    if pipe:
        pipeline = replace(pipeline, **pipe)
    new = replace(config, pipeline=pipeline, **top)
    if prob:
        new = replace(new, problem=replace(new.problem, **prob))
    if lw:
        new = replace(new, loss_weights=replace(new.loss_weights, **lw))
    return new


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key = value, got {line!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def load_config(path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update(overrides or {})
    return apply_overrides(ExperimentConfig(), values)


# -- experiment pieces -------------------------------------------------------

_REF_CACHE: dict[tuple, ReferenceSolution] = {}
_WARM_CACHE: dict[tuple, tuple[MlpParams, float]] = {}


def reference_for(config: ExperimentConfig) -> ReferenceSolution:
    p = config.problem
    key = (p.nu, p.T, p.x_lo, p.x_hi, config.ref_nx)
    if key not in _REF_CACHE:
        _REF_CACHE[key] = solve_reference(p, nx=config.ref_nx)
    return _REF_CACHE[key]


def boundary_sets(config: ExperimentConfig) -> TrainingSets:
    """Fixed, equally spaced IC and BC points (identical for every method and seed)."""
    p = config.problem
    xi = np.linspace(p.x_lo, p.x_hi, config.n_ic)
    ic = np.column_stack([xi, np.zeros_like(xi)])
    tb = np.linspace(0.0, p.T, config.n_bc)
    bc = np.concatenate([np.column_stack([np.full_like(tb, p.x_lo), tb]),
                         np.column_stack([np.full_like(tb, p.x_hi), tb])])
    bc_t = np.concatenate([np.full(config.n_bc, p.bc[0]), np.full(config.n_bc, p.bc[1])])
    return TrainingSets(ic, p.ic(xi), bc, bc_t, np.empty((0, 2)))


def eval_grid(config: ExperimentConfig) -> np.ndarray:
    p = config.problem
    X, Tm = np.meshgrid(np.linspace(p.x_lo, p.x_hi, config.eval_nx),
                        np.linspace(0.0, p.T, config.eval_nt), indexing="ij")
    return np.column_stack([X.ravel(), Tm.ravel()])


def _train_config(config: ExperimentConfig, steps: int, seed: int) -> TrainConfig:
    return TrainConfig(steps=steps, lr=config.lr, lr_decay=config.lr_decay,
                       decay_every=config.decay_every, seed=seed, record_every=50)


def warm_start(config: ExperimentConfig, seed: int, sets: TrainingSets):
    """Parameters after S_warm steps on a uniform interior set; cached per seed."""
    key = (config.problem.nu, config.problem.T, config.widths, config.pipeline.S_warm,
           config.n_warm, config.n_ic, config.n_bc, config.lr, config.lr_decay,
           config.decay_every, config.loss_weights, seed)
    if key not in _WARM_CACHE:
        params = pinn.init_params(config.widths, stage_seed(seed, "init"))
        warm_pts = baselines.uniform_select(config.n_warm, config.problem.bounds,
                                            stage_seed(seed, "warm-points")).points
        t0 = time.perf_counter()
        if config.pipeline.S_warm > 0:
            params, _, _ = pinn.train(params, sets.with_colloc(warm_pts), config.loss_weights,
                                      _train_config(config, config.pipeline.S_warm, seed),
                                      config.problem.nu)
        _WARM_CACHE[key] = (params, time.perf_counter() - t0)
    params, t = _WARM_CACHE[key]
    return params.copy(), t


def select_points(method: str, pool: CandidatePool, params: MlpParams,
                  config: ExperimentConfig, seed: int) -> tuple[Selection, dict[str, float]]:
    """Interior collocation set for one method, with per-stage seconds."""
    pipe = replace(config.pipeline, seed=seed)
    nu = config.problem.nu
    K = pipe.K
    timing = dict.fromkeys(SELECTION_STAGES, 0.0)
    if method == "uniform":
        return baselines.uniform_select(K, config.problem.bounds, stage_seed(seed, "uniform")), timing
    if method == "random":
        t0 = time.perf_counter()
        sel = baselines.random_select(pool, K, stage_seed(seed, "random"))
        timing["t_prefilter"] = time.perf_counter() - t0
        return sel, timing
    if method == "kcenter":
        t0 = time.perf_counter()
        ell = geometry.default_length_scales(pool.points, pipe.ell_factor)
        sel = baselines.greedy_kcenter(pool.points, K, stage_seed(seed, "kcenter"), ell)
        timing["t_graph"] = time.perf_counter() - t0
        return sel, timing
    if method in ("topk", "topk-anchors"):
        t0 = time.perf_counter()
        raw = score_candidates(params, pool, nu)
        timing["t_score"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        if method == "topk":
            sel = baselines.topk_residual(raw, K, pool)
        else:
            sel = baselines.topk_with_anchors(pool, raw, K, pipe.rho, stage_seed(seed, "anchors"))
        timing["t_prefilter"] = time.perf_counter() - t0
        return sel, timing
    if method == "dense-qubo":
        run = selection.one_shot_select(pool, params, pipe, nu, dense=True)
    elif method == "sparse-bqm":
        run = selection.one_shot_select(pool, params, pipe, nu)
    elif method == "hybrid-bqm":
        run = selection.hybrid_select(pool, params, pipe, nu)
    else:
        raise ValueError(f"unknown method {method!r}")
    return run.selection, run.timing


@dataclass
class SeedResult:
    method: str
    seed: int
    K: int
    K_anchor: int
    rel_l2: float
    linf: float
    res_mean: float
    res_p95: float
    timing: TimingBreakdown
    t_eval: float
    checkpoints: list[tuple[int, float, float]] = field(default_factory=list)
    selection: Selection | None = None
    n_refresh: int = 0
    params: MlpParams | None = None

    @property
    def overhead(self) -> float:
        return overhead_ratio(self.timing)


def run_seed(config: ExperimentConfig, seed: int) -> SeedResult:
    prob = config.problem
    nu = prob.nu
    ref = reference_for(config)
    grid = eval_grid(config)
    u_ref = sample_reference(ref, grid)
    base = boundary_sets(config)

    timing = TimingBreakdown()
    params, timing.t_warm = warm_start(config, seed, base)

    pool = sample_pool(config.pipeline.N, prob.bounds, stage_seed(seed, "pool"))
    sel, stages = select_points(config.method, pool, params, config, seed)
    timing.add(stages)
    if len(sel) != config.pipeline.K or len(np.unique(sel.points, axis=0)) != len(sel):
        raise RuntimeError(f"{config.method} returned {len(sel)} points, expected "
                           f"{config.pipeline.K} distinct")
    k_anchor = sum(tag == selection.ANCHOR for tag in sel.provenance)

    sets = base.with_colloc(sel.points)
    checkpoints: list[tuple[int, float, float]] = []
    t_eval = 0.0
    n_refresh = 0
    state = {"sel": sel}

    def evaluate(step, p, train_elapsed):
        nonlocal t_eval
        t0 = time.perf_counter()
        err = rel_l2(pinn.predict(p, grid[:, 0], grid[:, 1]), u_ref)
        t_eval += time.perf_counter() - t0
        elapsed = timing.t_warm + timing.t_selection + train_elapsed
        checkpoints.append((step, elapsed, err))

    refresh_on = config.refresh and config.method not in ("uniform", "random", "kcenter")
    pipe = config.pipeline
    cp = config.checkpoint_every

    def hook(step, p, train_elapsed):
        nonlocal n_refresh
        if step % cp == 0:
            evaluate(step, p, train_elapsed)
        if refresh_on and selection.refresh_schedule(step, pipe.burn_in, pipe.refresh_every):
            new_sel, st = select_points(config.method, pool, p, config, seed)
            timing.add(st)
            state["sel"] = new_sel
            n_refresh += 1
            return base.with_colloc(new_sel.points)
        return None

    hook_every = math.gcd(cp, pipe.refresh_every) if refresh_on else cp
    evaluate(0, params, 0.0)
    params, _, timing.t_train = pinn.train(
        params, sets, config.loss_weights, _train_config(config, config.train_steps, seed), nu,
        hook=hook, hook_every=hook_every)
    if checkpoints[-1][0] != config.train_steps:
        evaluate(config.train_steps, params, timing.t_train)

    u_pred = pinn.predict(params, grid[:, 0], grid[:, 1])
    heldout = sample_pool(config.n_heldout, prob.bounds, stage_seed(seed, "heldout")).points
    _check_disjoint(heldout, state["sel"].points, grid)
    res_mean, res_p95 = residual_stats(params, heldout, nu)
    return SeedResult(config.method, seed, config.pipeline.K, k_anchor,
                      rel_l2(u_pred, u_ref), linf_error(u_pred, u_ref), res_mean, res_p95,
                      timing, t_eval, checkpoints, state["sel"], n_refresh, params)


def _check_disjoint(heldout, colloc, grid) -> None:
    held = {tuple(p) for p in np.asarray(heldout).tolist()}
    for other in (colloc, grid):
        if held & {tuple(p) for p in np.asarray(other).tolist()}:
            raise RuntimeError("held-out residual set overlaps training or evaluation points")


# -- result files ------------------------------------------------------------

RESULT_COLUMNS = (("method", "seed", "K", "K_anchor", "rel_l2", "linf", "res_mean", "res_p95")
                  + TIMING_FIELDS + ("t_total", "t_eval", "overhead_ratio", "tta_seconds",
                                     "n_refresh", "rel_l2_std", "linf_std", "status"))
# columns that depend on wall-clock and are excluded from reproducibility checks
WALL_CLOCK_COLUMNS = TIMING_FIELDS + ("t_total", "t_eval", "overhead_ratio", "tta_seconds")
_NUMERIC = ("rel_l2", "linf", "res_mean", "res_p95") + TIMING_FIELDS + (
    "t_total", "t_eval", "overhead_ratio", "tta_seconds", "n_refresh")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def seed_row(res: SeedResult, epsilon: float | None) -> dict:
    row = {"method": res.method, "seed": res.seed, "K": res.K, "K_anchor": res.K_anchor,
           "rel_l2": res.rel_l2, "linf": res.linf, "res_mean": res.res_mean,
           "res_p95": res.res_p95, "t_total": res.timing.t_total, "t_eval": res.t_eval,
           "overhead_ratio": res.overhead, "n_refresh": res.n_refresh, "status": "ok"}
    row.update(asdict(res.timing))
    row["tta_seconds"] = (time_to_accuracy([(e, r) for _, e, r in res.checkpoints], epsilon)
                          if epsilon is not None else None)
    return row


def aggregate_row(rows: list[dict], method: str, K: int) -> dict:
    ok = [r for r in rows if r.get("status") == "ok"]
    agg = {"method": method, "seed": "mean", "K": K, "status": f"{len(ok)}/{len(rows)} ok"}
    if not ok:
        return agg
    agg["K_anchor"] = ok[0]["K_anchor"]
    for col in _NUMERIC:
        vals = [r.get(col) for r in ok]
        if any(v is None for v in vals):
            agg[col] = None
        else:
            agg[col] = float(np.mean(vals))
    agg["rel_l2_std"] = float(np.std([r["rel_l2"] for r in ok]))
    agg["linf_std"] = float(np.std([r["linf"] for r in ok]))
    return agg


def write_rows(path, rows, columns=RESULT_COLUMNS) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def read_rows(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_checkpoints(path, checkpoints) -> None:
    write_rows(path, [{"step": s, "elapsed": e, "rel_l2": r} for s, e, r in checkpoints],
               ("step", "elapsed", "rel_l2"))


@dataclass
class ExperimentResult:
    rows: list[dict]
    seed_results: list[SeedResult]
    results_path: Path

    @property
    def aggregate(self) -> dict:
        return self.rows[-1]


def run_experiment(config: ExperimentConfig, tag: str | None = None) -> ExperimentResult:
    """Run every seed, write per-seed and aggregate rows plus checkpoint/selection CSVs."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = tag or config.method
    ref_path = out / f"reference_nx{config.ref_nx}.csv"
    if not ref_path.exists():
        save_reference(reference_for(config), ref_path)
    rows, results = [], []
    for seed in config.seeds:
        try:
            res = run_seed(config, seed)
        except Exception as exc:  # recorded, remaining seeds continue
            log.exception("seed %s failed", seed)
            rows.append({"method": config.method, "seed": seed, "K": config.pipeline.K,
                         "status": f"error: {type(exc).__name__}: {exc}".replace("\n", " ")})
            continue
        results.append(res)
        rows.append(seed_row(res, config.epsilon))
        write_checkpoints(out / f"checkpoints_{tag}_seed{seed}.csv", res.checkpoints)
        res.selection.to_csv(out / f"selection_{tag}_seed{seed}.csv")
        log.info("%s seed %d: rel_l2=%.3e t_total=%.1fs", config.method, seed, res.rel_l2,
                 res.timing.t_total)
    rows.append(aggregate_row(rows, config.method, config.pipeline.K))
    path = out / f"results_{tag}.csv"
    write_rows(path, rows)
    return ExperimentResult(rows, results, path)


ABLATION_AXES = ("gamma", "rho", "knn_k", "refresh")


def ablation_config(base: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    pipe = base.pipeline
    if axis == "gamma":
        return replace(base, pipeline=replace(pipe, weights=replace(pipe.weights, gamma=float(value))))
    if axis == "rho":
        return replace(base, pipeline=replace(pipe, rho=float(value)))
    if axis == "knn_k":
        return replace(base, pipeline=replace(pipe, k=int(value)))
    if axis == "refresh":
        period = int(value)
        if period <= 0:
            return replace(base, refresh=False)
        return replace(base, refresh=True, pipeline=replace(pipe, refresh_every=period))
    raise ValueError(f"unknown ablation axis {axis!r}; expected one of {ABLATION_AXES}")


def run_ablation(axis: str, values, base: ExperimentConfig) -> tuple[list[dict], Path]:
    """One aggregate row per grid value, written to ``ablation_<axis>.csv``."""
    values = list(values)
    if not values:
        raise ValueError("ablation grid is empty")
    rows = []
    for v in values:
        cfg = ablation_config(base, axis, v)
        res = run_experiment(cfg, tag=f"{base.method}_{axis}{v}")
        row = dict(res.aggregate)
        row["axis"], row["value"] = axis, v
        rows.append(row)
    path = Path(base.out_dir) / f"ablation_{axis}.csv"
    write_rows(path, rows, ("axis", "value") + RESULT_COLUMNS)
    return rows, path
