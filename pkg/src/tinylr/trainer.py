"""One-pass mini-batch SGD on the readout layer, plus learning-rate search.

Training starts from theta = 0 and performs exactly T updates, each on a
freshly drawn batch (no sample is ever reused). The update applied is

    theta <- theta - eta * (batch-mean gradient)

which equals the (eta / B) * sum-of-per-sample-gradients convention. Batches
are re-derivable: batch t comes from the stream (seed, "batch", t).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .recipes import DataRecipe, LabeledBatch, sample_batch
from .rfmodel import RandomFeatureModel, loss_and_grad, quantize_theta

__all__ = [
    "TrainConfig",
    "TrainTrajectory",
    "LrGrid",
    "ModelSpec",
    "sgd_train",
    "eval_loss",
    "lr_grid_search",
    "batch_for_step",
]

DIVERGENCE_THRESHOLD = 1e12


@dataclass(frozen=True)
class TrainConfig:
    eta: float
    B: int
    T: int
    seed: int
    schedule: str = "constant"  # or "linear-warmup"
    warmup_steps: int = 0
    snapshot_every: int = 0  # 0: final theta only; k: every k-th step plus final
    precision_mode: str = "fp64"

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.B < 1 or self.T < 1:
            raise ValueError("B and T must be >= 1")
        if self.schedule not in ("constant", "linear-warmup"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "linear-warmup" and not 0 < self.warmup_steps < self.T:
            raise ValueError("warmup_steps must lie in (0, T)")

    def eta_at(self, t: int) -> float:
        if self.schedule == "linear-warmup" and t < self.warmup_steps:
            return self.eta * (t + 1) / self.warmup_steps
        return self.eta


@dataclass
class TrainTrajectory:
    cfg: TrainConfig
    final_theta: np.ndarray
    snapshots: dict = field(default_factory=dict)  # step -> theta_t (pre-update)
    train_loss_log: list = field(default_factory=list)  # (step, batch loss at theta_t)
    val_loss_log: list = field(default_factory=list)
    diverged: bool = False
    diverged_step: int | None = None
    samples_consumed: int = 0

    @property
    def steps_run(self) -> int:
        return self.diverged_step if self.diverged else self.cfg.T


def batch_for_step(recipe: DataRecipe, cfg: TrainConfig, t: int) -> LabeledBatch:
    """Re-derive the exact batch consumed at step t."""
    return sample_batch(recipe, cfg.B, rng.stream(cfg.seed, "batch", t))


def sgd_train(
    model: RandomFeatureModel,
    recipe: DataRecipe,
    cfg: TrainConfig,
    val: DataRecipe | None = None,
    val_every: int = 0,
    val_n_mc: int = 4096,
) -> TrainTrajectory:
    """Run one-pass SGD, mutating model.theta; returns the trajectory.

    Aborts (with the step index) when the batch loss is non-finite or exceeds
    the divergence threshold. Optional validation logging evaluates against
    ``val`` every ``val_every`` steps with a config-derived stream.
    """
    model.theta = np.zeros(model.m)
    traj = TrainTrajectory(cfg=cfg, final_theta=model.theta)
    quantized = cfg.precision_mode != "fp64"

    for t in range(cfg.T):
        batch = batch_for_step(recipe, cfg, t)
        traj.samples_consumed += len(batch)
        if cfg.snapshot_every and t % cfg.snapshot_every == 0:
            traj.snapshots[t] = model.theta.copy()
        loss, grad = loss_and_grad(model, batch.inputs, batch.labels)
        traj.train_loss_log.append((t, loss))
        if not np.isfinite(loss) or loss > DIVERGENCE_THRESHOLD:
            traj.diverged = True
            traj.diverged_step = t
            break
        if val is not None and val_every and t % val_every == 0:
            est, _ = eval_loss(model, val, val_n_mc, rng.stream(cfg.seed, "val-log", t))
            traj.val_loss_log.append((t, est))
        model.theta = model.theta - cfg.eta_at(t) * grad
        if quantized:
            model.theta = quantize_theta(model.theta, cfg.precision_mode)

    if cfg.snapshot_every and not traj.diverged:
        traj.snapshots[cfg.T] = model.theta.copy()
    traj.final_theta = model.theta
    if val is not None and val_every and not traj.diverged:
        est, _ = eval_loss(model, val, val_n_mc, rng.stream(cfg.seed, "val-log", cfg.T))
        traj.val_loss_log.append((cfg.T, est))
    return traj


def eval_loss(
    model: RandomFeatureModel,
    recipe: DataRecipe,
    n_mc: int,
    gen: np.random.Generator,
    inputs: np.ndarray | None = None,
    labels: np.ndarray | None = None,
) -> tuple[float, float]:
    """Monte Carlo estimate of the population loss with its standard error.

    Pass ``inputs``/``labels`` to reuse a fixed evaluation bank (common random
    numbers across models); otherwise n_mc >= 100 points are drawn from gen.
    """
    if inputs is None:
        if n_mc < 100:
            raise ValueError("n_mc must be >= 100")
        batch = sample_batch(recipe, n_mc, gen)
        inputs, labels = batch.inputs, batch.labels
    phi = model.act(inputs @ model.bank.weights)
    pointwise = 0.5 * ((phi @ model.theta) / np.sqrt(model.m) - labels) ** 2
    n = len(pointwise)
    return float(pointwise.mean()), float(pointwise.std(ddof=1) / np.sqrt(n))


@dataclass(frozen=True)
class LrGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if len(v) < 1 or np.any(v <= 0) or np.any(np.diff(v) <= 0):
            raise ValueError("grid must be strictly increasing and positive")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    @classmethod
    def logspace(cls, lo: float, hi: float, n: int) -> "LrGrid":
        if n < 2:
            raise ValueError("log-spaced grids need n >= 2")
        return cls(np.logspace(np.log10(lo), np.log10(hi), n))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ModelSpec:
    d: int
    m: int
    weight_dist: str = "sphere"
    activation: str = "tanh"


@dataclass
class LrSearchResult:
    eta_opt: float
    i_val_opt: float
    table: list  # rows: (eta, mean_loss, std_err, n_diverged)


def lr_grid_search(
    model_spec: ModelSpec,
    recipe: DataRecipe,
    val: DataRecipe,
    grid: LrGrid,
    cfg_template: TrainConfig,
    seeds: int,
    n_mc_val: int = 16384,
) -> LrSearchResult:
    """Seed-averaged validation loss per grid value; argmin with small-eta ties.

    Each seed draws a fresh feature bank and a fresh sample stream (banks are
    shared across grid values for the same seed, a paired-comparison variance
    reduction). A grid value counts as diverged if any of its seeds diverges.
    """
    from .rfmodel import Activation, init_features

    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    act = Activation(model_spec.activation)
    table = []
    for ei, eta in enumerate(grid.values):
        losses, n_div = [], 0
        for s in range(seeds):
            bank = init_features(
                model_spec.d,
                model_spec.m,
                model_spec.weight_dist,
                rng.derive_seed(cfg_template.seed, "bank", s),
            )
            model = RandomFeatureModel(bank=bank, act=act)
            cfg = TrainConfig(
                eta=float(eta),
                B=cfg_template.B,
                T=cfg_template.T,
                seed=rng.derive_seed(cfg_template.seed, "cell", ei, s),
                schedule=cfg_template.schedule,
                warmup_steps=cfg_template.warmup_steps,
            )
            traj = sgd_train(model, recipe, cfg)
            if traj.diverged:
                n_div += 1
                continue
            est, _ = eval_loss(
                model, val, n_mc_val, rng.stream(cfg_template.seed, "val-eval", ei, s)
            )
            losses.append(est)
        if n_div > 0 or not losses:
            table.append((float(eta), float("inf"), float("nan"), n_div))
        else:
            arr = np.asarray(losses)
            se = arr.std(ddof=1) / np.sqrt(len(arr)) if len(arr) > 1 else 0.0
            table.append((float(eta), float(arr.mean()), float(se), 0))

    finite = [(eta, mean) for eta, mean, _, _ in table if np.isfinite(mean)]
    if not finite:
        raise RuntimeError(f"all grid values diverged: {list(grid.values)}")
    best_eta, best = finite[0]
    for eta, mean in finite[1:]:
        if mean < best:  # strict: ties resolve toward the smaller eta
            best_eta, best = eta, mean
    return LrSearchResult(eta_opt=best_eta, i_val_opt=best, table=table)
