"""One-step loss-change analysis and the practical tiny learning-rate window.

At a probe checkpoint theta, the expected validation-loss change of one SGD
step with learning rate eta and batch size B is

    E[delta loss] = -eta * a + (eta^2 / 2) * (b + tr(H Sigma) / B)

with a the alignment of the validation gradient with the training gradient,
b the curvature of the mean training gradient under the validation Hessian H,
and Sigma the per-sample gradient covariance. Rankings stay first-order
driven when eta is below

    delta_a / (lambda_max * (G^2 + sigma_g^2 / B))

while floating-point rounding imposes a lower limit on usable eta: updates
smaller than the unit roundoff times the parameter scale are flushed away
(2^-23, about 1.19e-7, for 32-bit storage at unit parameter scale).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .recipes import DataRecipe, sample_batch
from .rfmodel import PRECISION_EPS, RandomFeatureModel, loss_and_grad

__all__ = [
    "TaylorStats",
    "EtaBound",
    "val_bank",
    "val_gradient",
    "probe_alignment",
    "hvp",
    "lambda_max_power_iter",
    "grad_noise_stats",
    "GradNoise",
    "tr_h_sigma",
    "eta_tiny_bound",
    "float_floor",
    "taylor_predict",
    "collect_taylor_stats",
    "eta_bound_report",
]


def val_bank(
    val: DataRecipe, n_val: int, gen: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed validation sample shared by gradient, Hessian and loss probes."""
    batch = sample_batch(val, n_val, gen)
    return batch.inputs, batch.labels


def val_gradient(
    model: RandomFeatureModel, inputs: np.ndarray, labels: np.ndarray
) -> np.ndarray:
    """Full Monte Carlo gradient of the validation loss at model.theta."""
    _, grad = loss_and_grad(model, inputs, labels)
    return grad


def probe_alignment(
    model: RandomFeatureModel,
    recipe: DataRecipe,
    val_inputs: np.ndarray,
    val_labels: np.ndarray,
    n_batches: int,
    B: int,
    gen: np.random.Generator,
) -> tuple[float, float]:
    """Mean inner product of the validation gradient with training batch
    gradients, with its standard error over batches."""
    g_val = val_gradient(model, val_inputs, val_labels)
    vals = np.empty(n_batches)
    for k in range(n_batches):
        batch = sample_batch(recipe, B, gen)
        _, g = loss_and_grad(model, batch.inputs, batch.labels)
        vals[k] = g @ g_val
    se = vals.std(ddof=1) / np.sqrt(n_batches) if n_batches > 1 else 0.0
    return float(vals.mean()), float(se)


def hvp(
    model: RandomFeatureModel,
    v: np.ndarray,
    val_inputs: np.ndarray | None = None,
    val: DataRecipe | None = None,
    n_mc: int = 16384,
    gen: np.random.Generator | None = None,
    chunk: int = 2048,
) -> np.ndarray:
    """Validation-Hessian vector product H v without materializing H.

    H = (1/m) E_val[phi phi^T] for the squared loss, so H v is accumulated by
    streaming phi over validation samples. Pass ``val_inputs`` to reuse a
    fixed bank, or a recipe plus generator to draw n_mc fresh points.
    """
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) == 0:
        raise ValueError("hvp direction must be nonzero")
    if val_inputs is None:
        if val is None or gen is None:
            raise ValueError("need val_inputs, or a recipe with a generator")
        val_inputs = val.input_law.sample(n_mc, gen)
    out = np.zeros_like(v)
    n = len(val_inputs)
    for lo in range(0, n, chunk):
        phi = model.act(val_inputs[lo : lo + chunk] @ model.bank.weights)
        out += phi.T @ (phi @ v)
    return out / (n * model.m)


def lambda_max_power_iter(
    matvec,
    m: int,
    tol: float = 1e-10,
    max_iter: int = 200,
    seed: int = 0,
) -> tuple[float, int, bool]:
    """Top eigenvalue of a PSD operator by power iteration.

    Returns (estimate, iterations, converged); convergence means successive
    Rayleigh quotients agree to relative tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    gen = rng.stream(seed, "power-iter", m)
    v = gen.standard_normal(m)
    v /= np.linalg.norm(v)
    lam_prev = None
    for it in range(1, max_iter + 1):
        w = np.asarray(matvec(v))
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, it, True
        v = w / nw
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            return lam, it, True
        lam_prev = lam
    return lam_prev, max_iter, False


@dataclass(frozen=True)
class GradNoise:
    sigma_g2: float  # trace of the per-sample gradient covariance
    G2: float  # max squared batch-gradient norm over probes
    batch_grads: np.ndarray  # (n_batches, m), retained for covariance probing


def grad_noise_stats(
    model: RandomFeatureModel,
    recipe: DataRecipe,
    B: int,
    n_batches: int,
    gen: np.random.Generator,
) -> GradNoise:
    """Gradient noise statistics from n_batches fresh batches of size B.

    tr(Sigma) is the unbiased batch-scatter estimate scaled back to the
    per-sample covariance: B * (n/(n-1)) * mean ||g_k - g_bar||^2.
    """
    if n_batches < 2:
        raise ValueError("n_batches must be >= 2 for a variance estimate")
    grads = np.empty((n_batches, model.m))
    for k in range(n_batches):
        batch = sample_batch(recipe, B, gen)
        _, grads[k] = loss_and_grad(model, batch.inputs, batch.labels)
    gbar = grads.mean(axis=0)
    centered = grads - gbar
    sigma_g2 = B * (n_batches / (n_batches - 1)) * float((centered**2).sum(axis=1).mean())
    g2 = float((grads**2).sum(axis=1).max())
    return GradNoise(sigma_g2=sigma_g2, G2=g2, batch_grads=grads)


def tr_h_sigma(
    hvp_closure,
    batch_grads: np.ndarray,
    B: int,
    n_probes: int = 16,
    seed: int = 0,
) -> float:
    """Hutchinson estimate of tr(H Sigma) with Rademacher sign probes.

    Sigma is applied through the centered batch gradients (low-rank form),
    H through the supplied Hessian-vector closure.
    """
    n, m = batch_grads.shape
    centered = batch_grads - batch_grads.mean(axis=0)
    scale = B / (n - 1)
    gen = rng.stream(seed, "hutchinson", n_probes)
    total = 0.0
    for _ in range(n_probes):
        z = gen.choice([-1.0, 1.0], size=m)
        sigma_z = scale * (centered.T @ (centered @ z))
        total += float(z @ hvp_closure(sigma_z))
    return total / n_probes


def eta_tiny_bound(
    delta_a: float, lambda_max: float, G2: float, sigma_g2: float, B: int
) -> float:
    """Upper limit on learning rates that keep rankings first-order driven."""
    if min(delta_a, lambda_max, G2, sigma_g2) < 0 or B < 1:
        raise ValueError("inputs must be nonnegative with B >= 1")
    denom = lambda_max * (G2 + sigma_g2 / B)
    if denom == 0.0:
        return float("inf")  # no curvature or noise: unbounded
    return delta_a / denom


def float_floor(
    model: RandomFeatureModel | None, grad_scale: float, precision_mode: str
) -> float:
    """Smallest eta whose representative update survives rounding.

    An update eta * grad_scale below the unit roundoff of the storage format
    times the parameter scale (max(1, ||theta||_inf)) is flushed away.
    """
    if grad_scale <= 0:
        raise ValueError("grad_scale must be positive")
    eps = PRECISION_EPS[precision_mode]
    theta_scale = 1.0
    if model is not None and model.theta.size:
        theta_scale = max(1.0, float(np.max(np.abs(model.theta))))
    return eps * theta_scale / grad_scale


@dataclass(frozen=True)
class TaylorStats:
    a: float
    a_se: float
    b: float
    G2: float
    sigma_g2: float
    lambda_max: float
    tr_h_sigma: float
    B: int


def taylor_predict(stats: TaylorStats, eta: float) -> float:
    """Predicted mean one-step validation-loss change at learning rate eta."""
    return -eta * stats.a + 0.5 * eta**2 * (stats.b + stats.tr_h_sigma / stats.B)


def collect_taylor_stats(
    model: RandomFeatureModel,
    recipe: DataRecipe,
    val_inputs: np.ndarray,
    val_labels: np.ndarray,
    B: int,
    n_batches: int,
    seed: int = 0,
    power_tol: float = 1e-10,
) -> TaylorStats:
    """Assemble all one-step statistics at the model's current checkpoint."""
    gen = rng.stream(seed, "taylor-probes", recipe.recipe_id)
    a, a_se = probe_alignment(model, recipe, val_inputs, val_labels, n_batches, B, gen)
    noise = grad_noise_stats(model, recipe, B, n_batches, gen)
    gbar = noise.batch_grads.mean(axis=0)

    def matvec(v):
        return hvp(model, v, val_inputs=val_inputs)

    b = float(gbar @ matvec(gbar)) if np.linalg.norm(gbar) > 0 else 0.0
    lam, _, _ = lambda_max_power_iter(matvec, model.m, tol=power_tol, seed=seed)
    ths = tr_h_sigma(matvec, noise.batch_grads, B, seed=seed)
    return TaylorStats(
        a=a,
        a_se=a_se,
        b=b,
        G2=noise.G2,
        sigma_g2=noise.sigma_g2,
        lambda_max=lam,
        tr_h_sigma=ths,
        B=B,
    )


@dataclass(frozen=True)
class EtaBound:
    delta_a: float
    lambda_max: float
    G2: float
    sigma_g2: float
    eta_tiny_upper: float
    eta_float_floor: float
    recommended_eta: float
    usable: bool

    def to_dict(self) -> dict:
        return {
            "delta_a": self.delta_a,
            "lambda_max": self.lambda_max,
            "G2": self.G2,
            "sigma_g2": self.sigma_g2,
            "eta_tiny_upper": self.eta_tiny_upper,
            "eta_float_floor": self.eta_float_floor,
            "recommended_eta": self.recommended_eta,
            "usable": self.usable,
        }


def eta_bound_report(
    stats_by_recipe: dict,
    B: int,
    standard_eta: float,
    precision_mode: str = "fp32",
    model: RandomFeatureModel | None = None,
) -> EtaBound:
    """Combine per-recipe probe statistics into the usable-eta window.

    delta_a is the smallest pairwise alignment gap across recipes; the
    recommendation follows the rule of thumb of running one to two orders of
    magnitude below the tuned rate, capped by the first-order bound and the
    floating-point floor.
    """
    if len(stats_by_recipe) < 2:
        raise ValueError("need stats for at least two recipes")
    alignments = [s.a for s in stats_by_recipe.values()]
    delta_a = min(
        abs(x - y) for i, x in enumerate(alignments) for y in alignments[i + 1 :]
    )
    lam = max(s.lambda_max for s in stats_by_recipe.values())
    g2 = max(s.G2 for s in stats_by_recipe.values())
    sg2 = max(s.sigma_g2 for s in stats_by_recipe.values())
    upper = float(eta_tiny_bound(delta_a, lam, g2, sg2, B))
    floor = float(
        float_floor(model, grad_scale=max(np.sqrt(g2), 1e-300), precision_mode=precision_mode)
    )
    usable = bool(floor < upper)
    rec = min(upper, standard_eta / 30.0)
    if usable:
        rec = min(max(rec, floor), upper)
    return EtaBound(
        delta_a=float(delta_a),
        lambda_max=float(lam),
        G2=float(g2),
        sigma_g2=float(sg2),
        eta_tiny_upper=upper,
        eta_float_floor=floor,
        recommended_eta=float(rec),
        usable=usable,
    )
