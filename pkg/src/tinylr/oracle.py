"""Ground-truth machinery for recipe comparison.

Provides the infinite-width kernel (quadrature or closed form), each recipe's
best achievable validation loss and pairwise gaps, the finite-width ridgeless
optimum mu = H^+ beta with its approximation error, the width-decay fit of
that error, and Nystroem estimates of the kernel floor.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .recipes import DataRecipe, InputLaw, _build_quad_bank, sample_batch
from .rfmodel import Activation, FeatureBank, init_features

__all__ = [
    "KernelSpec",
    "kernel_value",
    "kernel_gram",
    "best_achievable_loss",
    "delta_ab",
    "DeltaReport",
    "ridgeless_optimum",
    "RidgelessResult",
    "approx_error_decay",
    "DecayFit",
    "kernel_min_eig",
    "MinEigReport",
    "oracle_report",
]

PINV_RCOND = 1e-10
RIDGELESS_MAX_WIDTH = 4096
QUADRATURE_FLOOR = 1e-14


@dataclass(frozen=True)
class KernelSpec:
    """Deterministic evaluator of K(x, x') = E_u[sigma(<u,x>) sigma(<u,x'>)]."""

    activation: Activation
    weight_law: str
    dim: int
    n_u: int = 1 << 16
    seed: int = 0
    _bank: np.ndarray = field(repr=False, default=None)

    def bank(self) -> np.ndarray:
        if self._bank is None:
            bank = _build_quad_bank(self.weight_law, self.dim, self.n_u, self.seed)
            bank.setflags(write=False)
            object.__setattr__(self, "_bank", bank)
        return self._bank

    @property
    def identity_scale(self) -> float:
        return 1.0 / self.dim if self.weight_law == "sphere" else 1.0 / 3.0


def kernel_value(
    spec: KernelSpec, x: np.ndarray, x2: np.ndarray, use_quadrature: bool = False
) -> float:
    """Kernel at a single pair; closed form for the identity activation
    unless quadrature is forced (cross-check path)."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if spec.activation.kind == "identity" and not use_quadrature:
        return float(spec.identity_scale * x @ x2)
    bank = spec.bank()
    return float(spec.activation(bank @ x) @ spec.activation(bank @ x2) / spec.n_u)


def kernel_gram(
    spec: KernelSpec,
    points: np.ndarray,
    use_quadrature: bool = False,
    chunk: int = 1 << 13,
) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if spec.activation.kind == "identity" and not use_quadrature:
        return spec.identity_scale * points @ points.T
    bank = spec.bank()
    gram = np.zeros((len(points), len(points)))
    for lo in range(0, spec.n_u, chunk):
        phi = spec.activation(points @ bank[lo : lo + chunk].T)
        gram += phi @ phi.T
    return gram / spec.n_u


def _paired_losses(
    recipe: DataRecipe, val: DataRecipe, n_mc: int, gen: np.random.Generator
) -> np.ndarray:
    """Pointwise 0.5 (f*_recipe(x) - y)^2 on a validation sample."""
    batch = sample_batch(val, n_mc, gen)
    pred = recipe.target_values(batch.inputs)
    return 0.5 * (pred - batch.labels) ** 2


def best_achievable_loss(
    recipe: DataRecipe, val: DataRecipe, n_mc: int, gen: np.random.Generator | None = None
) -> tuple[float, float]:
    """Monte Carlo estimate of the validation loss of the recipe's target
    function (the infinite-width, fully tuned limit of training on it)."""
    if gen is None:
        gen = rng.stream(val.quadrature_seed, "best-achievable", recipe.recipe_id, val.recipe_id)
    pts = _paired_losses(recipe, val, n_mc, gen)
    return float(pts.mean()), float(pts.std(ddof=1) / np.sqrt(n_mc))


@dataclass(frozen=True)
class DeltaReport:
    value: float
    std_err: float
    ci95: float
    indistinguishable: bool

    @property
    def sign(self) -> int:
        return 0 if self.indistinguishable else int(np.sign(self.value))


def delta_ab(
    recipe_a: DataRecipe,
    recipe_b: DataRecipe,
    val: DataRecipe,
    n_mc: int,
    gen: np.random.Generator | None = None,
) -> DeltaReport:
    """Signed gap between best achievable validation losses, A minus B.

    Both recipes are scored on the same validation draws, so the estimate is
    paired and swapping arguments negates it exactly. Gaps within two combined
    standard errors of zero are flagged indistinguishable (the sign-transfer
    guarantee assumes a nonzero gap).
    """
    if gen is None:
        first, second = sorted([recipe_a.recipe_id, recipe_b.recipe_id])
        gen = rng.stream(val.quadrature_seed, "delta", first, second, val.recipe_id)
    batch = sample_batch(val, n_mc, gen)
    da = 0.5 * (recipe_a.target_values(batch.inputs) - batch.labels) ** 2
    db = 0.5 * (recipe_b.target_values(batch.inputs) - batch.labels) ** 2
    diff = da - db
    value = float(diff.mean())
    se = float(diff.std(ddof=1) / np.sqrt(n_mc))
    return DeltaReport(
        value=value,
        std_err=se,
        ci95=1.96 * se,
        indistinguishable=bool(abs(value) <= 2.0 * se),
    )


@dataclass
class RidgelessResult:
    mu: np.ndarray
    approx_error: float
    approx_error_se: float
    moment_residual: float  # ||H mu - beta|| / ||beta||
    val_loss: float | None = None
    val_loss_se: float | None = None


def ridgeless_optimum(
    bank: FeatureBank,
    act: Activation,
    recipe: DataRecipe,
    n_mc: int,
    gen: np.random.Generator | None = None,
    val: DataRecipe | None = None,
    n_mc_val: int = 16384,
) -> RidgelessResult:
    """Population least-squares readout mu = H^+ beta from moment estimates.

    H = (1/m) E[phi phi^T] and beta = (1/sqrt m) E[y phi] are estimated from
    n_mc >= m fresh samples; singular values below 1e-10 of the largest are
    truncated in the pseudo-inverse. The returned approximation error is the
    recipe-population loss of mu measured on held-out samples.
    """
    m = bank.m
    if m > RIDGELESS_MAX_WIDTH:
        raise ValueError(f"dense ridgeless solve capped at m={RIDGELESS_MAX_WIDTH}")
    if n_mc < m:
        raise ValueError("n_mc < m: moment estimate would be under-determined")
    if gen is None:
        gen = rng.stream(recipe.quadrature_seed, "ridgeless", recipe.recipe_id, bank.seed, m)

    batch = sample_batch(recipe, n_mc, gen)
    phi = act(batch.inputs @ bank.weights)
    h_hat = phi.T @ phi / (n_mc * m)
    beta_hat = phi.T @ batch.labels / (n_mc * np.sqrt(m))

    evals, evecs = np.linalg.eigh(h_hat)
    keep = evals > PINV_RCOND * max(evals[-1], 0.0)
    inv = np.zeros_like(evals)
    inv[keep] = 1.0 / evals[keep]
    mu = evecs @ (inv * (evecs.T @ beta_hat))

    beta_norm = np.linalg.norm(beta_hat)
    residual = float(np.linalg.norm(h_hat @ mu - beta_hat) / beta_norm) if beta_norm > 0 else 0.0

    held = sample_batch(recipe, n_mc, gen)
    resid = act(held.inputs @ bank.weights) @ mu / np.sqrt(m) - held.labels
    pts = 0.5 * resid**2
    result = RidgelessResult(
        mu=mu,
        approx_error=float(pts.mean()),
        approx_error_se=float(pts.std(ddof=1) / np.sqrt(n_mc)),
        moment_residual=residual,
    )
    if val is not None:
        vbatch = sample_batch(val, n_mc_val, gen)
        vresid = act(vbatch.inputs @ bank.weights) @ mu / np.sqrt(m) - vbatch.labels
        vpts = 0.5 * vresid**2
        result.val_loss = float(vpts.mean())
        result.val_loss_se = float(vpts.std(ddof=1) / np.sqrt(n_mc_val))
    return result


@dataclass
class DecayFit:
    widths: list
    mean_errors: list
    std_errs: list
    slope: float | None
    c1: float | None
    excluded: list
    val_losses: list | None = None


def approx_error_decay(
    recipe: DataRecipe,
    widths: list,
    seeds: int,
    master_seed: int = 0,
    n_mc_factor: int = 64,
    val: DataRecipe | None = None,
) -> DecayFit:
    """Mean approximation error per width and its log-log decay fit.

    Widths below the quadrature floor are excluded from the fit with a
    warning. The fitted model is error ~= c1^2 * m^slope.
    """
    widths = sorted(int(w) for w in widths)
    if len(widths) < 4 or widths[-1] < 16 * widths[0]:
        raise ValueError("need >= 4 widths spanning at least 16x")
    act = recipe.activation
    means, ses, val_losses = [], [], []
    for m in widths:
        errs, vls = [], []
        for s in range(seeds):
            bank = init_features(
                recipe.dim,
                m,
                recipe.weight_law,
                rng.derive_seed(master_seed, "decay-bank", m, s),
            )
            res = ridgeless_optimum(
                bank,
                act,
                recipe,
                n_mc=n_mc_factor * m,
                gen=rng.stream(master_seed, "decay-mc", m, s),
                val=val,
            )
            errs.append(res.approx_error)
            if val is not None:
                vls.append(res.val_loss)
        arr = np.asarray(errs)
        means.append(float(arr.mean()))
        ses.append(float(arr.std(ddof=1) / np.sqrt(seeds)) if seeds > 1 else 0.0)
        if val is not None:
            val_losses.append(float(np.mean(vls)))

    usable = [i for i, e in enumerate(means) if e >= QUADRATURE_FLOOR]
    excluded = [widths[i] for i in range(len(widths)) if i not in usable]
    if excluded:
        warnings.warn(f"widths {excluded} below quadrature floor, excluded from fit")
    if len(usable) < 2:
        return DecayFit(widths, means, ses, None, None, excluded,
                        val_losses if val is not None else None)
    logm = np.log([widths[i] for i in usable])
    loge = np.log([means[i] for i in usable])
    slope, intercept = np.polyfit(logm, loge, 1)
    return DecayFit(
        widths=widths,
        mean_errors=means,
        std_errs=ses,
        slope=float(slope),
        c1=float(np.sqrt(np.exp(intercept))),
        excluded=excluded,
        val_losses=val_losses if val is not None else None,
    )


@dataclass
class MinEigReport:
    estimate: float
    degenerate: bool
    psd_failure: bool
    grid_n: int
    finite_width_fractions: dict | None = None


def kernel_min_eig(
    spec: KernelSpec,
    input_law: InputLaw,
    grid_n: int,
    seed: int = 0,
    finite_width_check: bool = False,
    use_quadrature: bool = False,
) -> MinEigReport:
    """Nystroem kernel-floor estimate: lambda_min of [K(x_i, x_j)] / grid_n
    over i.i.d. grid points.

    Optionally checks that the smallest nonzero eigenvalue of the dense
    finite-width moment matrix at m in {256, 1024} clears half the estimate
    on 20 seeded banks.
    """
    if grid_n < 32:
        raise ValueError("grid_n must be >= 32")
    gen = rng.stream(seed, "min-eig-grid", grid_n)
    points = input_law.sample(grid_n, gen)
    gram = kernel_gram(spec, points, use_quadrature=use_quadrature)
    eigs = np.linalg.eigvalsh(gram)
    estimate = float(eigs[0] / grid_n)
    psd_failure = bool(eigs[0] < -1e-10 * max(eigs[-1], 1.0))
    report = MinEigReport(
        estimate=estimate,
        degenerate=bool(estimate < 1e-10),
        psd_failure=psd_failure,
        grid_n=grid_n,
    )
    if finite_width_check:
        fractions = {}
        for m in (256, 1024):
            hits = 0
            for s in range(20):
                lam = _dense_h_min_eig(spec, input_law, m, rng.derive_seed(seed, "fw", m, s))
                if lam >= 0.5 * estimate:
                    hits += 1
            fractions[m] = hits / 20.0
        report.finite_width_fractions = fractions
    return report


def _dense_h_min_eig(spec: KernelSpec, input_law: InputLaw, m: int, seed: int) -> float:
    """Smallest nonzero eigenvalue of H = (1/m) E[phi phi^T] for one bank."""
    bank = init_features(spec.dim, m, spec.weight_law, seed)
    if spec.activation.kind == "identity" and input_law.kind == "sphere":
        h = bank.weights.T @ bank.weights / (m * spec.dim)
    else:
        gen = rng.stream(seed, "dense-h")
        x = input_law.sample(32 * m, gen)
        phi = spec.activation(x @ bank.weights)
        h = phi.T @ phi / (len(x) * m)
    evals = np.linalg.eigvalsh(h)
    positive = evals[evals > PINV_RCOND * max(evals[-1], 0.0)]
    return float(positive[0]) if len(positive) else 0.0


def oracle_report(
    recipe: DataRecipe,
    val: DataRecipe,
    others: list,
    widths: list,
    n_mc: int = 1 << 17,
    master_seed: int = 0,
    lambda0_grid_n: int = 64,
) -> dict:
    """Assemble the JSON-serializable oracle summary for one recipe."""
    best, se = best_achievable_loss(recipe, val, n_mc)
    spec = KernelSpec(
        activation=recipe.activation,
        weight_law=recipe.weight_law,
        dim=recipe.dim,
        seed=recipe.quadrature_seed,
    )
    lam = kernel_min_eig(spec, recipe.input_law, lambda0_grid_n, seed=master_seed)
    width_entries = []
    for m in widths:
        bank = init_features(
            recipe.dim, m, recipe.weight_law, rng.derive_seed(master_seed, "oracle-bank", m)
        )
        res = ridgeless_optimum(
            bank,
            recipe.activation,
            recipe,
            n_mc=max(64 * m, 4096),
            gen=rng.stream(master_seed, "oracle-mc", recipe.recipe_id, m),
            val=val,
        )
        width_entries.append(
            {"m": int(m), "approx_error": res.approx_error, "val_loss": res.val_loss}
        )
    deltas = []
    for other in others:
        if other.recipe_id == recipe.recipe_id:
            continue
        rep = delta_ab(recipe, other, val, n_mc)
        deltas.append({"other_id": other.recipe_id, "value": rep.value, "ci": rep.ci95})
    return {
        "recipe_id": recipe.recipe_id,
        "best_loss": best,
        "std_err": se,
        "lambda0": lam.estimate,
        "widths": width_entries,
        "delta": deltas,
    }
