"""Acceptance suite: every release-gate check at its pinned tolerance.

Each test prints one PASS/FAIL line (run with ``pytest -s`` to see them all).
Set TINYLR_ACCEPT_DIR to reuse preset artifacts across sessions; by default
everything is computed fresh in a session temporary directory.
"""

import os
import time

import numpy as np
import pytest

from tinylr import presets, rng
from tinylr.bounds import (
    collect_taylor_stats,
    hvp,
    lambda_max_power_iter,
    taylor_predict,
    val_bank,
)
from tinylr.metrics import RecipeScoreTable, spearman, topk_regret
from tinylr.oracle import ridgeless_optimum
from tinylr.recipes import make_recipe, sample_batch
from tinylr.rfmodel import Activation, RandomFeatureModel, init_features, loss_and_grad
from tinylr.trainer import TrainConfig, eval_loss, sgd_train


def report(criterion: str, passed: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"{criterion}: {detail}"


@pytest.fixture(scope="session")
def out_dir(tmp_path_factory):
    env = os.environ.get("TINYLR_ACCEPT_DIR")
    if env:
        os.makedirs(env, exist_ok=True)
        return env
    return str(tmp_path_factory.mktemp("acceptance"))


def test_criterion_01_sign_transfer_against_oracle(out_dir):
    t0 = time.time()
    summary = presets.preset_theorem_check(out_dir)
    elapsed = time.time() - t0
    ok = (
        summary["n_pairs"] >= 3
        and summary["sign_match_fraction_wide_tiny_eta"] >= 0.95
        and summary["n_disagreements_narrow_tuned"] >= 1
        and elapsed <= 900
    )
    report(
        "criterion 1 (wide tiny-eta gap signs match the oracle; narrow tuned "
        "models misorder)",
        ok,
        f"{summary['n_pairs']} pairs, match fraction "
        f"{summary['sign_match_fraction_wide_tiny_eta']:.3f}, "
        f"{summary['n_disagreements_narrow_tuned']} narrow disagreements, "
        f"{elapsed:.0f}s",
    )


def test_criterion_02_certified_ranking_flip(out_dir):
    summary = presets.preset_fragility(out_dir)
    ratio_ok = summary["eta_high"] / summary["eta_low"] <= 4.0 * (1 + 1e-9)
    sig_ok = (
        abs(summary["gap_low"]) >= 3 * summary["se_low"]
        and abs(summary["gap_high"]) >= 3 * summary["se_high"]
        and np.sign(summary["gap_low"]) == -np.sign(summary["gap_high"])
    )
    report(
        "criterion 2 (ranking flip within a 4x learning-rate window, both "
        "gaps >= 3 standard errors)",
        ratio_ok and sig_ok,
        f"pair {summary['pair']}, eta {summary['eta_low']:.3g} -> "
        f"{summary['eta_high']:.3g}, gaps {summary['gap_low']:+.2e} / "
        f"{summary['gap_high']:+.2e}",
    )


def test_criterion_03_correlation_vs_learning_rate(out_dir):
    summary = presets.preset_corr_vs_lr(out_dir)
    rho_small = summary["rho_two_smallest"]
    rho_std = summary["rho_at_standard_eta"]
    ok = (
        len(summary["rows"]) > 0
        and min(rho_small) >= rho_std + 0.15
        and max(rho_small) >= 0.9
    )
    report(
        "criterion 3 (rank transfer at the two smallest learning rates beats "
        "the grid-optimum rate by >= 0.15 and reaches 0.9)",
        ok,
        f"rho small {rho_small[0]:.3f}/{rho_small[1]:.3f} vs "
        f"rho at standard eta {rho_std:.3f}",
    )


def test_criterion_04_topk_regret_dominance(out_dir):
    summary = presets.preset_topk(out_dir)
    ok = summary["tiny_dominates"] and summary["strict_at_k1"]
    report(
        "criterion 4 (tiny-eta proxy regret curve dominates the standard-eta "
        "curve, strictly at k=1)",
        ok,
        f"regret@k1 tiny {summary['regret_tiny'][0]:.2e} vs standard "
        f"{summary['regret_standard'][0]:.2e}",
    )


def test_criterion_05_approx_error_decay(out_dir):
    summary = presets.preset_approx_decay(out_dir)
    ok = summary["slope"] is not None and abs(summary["slope"] - (-1.0)) <= 0.25
    report(
        "criterion 5 (ridgeless approximation error decays like 1/width)",
        ok,
        f"slope {summary['slope']:.3f} over widths {summary['widths']}",
    )


def test_criterion_06_sgd_variance_bound():
    # identity activation at m = 64: dense moments are available in closed
    # form, and the empirical E||theta_T - mu||^2 over 100 seeds must stay
    # within twice the contraction-plus-noise bound
    d, m, B, T = 8, 64, 8, 500
    spec = {
        "id": "vb64",
        "input_law": {"kind": "sphere", "dim": d},
        "coeff": {"basis": [["coord", 0], ["coord", 1]], "c": [d * 1.0, d * 0.5]},
        "activation": "identity", "weight_law": "sphere",
        "n_u": 1024, "quadrature_seed": 0,
    }
    recipe = make_recipe(spec)
    bank = init_features(d, m, "sphere", 11)
    act = Activation("identity")

    h = bank.weights.T @ bank.weights / (m * d)  # exact H for sphere inputs
    evals = np.linalg.eigvalsh(h)
    lam_min = float(evals[evals > 1e-10 * evals[-1]][0])

    res = ridgeless_optimum(bank, act, recipe, n_mc=200_000, gen=rng.stream(1, "mu"))
    mu = res.mu
    big = recipe.input_law.sample(200_000, rng.stream(2, "tr"))
    phi = big @ bank.weights
    resid = phi @ mu / np.sqrt(m) - recipe.target_values(big)
    tr_sigma = float(np.mean(resid**2 * (phi**2).sum(axis=1)) / m)

    details = []
    ok = True
    for scale in (1e-3, 1e-2):
        eta = scale * lam_min
        sq = []
        for s in range(100):
            model = RandomFeatureModel(bank, act)
            sgd_train(model, recipe, TrainConfig(eta=eta, B=B, T=T, seed=500 + s))
            sq.append(float(np.sum((model.theta - mu) ** 2)))
        bound = (1 - eta * lam_min) ** T * float(mu @ mu) + eta * tr_sigma / (B * lam_min)
        ok = ok and np.mean(sq) <= 2.0 * bound
        details.append(f"eta={eta:.2e}: {np.mean(sq):.4e} <= 2x{bound:.4e}")
    report("criterion 6 (SGD second-moment bound at width 64)", ok, "; ".join(details))


def test_criterion_07_one_step_taylor_prediction():
    specs, val_spec = presets.pinned_family()
    val = make_recipe(val_spec)
    recipe = make_recipe(specs[1])
    vi, vl = val_bank(val, 16384, rng.stream(0, "c7-vb"))
    bank = init_features(presets.DIM, 64, "sphere", 11)
    model = RandomFeatureModel(bank=bank, act=Activation("tanh"))
    sgd_train(model, recipe, TrainConfig(eta=presets.ETA_GRID[5], B=32, T=500, seed=21))
    theta_ck = model.theta.copy()
    stats = collect_taylor_stats(model, recipe, vi, vl, B=32, n_batches=64, seed=5)
    lam = stats.lambda_max

    abs_errs, details = [], []
    rel_at_smallest = None
    for scale in (1e-4, 1e-3, 1e-2):
        eta = scale / lam
        pred = taylor_predict(stats, eta)
        measured = []
        for k in range(200):
            model.theta = theta_ck.copy()
            l0, _ = eval_loss(model, val, 0, None, inputs=vi, labels=vl)
            batch = sample_batch(recipe, 32, rng.stream(99, "c7-probe", k))
            _, g = loss_and_grad(model, batch.inputs, batch.labels)
            model.theta = theta_ck - eta * g
            l1, _ = eval_loss(model, val, 0, None, inputs=vi, labels=vl)
            measured.append(l1 - l0)
        mean = float(np.mean(measured))
        abs_errs.append(abs(mean - pred))
        if rel_at_smallest is None:
            rel_at_smallest = abs(mean - pred) / abs(pred)
        details.append(f"eta={eta:.2e}: rel {abs(mean - pred) / abs(pred):.3f}")
    ok = rel_at_smallest <= 0.20 and abs_errs[0] < abs_errs[1] < abs_errs[2]
    report(
        "criterion 7 (one-step loss-change prediction within 20% at tiny eta, "
        "error growing with eta)",
        ok,
        "; ".join(details),
    )


def test_criterion_08_bound_inside_high_transfer_region(out_dir):
    summary = presets.preset_bound_check(out_dir)
    ok = bool(summary["bound_inside_region"])
    region = summary["high_transfer_region"]
    report(
        "criterion 8 (estimated usable-eta upper bound falls in the "
        "high-transfer learning-rate region)",
        ok,
        f"bound {summary['eta_tiny_upper']:.3e} vs region "
        f"[{region[0]:.3e}, {region[1]:.3e}]",
    )


def test_criterion_09_power_iteration_matches_dense():
    bank = init_features(presets.DIM, 64, "sphere", 3)
    model = RandomFeatureModel(bank=bank, act=Activation("tanh"))
    specs, val_spec = presets.pinned_family()
    val = make_recipe(val_spec)
    vi, _ = val_bank(val, 8192, rng.stream(13, "c9-vb"))
    phi = np.tanh(vi @ bank.weights)
    dense = float(np.linalg.eigvalsh(phi.T @ phi / (len(vi) * 64))[-1])
    lam, iters, converged = lambda_max_power_iter(
        lambda v: hvp(model, v, val_inputs=vi), m=64, tol=1e-10, max_iter=200
    )
    ok = converged and iters <= 200 and abs(lam - dense) <= 1e-6 * dense
    report(
        "criterion 9 (power iteration matches the dense eigensolver)",
        ok,
        f"power {lam:.9e} vs dense {dense:.9e} in {iters} iterations",
    )


def test_criterion_10_metric_unit_oracles():
    a = RecipeScoreTable(ids=("a", "b", "c", "d"), scores=np.array([1.0, 2, 3, 4]))
    b = RecipeScoreTable(ids=("a", "b", "c", "d"), scores=np.array([1.0, 2, 4, 3]))
    rho = spearman(a, b)
    proxy = RecipeScoreTable(ids=("D1", "D2", "D3"), scores=np.array([0.5, 0.6, 0.7]))
    target = RecipeScoreTable(ids=("D1", "D2", "D3"), scores=np.array([0.9, 0.7, 0.8]))
    r1, _ = topk_regret(proxy, target, 1)
    r2, _ = topk_regret(proxy, target, 2)
    ok = (
        abs(rho - 0.8) <= 1e-12
        and abs(r1 - 0.2) <= 1e-15
        and r2 == 0.0
    )
    report(
        "criterion 10 (rank-correlation and regret unit oracles exact)",
        ok,
        f"rho={rho!r}, regret@1={r1!r}, regret@2={r2!r}",
    )


def test_criterion_11_accumulated_alignment_identity(out_dir):
    summary = presets.preset_alignment_check(out_dir)
    ok = summary["max_rel_err"] <= 0.20
    report(
        "criterion 11 (eta times accumulated alignment matches the "
        "validation-loss drop within 20%)",
        ok,
        f"max relative error {summary['max_rel_err']:.4f} over "
        f"{len(summary['per_recipe'])} recipes",
    )


def test_criterion_12_preset_determinism(tmp_path_factory):
    base = tmp_path_factory.mktemp("determinism")
    runs = []
    for tag in ("first", "second"):
        d = str(base / tag)
        presets.preset_fragility(d)
        cfg = presets.fragility_config()
        store_dir = os.path.join(d, "stores", f"{cfg.experiment_id}-{cfg.config_hash()}")
        runs.append(
            (
                open(os.path.join(store_dir, "runs.csv"), "rb").read(),
                open(os.path.join(d, "fragility", "fragility.csv"), "rb").read(),
            )
        )
    ok = runs[0][0] == runs[1][0] and runs[0][1] == runs[1][1]
    report(
        "criterion 12 (fresh preset reruns emit byte-identical CSVs)",
        ok,
        f"runs.csv {len(runs[0][0])} bytes, fragility.csv {len(runs[0][1])} bytes",
    )
