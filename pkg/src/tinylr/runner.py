"""Experiment orchestration: sweeps over (recipe, width, eta, seed) cells.

A sweep trains every cell of its config, scores final checkpoints against a
shared validation sample bank (common random numbers across cells), and
persists rows to an append-only CSV keyed by cell. Re-running a completed
store is a no-op, and results are invariant to execution order: every cell
derives its streams from the master seed and its own coordinates, and rows
are sorted before emission so outputs are byte-identical across runs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__, rng
from .recipes import DataRecipe, make_recipe, sample_batch
from .rfmodel import RandomFeatureModel, init_features
from .trainer import TrainConfig, eval_loss, sgd_train

__all__ = [
    "ExperimentConfig",
    "ResultsStore",
    "run_sweep",
    "grid_optimum",
    "score_table_at",
    "target_opt_table",
    "ranking_report",
    "regret_report",
    "bootstrap_spearman_ci",
]

RUNS_HEADER = [
    "recipe_id",
    "width",
    "eta",
    "batch",
    "steps",
    "seed",
    "final_train_loss",
    "final_val_loss",
    "val_std_err",
    "diverged",
]


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    recipes: tuple  # recipe descriptor dicts
    val: dict
    widths: tuple
    eta_grid: tuple
    B: int = 32
    tpp: float = 20.0
    seeds: int = 5
    master_seed: int = 0
    n_val_eval: int = 16384
    n_train_eval: int = 4096
    n_mc_oracle: int = 1 << 17
    oracle_widths: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "recipes", tuple(self.recipes))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "eta_grid", tuple(float(e) for e in self.eta_grid))
        object.__setattr__(self, "oracle_widths", tuple(int(w) for w in self.oracle_widths))
        if list(self.widths) != sorted(self.widths):
            raise ValueError("widths must be sorted ascending")
        if np.any(np.diff(self.eta_grid) <= 0) or min(self.eta_grid) <= 0:
            raise ValueError("eta grid must be positive and increasing")
        if self.tpp <= 0:
            raise ValueError("tpp must be positive")

    def steps_for(self, width: int) -> int:
        return max(1, round(self.tpp * width / self.B))

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "recipes": list(self.recipes),
            "val": self.val,
            "widths": list(self.widths),
            "eta_grid": list(self.eta_grid),
            "B": self.B,
            "tpp": self.tpp,
            "seeds": self.seeds,
            "master_seed": self.master_seed,
            "n_val_eval": self.n_val_eval,
            "n_train_eval": self.n_train_eval,
            "n_mc_oracle": self.n_mc_oracle,
            "oracle_widths": list(self.oracle_widths),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        data["recipes"] = tuple(data["recipes"])
        data["widths"] = tuple(data["widths"])
        data["eta_grid"] = tuple(data["eta_grid"])
        data["oracle_widths"] = tuple(data.get("oracle_widths", ()))
        return cls(**data)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def build_recipes(self) -> list:
        return [make_recipe(spec) for spec in self.recipes]

    def build_val(self) -> DataRecipe:
        return make_recipe(self.val)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


class ResultsStore:
    """CSV-backed append-only results, keyed by (recipe, width, eta, seed)."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.runs_path = os.path.join(out_dir, "runs.csv")
        self.meta_path = os.path.join(out_dir, "meta.json")
        self.oracle_path = os.path.join(out_dir, "oracle.json")
        self.rows: dict = {}
        if os.path.exists(self.runs_path):
            with open(self.runs_path, newline="") as fh:
                for rec in csv.DictReader(fh):
                    key = (rec["recipe_id"], int(rec["width"]), rec["eta"], int(rec["seed"]))
                    self.rows[key] = rec

    def has(self, recipe_id: str, width: int, eta: float, seed: int) -> bool:
        return (recipe_id, width, repr(float(eta)), seed) in self.rows

    def add(self, row: dict) -> None:
        key = (row["recipe_id"], int(row["width"]), _fmt(row["eta"]), int(row["seed"]))
        if key in self.rows:
            raise KeyError(f"duplicate result key {key}")
        self.rows[key] = {k: _fmt(row[k]) for k in RUNS_HEADER}

    def flush(self) -> None:
        ordered = sorted(
            self.rows.values(),
            key=lambda r: (r["recipe_id"], int(r["width"]), float(r["eta"]), int(r["seed"])),
        )
        with open(self.runs_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=RUNS_HEADER, lineterminator="\r\n")
            writer.writeheader()
            writer.writerows(ordered)

    def write_meta(self, config: ExperimentConfig) -> None:
        meta = {
            "config": config.to_dict(),
            "config_hash": config.config_hash(),
            "code_version": __version__,
        }
        if os.path.exists(self.meta_path):
            with open(self.meta_path) as fh:
                old = json.load(fh)
            if old.get("config_hash") != meta["config_hash"]:
                raise ValueError(
                    "store was created with a different config "
                    f"({old.get('config_hash')} != {meta['config_hash']})"
                )
        with open(self.meta_path, "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)

    def write_oracle(self, reports: list) -> None:
        with open(self.oracle_path, "w") as fh:
            json.dump(reports, fh, indent=1, sort_keys=True)

    def oracle_reports(self) -> list:
        with open(self.oracle_path) as fh:
            return json.load(fh)

    def cell(self, recipe_id: str, width: int, eta: float, seed: int) -> dict:
        return self.rows[(recipe_id, width, repr(float(eta)), seed)]


@dataclass
class _ValBank:
    inputs: np.ndarray
    labels: np.ndarray


def _train_cell(args):
    (config, recipe, width, ei, eta, seed, bank_seed, val_bank, train_bank) = args
    bank = init_features(recipe.dim, width, recipe.weight_law, bank_seed)
    model = RandomFeatureModel(bank=bank, act=recipe.activation)
    cfg = TrainConfig(
        eta=eta,
        B=config.B,
        T=config.steps_for(width),
        seed=rng.derive_seed(config.master_seed, "cell", recipe.recipe_id, width, ei, seed),
    )
    traj = sgd_train(model, recipe, cfg)
    if traj.diverged:
        train_loss = val_loss = float("inf")
        val_se = float("nan")
    else:
        train_loss, _ = eval_loss(
            model, recipe, 0, None, inputs=train_bank.inputs, labels=train_bank.labels
        )
        val_loss, val_se = eval_loss(
            model, recipe, 0, None, inputs=val_bank.inputs, labels=val_bank.labels
        )
    return {
        "recipe_id": recipe.recipe_id,
        "width": width,
        "eta": eta,
        "batch": config.B,
        "steps": cfg.T,
        "seed": seed,
        "final_train_loss": train_loss,
        "final_val_loss": val_loss,
        "val_std_err": val_se,
        "diverged": traj.diverged,
    }


def run_sweep(config: ExperimentConfig, out_dir: str, threads: int = 1) -> ResultsStore:
    """Train every missing cell, compute the oracle once, persist everything.

    Cell divergence is recorded, never fatal. Feature banks depend on
    (width, seed) only, so recipe comparisons at matched seeds are paired.
    """
    store = ResultsStore(out_dir)
    store.write_meta(config)
    recipes_ = config.build_recipes()
    val = config.build_val()

    ids = [r.recipe_id for r in recipes_]
    if len(set(ids)) != len(ids):
        raise ValueError("recipe ids must be unique")

    val_bank = _ValBank(
        *_bank_samples(val, config.n_val_eval, rng.stream(config.master_seed, "val-eval-bank"))
    )
    train_banks = {
        r.recipe_id: _ValBank(
            *_bank_samples(
                r, config.n_train_eval, rng.stream(config.master_seed, "train-eval-bank", r.recipe_id)
            )
        )
        for r in recipes_
    }

    tasks = []
    for recipe in recipes_:
        for width in config.widths:
            for ei, eta in enumerate(config.eta_grid):
                for seed in range(config.seeds):
                    if store.has(recipe.recipe_id, width, eta, seed):
                        continue
                    bank_seed = rng.derive_seed(config.master_seed, "bank", width, seed)
                    tasks.append(
                        (config, recipe, width, ei, eta, seed, bank_seed,
                         val_bank, train_banks[recipe.recipe_id])
                    )

    if tasks:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for row in pool.map(_train_cell, tasks):
                    store.add(row)
        else:
            for task in tasks:
                store.add(_train_cell(task))
        store.flush()
    elif not os.path.exists(store.runs_path):
        store.flush()

    if not os.path.exists(store.oracle_path):
        store.write_oracle(_oracle_reports(config, recipes_, val))
    return store


def _bank_samples(recipe: DataRecipe, n: int, gen) -> tuple:
    batch = sample_batch(recipe, n, gen)
    return batch.inputs, batch.labels


def _oracle_reports(config: ExperimentConfig, recipes_: list, val: DataRecipe) -> list:
    """Per-recipe best-achievable losses plus one gap entry per ordered pair.

    All recipes are scored on one shared validation sample: each target is
    evaluated once, every pairwise gap is a paired difference of the cached
    pointwise losses, and mirrored entries are exact negations.
    """
    from .oracle import KernelSpec, kernel_min_eig, ridgeless_optimum
    from .rfmodel import init_features

    n = config.n_mc_oracle
    batch = sample_batch(val, n, rng.stream(config.master_seed, "oracle-val"))
    pointwise = {}
    reports = {}
    for r in recipes_:
        pts = 0.5 * (r.target_values(batch.inputs) - batch.labels) ** 2
        pointwise[r.recipe_id] = pts
        spec = KernelSpec(
            activation=r.activation, weight_law=r.weight_law, dim=r.dim,
            n_u=r.n_u, seed=r.quadrature_seed,
        )
        lam = kernel_min_eig(spec, r.input_law, grid_n=64, seed=config.master_seed)
        width_entries = []
        for m in config.oracle_widths:
            bank = init_features(
                r.dim, m, r.weight_law, rng.derive_seed(config.master_seed, "oracle-bank", m)
            )
            res = ridgeless_optimum(
                bank, r.activation, r, n_mc=max(64 * m, 4096),
                gen=rng.stream(config.master_seed, "oracle-mc", r.recipe_id, m), val=val,
            )
            width_entries.append(
                {"m": int(m), "approx_error": res.approx_error, "val_loss": res.val_loss}
            )
        reports[r.recipe_id] = {
            "recipe_id": r.recipe_id,
            "best_loss": float(pts.mean()),
            "std_err": float(pts.std(ddof=1) / np.sqrt(n)),
            "lambda0": lam.estimate,
            "widths": width_entries,
            "delta": [],
        }
    for i, ra in enumerate(recipes_):
        for rb in recipes_[i + 1 :]:
            diff = pointwise[ra.recipe_id] - pointwise[rb.recipe_id]
            value = float(diff.mean())
            se = float(diff.std(ddof=1) / np.sqrt(n))
            flag = bool(abs(value) <= 2.0 * se)
            reports[ra.recipe_id]["delta"].append(
                {"other_id": rb.recipe_id, "value": value, "ci": 1.96 * se,
                 "std_err": se, "indistinguishable": flag}
            )
            reports[rb.recipe_id]["delta"].append(
                {"other_id": ra.recipe_id, "value": -value, "ci": 1.96 * se,
                 "std_err": se, "indistinguishable": flag}
            )
    return [reports[r.recipe_id] for r in recipes_]


def _cell_losses(store: ResultsStore, recipe_id: str, width: int, eta: float, seeds: int):
    vals = []
    for s in range(seeds):
        row = store.cell(recipe_id, width, eta, s)
        if row["diverged"] == "True":
            return None
        vals.append(float(row["final_val_loss"]))
    return np.asarray(vals)


def grid_optimum(
    store: ResultsStore, config: ExperimentConfig, recipe_id: str, width: int
) -> tuple[float, float, float]:
    """Seed-averaged best grid value for one recipe and width.

    Returns (eta_opt, mean loss, std err); ties break toward the smaller eta
    and grid values with any diverged seed are skipped.
    """
    best = None
    for eta in config.eta_grid:
        vals = _cell_losses(store, recipe_id, width, eta, config.seeds)
        if vals is None:
            continue
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        if best is None or mean < best[1]:
            best = (eta, mean, se)
    if best is None:
        raise RuntimeError(f"all grid values diverged for {recipe_id} at width {width}")
    return best


def score_table_at(
    store: ResultsStore, config: ExperimentConfig, width: int, eta: float
):
    """Per-recipe seed-averaged validation losses at one (width, eta) cell."""
    from .metrics import RecipeScoreTable

    ids, scores, ses = [], [], []
    for spec in config.recipes:
        rid = spec["id"]
        vals = _cell_losses(store, rid, width, eta, config.seeds)
        if vals is None:
            continue
        ids.append(rid)
        scores.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0)
    return RecipeScoreTable(
        ids=tuple(ids),
        scores=np.asarray(scores),
        std_errs=np.asarray(ses),
        provenance=f"proxy@eta={eta!r}@m={width}",
    )


def target_opt_table(store: ResultsStore, config: ExperimentConfig, width: int):
    """Per-recipe tuned losses at one width (the grid-search optimum)."""
    from .metrics import RecipeScoreTable

    ids, scores, ses = [], [], []
    for spec in config.recipes:
        rid = spec["id"]
        _, mean, se = grid_optimum(store, config, rid, width)
        ids.append(rid)
        scores.append(mean)
        ses.append(se)
    return RecipeScoreTable(
        ids=tuple(ids),
        scores=np.asarray(scores),
        std_errs=np.asarray(ses),
        provenance=f"target-opt@m={width}",
    )


def standard_eta(store: ResultsStore, config: ExperimentConfig, width: int) -> float:
    """The grid value a practitioner would pick for this width: the one
    minimizing the recipe-averaged validation loss."""
    best = None
    for eta in config.eta_grid:
        means = []
        for spec in config.recipes:
            vals = _cell_losses(store, spec["id"], width, eta, config.seeds)
            if vals is None:
                means = None
                break
            means.append(vals.mean())
        if means is None:
            continue
        agg = float(np.mean(means))
        if best is None or agg < best[1]:
            best = (eta, agg)
    if best is None:
        raise RuntimeError(f"all grid values diverged at width {width}")
    return best[0]


def bootstrap_spearman_ci(
    per_seed_proxy: np.ndarray,
    target_scores: np.ndarray,
    n_resamples: int = 1000,
    seed: int = 0,
) -> tuple[float, float, float, bool]:
    """Spearman of seed-averaged proxy scores vs target scores, with a 95%
    bootstrap CI over seed resampling.

    per_seed_proxy has shape (n_seeds, n_recipes). A single seed collapses
    the CI to a point and is flagged low-confidence.
    """
    from scipy.stats import rankdata

    def rho(proxy_means):
        ra = rankdata(proxy_means)
        rb = rankdata(target_scores)
        return float(np.corrcoef(ra, rb)[0, 1])

    n_seeds = per_seed_proxy.shape[0]
    point = rho(per_seed_proxy.mean(axis=0))
    if n_seeds < 2:
        return point, point, point, True
    gen = rng.stream(seed, "bootstrap", n_resamples)
    stats = np.empty(n_resamples)
    for b in range(n_resamples):
        idx = gen.integers(0, n_seeds, size=n_seeds)
        stats[b] = rho(per_seed_proxy[idx].mean(axis=0))
    lo, hi = np.percentile(stats, [2.5, 97.5])
    return point, float(lo), float(hi), False


def _rank_corr(a: np.ndarray, b: np.ndarray) -> float:
    from scipy.stats import rankdata

    return float(np.corrcoef(rankdata(a), rankdata(b))[0, 1])


def _per_seed_matrix(store, config, width, eta):
    """(n_seeds, n_recipes) proxy losses, or None if any cell diverged."""
    cols = []
    for spec in config.recipes:
        vals = _cell_losses(store, spec["id"], width, eta, config.seeds)
        if vals is None:
            return None
        cols.append(vals)
    return np.stack(cols, axis=1)


def ranking_report(store: ResultsStore, config: ExperimentConfig, out_dir: str) -> dict:
    """Proxy-vs-tuned-target rank correlation for every proxy (width, eta).

    The target is the largest configured width under per-recipe grid search,
    with the infinite-width oracle ranking reported alongside. Missing or
    diverged cells are marked, never interpolated.
    """
    os.makedirs(out_dir, exist_ok=True)
    target_width = config.widths[-1]
    target = target_opt_table(store, config, target_width)
    oracle_best = {r["recipe_id"]: r["best_loss"] for r in store.oracle_reports()}
    order = list(target.ids)
    target_scores = np.asarray([target.score_of(i) for i in order])
    oracle_scores = np.asarray([oracle_best[i] for i in order])

    rows = []
    for width in config.widths[:-1] or config.widths:
        for eta in config.eta_grid:
            mat = _per_seed_matrix(store, config, width, eta)
            if mat is None:
                rows.append((width, eta, None, None, None, None, True))
                continue
            rho, lo, hi, low_conf = bootstrap_spearman_ci(
                mat, target_scores, seed=config.master_seed
            )
            rho_oracle = _rank_corr(mat.mean(axis=0), oracle_scores)
            rows.append((width, eta, rho, lo, hi, rho_oracle, low_conf))

    csv_path = os.path.join(out_dir, "ranking.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(
            ["width", "eta", "spearman_vs_target_opt", "ci_lo", "ci_hi",
             "spearman_vs_oracle", "low_confidence_or_missing"]
        )
        for width, eta, rho, lo, hi, rho_o, flag in rows:
            writer.writerow(
                [width, repr(eta)]
                + ["" if v is None else repr(v) for v in (rho, lo, hi, rho_o)]
                + [flag]
            )
    summary = {
        "target_width": target_width,
        "rows": [
            {"width": w, "eta": e, "rho": r, "ci_lo": lo, "ci_hi": hi,
             "rho_oracle": ro, "flagged": fl}
            for (w, e, r, lo, hi, ro, fl) in rows
        ],
    }
    with open(os.path.join(out_dir, "ranking.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    return summary


def eta_bound_pipeline(
    config: ExperimentConfig,
    store: ResultsStore,
    probe_width: int | None = None,
    warmup_steps: int = 500,
    n_batches: int = 20,
    precision_mode: str = "fp32",
) -> dict:
    """Usable-eta window from warmup-checkpoint probes.

    Each recipe is warmed up for ``warmup_steps`` at the mid-grid learning
    rate on a shared bank at the probe width (smallest width by default);
    one-step statistics at those checkpoints feed the upper bound, the
    float floor, and the recommended proxy learning rate.
    """
    from .bounds import collect_taylor_stats, eta_bound_report, val_bank
    from .rfmodel import RandomFeatureModel, init_features

    width = probe_width or config.widths[0]
    eta_std = standard_eta(store, config, width)
    eta_mid = config.eta_grid[(len(config.eta_grid) - 1) // 2]
    recipes_ = config.build_recipes()
    val = config.build_val()
    vi, vl = val_bank(val, config.n_val_eval, rng.stream(config.master_seed, "bound-val-bank"))
    bank = init_features(
        recipes_[0].dim, width, recipes_[0].weight_law,
        rng.derive_seed(config.master_seed, "bound-bank"),
    )
    stats_by_recipe = {}
    model = None
    for recipe in recipes_:
        model = RandomFeatureModel(bank=bank, act=recipe.activation)
        warm = TrainConfig(
            eta=eta_mid, B=config.B, T=warmup_steps,
            seed=rng.derive_seed(config.master_seed, "bound-warmup", recipe.recipe_id),
        )
        sgd_train(model, recipe, warm)
        stats_by_recipe[recipe.recipe_id] = collect_taylor_stats(
            model, recipe, vi, vl, B=config.B, n_batches=n_batches,
            seed=rng.derive_seed(config.master_seed, "bound-stats", recipe.recipe_id),
        )
    bound = eta_bound_report(
        stats_by_recipe, B=config.B, standard_eta=eta_std,
        precision_mode=precision_mode, model=model,
    )
    ids = sorted(stats_by_recipe)
    pairs = [
        {"pair": [i, j],
         "alignment_gap": abs(stats_by_recipe[i].a - stats_by_recipe[j].a)}
        for a_, i in enumerate(ids)
        for j in ids[a_ + 1 :]
    ]
    payload = bound.to_dict()
    payload.update(
        {
            "recipe_pairs": pairs,
            "probe_width": width,
            "standard_eta": eta_std,
            "warmup_eta": eta_mid,
            "warmup_steps": warmup_steps,
            "per_recipe": {
                rid: {
                    "a": s.a, "a_se": s.a_se, "b": s.b, "G2": s.G2,
                    "sigma_g2": s.sigma_g2, "lambda_max": s.lambda_max,
                    "tr_h_sigma": s.tr_h_sigma,
                }
                for rid, s in stats_by_recipe.items()
            },
        }
    )
    return payload


def regret_report(
    store: ResultsStore,
    config: ExperimentConfig,
    out_dir: str,
    proxy_width: int,
    etas: dict,
) -> dict:
    """Top-k regret curves of proxy selections against the tuned target.

    ``etas`` maps a label (e.g. "standard", "tiny") to the proxy grid value
    used for ranking.
    """
    from .metrics import topk_regret

    os.makedirs(out_dir, exist_ok=True)
    target = target_opt_table(store, config, config.widths[-1])
    n = len(target.ids)
    curves = {}
    for label, eta in etas.items():
        proxy = score_table_at(store, config, proxy_width, eta)
        if set(proxy.ids) != set(target.ids):
            raise RuntimeError(f"missing proxy cells at eta={eta!r}")
        curves[label] = {
            "eta": eta,
            "regret": [topk_regret(proxy, target, k)[0] for k in range(1, n + 1)],
        }
    csv_path = os.path.join(out_dir, "regret.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["label", "eta", "k", "regret"])
        for label in sorted(curves):
            for k, reg in enumerate(curves[label]["regret"], start=1):
                writer.writerow([label, repr(curves[label]["eta"]), k, repr(reg)])
    with open(os.path.join(out_dir, "regret.json"), "w") as fh:
        json.dump(curves, fh, indent=1, sort_keys=True)
    return curves
