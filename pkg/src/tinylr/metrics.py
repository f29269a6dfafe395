"""Ranking and decision metrics for recipe comparisons.

Scores are losses: lower is better throughout. Pairwise gaps carry a sign of
0 when the gap is statistically indistinguishable from zero (within two
combined standard errors); such pairs are excluded from sign-agreement counts
rather than counted as failures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .bounds import val_gradient
from .recipes import DataRecipe
from .rfmodel import RandomFeatureModel, loss_and_grad
from .trainer import TrainTrajectory, batch_for_step

__all__ = [
    "RecipeScoreTable",
    "PairwiseGap",
    "pairwise_gaps",
    "spearman",
    "sign_agreement",
    "SignAgreement",
    "topk_regret",
    "accumulated_alignment",
    "AlignmentScore",
    "append_metric_rows",
]

METRIC_CSV_HEADER = ["metric", "k_or_pair", "value", "n_excluded",
                     "provenance_a", "provenance_b"]


def append_metric_rows(path: str, rows: list) -> None:
    """Append metric rows to a CSV with the fixed header, creating it on
    first use. Rows are (metric, k_or_pair, value, n_excluded, prov_a, prov_b).
    """
    import csv
    import os

    fresh = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        if fresh:
            writer.writerow(METRIC_CSV_HEADER)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


@dataclass(frozen=True)
class RecipeScoreTable:
    ids: tuple
    scores: np.ndarray
    std_errs: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        if len(set(ids)) != len(ids):
            raise ValueError("recipe ids must be unique")
        scores = np.asarray(self.scores, dtype=float)
        if scores.shape != (len(ids),):
            raise ValueError("scores must align with ids")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        ses = self.std_errs
        ses = np.zeros(len(ids)) if ses is None else np.asarray(ses, dtype=float)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "std_errs", ses)

    def score_of(self, recipe_id: str) -> float:
        return float(self.scores[self.ids.index(recipe_id)])

    def se_of(self, recipe_id: str) -> float:
        return float(self.std_errs[self.ids.index(recipe_id)])


@dataclass(frozen=True)
class PairwiseGap:
    i: str
    j: str
    value: float
    std_err: float

    @property
    def sign(self) -> int:
        if abs(self.value) <= 2.0 * self.std_err:
            return 0
        return int(np.sign(self.value))

    def flipped(self) -> "PairwiseGap":
        return PairwiseGap(self.j, self.i, -self.value, self.std_err)


def pairwise_gaps(table: RecipeScoreTable) -> list:
    """All ordered gaps score(i) - score(j) for i < j lexicographically,
    with combined standard errors."""
    gaps = []
    for a in range(len(table.ids)):
        for b in range(a + 1, len(table.ids)):
            i, j = sorted((table.ids[a], table.ids[b]))
            se = float(np.hypot(table.se_of(i), table.se_of(j)))
            gaps.append(PairwiseGap(i, j, table.score_of(i) - table.score_of(j), se))
    return gaps


def spearman(scores_a: RecipeScoreTable, scores_b: RecipeScoreTable) -> float:
    """Rank correlation of two score tables over the same id set.

    Ties receive average ranks; the result is the Pearson correlation of the
    rank vectors, equal to 1 - 6 sum d^2 / (n (n^2 - 1)) in the tie-free case.
    """
    if set(scores_a.ids) != set(scores_b.ids):
        raise ValueError("score tables must cover the same recipe ids")
    if len(scores_a.ids) < 2:
        raise ValueError("need at least two recipes to rank")
    order = list(scores_a.ids)
    ra = rankdata(scores_a.scores, method="average")
    rb = rankdata([scores_b.score_of(i) for i in order], method="average")
    if np.std(ra) == 0 or np.std(rb) == 0:
        raise ValueError("constant score table has no ranking")
    return float(np.corrcoef(ra, rb)[0, 1])


@dataclass(frozen=True)
class SignAgreement:
    fraction: float | None
    n_comparable: int
    n_excluded: int
    per_pair: tuple  # (i, j, sign_a, sign_b, comparable)


def sign_agreement(gaps_a: list, gaps_b: list) -> SignAgreement:
    """Fraction of pairs whose nonzero gap signs match across two gap tables.

    Pairs indistinguishable on either side are excluded from the fraction and
    reported separately; an empty comparable set yields fraction None.
    """
    def keyed(gaps):
        out = {}
        for g in gaps:
            norm = g if g.i <= g.j else g.flipped()
            out[(norm.i, norm.j)] = norm
        return out

    ka, kb = keyed(gaps_a), keyed(gaps_b)
    if set(ka) != set(kb):
        raise ValueError("gap tables must cover the same pairs")
    rows, matches, comparable = [], 0, 0
    for pair in sorted(ka):
        sa, sb = ka[pair].sign, kb[pair].sign
        ok = sa != 0 and sb != 0
        if ok:
            comparable += 1
            matches += int(sa == sb)
        rows.append((pair[0], pair[1], sa, sb, ok))
    frac = matches / comparable if comparable else None
    return SignAgreement(
        fraction=frac,
        n_comparable=comparable,
        n_excluded=len(rows) - comparable,
        per_pair=tuple(rows),
    )


def topk_regret(
    proxy_scores: RecipeScoreTable, target_opt_losses: RecipeScoreTable, k: int
) -> tuple[float, tuple]:
    """Extra tuned-target loss incurred by restricting the choice to the
    proxy's top-k list. Ties at the boundary break lexicographically by id.

    Returns (regret, selected ids).
    """
    n = len(proxy_scores.ids)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    if set(proxy_scores.ids) != set(target_opt_losses.ids):
        raise ValueError("score tables must cover the same recipe ids")
    ranked = sorted(zip(proxy_scores.scores, proxy_scores.ids))
    selected = tuple(rid for _, rid in ranked[:k])
    best_in_k = min(target_opt_losses.score_of(r) for r in selected)
    best_all = float(np.min(target_opt_losses.scores))
    return best_in_k - best_all, selected


@dataclass(frozen=True)
class AlignmentScore:
    g_align: float
    coverage: float
    partial: bool
    steps_used: int


def accumulated_alignment(
    model: RandomFeatureModel,
    trajectory: TrainTrajectory,
    recipe: DataRecipe,
    val_inputs: np.ndarray,
    val_labels: np.ndarray,
) -> AlignmentScore:
    """Sum over recorded steps of <grad of val loss at theta_t, batch gradient>.

    Batches are re-derived from the trajectory's stream, so the summands use
    exactly the batches consumed in training. Sparse snapshots yield a partial
    sum with the coverage fraction reported.
    """
    steps = sorted(s for s in trajectory.snapshots if s < trajectory.steps_run)
    if not steps:
        raise ValueError("trajectory has no snapshots to align")
    theta_saved = model.theta
    total = 0.0
    for t in steps:
        model.theta = trajectory.snapshots[t]
        g_val = val_gradient(model, val_inputs, val_labels)
        batch = batch_for_step(recipe, trajectory.cfg, t)
        _, g_train = loss_and_grad(model, batch.inputs, batch.labels)
        total += float(g_val @ g_train)
    model.theta = theta_saved
    coverage = len(steps) / trajectory.steps_run if trajectory.steps_run else 1.0
    return AlignmentScore(
        g_align=total,
        coverage=coverage,
        partial=coverage < 1.0,
        steps_used=len(steps),
    )
