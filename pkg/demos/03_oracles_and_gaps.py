"""Ground truth for recipe comparisons.

Each recipe's best achievable validation loss is the loss of its own target
function on the validation distribution: the limit of training an infinitely
wide, fully tuned model on it. Pairwise gaps of these floors are the signs
every proxy ranking is judged against. At finite width the ridgeless readout
mu = H^+ beta shows how fast that limit is approached.
"""

from tinylr import rng
from tinylr.oracle import approx_error_decay, best_achievable_loss, delta_ab, ridgeless_optimum
from tinylr.presets import pinned_family
from tinylr.recipes import make_recipe
from tinylr.rfmodel import Activation, init_features

specs, val_spec = pinned_family()
val = make_recipe(val_spec)
recipes = [make_recipe(s) for s in specs[:4]]

print("best achievable validation losses (the quality floors):")
floors = {}
for r in recipes:
    best, se = best_achievable_loss(r, val, 1 << 15)
    floors[r.recipe_id] = best
    print(f"  {r.recipe_id:9s}: {best:.4e} +- {se:.1e}")

print("\npairwise gaps with paired-sample confidence intervals:")
for i in range(len(recipes)):
    for j in range(i + 1, len(recipes)):
        rep = delta_ab(recipes[i], recipes[j], val, 1 << 15)
        tag = "indistinguishable" if rep.indistinguishable else f"sign {rep.sign:+d}"
        print(f"  {recipes[i].recipe_id} - {recipes[j].recipe_id}: "
              f"{rep.value:+.3e} +- {rep.ci95:.1e}  [{tag}]")

print("\nfinite-width ridgeless optimum approaches the floor as width grows:")
r = recipes[1]
for m in (32, 128, 512):
    bank = init_features(r.dim, m, r.weight_law, seed=m)
    res = ridgeless_optimum(bank, Activation("tanh"), r, n_mc=64 * m,
                            gen=rng.stream(0, "rl", m), val=val)
    print(f"  m={m:4d}: train-side error {res.approx_error:.3e}, "
          f"val loss {res.val_loss:.4e} (floor {floors[r.recipe_id]:.4e})")

print("\napproximation-error decay fit (error ~ c1^2 * m^slope):")
fit = approx_error_decay(r, widths=(32, 64, 128, 256, 512), seeds=3, master_seed=5)
print(f"  slope {fit.slope:.2f}, c1 {fit.c1:.4f}")
