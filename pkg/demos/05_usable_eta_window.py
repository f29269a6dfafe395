"""Estimate the learning-rate window where proxy rankings are trustworthy.

At a warmup checkpoint, one SGD step changes the validation loss by
-eta*a + eta^2/2 * (b + tr(H Sigma)/B). Rankings stay first-order driven
below delta_a / (lambda_max (G^2 + sigma_g^2/B)); floating-point rounding
sets the lower limit. All the ingredients are estimated here from scratch.
"""

from tinylr import rng
from tinylr.bounds import (
    collect_taylor_stats,
    eta_bound_report,
    float_floor,
    taylor_predict,
    val_bank,
)
from tinylr.presets import pinned_family
from tinylr.recipes import make_recipe
from tinylr.rfmodel import Activation, RandomFeatureModel, init_features
from tinylr.trainer import TrainConfig, sgd_train

specs, val_spec = pinned_family()
val = make_recipe(val_spec)
recipes = [make_recipe(s) for s in specs[:3]]
vi, vl = val_bank(val, 8192, rng.stream(0, "vb"))
bank = init_features(8, 64, "sphere", 5)

stats = {}
for recipe in recipes:
    model = RandomFeatureModel(bank=bank, act=Activation("tanh"))
    sgd_train(model, recipe, TrainConfig(eta=0.008, B=32, T=500, seed=3))
    stats[recipe.recipe_id] = collect_taylor_stats(model, recipe, vi, vl,
                                                   B=32, n_batches=20, seed=9)
    s = stats[recipe.recipe_id]
    print(f"{recipe.recipe_id:9s}: alignment a={s.a:.3e}  curvature b={s.b:.3e}  "
          f"G^2={s.G2:.2e}  tr(Sigma)={s.sigma_g2:.2e}")

lam = stats[recipes[0].recipe_id].lambda_max
print(f"\ntop validation-Hessian eigenvalue (power iteration): {lam:.5f}")
print("one-step prediction at a few rates for", recipes[0].recipe_id)
for scale in (1e-4, 1e-3, 1e-2):
    eta = scale / lam
    print(f"  eta={eta:.2e}: predicted loss change {taylor_predict(stats[recipes[0].recipe_id], eta):+.3e}")

bound = eta_bound_report(stats, B=32, standard_eta=6.55, model=model)
print(f"\nusable window: [{bound.eta_float_floor:.2e}, {bound.eta_tiny_upper:.2e}]"
      f"  recommended proxy rate: {bound.recommended_eta:.2e}")
print(f"32-bit floor at unit scales: {float_floor(None, 1.0, 'fp32'):.3e}")
