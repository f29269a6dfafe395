"""How the learning rate scrambles proxy-scale recipe rankings.

Two recipes share their target quality ordering at the infinite-width limit,
but a narrow model trained at two nearby learning rates can disagree about
which one is better: the hot recipe's cap-concentrated inputs give it
coherent, large batch gradients, so moderate rates overdrive it while tiny
rates rank it where its target belongs.
"""

import numpy as np

from tinylr import rng
from tinylr.oracle import delta_ab
from tinylr.presets import pinned_family
from tinylr.recipes import make_recipe
from tinylr.rfmodel import Activation, RandomFeatureModel, init_features
from tinylr.trainer import TrainConfig, eval_loss, sgd_train

specs, val_spec = pinned_family()
val = make_recipe(val_spec)
pair = [make_recipe(next(s for s in specs if s["id"] == rid))
        for rid in ("hot-0", "clean-0")]

oracle = delta_ab(pair[0], pair[1], val, 1 << 15)
print(f"oracle gap {pair[0].recipe_id} - {pair[1].recipe_id}: "
      f"{oracle.value:+.3e} (negative: {pair[0].recipe_id} is truly better)\n")

vi = val.input_law.sample(16384, rng.stream(0, "val"))
vl = val.target_values(vi)

print(f"{'eta':>8s} {'hot-0':>12s} {'clean-0':>12s}   verdict")
for eta in (0.05, 0.4, 1.4, 2.8, 5.6):
    scores = []
    for recipe in pair:
        losses = []
        for s in range(5):
            bank = init_features(8, 64, "sphere", 100 + s)
            model = RandomFeatureModel(bank=bank, act=Activation("tanh"))
            traj = sgd_train(model, recipe,
                             TrainConfig(eta=eta, B=32, T=40, seed=11 * s + 3))
            if traj.diverged:
                losses.append(float("inf"))
                continue
            est, _ = eval_loss(model, val, 0, None, inputs=vi, labels=vl)
            losses.append(est)
        scores.append(float(np.mean(losses)))
    verdict = pair[0].recipe_id if scores[0] < scores[1] else pair[1].recipe_id
    mark = "matches oracle" if (scores[0] < scores[1]) == (oracle.value < 0) else "FLIPPED"
    print(f"{eta:8.2f} {scores[0]:12.4e} {scores[1]:12.4e}   {verdict} wins ({mark})")

print("\nthe same pair, same data, same widths: only the learning rate moved.")
