"""tinylr: a desk-scale lab for data-recipe ranking with random feature models.

Synthesizes labeled distributions with known ground truth, trains random
feature networks with one-pass mini-batch SGD, computes infinite-width and
finite-width oracles for each recipe's best achievable validation loss, and
measures how reliably small-width, small-learning-rate proxy runs rank
recipes the way tuned wide models do.
"""

__version__ = "0.1.0"

from . import bounds, metrics, oracle, recipes, rfmodel, rng, trainer  # noqa: F401
