"""Two-layer random feature networks.

The first layer is a frozen bank of random weight vectors, the second layer is
a trainable linear readout. With bank ``U`` (d x m), activation ``sigma`` and
readout ``theta``, the network computes

    f(x) = (1 / sqrt(m)) * sum_i theta_i * sigma(<u_i, x>)

under the squared loss ``0.5 * (f(x) - y)^2``. Gradients of the batch-mean
loss in ``theta`` are analytic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import rng

__all__ = [
    "Activation",
    "FeatureBank",
    "RandomFeatureModel",
    "sample_weights",
    "init_features",
    "featurize",
    "forward",
    "batch_forward",
    "loss_and_grad",
    "save_checkpoint",
    "load_checkpoint",
    "quantize_theta",
]

WEIGHT_KINDS = ("sphere", "box")

# mantissa epsilons for the precision modes used in update-size analysis
PRECISION_EPS = {"fp16": 2.0**-10, "fp32": 2.0**-23, "fp64": 2.0**-52}


def sample_weights(kind: str, d: int, n: int, gen: np.random.Generator) -> np.ndarray:
    """Draw n i.i.d. weight vectors from a bounded law on R^d.

    "sphere": uniform on the unit sphere; "box": uniform on [-1, 1]^d.
    """
    if kind == "sphere":
        g = gen.standard_normal((n, d))
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    if kind == "box":
        return gen.uniform(-1.0, 1.0, size=(n, d))
    raise ValueError(f"unknown weight law {kind!r}")


def weight_sup_norm(kind: str, d: int) -> float:
    """sup ||u||_2 over the support of the weight law."""
    if kind == "sphere":
        return 1.0
    if kind == "box":
        return float(np.sqrt(d))
    raise ValueError(f"unknown weight law {kind!r}")


@dataclass(frozen=True)
class Activation:
    """A Lipschitz scalar nonlinearity applied to pre-activations.

    ``sup_bound(a_max)`` returns sup |sigma(z)| over |z| <= a_max, which gives
    the feature bound R once the pre-activation range is known.
    """

    kind: str

    _TABLE = {"identity", "tanh", "scaled-erf"}

    def __post_init__(self):
        if self.kind not in self._TABLE:
            raise ValueError(f"unknown activation {self.kind!r}")

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return np.asarray(z, dtype=float)
        if self.kind == "tanh":
            return np.tanh(z)
        return erf(np.asarray(z, dtype=float) / np.sqrt(2.0))

    @property
    def lipschitz(self) -> float:
        if self.kind == "scaled-erf":
            return float(np.sqrt(2.0 / np.pi))
        return 1.0

    def sup_bound(self, a_max: float) -> float:
        if self.kind == "identity":
            return float(a_max)
        if self.kind == "tanh":
            return float(np.tanh(a_max))
        return float(erf(a_max / np.sqrt(2.0)))


@dataclass(frozen=True)
class FeatureBank:
    """Frozen first-layer weights, reproducible from (kind, d, m, seed)."""

    weights: np.ndarray  # (d, m), columns are the feature directions
    weight_dist: str
    seed: int

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    @property
    def m(self) -> int:
        return self.weights.shape[1]


def init_features(d: int, m: int, weight_dist: str, seed: int) -> FeatureBank:
    """Sample a d x m bank of i.i.d. feature directions."""
    if d < 1 or m < 1:
        raise ValueError("d and m must be positive")
    gen = rng.stream(seed, "feature-bank", weight_dist, d, m)
    u = sample_weights(weight_dist, d, m, gen)  # (m, d)
    bank = FeatureBank(weights=u.T.copy(), weight_dist=weight_dist, seed=seed)
    bank.weights.setflags(write=False)
    return bank


@dataclass
class RandomFeatureModel:
    bank: FeatureBank
    act: Activation
    theta: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.theta is None:
            self.theta = np.zeros(self.bank.m)
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.bank.m,):
            raise ValueError("theta must have length m")

    @property
    def m(self) -> int:
        return self.bank.m

    @property
    def d(self) -> int:
        return self.bank.d

    def feature_bound(self, input_radius: float) -> float:
        """R with |phi_i(x)| <= R for ||x|| <= input_radius."""
        a_max = weight_sup_norm(self.bank.weight_dist, self.d) * input_radius
        return self.act.sup_bound(a_max)


def featurize(bank: FeatureBank, act: Activation, x: np.ndarray) -> np.ndarray:
    """phi(x) with phi_i(x) = sigma(<u_i, x>); x is (d,) or (n, d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != bank.d:
        raise ValueError(f"input dim {x.shape[-1]} != bank dim {bank.d}")
    return act(x @ bank.weights)


def forward(model: RandomFeatureModel, x: np.ndarray) -> float:
    phi = featurize(model.bank, model.act, np.atleast_1d(x))
    return float(phi @ model.theta) / np.sqrt(model.m)


def batch_forward(model: RandomFeatureModel, inputs: np.ndarray) -> np.ndarray:
    phi = featurize(model.bank, model.act, np.atleast_2d(inputs))
    return (phi @ model.theta) / np.sqrt(model.m)


def loss_and_grad(
    model: RandomFeatureModel, inputs: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Batch-mean squared loss and its exact gradient in theta.

    loss = (1/n) sum_b 0.5 (f(x_b) - y_b)^2
    grad = (1/n) sum_b (f(x_b) - y_b) phi(x_b) / sqrt(m)
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    labels = np.atleast_1d(np.asarray(labels, dtype=float))
    if inputs.shape[0] == 0:
        raise ValueError("empty batch")
    if inputs.shape[0] != labels.shape[0]:
        raise ValueError("inputs and labels disagree on batch size")
    phi = featurize(model.bank, model.act, inputs)
    resid = (phi @ model.theta) / np.sqrt(model.m) - labels
    loss = 0.5 * float(resid @ resid) / len(labels)
    grad = (phi.T @ resid) / (np.sqrt(model.m) * len(labels))
    return loss, grad


def quantize_theta(theta: np.ndarray, precision_mode: str) -> np.ndarray:
    """Round theta to the storage grid of the given precision mode.

    fp16 emulation (10-bit mantissa, round to nearest) backs the
    update-flushing demonstration; fp32/fp64 use numpy casts.
    """
    if precision_mode == "fp64":
        return np.asarray(theta, dtype=np.float64)
    if precision_mode == "fp32":
        return np.float32(theta).astype(np.float64)
    if precision_mode == "fp16":
        return np.float16(theta).astype(np.float64)
    raise ValueError(f"unknown precision mode {precision_mode!r}")


_ACT_CODES = {"identity": 0, "tanh": 1, "scaled-erf": 2}
_WEIGHT_CODES = {"sphere": 0, "box": 1}
_HEADER = struct.Struct("<IIBBq")  # d, m, act code, weight code, seed


def save_checkpoint(model: RandomFeatureModel, path: str) -> None:
    """Flat binary checkpoint: header {d, m, activation, weight law, seed}
    followed by theta as little-endian float64. The bank is regenerated from
    the seed on load."""
    header = _HEADER.pack(
        model.d,
        model.m,
        _ACT_CODES[model.act.kind],
        _WEIGHT_CODES[model.bank.weight_dist],
        model.bank.seed,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(model.theta, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> RandomFeatureModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    d, m, act_code, weight_code, seed = _HEADER.unpack_from(blob, 0)
    theta = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if theta.shape != (m,):
        raise ValueError("checkpoint theta length disagrees with header")
    act = Activation({v: k for k, v in _ACT_CODES.items()}[act_code])
    weight_dist = {v: k for k, v in _WEIGHT_CODES.items()}[weight_code]
    bank = init_features(d, m, weight_dist, seed)
    return RandomFeatureModel(bank=bank, act=act, theta=theta.copy())
