"""Synthetic data recipes: labeled distributions with known ground truth.

A recipe couples an input law on a compact space with a coefficient function
``nu`` over the feature-weight law. Labels are deterministic,

    y = f*(x) = E_{u ~ weight law}[ sigma(<u, x>) nu(u) ],

evaluated in closed form for the identity activation and otherwise by a
fixed-seed Sobol quadrature bank shared by all evaluations of the recipe, so
the target is a reproducible function. There is no label noise by design.

Recipe descriptors are plain JSON documents::

    {
      "id": "recipe-a",
      "input_law": {"kind": "sphere", "dim": 8},
      "coeff": {"basis": [["coord", 0], ["prod", 0, 1]], "c": [1.5, 0.3]},
      "activation": "tanh",
      "weight_law": "sphere",
      "n_u": 65536,
      "quadrature_seed": 0
    }

``input_law.kind`` is one of "sphere" (uniform on the unit sphere), "box"
(uniform on [-1,1]^d) or "cap-mixture" (mixture of uniform spherical caps,
with "weights", "centers" and "widths" fields).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from . import rng
from .rfmodel import Activation

__all__ = [
    "InputLaw",
    "CoefficientFunction",
    "DataRecipe",
    "LabeledBatch",
    "WellBehavedReport",
    "make_recipe",
    "sample_batch",
    "target_value",
    "validate_well_behaved",
]

SIMPLEX_TOL = 1e-12
DEGENERACY_TOL = 1e-10  # Nystroem eigenvalue below this => degenerate kernel


def _angle_grid_cdf(width: float, d: int, n_grid: int = 4096):
    """Inverse-CDF table for the polar angle of a uniform cap on S^{d-1}."""
    theta = np.linspace(0.0, width, n_grid)
    pdf = np.sin(theta) ** (d - 2)
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(theta))])
    if cdf[-1] > 0:
        cdf /= cdf[-1]
    return theta, cdf


def _cap_area_fraction(width: float, d: int) -> float:
    """Fraction of the sphere's surface covered by a cap of half-angle width."""
    if width <= 0:
        return 0.0
    grid = np.linspace(0.0, np.pi, 8192)
    dens = np.sin(grid) ** (d - 2)
    total = np.trapezoid(dens, grid)
    part = np.trapezoid(np.where(grid <= width, dens, 0.0), grid)
    return float(part / total)


@dataclass(frozen=True)
class InputLaw:
    """Compact input distribution: sphere, box, or a mixture of spherical caps."""

    kind: str
    dim: int
    weights: np.ndarray | None = None  # cap-mixture only
    centers: np.ndarray | None = None  # (k, dim) unit vectors
    widths: np.ndarray | None = None  # half-angles in radians

    def __post_init__(self):
        if self.kind not in ("sphere", "box", "cap-mixture"):
            raise ValueError(f"unknown input law {self.kind!r}")
        if self.dim < 1 or (self.kind != "box" and self.dim < 2):
            raise ValueError("sphere-type laws need dim >= 2")
        if self.kind == "cap-mixture":
            w = np.asarray(self.weights, dtype=float)
            c = np.atleast_2d(np.asarray(self.centers, dtype=float))
            a = np.asarray(self.widths, dtype=float)
            if w.ndim != 1 or len(w) != len(c) or len(w) != len(a):
                raise ValueError("cap-mixture weights/centers/widths disagree")
            if np.any(w < 0) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
                raise ValueError(
                    f"mixture weights must lie on the simplex (sum={w.sum()!r})"
                )
            if c.shape[1] != self.dim:
                raise ValueError("cap centers have wrong dimension")
            norms = np.linalg.norm(c, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                raise ValueError("cap centers must be unit vectors")
            if np.any(a < 0) or np.any(a > np.pi):
                raise ValueError("cap widths must lie in [0, pi]")
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "centers", c)
            object.__setattr__(self, "widths", a)
            for arr in (w, c, a):
                arr.setflags(write=False)

    @property
    def support_radius(self) -> float:
        """sup ||x||_2 over the support (sqrt(d) for the box, 1 otherwise)."""
        return float(np.sqrt(self.dim)) if self.kind == "box" else 1.0

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        if self.kind == "box":
            return gen.uniform(-1.0, 1.0, size=(n, self.dim))
        if self.kind == "sphere":
            g = gen.standard_normal((n, self.dim))
            return g / np.linalg.norm(g, axis=1, keepdims=True)
        comp = gen.choice(len(self.weights), size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for i in range(len(self.weights)):
            idx = np.where(comp == i)[0]
            if len(idx) == 0:
                continue
            out[idx] = self._sample_cap(i, len(idx), gen)
        return out

    def _sample_cap(self, i: int, n: int, gen: np.random.Generator) -> np.ndarray:
        center = self.centers[i]
        width = float(self.widths[i])
        if width <= 0:
            return np.tile(center, (n, 1))
        theta_grid, cdf = _angle_grid_cdf(width, self.dim)
        theta = np.interp(gen.uniform(size=n), cdf, theta_grid)
        g = gen.standard_normal((n, self.dim))
        g -= np.outer(g @ center, center)
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return np.cos(theta)[:, None] * center + np.sin(theta)[:, None] * g

    def density_proxy(self, points: np.ndarray) -> np.ndarray:
        """Density relative to the uniform law on the ambient support.

        Constant 1 for sphere and box; for cap mixtures the indicator-weighted
        reciprocal cap areas. Zero values expose full-support violations.
        """
        points = np.atleast_2d(points)
        if self.kind in ("sphere", "box"):
            return np.ones(len(points))
        dens = np.zeros(len(points))
        for w, center, width in zip(self.weights, self.centers, self.widths):
            frac = _cap_area_fraction(float(width), self.dim)
            if frac <= 0:
                continue  # point-mass component: zero a.e.
            cosang = np.clip(points @ center, -1.0, 1.0)
            dens += w * (np.arccos(cosang) <= width) / frac
        return dens

    def reference_sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        """Draws from the uniform law on the ambient support (for coverage checks)."""
        if self.kind == "box":
            return gen.uniform(-1.0, 1.0, size=(n, self.dim))
        g = gen.standard_normal((n, self.dim))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def contains(self, x: np.ndarray) -> bool:
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            return False
        if self.kind == "box":
            return bool(np.all(np.abs(x) <= 1.0 + 1e-12))
        return bool(np.all(np.abs(np.linalg.norm(x, axis=1) - 1.0) <= 1e-9))


_BASIS_KINDS = ("const", "coord", "prod")


@dataclass(frozen=True)
class CoefficientFunction:
    """Finite expansion nu(u) = sum_j c_j psi_j(u) over a fixed basis.

    Basis terms: ("const",) -> 1, ("coord", k) -> u_k, ("prod", k, l) -> u_k u_l.
    All three are bounded by 1 on the supported weight laws, so
    sup |nu| <= sum |c_j| gives an analytic bound.
    """

    basis: tuple
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 1 or len(c) != len(self.basis):
            raise ValueError("coefficient vector and basis length disagree")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        for term in self.basis:
            if not term or term[0] not in _BASIS_KINDS:
                raise ValueError(f"unknown basis term {term!r}")
        object.__setattr__(self, "basis", tuple(tuple(t) for t in self.basis))
        object.__setattr__(self, "c", c)
        c.setflags(write=False)

    @property
    def nu_max(self) -> float:
        return float(np.sum(np.abs(self.c)))

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        vals = np.zeros(len(u))
        for coef, term in zip(self.c, self.basis):
            if term[0] == "const":
                vals += coef
            elif term[0] == "coord":
                vals += coef * u[:, term[1]]
            else:
                vals += coef * u[:, term[1]] * u[:, term[2]]
        return vals

    def max_index(self) -> int:
        idx = -1
        for term in self.basis:
            idx = max(idx, *[int(i) for i in term[1:]]) if len(term) > 1 else idx
        return idx


@dataclass(frozen=True)
class LabeledBatch:
    inputs: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels disagree on length")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class DataRecipe:
    """Immutable labeled distribution with an evaluable target function."""

    recipe_id: str
    input_law: InputLaw
    coeff: CoefficientFunction
    activation: Activation
    weight_law: str
    n_u: int
    quadrature_seed: int
    _quad_bank: np.ndarray = field(repr=False, default=None)
    _nu_vals: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.input_law.dim

    def target_values(self, x: np.ndarray, max_elems: int = 1 << 24) -> np.ndarray:
        """f*(x) for a batch of points; closed form under the identity activation.

        The (points x bank) pre-activation matrix is built in input chunks so
        memory stays bounded regardless of batch size.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.activation.kind == "identity":
            scale = 1.0 / self.dim if self.weight_law == "sphere" else 1.0 / 3.0
            vals = np.zeros(len(x))
            for coef, term in zip(self.coeff.c, self.coeff.basis):
                if term[0] == "coord":
                    vals += coef * scale * x[:, term[1]]
            return vals
        bank_t = self._quad_bank.T
        nu_vals = self._nu_vals
        out = np.empty(len(x))
        step = max(1, max_elems // self.n_u)
        for lo in range(0, len(x), step):
            out[lo : lo + step] = self.activation(x[lo : lo + step] @ bank_t) @ nu_vals
        return out / self.n_u


def _build_quad_bank(weight_law: str, d: int, n_u: int, seed: int) -> np.ndarray:
    """Scrambled Sobol bank mapped onto the weight law."""
    sampler = qmc.Sobol(d=d, scramble=True, seed=rng.derive_seed(seed, "quad-bank", d, n_u))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # non power-of-two draw counts
        u01 = sampler.random(n_u)
    if weight_law == "box":
        return 2.0 * u01 - 1.0
    z = norm.ppf(np.clip(u01, 1e-12, 1.0 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def make_recipe(spec: dict) -> DataRecipe:
    """Build a recipe from a descriptor dict (see module docstring for schema)."""
    law_spec = dict(spec["input_law"])
    kind = law_spec.pop("kind")
    dim = law_spec.pop("dim")
    input_law = InputLaw(kind=kind, dim=dim, **law_spec)

    coeff = CoefficientFunction(
        basis=tuple(tuple(t) for t in spec["coeff"]["basis"]),
        c=np.asarray(spec["coeff"]["c"], dtype=float),
    )
    if coeff.max_index() >= dim:
        raise ValueError("coefficient basis refers to coordinates beyond dim")
    if not np.isfinite(coeff.nu_max):
        raise ValueError("coefficient function is unbounded")
    if float(spec.get("label_noise", 0.0)) != 0.0:
        raise ValueError("label noise is not supported: recipes are noise-free")

    activation = Activation(spec.get("activation", "tanh"))
    weight_law = spec.get("weight_law", "sphere")
    n_u = int(spec.get("n_u", 1 << 16))
    quadrature_seed = int(spec.get("quadrature_seed", 0))
    if n_u < 1:
        raise ValueError("n_u must be positive")

    if activation.kind == "identity":
        bank = np.zeros((0, dim))  # labels come from the closed form
        nu_vals = np.zeros(0)
    else:
        bank = _build_quad_bank(weight_law, dim, n_u, quadrature_seed)
        nu_vals = coeff(bank)
    bank.setflags(write=False)
    nu_vals.setflags(write=False)
    return DataRecipe(
        recipe_id=str(spec["id"]),
        input_law=input_law,
        coeff=coeff,
        activation=activation,
        weight_law=weight_law,
        n_u=n_u,
        quadrature_seed=quadrature_seed,
        _quad_bank=bank,
        _nu_vals=nu_vals,
    )


def sample_batch(recipe: DataRecipe, n: int, gen: np.random.Generator) -> LabeledBatch:
    """n i.i.d. draws with exact labels y = f*(x)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = recipe.input_law.sample(n, gen)
    return LabeledBatch(inputs=x, labels=recipe.target_values(x))


def target_value(recipe: DataRecipe, x: np.ndarray) -> float:
    """f*(x) at a single point; raises if x is outside the input space."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not recipe.input_law.contains(x):
        raise ValueError("point lies outside the recipe's input space")
    return float(recipe.target_values(x)[0])


@dataclass(frozen=True)
class WellBehavedReport:
    min_density_proxy: float
    lambda0_proxy: float
    nu_bounded: bool
    nu_sup_sampled: float
    full_support_ok: bool
    kernel_ok: bool
    gram_psd_ok: bool
    compatibility: str = "assumed, not checkable"

    @property
    def passed(self) -> bool:
        return self.full_support_ok and self.kernel_ok and self.gram_psd_ok and self.nu_bounded


def validate_well_behaved(
    recipe: DataRecipe, val: DataRecipe, grid_n: int
) -> WellBehavedReport:
    """Check the verifiable well-behavedness conditions of a recipe.

    (i) strictly positive sampled density proxy over the ambient support,
    (ii) Nystroem kernel-floor proxy: lambda_min of the grid Gram / grid_n,
    (iii) boundedness of nu. Compatibility with the validation distribution
    is an asymptotic property of tuned training and is reported as assumed;
    the training runner verifies its consequence instead.
    """
    if grid_n < 16:
        raise ValueError("grid_n must be >= 16")
    gen = rng.stream(recipe.quadrature_seed, "well-behaved", recipe.recipe_id, grid_n)

    ref = recipe.input_law.reference_sample(4 * grid_n, gen)
    min_density = float(recipe.input_law.density_proxy(ref).min())

    grid = recipe.input_law.sample(grid_n, gen)
    gram = _kernel_gram(recipe, grid)
    eigs = np.linalg.eigvalsh(gram)
    lambda0_proxy = float(eigs[0] / grid_n)
    gram_psd_ok = bool(eigs[0] >= -DEGENERACY_TOL * max(eigs[-1], 1.0))

    if recipe.activation.kind == "identity":
        probe = _build_quad_bank(recipe.weight_law, recipe.dim, 4096, recipe.quadrature_seed)
        nu_sup = float(np.max(np.abs(recipe.coeff(probe))))
    else:
        nu_sup = float(np.max(np.abs(recipe._nu_vals))) if recipe.n_u else 0.0
    nu_bounded = bool(np.isfinite(recipe.coeff.nu_max) and nu_sup <= recipe.coeff.nu_max + 1e-9)

    return WellBehavedReport(
        min_density_proxy=min_density,
        lambda0_proxy=lambda0_proxy,
        nu_bounded=nu_bounded,
        nu_sup_sampled=nu_sup,
        full_support_ok=min_density > 0.0,
        kernel_ok=lambda0_proxy >= DEGENERACY_TOL,
        gram_psd_ok=gram_psd_ok,
    )


def _kernel_gram(recipe: DataRecipe, points: np.ndarray, chunk: int = 1 << 13) -> np.ndarray:
    """Gram matrix of the infinite-width kernel on a point grid.

    Uses the recipe's quadrature bank (closed form for identity activation).
    """
    if recipe.activation.kind == "identity":
        scale = 1.0 / recipe.dim if recipe.weight_law == "sphere" else 1.0 / 3.0
        return scale * points @ points.T
    gram = np.zeros((len(points), len(points)))
    for lo in range(0, recipe.n_u, chunk):
        phi = recipe.activation(points @ recipe._quad_bank[lo : lo + chunk].T)
        gram += phi @ phi.T
    return gram / recipe.n_u
