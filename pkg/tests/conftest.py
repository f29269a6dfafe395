import pytest

from tinylr import recipes


def sphere_recipe(
    rid="r",
    dim=8,
    basis=(("coord", 0),),
    c=(1.5,),
    activation="tanh",
    n_u=4096,
    quadrature_seed=0,
    input_law=None,
):
    return recipes.make_recipe(
        {
            "id": rid,
            "input_law": input_law or {"kind": "sphere", "dim": dim},
            "coeff": {"basis": [list(t) for t in basis], "c": list(c)},
            "activation": activation,
            "weight_law": "sphere",
            "n_u": n_u,
            "quadrature_seed": quadrature_seed,
        }
    )


@pytest.fixture()
def zero_target():
    return sphere_recipe(rid="zero", c=(0.0,))


@pytest.fixture()
def linear_identity_recipe():
    # identity activation, nu(u) = d * u_1 on the sphere: target is exactly x_1
    return sphere_recipe(rid="lin-x1", c=(8.0,), activation="identity")
