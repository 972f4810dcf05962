import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from quasicontinuum import LatticeConfig, LoadSpec, QuasicontinuumTransformer, sample_load, solve_model
from quasicontinuum.potential import linearize, LennardJones


def loads(N, modes=((1, 1.0), (2, -0.5), (3, 0.25))):
    lat = LatticeConfig(N)
    return np.array([sample_load(LoadSpec.sine(m, A), lat).values for m, A in modes])


def test_params_round_trip():
    est = QuasicontinuumTransformer(model="qce", potential="explicit:0,1,0.05,-0.1", N=16, K=4)
    params = est.get_params()
    assert params == {"model": "qce", "potential": "explicit:0,1,0.05,-0.1", "F": 1.0, "N": 16, "K": 4}
    twin = clone(est).set_params(K=5)
    assert twin.K == 5 and est.K == 4


@pytest.mark.parametrize("model", ["atomistic", "continuum", "qce", "qnl"])
def test_transform_matches_solver(model):
    N = 32
    X = loads(N)
    est = QuasicontinuumTransformer(model=model, N=N, K=8).fit(X)
    U = est.transform(X)
    lj = linearize(LennardJones())
    lat = LatticeConfig(N, 8 if model in ("qce", "qnl") else None)
    for (m, A), u in zip(((1, 1.0), (2, -0.5), (3, 0.25)), U):
        ref = solve_model(model, lat, lj, LoadSpec.sine(m, A)).solution.values
        np.testing.assert_allclose(u, ref, atol=1e-12 * np.abs(ref).max())
    assert np.abs(est.residual(X, U)).max() <= 1e-9 * np.abs(X).max()


def test_default_interface_and_fit_transform():
    X = loads(16)
    est = QuasicontinuumTransformer(model="qnl", N=16)
    U = est.fit_transform(X)
    assert est.lattice_.K == 4 and U.shape == X.shape
    assert est.n_features_in_ == 32


def test_pipeline():
    X = loads(16)
    pipe = make_pipeline(FunctionTransformer(lambda Z: 2 * Z),
                         QuasicontinuumTransformer(model="continuum", N=16))
    np.testing.assert_allclose(pipe.fit_transform(X),
                               2 * QuasicontinuumTransformer(model="continuum", N=16).fit_transform(X))


def test_errors():
    with pytest.raises(NotFittedError):
        QuasicontinuumTransformer().transform(np.zeros((1, 64)))
    with pytest.raises(ValueError):
        QuasicontinuumTransformer(model="bogus").fit()
    est = QuasicontinuumTransformer(N=16).fit()
    with pytest.raises(ValueError, match="32"):
        est.transform(np.zeros((2, 30)))
    with pytest.raises(ValueError):
        est.transform(np.full((1, 32), np.nan))
