"""Randomized structural properties over admissible coefficients and lattice sizes."""

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from quasicontinuum.lattice import (INF, LatticeConfig, apply_involution, backward_difference,
                                    norm_lp, project_mean_zero)
from quasicontinuum.operators import MODELS, assemble, forcing
from quasicontinuum.potential import LinearizedCoeffs, characteristic_residual, decay_root
from quasicontinuum.solver import solve_mean_zero

finite = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def admissible(draw):
    a = draw(st.floats(0.1, 100.0))
    ratio = draw(st.floats(1e-3, 0.19))  # keeps nu_qce = a - 5|b| > 0
    c1 = draw(st.floats(-1.0, 1.0))
    c2 = draw(st.floats(-1.0, 1.0))
    return LinearizedCoeffs(c1, a, c2, -ratio * a)


@st.composite
def lattices(draw, max_N=24):
    N = draw(st.integers(4, max_N))
    K = draw(st.integers(2, N - 2))
    return LatticeConfig(N, K)


def field(N):
    return arrays(np.float64, 2 * N, elements=finite)


@settings(max_examples=60, deadline=None)
@given(admissible(), lattices(), st.sampled_from(MODELS))
def test_operator_structure(c, lat, model):
    if model not in ("qce", "qnl"):
        lat = LatticeConfig(lat.N)
    L = assemble(model, lat, c).toarray()
    scale = np.abs(L).max()
    assert np.abs(L - L.T).max() <= 1e-13 * scale
    assert np.abs(L.sum(axis=1)).max() <= 1e-12 * scale
    perm = lat.slot(-lat.indices)
    assert np.array_equal(L[np.ix_(perm, perm)], L)


@settings(max_examples=60, deadline=None)
@given(admissible(), lattices(), st.data())
def test_stability_lower_bound(c, lat, data):
    v = data.draw(field(lat.N))
    v = v - v.mean()
    dv = norm_lp(backward_difference(v, lat), 2, lat.h)
    if dv < 1e-6:
        return
    for model in ("qce", "qnl"):
        op = assemble(model, lat, c)
        assert op.quadratic_form(v) >= c.nu(model) * dv**2 * (1 - 1e-10)


@settings(max_examples=40, deadline=None)
@given(admissible(), lattices(), st.sampled_from(("qce", "qnl")), st.data())
def test_odd_rhs_gives_odd_solution(c, lat, model, data):
    b = data.draw(field(lat.N))
    b = 0.5 * (b + apply_involution(b).values)
    u = solve_mean_zero(assemble(model, lat, c), b).solution.values
    scale = max(np.abs(u).max(), 1e-300)
    assert np.abs(u - apply_involution(u).values).max() <= 1e-9 * scale


@settings(max_examples=40, deadline=None)
@given(admissible(), lattices(), st.data())
def test_solution_residual(c, lat, data):
    raw = data.draw(field(lat.N))
    # a constant draw projects to pure round-off, which is rightly rejected as incompatible
    assume(np.ptp(raw) > 1e-6 * np.abs(raw).max())
    b = project_mean_zero(raw).values
    op = assemble("qnl", lat, c)
    u = solve_mean_zero(op, b).solution.values
    assert np.abs(op @ u - b).max() <= 1e-10 * (op.norm_inf() * np.abs(u).max() + np.abs(b).max())
    assert abs(u.sum()) <= 1e-12 * max(np.abs(u).max(), 1e-300) * u.size


@settings(max_examples=40, deadline=None)
@given(admissible(), lattices())
def test_ghost_force_balance(c, lat):
    g = forcing("qce", lat, c).values
    assert abs(g.sum()) <= 8 * np.finfo(float).eps * max(np.abs(g).max(), 1e-300)
    assert np.count_nonzero(g) <= 8


@settings(max_examples=60, deadline=None)
@given(admissible())
def test_decay_root(c):
    lam = decay_root(c)
    assert lam > 1
    assert characteristic_residual(c, lam) < 1e-10
    assert characteristic_residual(c, 1 / lam) < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 32).flatmap(lambda N: st.tuples(field(N), field(N))),
       st.sampled_from([1, 2, 3.5, INF]))
def test_norm_axioms(uv, p):
    u, v = uv
    h = 2.0 / u.size
    nu, nv, nuv = norm_lp(u, p, h), norm_lp(v, p, h), norm_lp(u + v, p, h)
    assert nuv <= (nu + nv) * (1 + 1e-12) + 1e-300
    assert abs(norm_lp(-3.0 * u, p, h) - 3 * nu) <= 1e-12 * nu
    assert abs(norm_lp(apply_involution(u), p, h) - nu) <= 1e-12 * nu
