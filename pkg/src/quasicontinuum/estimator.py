"""scikit-learn facade: a fitted model maps sampled loads to equilibrium displacements."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .lattice import LatticeConfig
from .operators import MODELS, assemble, forcing
from .potential import PairPotential, check_assumptions, linearize, parse_potential
from .solver import solve_many


class QuasicontinuumTransformer(TransformerMixin, BaseEstimator):
    """Solve ``L u = f (+ g)`` for each row of sampled loads.

    Parameters
    ----------
    model : {"atomistic", "continuum", "qce", "qnl"}
    potential : str or PairPotential
        ``"lj"``, ``"explicit:a,b,c,d"`` or a potential instance.
    F : float
        Reference lattice spacing (uniform strain).
    N : int
        Half the number of atoms; rows of ``X`` have length ``2N``.
    K : int or None
        Interface index for the coupled models; ignored otherwise.

    ``fit`` ignores its data apart from the shape check and assembles the
    operator.  ``transform`` returns mean-zero displacements; for QCE the
    ghost force is added to every load.
    """

    def __init__(self, model="qnl", potential="lj", F=1.0, N=32, K=None):
        self.model = model
        self.potential = potential
        self.F = F
        self.N = N
        self.K = K

    def _lattice(self) -> LatticeConfig:
        K = self.K
        if self.model in ("qce", "qnl") and K is None:
            K = max(2, int(round(self.N / 4)))
        if self.model not in ("qce", "qnl"):
            K = None
        return LatticeConfig(int(self.N), K, float(self.F))

    def fit(self, X=None, y=None):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        pot = self.potential
        if not isinstance(pot, PairPotential):
            pot = parse_potential(str(pot))
        self.lattice_ = self._lattice()
        self.coeffs_ = linearize(pot, self.F)
        self.assumptions_ = check_assumptions(self.coeffs_)
        self.operator_ = assemble(self.model, self.lattice_, self.coeffs_)
        self.forcing_ = forcing(self.model, self.lattice_, self.coeffs_).values
        self.n_features_in_ = self.lattice_.size
        if X is not None:
            self._validate(X)
        return self

    def _validate(self, X) -> np.ndarray:
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.lattice_.size:
            raise ValueError(f"expected {self.lattice_.size} load samples per row, got {X.shape[1]}")
        return X

    def transform(self, X):
        check_is_fitted(self, "operator_")
        X = self._validate(X)
        return solve_many(self.operator_, X + self.forcing_)

    def residual(self, X, U) -> np.ndarray:
        """``L u - (f + g)`` row by row, with the load resultant removed."""
        check_is_fitted(self, "operator_")
        X = self._validate(X) + self.forcing_
        X = X - X.mean(axis=1, keepdims=True)
        return (self.operator_.matrix @ np.asarray(U, dtype=float).T).T - X
