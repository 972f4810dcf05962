"""Mean-zero solves of the singular periodic systems ``L u = b``."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import LatticeConfig, Parity, PeriodicField, apply_involution, norm_lp
from .loads import LoadSpec, sample_load
from .operators import PeriodicOperator, assemble, forcing
from .potential import LinearizedCoeffs


class SolverError(RuntimeError):
    """Base class for solve failures."""


class IncompatibleRHSError(SolverError):
    """Right-hand side has a nonzero resultant beyond round-off."""


class SingularityError(SolverError):
    """Factorization broke down; the model assumptions are probably violated."""


# hard limit on the relative resultant of b; smaller defects are projected out
COMPAT_RTOL = 1e-6
RESIDUAL_RTOL = 1e-10


@dataclass
class SolveReport:
    solution: PeriodicField
    residual_norm: float
    compatibility_defect: float


def _augmented(op: PeriodicOperator):
    n = op.lattice.size
    ones = np.ones((n, 1))
    if op.is_sparse:
        return sp.bmat([[op.matrix, sp.csr_matrix(ones)], [sp.csr_matrix(ones.T), None]], format="csc")
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = op.matrix
    A[:n, n] = 1.0
    A[n, :n] = 1.0
    return A


def _solve_augmented(op: PeriodicOperator, B: np.ndarray) -> np.ndarray:
    """Solve ``[[L, 1], [1^T, 0]] [u; mu] = [b; 0]`` for every column of ``B``."""
    n = op.lattice.size
    rhs = np.vstack([B, np.zeros((1, B.shape[1]))])
    A = _augmented(op)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            if op.is_sparse:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", spla.MatrixRankWarning)
                    x = spla.splu(A).solve(rhs)
            else:
                x = sla.solve(A, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, sla.LinAlgWarning, spla.MatrixRankWarning, RuntimeError) as exc:
        raise SingularityError(f"{op.model}: factorization of the augmented system failed ({exc})") from exc
    if not np.all(np.isfinite(x)):
        raise SingularityError(f"{op.model}: non-finite solution")
    return x[:n]


def _project_rhs(b: np.ndarray) -> tuple[np.ndarray, float]:
    defect = abs(math.fsum(b))
    scale = math.fsum(np.abs(b))
    if defect > COMPAT_RTOL * max(scale, 1e-300) and defect > 0:
        raise IncompatibleRHSError(
            f"right-hand side sums to {defect:.3e} (relative {defect / scale:.3e})"
        )
    return b - math.fsum(b) / b.size, defect


def solve_mean_zero(op: PeriodicOperator, b) -> SolveReport:
    """Unique mean-zero ``u`` with ``L u = b``.

    The resultant of ``b`` is projected out before the solve and reported as
    ``compatibility_defect``; only a defect above ``1e-6`` relative to
    ``sum |b_j|`` is an error.
    """
    b = b.values if isinstance(b, PeriodicField) else np.asarray(b, dtype=float)
    if b.size != op.lattice.size:
        raise ValueError(f"rhs length {b.size} does not match operator size {op.lattice.size}")
    bp, defect = _project_rhs(b)
    u = _solve_augmented(op, bp[:, None])[:, 0]
    r = op.matrix @ u - bp
    h = op.lattice.h
    res = norm_lp(r, 2, h)
    bound = RESIDUAL_RTOL * (op.norm_inf() * np.max(np.abs(u), initial=0.0) + np.max(np.abs(bp), initial=0.0))
    if np.max(np.abs(r), initial=0.0) > bound:
        raise SingularityError(
            f"{op.model}: residual {np.max(np.abs(r)):.3e} exceeds {bound:.3e}; operator is near singular"
        )
    return SolveReport(PeriodicField(u, mean_zero=True), res, defect)


def solve_many(op: PeriodicOperator, B: np.ndarray) -> np.ndarray:
    """Mean-zero solutions for each row of ``B`` (shape ``(n_rhs, 2N)``)."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    B = B - B.mean(axis=1, keepdims=True)
    return _solve_augmented(op, B.T).T


def solve_model(model: str, lattice: LatticeConfig, coeffs: LinearizedCoeffs, load: LoadSpec,
                op: PeriodicOperator | None = None) -> SolveReport:
    """Equilibrium displacement of ``model`` under ``load``.

    QCE is driven by ``f + g``; the other models by ``f`` alone.  The
    solution must come out odd, as the involution symmetry requires.
    """
    if op is None:
        op = assemble(model, lattice, coeffs)
    f = sample_load(load, lattice)
    rhs = f.values + forcing(model, lattice, coeffs).values
    report = solve_mean_zero(op, rhs)
    u = report.solution.values
    scale = np.max(np.abs(u), initial=0.0)
    asym = np.max(np.abs(u - apply_involution(u).values), initial=0.0)
    if asym > 1e-9 * scale:
        raise SolverError(f"{model}: solution is not odd (defect {asym:.3e})")
    report.solution = PeriodicField(u, parity=Parity.ODD, mean_zero=True)
    return report
