"""Model operators, the QCE ghost-force vector, and the model energies.

Rows ``0..N`` of the coupled operators are built from the interface stencil
tables; rows ``-N+1..-1`` follow from the mirror rule ``L[i, k] = L[-i, -k]``.
Energies are evaluated independently from their per-bond definitions so
that the operators can be checked against numerical Hessians.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lattice import ConfigurationError, LatticeConfig, Parity, PeriodicField, apply_involution
from .potential import LinearizedCoeffs, check_assumptions

MODELS = ("atomistic", "continuum", "qce", "qnl")
COUPLED = ("qce", "qnl")

# dense storage up to this N, sparse (bandwidth 2 plus wraparound) above
DENSE_MAX_N = 256


class AssemblyError(RuntimeError):
    """Assembled operator violates symmetry or seam consistency."""


def _check_model(model: str, lattice: LatticeConfig) -> None:
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    if model in COUPLED and lattice.K is None:
        raise ConfigurationError(f"model {model!r} needs an interface index K")


def _add(row: dict, stencil: dict) -> dict:
    out = dict(row)
    for off, c in stencil.items():
        out[off] = out.get(off, 0.0) + c
    return out


def _reflect(row: dict) -> dict:
    return {-off: c for off, c in row.items()}


def table_row(model: str, j: int, lattice: LatticeConfig, coeffs: LinearizedCoeffs) -> dict:
    """Stencil of row ``0 <= j <= N`` as ``{offset: coefficient * h**2}``.

    This is the one-sided table: it does not know about the opposite
    interface, which only matters on the seam row when ``K = N - 2``.
    """
    a, b = coeffs.phi2F, coeffs.phi2_2F
    if model == "atomistic":
        return {0: 2 * (a + b), 1: -a, -1: -a, 2: -b, -2: -b}
    if model == "continuum":
        c = coeffs.c_cont
        return {0: 2 * c, 1: -c, -1: -c}

    K = lattice.K
    row = {0: 2 * a, 1: -a, -1: -a}
    second = {0: 2 * b, 2: -b, -2: -b}
    cont2 = {0: 8 * b, 1: -4 * b, -1: -4 * b}
    if model == "qce":
        if j <= K - 2:
            return _add(row, second)
        if j == K - 1:
            return _add(_add(row, second), {2: b / 2, 0: -b / 2})
        if j == K:
            return _add(_add(_add(row, second), {1: -2 * b, 0: 2 * b}), {2: b / 2, 0: -b / 2})
        if j == K + 1:
            return _add(_add(_add(row, cont2), {0: -2 * b, -1: 2 * b}), {0: b / 2, -2: -b / 2})
        if j == K + 2:
            return _add(_add(row, cont2), {0: b / 2, -2: -b / 2})
        return _add(row, cont2)
    if model == "qnl":
        if j <= K - 1:
            return _add(row, second)
        if j == K:
            return _add(_add(row, second), {2: b, 1: -2 * b, 0: b})
        if j == K + 1:
            return _add(_add(row, cont2), {0: -b, -1: 2 * b, -2: -b})
        return _add(row, cont2)
    raise ValueError(f"unknown model {model!r}")


def _continuum_row(coeffs: LinearizedCoeffs) -> dict:
    c = coeffs.c_cont
    return {0: 2 * c, 1: -c, -1: -c}


def _seam_row(model: str, lattice: LatticeConfig, coeffs: LinearizedCoeffs) -> dict:
    """Row ``N``, shared by both halves of the period.

    The right half contributes the table row, the left half its reflection;
    their common continuum part is counted once.  When the interfaces are
    far apart both halves must agree exactly.
    """
    N, K = lattice.N, lattice.K
    right = table_row(model, N, lattice, coeffs)
    left = _reflect(right)
    if model in COUPLED and N - K <= 2:
        return _add(_add(right, left), {o: -c for o, c in _continuum_row(coeffs).items()})
    if right != left:
        raise AssemblyError(f"seam row j=N disagrees between halves for {model}: {right} vs {left}")
    return right


def _rows(model: str, lattice: LatticeConfig, coeffs: LinearizedCoeffs) -> dict[int, dict]:
    N = lattice.N
    rows = {j: table_row(model, j, lattice, coeffs) for j in range(0, N)}
    if rows[0] != _reflect(rows[0]):
        raise AssemblyError(f"row j=0 of {model} is not mirror symmetric: {rows[0]}")
    rows[N] = _seam_row(model, lattice, coeffs)
    for j in range(1, N):
        rows[-j] = _reflect(rows[j])
    return rows


@dataclass(frozen=True, eq=False)
class PeriodicOperator:
    """Symmetric ``2N x 2N`` operator in lattice order with periodic wraparound.

    ``matrix`` is a dense array for ``N <= 256`` and a CSR matrix above.
    """

    model: str
    matrix: object
    lattice: LatticeConfig
    coeffs: LinearizedCoeffs

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def __matmul__(self, u):
        v = u.values if isinstance(u, PeriodicField) else np.asarray(u, dtype=float)
        return self.matrix @ v

    def row(self, j: int) -> dict:
        """Nonzero entries of row ``j`` keyed by column lattice index."""
        N = self.lattice.N
        i = int(self.lattice.slot(j))
        r = self.matrix.getrow(i).toarray().ravel() if self.is_sparse else self.matrix[i]
        return {int(k) - N + 1: float(r[k]) for k in np.flatnonzero(r)}

    def quadratic_form(self, v) -> float:
        """``h v . L v``."""
        v = v.values if isinstance(v, PeriodicField) else np.asarray(v, dtype=float)
        return float(self.lattice.h * (v @ (self.matrix @ v)))

    def norm_inf(self) -> float:
        """Maximum absolute row sum."""
        return float(abs(self.matrix).sum(axis=1).max())

    def dump_triplets(self, path) -> None:
        """Write nonzeros as ``i j value`` lines in lattice indices."""
        coo = sp.coo_matrix(self.matrix)
        N = self.lattice.N
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", newline="\n") as fh:
            for k in order:
                fh.write(f"{coo.row[k] - N + 1} {coo.col[k] - N + 1} {coo.data[k]:.17g}\n")


def assemble(model: str, lattice: LatticeConfig, coeffs: LinearizedCoeffs, *,
             check: bool = True, sparse: bool | None = None) -> PeriodicOperator:
    """Assemble the operator of ``model`` (``atomistic``, ``continuum``, ``qce`` or ``qnl``).

    Stability margins are checked with a warning only.  With ``check`` the
    assembled matrix is verified to be symmetric and invariant under the
    involution, so that a mistyped stencil entry cannot pass silently.
    """
    _check_model(model, lattice)
    if model in COUPLED:
        report = check_assumptions(coeffs, which=(model,))
        if not report.ok:
            warnings.warn(
                f"{model}: assumptions fail ({', '.join(report.failures())}); "
                "stability estimates do not apply",
                RuntimeWarning,
                stacklevel=2,
            )
    N, n = lattice.N, lattice.size
    h2 = lattice.h**2
    rows, cols, vals = [], [], []
    for j, stencil in _rows(model, lattice, coeffs).items():
        for off, c in stencil.items():
            if c == 0.0:
                continue
            rows.append(j)
            cols.append(j + off)
            vals.append(c / h2)
    r = lattice.slot(np.array(rows))
    c = lattice.slot(np.array(cols))
    mat = sp.coo_matrix((np.array(vals), (r, c)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    if check:
        _verify(mat, model, lattice)
    if sparse is None:
        sparse = N > DENSE_MAX_N
    matrix = mat if sparse else mat.toarray()
    return PeriodicOperator(model, matrix, lattice, coeffs)


def _verify(mat, model: str, lattice: LatticeConfig) -> None:
    scale = abs(mat).max()
    asym = abs(mat - mat.T).max()
    if asym > 1e-13 * scale:
        raise AssemblyError(f"{model} operator is not symmetric (defect {asym:.3e})")
    n = lattice.size
    j = lattice.indices
    perm = lattice.slot(-j)
    # S is a signed permutation; the signs cancel in S L S
    S = sp.csr_matrix((np.ones(n), (np.arange(n), perm)), shape=(n, n))
    defect = abs(S @ mat @ S - mat).max()
    if defect > 1e-13 * scale:
        raise AssemblyError(f"{model} operator violates S L S = L (defect {defect:.3e})")


def apply(op: PeriodicOperator, u) -> PeriodicField:
    """Matrix-vector product in lattice indexing."""
    v = u.values if isinstance(u, PeriodicField) else np.asarray(u, dtype=float)
    if v.size != op.lattice.size:
        raise ConfigurationError(f"field length {v.size} does not match operator size {op.lattice.size}")
    return PeriodicField(op.matrix @ v)


@dataclass(frozen=True, eq=False)
class GhostVector:
    g: PeriodicField

    @property
    def values(self) -> np.ndarray:
        return self.g.values

    def __getitem__(self, j):
        return self.g[j]


def ghost_vector(lattice: LatticeConfig, coeffs: LinearizedCoeffs) -> GhostVector:
    """QCE ghost forces: ``-+ phi'_2F / (2h)`` pattern on rows ``K-1..K+2``, odd-extended."""
    if lattice.K is None:
        raise ConfigurationError("ghost forces need an interface index K")
    K, h = lattice.K, lattice.h
    w = coeffs.phi1_2F / (2 * h)
    g = np.zeros(lattice.size)
    for j, val in ((K - 1, -w), (K, w), (K + 1, w), (K + 2, -w)):
        g[lattice.slot(j)] += val
        # the mirrored entry lands on the same slot only at j = N, where both cancel
        g[lattice.slot(-j)] -= val
    return GhostVector(PeriodicField(g, parity=Parity.ODD))


# --- energies -------------------------------------------------------------

class _Bonds:
    """Per-bond energies of a field, indexed by lattice index with wraparound."""

    def __init__(self, u: np.ndarray, lattice: LatticeConfig, coeffs: LinearizedCoeffs):
        self.u = u
        self.N = lattice.N
        self.h = lattice.h
        self.c = coeffs

    def at(self, j):
        return self.u[(np.asarray(j) + self.N - 1) % (2 * self.N)]

    def diff(self, j, k):
        """``(u_j - u_k) / h``."""
        return (self.at(j) - self.at(k)) / self.h

    def first(self, eps):
        return self.c.phi1F * eps + 0.5 * self.c.phi2F * eps**2

    def second(self, eps):
        return self.c.phi1_2F * eps + 0.5 * self.c.phi2_2F * eps**2

    def W(self, eps):
        return self.c.stress * eps + 0.5 * self.c.c_cont * eps**2

    def element(self, l):
        """``h W(Du_l)`` for the element ``(x_{l-1}, x_l)``."""
        return self.h * self.W(self.diff(l, np.asarray(l) - 1))

    def atom(self, j):
        """Per-atom energy with every bond split equally between its two atoms."""
        j = np.asarray(j)
        return 0.5 * self.h * (
            self.first(self.diff(j + 1, j)) + self.second(self.diff(j + 2, j))
            + self.first(self.diff(j, j - 1)) + self.second(self.diff(j, j - 2))
        )

    def qnl_right(self, j: int, K: int) -> float:
        """Energy of the quasi-nonlocal atom ``K`` or ``K+1`` on the right interface."""
        h = self.h
        if j == K:
            return 0.5 * h * self.W(self.diff(K + 1, K)) + 0.5 * h * (
                self.first(self.diff(K, K - 1)) + self.second(self.diff(K, K - 2))
            )
        if j == K + 1:
            return 0.5 * h * self.W(self.diff(K + 2, K + 1)) + 0.5 * h * (
                self.first(self.diff(K + 1, K)) + self.second(self.diff(K + 1, K - 1))
            )
        raise ValueError(j)


def energy(model: str, u, lattice: LatticeConfig, coeffs: LinearizedCoeffs) -> float:
    """Linearized stored energy of ``u`` (external work excluded).

    First-order terms are kept; they vanish over a period for the atomistic
    and continuum models but not for the QCE coupling.
    """
    _check_model(model, lattice)
    v = u.values if isinstance(u, PeriodicField) else np.asarray(u, dtype=float)
    if v.size != lattice.size:
        raise ConfigurationError(f"field length {v.size} does not match lattice size {lattice.size}")
    N = lattice.N
    B = _Bonds(v, lattice, coeffs)
    j = lattice.indices
    if model == "atomistic":
        return float(lattice.h * np.sum(B.first(B.diff(j, j - 1)) + B.second(B.diff(j, j - 2))))
    if model == "continuum":
        return float(np.sum(B.element(j)))
    K = lattice.K
    if model == "qce":
        parts = [
            np.sum(B.element(np.arange(-N + 1, -K))),
            0.5 * B.element(-K),
            np.sum(B.atom(np.arange(-K, K + 1))),
            0.5 * B.element(K + 1),
            np.sum(B.element(np.arange(K + 2, N + 1))),
        ]
        return float(sum(parts))
    # qnl: left interface atoms take their energy from the mirrored field
    Bs = _Bonds(apply_involution(v).values, lattice, coeffs)
    parts = [
        np.sum(B.element(np.arange(-N + 1, -K - 1))),
        0.5 * B.element(-K - 1),
        Bs.qnl_right(K + 1, K) + Bs.qnl_right(K, K),
        np.sum(B.atom(np.arange(-K + 1, K))),
        B.qnl_right(K, K) + B.qnl_right(K + 1, K),
        0.5 * B.element(K + 2),
        np.sum(B.element(np.arange(K + 3, N + 1))),
    ]
    return float(sum(parts))


def forcing(model: str, lattice: LatticeConfig, coeffs: LinearizedCoeffs) -> PeriodicField:
    """Model-internal forcing: the ghost vector for QCE, zero otherwise."""
    if model == "qce":
        return ghost_vector(lattice, coeffs).g
    return PeriodicField(np.zeros(lattice.size), parity=Parity.ODD)
