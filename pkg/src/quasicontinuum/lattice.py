"""Periodic lattice bookkeeping: configuration, fields, differences and norms.

A period holds the 2N atoms with lattice indices ``j = -N+1, ..., N``.  The
array slot ``i`` stores ``j = i - N + 1``; every public routine speaks in
lattice indices and resolves out-of-range indices through ``u[j + 2N] = u[j]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    """Inconsistent lattice configuration or mismatched field length."""


class Parity(str, enum.Enum):
    NONE = "none"
    ODD = "odd"


class NormKind(enum.Enum):
    """Selector for the discrete norm; ``INF`` is the maximum norm."""

    FINITE = "finite"
    INF = "inf"


INF = NormKind.INF


@dataclass(frozen=True)
class LatticeConfig:
    """Reference lattice with ``2N`` atoms per period and spacing ``h = 1/N``.

    ``K`` is the half-width of the atomistic region ``-K..K`` and ``F`` the
    uniform deformation gradient about which the energy is linearized.  ``K``
    may be ``None`` for the purely atomistic or continuum models.
    """

    N: int
    K: int | None = None
    F: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError(f"N must be a positive integer, got {self.N!r}")
        if self.K is not None and (int(self.K) != self.K or not 2 <= self.K <= self.N - 2):
            raise ConfigurationError(
                f"K must satisfy 2 <= K <= N - 2, got K={self.K!r} with N={self.N}"
            )
        if not self.F > 0:
            raise ConfigurationError(f"F must be positive, got {self.F!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def size(self) -> int:
        return 2 * self.N

    @property
    def a(self) -> float:
        """Deformed spacing ``F h``."""
        return self.F * self.h

    @property
    def indices(self) -> np.ndarray:
        """Lattice indices ``-N+1..N`` in storage order."""
        return np.arange(-self.N + 1, self.N + 1)

    @property
    def x(self) -> np.ndarray:
        return self.indices * self.h

    @property
    def x_interface(self) -> float:
        """Midpoint ``(K + 1/2) h`` of the right coupling element."""
        if self.K is None:
            raise ConfigurationError("lattice has no interface index K")
        return (self.K + 0.5) * self.h

    def slot(self, j):
        """Storage slot of lattice index ``j`` (periodic)."""
        return (np.asarray(j) + self.N - 1) % (2 * self.N)


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Real field over one period, stored in lattice order ``-N+1..N``.

    ``parity`` and ``mean_zero`` are advisory; :meth:`check_flags` validates
    them on demand.
    """

    values: np.ndarray
    parity: Parity = Parity.NONE
    mean_zero: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0 or v.size % 2:
            raise ConfigurationError(
                f"a periodic field needs an even, nonzero length, got shape {v.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "parity", Parity(self.parity))

    @classmethod
    def zeros(cls, lattice: LatticeConfig, **flags) -> "PeriodicField":
        return cls(np.zeros(lattice.size), **flags)

    @classmethod
    def from_function(cls, func, lattice: LatticeConfig, **flags) -> "PeriodicField":
        return cls(func(lattice.x), **flags)

    @property
    def N(self) -> int:
        return self.values.size // 2

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __getitem__(self, j):
        """Value(s) at lattice index ``j`` with periodic wraparound."""
        return self.values[(np.asarray(j) + self.N - 1) % (2 * self.N)]

    def with_values(self, values, **flags) -> "PeriodicField":
        return PeriodicField(values, **flags)

    def check_flags(self, rtol: float | None = None) -> None:
        """Raise ``ValueError`` if the advisory flags do not hold."""
        v = self.values
        scale = float(np.max(np.abs(v))) if v.size else 0.0
        eps = np.finfo(float).eps
        if self.parity is Parity.ODD:
            j = np.arange(-self.N + 1, self.N + 1)
            defect = float(np.max(np.abs(v + self[-j])))
            tol = (rtol if rtol is not None else 4 * eps) * max(scale, 1e-300)
            if defect > tol:
                raise ValueError(f"field flagged odd but |u_j + u_-j| reaches {defect:.3e}")
        if self.mean_zero:
            total = abs(math.fsum(v))
            tol = (rtol if rtol is not None else v.size * eps) * max(scale, 1e-300)
            if total > tol:
                raise ValueError(f"field flagged mean-zero but sums to {total:.3e}")


def _as_array(u) -> np.ndarray:
    return u.values if isinstance(u, PeriodicField) else np.asarray(u, dtype=float)


def _check_length(u: np.ndarray, lattice: LatticeConfig | None):
    if lattice is not None and u.size != lattice.size:
        raise ConfigurationError(
            f"field has length {u.size}, lattice with N={lattice.N} needs {lattice.size}"
        )


def backward_difference(u, lattice: LatticeConfig | None = None, h: float | None = None) -> PeriodicField:
    """Return ``Du`` with ``(Du)_j = (u_j - u_{j-1}) / h`` on the periodic lattice."""
    v = _as_array(u)
    _check_length(v, lattice)
    if h is None:
        h = lattice.h if lattice is not None else 2.0 / v.size
    return PeriodicField((v - np.roll(v, 1)) / h)


def norm_lp(u, p=2, h: float | None = None) -> float:
    """Discrete norm ``(h sum |u_j|^p)^(1/p)``; ``p`` may be :data:`INF`.

    Sums are accumulated with ``math.fsum`` so that norm comparisons stay
    reliable at tight tolerances on long periods.
    """
    v = _as_array(u)
    if p is NormKind.INF or (not isinstance(p, NormKind) and p == math.inf):
        return float(np.max(np.abs(v))) if v.size else 0.0
    if isinstance(p, NormKind):
        raise ValueError(f"unsupported norm selector {p!r}")
    p = float(p)
    if not p >= 1:
        raise ValueError(f"norm exponent must satisfy p >= 1, got {p}")
    if h is None:
        h = 2.0 / v.size
    a = np.abs(v)
    if p == 1.0:
        return h * math.fsum(a)
    if p == 2.0:
        return math.sqrt(h * math.fsum(a * a))
    # scale first so that large p cannot overflow
    m = float(a.max()) if a.size else 0.0
    if m == 0.0:
        return 0.0
    return m * (h * math.fsum((a / m) ** p)) ** (1.0 / p)


def apply_involution(u) -> PeriodicField:
    """Return ``Su`` with ``(Su)_j = -u_{-j}``."""
    v = _as_array(u)
    n = v.size // 2
    j = np.arange(-n + 1, n + 1)
    out = -v[(-j + n - 1) % (2 * n)]
    parity = u.parity if isinstance(u, PeriodicField) else Parity.NONE
    mean_zero = u.mean_zero if isinstance(u, PeriodicField) else False
    return PeriodicField(out, parity=parity, mean_zero=mean_zero)


def project_mean_zero(u) -> PeriodicField:
    """Subtract the period mean."""
    v = _as_array(u)
    out = v - math.fsum(v) / v.size
    parity = u.parity if isinstance(u, PeriodicField) else Parity.NONE
    return PeriodicField(out, parity=parity, mean_zero=True)


def poincare_constant(h: float) -> float:
    """Best constant in ``||u|| <= C ||Du||`` over mean-zero periodic fields."""
    return h / (2.0 * math.sin(math.pi * h / 2.0))
