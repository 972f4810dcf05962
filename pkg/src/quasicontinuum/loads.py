"""Odd periodic loads and the closed-form continuum solutions they induce."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeConfig, Parity, PeriodicField
from .potential import LinearizedCoeffs


class LoadError(ValueError):
    """The sampled load does not have zero resultant."""


class EllipticityError(ValueError):
    """The continuum stiffness is not positive."""


@dataclass(frozen=True)
class LoadSpec:
    """Finite sine series ``f(x) = sum_k A_k sin(m_k pi x)``; empty means zero load."""

    modes: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        modes = tuple((int(m), float(A)) for m, A in self.modes)
        for m, _ in modes:
            if m < 1:
                raise ValueError(f"sine mode must be a positive integer, got {m}")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def zero(cls) -> "LoadSpec":
        return cls(())

    @classmethod
    def sine(cls, m: int = 1, amplitude: float = 1.0) -> "LoadSpec":
        return cls(((m, amplitude),))

    @property
    def is_zero(self) -> bool:
        return all(A == 0.0 for _, A in self.modes)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for m, A in self.modes:
            out = out + A * np.sin(m * math.pi * x)
        return out

    def describe(self) -> str:
        if not self.modes:
            return "zero"
        return "sin:" + ";".join(f"{m},{A!r}" for m, A in self.modes)


def parse_load(text: str) -> LoadSpec:
    """Parse ``"zero"`` or ``"sin:m,A[;m,A...]"``."""
    text = text.strip()
    if text.lower() == "zero":
        return LoadSpec.zero()
    if not text.lower().startswith("sin:"):
        raise ValueError(f"unknown load {text!r} (expected 'zero' or 'sin:m,A[;m,A...]')")
    modes = []
    for term in text.split(":", 1)[1].split(";"):
        parts = term.split(",")
        if len(parts) != 2:
            raise ValueError(f"sine term must be 'm,A', got {term!r}")
        m = float(parts[0])
        if m != int(m):
            raise ValueError(f"sine mode must be an integer, got {parts[0]!r}")
        modes.append((int(m), float(parts[1])))
    return LoadSpec(tuple(modes))


def sample_load(spec: LoadSpec, lattice: LatticeConfig) -> PeriodicField:
    """Sample ``f_j = f(x_j)`` and verify the zero-resultant condition."""
    values = spec(lattice.x)
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    total = abs(math.fsum(values))
    # sin(m pi x_j) is only odd up to rounding, so allow a few ulps per term
    if total > 4 * values.size * np.finfo(float).eps * max(scale, 1e-300):
        raise LoadError(f"sampled load has nonzero resultant {total:.3e}")
    return PeriodicField(values, parity=Parity.ODD)


@dataclass(frozen=True)
class ExactSolution:
    """Odd periodic solution of ``-c_cont u'' = f`` and its first four derivatives."""

    load: LoadSpec
    c_cont: float

    def derivative(self, x, order: int = 0):
        """``d^order u_e / dx^order`` at ``x``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for m, A in self.load.modes:
            k = m * math.pi
            amp = A / (self.c_cont * k * k) * k**order
            # derivatives of sin cycle through cos, -sin, -cos, sin
            phase = order % 4
            if phase == 0:
                out = out + amp * np.sin(k * x)
            elif phase == 1:
                out = out + amp * np.cos(k * x)
            elif phase == 2:
                out = out - amp * np.sin(k * x)
            else:
                out = out - amp * np.cos(k * x)
        return out

    def __call__(self, x):
        return self.derivative(x, 0)

    def d1(self, x):
        return self.derivative(x, 1)

    def d2(self, x):
        return self.derivative(x, 2)

    def d3(self, x):
        return self.derivative(x, 3)

    def d4(self, x):
        return self.derivative(x, 4)

    def sample(self, lattice: LatticeConfig) -> PeriodicField:
        return PeriodicField(self(lattice.x), parity=Parity.ODD)

    def l2_norm(self, order: int = 4) -> float:
        """Continuous ``L^2(-1, 1)`` norm of the ``order``-th derivative."""
        # distinct integer modes are orthogonal on (-1, 1), each with unit mean square
        coeffs: dict[int, float] = {}
        for m, A in self.load.modes:
            k = m * math.pi
            coeffs[m] = coeffs.get(m, 0.0) + A / (self.c_cont * k * k) * k**order
        return math.sqrt(math.fsum(c * c for c in coeffs.values()))


def exact_solution(spec: LoadSpec, coeffs: LinearizedCoeffs) -> ExactSolution:
    """Closed-form continuum solution for a sine-series load."""
    if not coeffs.c_cont > 0:
        raise EllipticityError(
            f"continuum stiffness phi''_F + 4 phi''_2F = {coeffs.c_cont:.6g} must be positive"
        )
    return ExactSolution(spec, coeffs.c_cont)
