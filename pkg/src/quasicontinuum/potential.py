"""Pair potentials, linearization about a uniform strain, and the standing assumptions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class PotentialDomainError(ValueError):
    """The potential cannot be evaluated at the requested radius."""


class DegenerateRootError(ArithmeticError):
    """Second-neighbor stiffness vanishes, so the decay root is undefined."""


class ComplexRootError(ArithmeticError):
    """The characteristic equation has complex (oscillatory) roots."""


class PairPotential:
    """Two-body potential ``phi(r)`` with its first two derivatives."""

    name = "pair"

    def phi(self, r):
        raise NotImplementedError

    def dphi(self, r):
        raise NotImplementedError

    def d2phi(self, r):
        raise NotImplementedError

    def describe(self) -> str:
        return self.name

    def fd_check(self, r: float, step: float = 1e-6) -> float:
        """Relative mismatch between ``phi''(r)`` and central differences of ``phi'``."""
        exact = self.d2phi(r)
        approx = (self.dphi(r + step) - self.dphi(r - step)) / (2 * step)
        return abs(approx - exact) / max(abs(exact), 1e-300)


class LennardJones(PairPotential):
    """``phi(r) = r**-12 - 2 r**-6``: well depth 1 at ``r = 1``."""

    name = "lj"

    @staticmethod
    def _check(r):
        r = np.asarray(r, dtype=float)
        if np.any(~(r > 0)) or np.any(~np.isfinite(r)):
            raise PotentialDomainError(f"Lennard-Jones needs r > 0, got {r}")
        return r

    def phi(self, r):
        r = self._check(r)
        return r**-12 - 2.0 * r**-6

    def dphi(self, r):
        r = self._check(r)
        return -12.0 * r**-13 + 12.0 * r**-7

    def d2phi(self, r):
        r = self._check(r)
        return 156.0 * r**-14 - 84.0 * r**-8


@dataclass(frozen=True)
class ExplicitCoeffs(PairPotential):
    """Stand-in potential given directly by its four linearization constants."""

    phi1F: float
    phi2F: float
    phi1_2F: float
    phi2_2F: float

    name = "explicit"

    def describe(self) -> str:
        return "explicit:{!r},{!r},{!r},{!r}".format(
            self.phi1F, self.phi2F, self.phi1_2F, self.phi2_2F
        )


@dataclass(frozen=True)
class LinearizedCoeffs:
    """Derivatives of the potential at the first and second neighbor distances.

    ``lam`` is the decay root greater than one, or ``nan`` when the
    characteristic equation is degenerate or has complex roots.
    """

    phi1F: float
    phi2F: float
    phi1_2F: float
    phi2_2F: float
    lam: float = field(default=math.nan, compare=False)

    @property
    def nu_qce(self) -> float:
        return self.phi2F - 5.0 * abs(self.phi2_2F)

    @property
    def nu_qnl(self) -> float:
        return self.phi2F - 4.0 * abs(self.phi2_2F)

    @property
    def c_cont(self) -> float:
        """Continuum stiffness ``phi''_F + 4 phi''_2F``."""
        return self.phi2F + 4.0 * self.phi2_2F

    @property
    def stress(self) -> float:
        """First-order coefficient ``phi'_F + 2 phi'_2F`` of the strain energy density."""
        return self.phi1F + 2.0 * self.phi1_2F

    def nu(self, model: str) -> float:
        if model == "qce":
            return self.nu_qce
        if model == "qnl":
            return self.nu_qnl
        if model in ("atomistic", "continuum"):
            return self.c_cont
        raise ValueError(f"unknown model {model!r}")

    def as_dict(self) -> dict:
        return {
            "phi1F": self.phi1F,
            "phi2F": self.phi2F,
            "phi1_2F": self.phi1_2F,
            "phi2_2F": self.phi2_2F,
        }


def _decay_root(a: float, b: float, disc_rtol: float = 1e-14) -> float:
    if b == 0.0:
        raise DegenerateRootError("phi''_2F = 0: characteristic equation is degenerate")
    disc = a * a + 4.0 * a * b
    if disc < 0.0:
        if disc >= -disc_rtol * a * a:
            disc = 0.0
        else:
            raise ComplexRootError(
                f"discriminant (phi''_F)^2 + 4 phi''_F phi''_2F = {disc:.6g} < 0"
            )
    return ((a + 2.0 * b) + math.sqrt(disc)) / (-2.0 * b)


def linearize(potential: PairPotential, F: float = 1.0) -> LinearizedCoeffs:
    """Evaluate ``phi'`` and ``phi''`` at ``F`` and ``2F`` (no assumption checks)."""
    if isinstance(potential, ExplicitCoeffs):
        vals = (potential.phi1F, potential.phi2F, potential.phi1_2F, potential.phi2_2F)
    else:
        if not F > 0:
            raise PotentialDomainError(f"F must be positive, got {F!r}")
        vals = tuple(
            float(v)
            for v in (
                potential.dphi(F),
                potential.d2phi(F),
                potential.dphi(2 * F),
                potential.d2phi(2 * F),
            )
        )
        if not all(math.isfinite(v) for v in vals):
            raise PotentialDomainError(f"non-finite derivative at F={F}: {vals}")
    try:
        lam = _decay_root(vals[1], vals[3])
    except (DegenerateRootError, ComplexRootError):
        lam = math.nan
    return LinearizedCoeffs(*map(float, vals), lam=lam)


def decay_root(coeffs: LinearizedCoeffs) -> float:
    """Root ``lambda > 1`` of the homogeneous atomistic scheme's characteristic equation.

    Raises
    ------
    DegenerateRootError
        If ``phi''_2F == 0``.
    ComplexRootError
        If the discriminant is negative beyond round-off.
    """
    lam = _decay_root(coeffs.phi2F, coeffs.phi2_2F)
    if not lam > 1.0:
        raise ComplexRootError(f"decay root {lam:.6g} is not greater than one")
    return lam


def characteristic_polynomial(coeffs: LinearizedCoeffs, z):
    """Characteristic function of the five-point scheme, evaluated at ``z``."""
    a, b = coeffs.phi2F, coeffs.phi2_2F
    z = np.asarray(z, dtype=float)
    return -b * z**2 - a * z + 2.0 * (a + b) - a / z - b / z**2


def characteristic_residual(coeffs: LinearizedCoeffs, z: float) -> float:
    """``|P(z)|`` relative to the magnitude of its largest term."""
    a, b = coeffs.phi2F, coeffs.phi2_2F
    terms = [-b * z * z, -a * z, 2.0 * (a + b), -a / z, -b / (z * z)]
    return abs(math.fsum(terms)) / max(abs(t) for t in terms)


@dataclass
class AssumptionCheck:
    name: str
    value: float
    passed: bool


@dataclass
class AssumptionReport:
    checks: list[AssumptionCheck]
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def check_assumptions(coeffs: LinearizedCoeffs, which=("qce", "qnl")) -> AssumptionReport:
    """Report (never raise) on positivity, sign and stability conditions.

    ``which`` selects which coupled models' stability margins are included.
    Every margin is strict: a value of exactly zero fails.
    """
    if isinstance(which, str):
        which = (which,)
    checks = [
        AssumptionCheck("c_cont", coeffs.c_cont, coeffs.c_cont > 0),
        AssumptionCheck("phi2F", coeffs.phi2F, coeffs.phi2F > 0),
        AssumptionCheck("phi2_2F", coeffs.phi2_2F, coeffs.phi2_2F < 0),
    ]
    if "qce" in which:
        checks.append(AssumptionCheck("nu_qce", coeffs.nu_qce, coeffs.nu_qce > 0))
    if "qnl" in which:
        checks.append(AssumptionCheck("nu_qnl", coeffs.nu_qnl, coeffs.nu_qnl > 0))
    notes = []
    if coeffs.phi2_2F > 0:
        notes.append("phi''_2F > 0: decay root negative, atomistic error may oscillate")
    elif coeffs.phi2_2F == 0:
        notes.append("phi''_2F = 0: decay root degenerate")
    disc = coeffs.phi2F**2 + 4 * coeffs.phi2F * coeffs.phi2_2F
    if disc < 0:
        notes.append("complex characteristic roots: oscillatory error in the atomistic region")
    return AssumptionReport(checks, notes)


def parse_potential(text: str) -> PairPotential:
    """Parse ``"lj"`` or ``"explicit:phi1F,phi2F,phi1_2F,phi2_2F"``."""
    text = text.strip()
    if text.lower() == "lj":
        return LennardJones()
    if text.lower().startswith("explicit:"):
        parts = text.split(":", 1)[1].split(",")
        if len(parts) != 4:
            raise ValueError(f"explicit potential needs four numbers, got {text!r}")
        return ExplicitCoeffs(*(float(p) for p in parts))
    raise ValueError(f"unknown potential {text!r} (expected 'lj' or 'explicit:a,b,c,d')")
