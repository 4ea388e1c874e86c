"""Experimental design formulas for the bichromatic optical lattice.

Physical energies are expressed as temperatures in microkelvin (E / k_B),
lengths in nanometres and masses in atomic mass units.  The lattice

    W(x) = W0 sin^2(2 k x) + dW sin^2(k x),   k = pi / (2 a)

has deep minima spaced by ``a``; its long-period component sets the
staggered mass and its short-period depth sets the hopping.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import asdict, dataclass, field

from scipy import constants

from .errors import ValidationError

__all__ = [
    "LatticeConvention",
    "OpticalLatticeParams",
    "DerivedScales",
    "HierarchyCheck",
    "HierarchyReport",
    "LITHIUM_6_AMU",
    "POTASSIUM_40_AMU",
    "lithium_example",
    "lattice_constant_nm",
    "recoil_energy",
    "hopping_estimate",
    "mass_gap",
    "oscillator_frequency",
    "derive_scales",
    "validate_hierarchy",
    "microkelvin_to_joule",
    "joule_to_microkelvin",
]

LITHIUM_6_AMU = 6.0151228874
POTASSIUM_40_AMU = 39.963998166

_UK = 1e-6 * constants.k  # joule per microkelvin


def microkelvin_to_joule(value: float) -> float:
    return value * _UK


def joule_to_microkelvin(value: float) -> float:
    return value / _UK


class LatticeConvention(str, enum.Enum):
    """How the laser wavelength maps onto the site spacing ``a``.

    ``QUARTER``: ``a = wavelength / 4`` (the long lattice ``sin^2(kx)`` has
    period ``lambda / 2``).  ``HALF``: ``a = wavelength / 2``.
    """

    QUARTER = "quarter"
    HALF = "half"


@dataclass(frozen=True)
class OpticalLatticeParams:
    """Physical inputs; energies in uK, wavelength in nm, mass in amu."""

    W0: float
    dW: float
    wavelength: float
    atom_mass: float
    temperature: float
    convention: LatticeConvention = LatticeConvention.QUARTER

    def __post_init__(self):
        for name in ("W0", "dW", "wavelength", "atom_mass", "temperature"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0.0:
                raise ValidationError(f"{name} must be finite and positive, got {value!r}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "convention", LatticeConvention(self.convention))
        if self.dW >= self.W0:
            warnings.warn(
                f"dW = {self.dW} uK is not small compared to W0 = {self.W0} uK; "
                "the nearest-neighbour band picture is not reliable",
                stacklevel=2,
            )


def lithium_example(temperature: float = 0.3) -> OpticalLatticeParams:
    """6Li in a 500 nm lattice with W0 = 10 uK and dW = 1 uK."""
    return OpticalLatticeParams(10.0, 1.0, 500.0, LITHIUM_6_AMU, temperature)


def lattice_constant_nm(params: OpticalLatticeParams) -> float:
    if params.convention is LatticeConvention.QUARTER:
        return params.wavelength / 4.0
    return params.wavelength / 2.0


def recoil_energy(params: OpticalLatticeParams) -> float:
    """``E_R = pi^2 hbar^2 / (8 m a^2)`` in uK."""
    a = lattice_constant_nm(params) * 1e-9
    m = params.atom_mass * constants.atomic_mass
    return joule_to_microkelvin(math.pi**2 * constants.hbar**2 / (8.0 * m * a * a))


def hopping_estimate(W0: float, E_R: float) -> float:
    """WKB hopping ``(4/pi) sqrt(W0 E_R) exp(-(pi/4) sqrt(W0/E_R))``."""
    if W0 <= 0.0 or E_R <= 0.0:
        raise ValidationError("W0 and E_R must be positive")
    return 4.0 / math.pi * math.sqrt(W0 * E_R) * math.exp(-0.25 * math.pi * math.sqrt(W0 / E_R))


def mass_gap(dW: float) -> float:
    """Dirac mass ``M = dW / 2``."""
    if dW < 0.0 or not math.isfinite(dW):
        raise ValidationError(f"dW must be >= 0, got {dW!r}")
    return 0.5 * dW


def oscillator_frequency(W0: float, E_R: float) -> float:
    """Harmonic level spacing ``4 sqrt(W0 E_R)`` of the deep-lattice minima.

    Expanding ``W0 sin^2(2kx)`` to second order gives
    ``m w^2 / 2 = 4 k^2 W0``, i.e. ``hbar w = sqrt(16 W0 E_R)``.
    """
    if W0 <= 0.0 or E_R <= 0.0:
        raise ValidationError("W0 and E_R must be positive")
    return 4.0 * math.sqrt(W0 * E_R)


@dataclass(frozen=True)
class DerivedScales:
    """Scales derived from :class:`OpticalLatticeParams` (energies in uK)."""

    lattice_constant: float  # nm
    recoil_energy: float
    hopping: float
    mass_gap: float
    oscillator_frequency: float
    temperature: float
    hierarchy_ratios: tuple[float, float, float]
    # simulation units: energies in units of J, lengths in units of a
    mass_over_hopping: float = field(default=0.0)
    temperature_over_hopping: float = field(default=0.0)
    #: hbar / J, the simulation time unit, in seconds
    time_unit: float = field(default=0.0)
    #: a * J (uK nm); 2 a J / hbar is the lattice light speed
    aJ: float = field(default=0.0)
    #: 2 a J / hbar in m/s
    light_speed: float = field(default=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hierarchy_ratios"] = list(self.hierarchy_ratios)
        return d


def derive_scales(params: OpticalLatticeParams) -> DerivedScales:
    a = lattice_constant_nm(params)
    E_R = recoil_energy(params)
    J = hopping_estimate(params.W0, E_R)
    M = mass_gap(params.dW)
    w = oscillator_frequency(params.W0, E_R)
    T = params.temperature
    J_joule = microkelvin_to_joule(J)
    return DerivedScales(
        lattice_constant=a,
        recoil_energy=E_R,
        hopping=J,
        mass_gap=M,
        oscillator_frequency=w,
        temperature=T,
        hierarchy_ratios=(w / J, J / M, M / T),
        mass_over_hopping=M / J,
        temperature_over_hopping=T / J,
        time_unit=constants.hbar / J_joule,
        aJ=a * J,
        light_speed=2.0 * a * 1e-9 * J_joule / constants.hbar,
    )


@dataclass(frozen=True)
class HierarchyCheck:
    relation: str
    ratio: float
    status: str  # "pass" | "warn" | "fail"


@dataclass(frozen=True)
class HierarchyReport:
    checks: tuple[HierarchyCheck, ...]
    threshold: float
    warn_threshold: float

    @property
    def passed(self) -> bool:
        return all(c.status == "pass" for c in self.checks)

    @property
    def failed(self) -> bool:
        return any(c.status == "fail" for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "warn_threshold": self.warn_threshold,
            "checks": [asdict(c) for c in self.checks],
        }

    def table(self) -> str:
        lines = [f"{'relation':<16}{'ratio':>12}  status"]
        for c in self.checks:
            lines.append(f"{c.relation:<16}{c.ratio:>12.4g}  {c.status.upper()}")
        return "\n".join(lines)


def validate_hierarchy(
    scales: DerivedScales, threshold: float = 5.0, warn_threshold: float = 3.0
) -> HierarchyReport:
    """Grade ``omega_osc >> J >> M >> T``.

    A ratio at or above ``threshold`` passes, one in
    ``[warn_threshold, threshold)`` warns and anything lower fails.
    """
    if not 0.0 < warn_threshold <= threshold:
        raise ValidationError("need 0 < warn_threshold <= threshold")
    names = ("omega_osc >> J", "J >> M", "M >> T")
    checks = []
    for name, ratio in zip(names, scales.hierarchy_ratios):
        if ratio >= threshold:
            status = "pass"
        elif ratio >= warn_threshold:
            status = "warn"
        else:
            status = "fail"
        checks.append(HierarchyCheck(name, float(ratio), status))
    return HierarchyReport(tuple(checks), threshold, warn_threshold)
