"""Observables of Slater states: densities, pair numbers and field scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import AmbiguousVacuumError, DimensionError, ValidationError
from .lattice import (
    ModeBasis,
    SingleParticleHamiltonian,
    SlaterState,
    bogoliubov_matrix,
    lattice_dispersion,
    momentum_grid,
    plane_wave_pair,
)

__all__ = [
    "CorrelationMatrix",
    "ObservableRecord",
    "MomentumOccupation",
    "ScalingFit",
    "correlation_matrix",
    "mode_occupations",
    "pair_number",
    "hole_number",
    "momentum_occupations",
    "measure",
    "schwinger_exponent",
    "fit_suppression",
]


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Two-point function ``C[m, n] = <c+_m c_n>``."""

    matrix: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    @property
    def density(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def projector_error(self) -> float:
        return float(np.max(np.abs(self.matrix @ self.matrix - self.matrix)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


def correlation_matrix(state: SlaterState) -> CorrelationMatrix:
    """``C[m, n] = sum_k conj(phi[m, k]) phi[n, k]`` for the occupied orbitals."""
    orb = state.orbitals
    return CorrelationMatrix(orb.conj() @ orb.T)


def mode_occupations(state: SlaterState, modes: np.ndarray) -> np.ndarray:
    """Occupation ``<A+_v A_v>`` of each column ``v`` of ``modes``.

    ``A_v = sum_n conj(v_n) c_n``, so the occupation is ``|v^dag phi|^2``
    summed over orbitals.
    """
    modes = np.asarray(modes)
    if modes.shape[0] != state.spec.num_sites:
        raise DimensionError(
            f"mode vectors have length {modes.shape[0]}, state has {state.spec.num_sites} sites"
        )
    overlaps = modes.conj().T @ state.orbitals
    return np.sum(np.abs(overlaps) ** 2, axis=1)


def _check_reference(state: SlaterState, reference: ModeBasis) -> None:
    if reference.spec.num_sites != state.spec.num_sites:
        raise DimensionError("state and reference live on different lattices")
    if not reference.gapped:
        raise AmbiguousVacuumError(
            "reference spectrum has zero modes; particles and holes are ambiguous"
        )


def pair_number(state: SlaterState, reference: ModeBasis) -> float:
    """Expected number of fermions in the positive-energy modes of ``reference``."""
    _check_reference(state, reference)
    return float(np.sum(mode_occupations(state, reference.positive_modes)))


def hole_number(state: SlaterState, reference: ModeBasis) -> float:
    """Expected number of empty negative-energy modes of ``reference``."""
    _check_reference(state, reference)
    occ = mode_occupations(state, reference.negative_modes)
    return float(np.sum(1.0 - occ))


class MomentumOccupation(NamedTuple):
    momentum: float
    particles: float
    holes: float


def momentum_occupations(state: SlaterState, reference: ModeBasis) -> list[MomentumOccupation]:
    """Particle and hole occupation per momentum of the halved zone.

    The reference must be the free periodic chain (no site potential).
    ``particles`` is the occupation of the upper-band mode at ``p`` and
    ``holes`` is one minus the occupation of the lower-band mode.  Momenta
    refer to the plane waves of :func:`~schwinger_sim.lattice.plane_wave_pair`.
    """
    _check_reference(state, reference)
    H = reference.hamiltonian
    spec = H.spec
    if not spec.periodic:
        raise ValidationError("momentum is not a good quantum number with open boundaries")
    if np.any(H.potential != 0.0):
        raise ValidationError("momentum_occupations needs a reference without site potential")
    M = H.mass
    out = []
    for p in momentum_grid(spec):
        energy = lattice_dispersion(p, M, spec.hopping, spec.lattice_constant)
        R = bogoliubov_matrix(energy, M)
        even, odd = plane_wave_pair(spec, p)
        upper = R[0, 0] * even + R[0, 1] * odd
        lower = R[1, 0] * even + R[1, 1] * odd
        n_up, n_low = mode_occupations(state, np.column_stack([upper, lower]))
        out.append(MomentumOccupation(float(p), float(n_up), float(1.0 - n_low)))
    return out


@dataclass(frozen=True)
class ObservableRecord:
    time: float
    total_number: float
    pair_number: float
    site_density: np.ndarray = field(repr=False)
    energy_expectation: float


def measure(
    state: SlaterState,
    hamiltonian: SingleParticleHamiltonian,
    reference: ModeBasis,
    time: float = 0.0,
) -> ObservableRecord:
    """Snapshot of number, pair number, densities and energy at ``time``."""
    orb = state.orbitals
    density = np.sum(np.abs(orb) ** 2, axis=1)
    return ObservableRecord(
        time=float(time),
        total_number=float(np.sum(density)),
        pair_number=pair_number(state, reference),
        site_density=density,
        energy_expectation=state.energy(hamiltonian),
    )


def schwinger_exponent(field_strength: float, mass: float) -> float:
    """Suppression exponent ``pi M^2 / E`` of constant-field pair creation."""
    E = float(field_strength)
    M = float(mass)
    if not (math.isfinite(E) and math.isfinite(M)) or E <= 0.0 or M <= 0.0:
        raise ValidationError(f"field and mass must be positive, got E={E}, M={M}")
    return math.pi * M * M / E


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line ``ln P = slope / E + intercept``."""

    points: tuple[tuple[float, float], ...]
    slope: float
    intercept: float
    residual: float
    r_squared: float

    def relative_slope_error(self, mass: float) -> float:
        target = -math.pi * mass**2
        return abs(self.slope - target) / abs(target)


def fit_suppression(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Fit ``ln P`` against ``1/E``.

    Needs at least 3 points, all ``P > 0`` and ``E > 0``, with the largest
    field at least twice the smallest.  ``residual`` is the RMS deviation in
    ``ln P``.
    """
    pts = [(float(E), float(P)) for E, P in points]
    if len(pts) < 3:
        raise ValidationError(f"need at least 3 points for a scaling fit, got {len(pts)}")
    E = np.array([p[0] for p in pts])
    P = np.array([p[1] for p in pts])
    if not (np.all(np.isfinite(E)) and np.all(np.isfinite(P))):
        raise ValidationError("non-finite data in scaling fit")
    if np.any(E <= 0.0) or np.any(P <= 0.0):
        raise ValidationError("scaling fit needs positive fields and probabilities")
    if E.max() < 2.0 * E.min():
        raise ValidationError("fields must span at least a factor 2")
    x = 1.0 / E
    y = np.log(P)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return ScalingFit(tuple(pts), float(slope), float(intercept),
                      math.sqrt(ss_res / len(pts)), r2)
