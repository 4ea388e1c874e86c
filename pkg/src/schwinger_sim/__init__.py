"""Lattice simulator for pair creation of Dirac fermions in an optical superlattice."""

from __future__ import annotations

from .design import (
    DerivedScales,
    HierarchyReport,
    OpticalLatticeParams,
    derive_scales,
    lithium_example,
    validate_hierarchy,
)
from .dynamics import (
    Localized,
    ProtocolSchedule,
    RampKind,
    RampShape,
    Stage,
    UniformGradient,
    ZeroProfile,
    build_schwinger_protocol,
    evolve,
)
from .errors import (
    AbortedRunError,
    AmbiguousVacuumError,
    NumericalError,
    SchwingerSimError,
    StepSizeError,
    ValidationError,
)
from .lattice import (
    Boundary,
    LatticeSpec,
    SlaterState,
    build_hamiltonian,
    diagonalize,
    dirac_sea,
    lattice_dispersion,
    momentum_grid,
)
from .observables import (
    correlation_matrix,
    fit_suppression,
    measure,
    pair_number,
    schwinger_exponent,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
