"""Time-dependent drives and Slater-determinant time evolution.

A :class:`ProtocolSchedule` is an ordered list of stages.  Each stage ramps
the staggered mass ``M(t)`` and multiplies a fixed spatial potential
profile by a ramped amplitude.  :func:`evolve` propagates the occupied
orbitals with the midpoint exponential rule
``U = exp(-i H(t + dt/2) dt)``, each factor computed from an exact
eigen-decomposition.
"""

from __future__ import annotations

import enum
import logging
import math
import time as _time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import AbortedRunError, DimensionError, StepSizeError, StepSizeWarning, ValidationError
from .lattice import (
    LatticeSpec,
    ModeBasis,
    SingleParticleHamiltonian,
    SlaterState,
    _eigh,
    build_hamiltonian,
    diagonalize,
    orthonormality_drift,
)
from .observables import ObservableRecord, measure

__all__ = [
    "RampKind",
    "RampShape",
    "ZeroProfile",
    "UniformGradient",
    "Localized",
    "CustomProfile",
    "Stage",
    "ProtocolSchedule",
    "EvolutionDiagnostics",
    "EvolutionResult",
    "step_propagator",
    "evolve",
    "build_schwinger_protocol",
    "time_reversed",
    "fidelity",
]

log = logging.getLogger(__name__)

#: drift of the orbital Gram matrix above which orbitals are re-orthonormalized
REORTHONORMALIZE_TOL = 1e-10
DT_WARN = 0.1
DT_ERROR = 0.5


class RampKind(str, enum.Enum):
    CONSTANT = "constant"
    LINEAR = "linear"
    SMOOTHSTEP = "smoothstep"
    SMOOTHERSTEP = "smootherstep"


def _profile_fraction(kind: RampKind, s):
    if kind is RampKind.LINEAR:
        return s
    if kind is RampKind.SMOOTHSTEP:
        return s * s * (3.0 - 2.0 * s)
    if kind is RampKind.SMOOTHERSTEP:
        return s * s * s * (s * (6.0 * s - 15.0) + 10.0)
    return 0.0 * s


@dataclass(frozen=True)
class RampShape:
    """Scalar ramp from ``start`` to ``end``.

    The ramp holds ``start`` until ``delay``, changes during ``duration``
    and holds ``end`` afterwards.  All shapes are monotone, so the extreme
    values of a ramp are its endpoints.
    """

    kind: RampKind
    start: float
    end: float
    duration: float = 0.0
    delay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", RampKind(self.kind))
        for name in ("start", "end", "duration", "delay"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"ramp {name} must be finite")
            object.__setattr__(self, name, value)
        if self.duration < 0.0 or self.delay < 0.0:
            raise ValidationError("ramp duration and delay must be >= 0")
        if self.kind is RampKind.CONSTANT and self.start != self.end:
            raise ValidationError("a constant ramp needs start == end")

    @classmethod
    def constant(cls, value: float) -> "RampShape":
        return cls(RampKind.CONSTANT, value, value)

    @property
    def is_constant(self) -> bool:
        return self.kind is RampKind.CONSTANT or self.start == self.end

    @property
    def finish(self) -> float:
        return self.delay + self.duration

    def __call__(self, t: float) -> float:
        if self.is_constant:
            return self.start
        if t <= self.delay:
            return self.start if self.duration > 0.0 or t < self.delay else self.end
        if t >= self.finish:
            return self.end
        s = (t - self.delay) / self.duration
        return self.start + (self.end - self.start) * float(_profile_fraction(self.kind, s))

    def integral(self, length: float) -> float:
        """``int_0^length value(t) dt`` for ``length >= finish``."""
        ramp_mean = 0.5 * (self.start + self.end) if not self.is_constant else self.start
        return self.start * self.delay + ramp_mean * self.duration + self.end * (length - self.finish)

    def reversed(self, length: float) -> "RampShape":
        """Mirror image in time on a stage of the given length."""
        if self.is_constant:
            return self
        return RampShape(self.kind, self.end, self.start, self.duration,
                         length - self.finish)


@dataclass(frozen=True)
class ZeroProfile:
    requires_open = False

    def values(self, spec: LatticeSpec) -> np.ndarray:
        return np.zeros(spec.num_sites)


@dataclass(frozen=True)
class UniformGradient:
    """Linear potential ``Phi_n = E (x_n - origin)``; origin defaults to the centre."""

    field: float
    origin: float | None = None

    def __post_init__(self):
        if not math.isfinite(float(self.field)):
            raise ValidationError("field strength must be finite")

    @property
    def requires_open(self) -> bool:
        return self.field != 0.0

    def values(self, spec: LatticeSpec) -> np.ndarray:
        x0 = spec.center if self.origin is None else float(self.origin)
        return self.field * (spec.positions - x0)


@dataclass(frozen=True)
class Localized:
    """Spatially localized potential.

    ``envelope="step"`` is a smooth potential step
    ``amplitude * tanh((x - center) / width) / 2`` whose field is confined
    to a few ``width`` around ``center``; ``envelope="gaussian"`` is a bump
    ``amplitude * exp(-(x - center)^2 / (2 width^2))``.
    """

    center: float
    width: float
    amplitude: float
    envelope: str = "step"

    def __post_init__(self):
        if self.envelope not in ("step", "gaussian"):
            raise ValidationError(f"unknown envelope {self.envelope!r}")
        if not (self.width > 0.0 and math.isfinite(self.width)):
            raise ValidationError("width must be positive")
        if not (math.isfinite(self.center) and math.isfinite(self.amplitude)):
            raise ValidationError("center and amplitude must be finite")

    @property
    def requires_open(self) -> bool:
        return self.envelope == "step" and self.amplitude != 0.0

    def values(self, spec: LatticeSpec) -> np.ndarray:
        u = (spec.positions - self.center) / self.width
        if self.envelope == "step":
            return 0.5 * self.amplitude * np.tanh(u)
        return self.amplitude * np.exp(-0.5 * u * u)


@dataclass(frozen=True)
class CustomProfile:
    """Explicit per-site potential."""

    site_values: tuple[float, ...]
    requires_open = False

    def values(self, spec: LatticeSpec) -> np.ndarray:
        arr = np.asarray(self.site_values, dtype=float)
        if arr.shape != (spec.num_sites,):
            raise DimensionError(f"custom profile has {arr.size} sites, lattice has {spec.num_sites}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("custom profile has non-finite entries")
        return arr


Profile = Union[ZeroProfile, UniformGradient, Localized, CustomProfile]


@dataclass(frozen=True)
class Stage:
    """One stage: ``M(t) = mass(t)``, ``Phi_n(t) = amplitude(t) * profile_n``."""

    duration: float
    mass: RampShape
    profile: Profile = field(default_factory=ZeroProfile)
    amplitude: RampShape = field(default_factory=lambda: RampShape.constant(0.0))

    def __post_init__(self):
        d = float(self.duration)
        if not math.isfinite(d) or d < 0.0:
            raise ValidationError(f"stage duration must be >= 0, got {self.duration!r}")
        object.__setattr__(self, "duration", d)
        for ramp in (self.mass, self.amplitude):
            if ramp.finish > d * (1.0 + 1e-12) and not ramp.is_constant:
                raise ValidationError(
                    f"ramp ends at {ramp.finish} but the stage lasts only {d}"
                )

    @property
    def settled_at(self) -> float:
        """Local time after which both ramps hold their end values."""
        return max(0.0 if r.is_constant else r.finish for r in (self.mass, self.amplitude))


class ProtocolSchedule:
    """Ordered stages on a lattice; validates positivity and continuity."""

    def __init__(self, spec: LatticeSpec, stages: Sequence[Stage], atol: float = 1e-12,
                 offset: float = 0.0):
        if not stages:
            raise ValidationError("a schedule needs at least one stage")
        if not math.isfinite(offset):
            raise ValidationError("offset must be finite")
        self.spec = spec
        self.stages = tuple(stages)
        #: spatially constant potential added to every site at all times
        self.offset = float(offset)
        self._profiles = [s.profile.values(spec) for s in self.stages]
        bounds = np.concatenate([[0.0], np.cumsum([s.duration for s in self.stages])])
        self.boundaries = bounds
        for i, s in enumerate(self.stages):
            if min(s.mass.start, s.mass.end) < 0.0:
                raise ValidationError(f"stage {i}: mass ramp goes negative")
            if s.profile.requires_open and s.amplitude != RampShape.constant(0.0) and spec.periodic:
                raise ValidationError(
                    f"stage {i}: a field-bearing profile needs open boundaries"
                )
        for i in range(len(self.stages) - 1):
            a, b = self.stages[i], self.stages[i + 1]
            if abs(a.mass(a.duration) - b.mass(0.0)) > atol:
                raise ValidationError(
                    f"mass jumps from {a.mass(a.duration)} to {b.mass(0.0)} at stage {i + 1}"
                )
            phi_a = a.amplitude(a.duration) * self._profiles[i]
            phi_b = b.amplitude(0.0) * self._profiles[i + 1]
            jump = float(np.max(np.abs(phi_a - phi_b)))
            if jump > atol:
                raise ValidationError(f"site potential jumps by {jump:.3g} at stage {i + 1}")

    @property
    def total_duration(self) -> float:
        return float(self.boundaries[-1])

    def locate(self, t: float) -> tuple[int, float]:
        """Stage index and local time; times past the end map to the last stage."""
        i = int(np.searchsorted(self.boundaries, t, side="right")) - 1
        i = min(max(i, 0), len(self.stages) - 1)
        # skip zero-length stages
        while i < len(self.stages) - 1 and self.stages[i].duration == 0.0:
            i += 1
        return i, t - float(self.boundaries[i])

    def mass(self, t: float) -> float:
        i, u = self.locate(t)
        return self.stages[i].mass(u)

    def phi(self, t: float) -> np.ndarray:
        i, u = self.locate(t)
        return self.stages[i].amplitude(u) * self._profiles[i] + self.offset

    def hamiltonian(self, t: float) -> SingleParticleHamiltonian:
        return build_hamiltonian(self.spec, self.mass(t), self.phi(t))

    def constant_until(self, t: float) -> float:
        """Latest time up to which ``H`` stays equal to ``H(t)``; ``t`` if it changes."""
        i, u = self.locate(t)
        stage = self.stages[i]
        if u >= stage.settled_at:
            return float(self.boundaries[i + 1])
        return t

    def field_on_time(self) -> float:
        """``int amplitude(t) dt`` over stages whose profile is not zero."""
        total = 0.0
        for s in self.stages:
            if not isinstance(s.profile, ZeroProfile):
                total += s.amplitude.integral(s.duration)
        return total

    def max_norm(self) -> float:
        """Largest spectral norm of ``H`` over the schedule.

        ``||A + m S + f B||`` is convex in ``(m, f)`` and every ramp is
        monotone, so checking every stage's corner values is exact.
        """
        best = 0.0
        for s, prof in zip(self.stages, self._profiles):
            for m in {s.mass.start, s.mass.end}:
                for f in {s.amplitude.start, s.amplitude.end}:
                    best = max(best, build_hamiltonian(self.spec, m, f * prof + self.offset).norm())
        return best

    def mirrored(self) -> "ProtocolSchedule":
        """Time-mirrored schedule ``H'(t) = H(T - t)``."""
        stages = [
            Stage(s.duration, s.mass.reversed(s.duration), s.profile,
                  s.amplitude.reversed(s.duration))
            for s in reversed(self.stages)
        ]
        return ProtocolSchedule(self.spec, stages, offset=self.offset)

    def shifted(self, offset: float) -> "ProtocolSchedule":
        """Same schedule with a constant ``offset`` added to every site potential."""
        return ProtocolSchedule(self.spec, self.stages, offset=self.offset + float(offset))

    @classmethod
    def static(cls, spec: LatticeSpec, mass: float, duration: float, phi=None) -> "ProtocolSchedule":
        profile = ZeroProfile() if phi is None else CustomProfile(tuple(np.broadcast_to(
            np.asarray(phi, dtype=float), (spec.num_sites,))))
        amp = RampShape.constant(0.0 if phi is None else 1.0)
        return cls(spec, [Stage(duration, RampShape.constant(mass), profile, amp)])


def step_propagator(H: SingleParticleHamiltonian, dt: float) -> np.ndarray:
    """``exp(-i H dt)`` by spectral decomposition."""
    if not math.isfinite(dt):
        raise ValidationError("dt must be finite")
    w, v = _eigh(H)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def _apply(v: np.ndarray, phase: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``v diag(phase) v^T psi`` for real orthogonal ``v`` using real matmuls."""
    k = psi.shape[1]
    y = v.T @ np.concatenate([psi.real, psi.imag], axis=1)
    yc = (y[:, :k] + 1j * y[:, k:]) * phase[:, None]
    z = v @ np.concatenate([yc.real, yc.imag], axis=1)
    return z[:, :k] + 1j * z[:, k:]


def _lowdin(orbitals: np.ndarray) -> np.ndarray:
    gram = orbitals.conj().T @ orbitals
    w, u = np.linalg.eigh(gram)
    return orbitals @ (u * (1.0 / np.sqrt(w))) @ u.conj().T


@dataclass
class EvolutionDiagnostics:
    step_count: int = 0
    max_drift: float = 0.0
    #: (time, drift) for every re-orthonormalization
    reorthonormalizations: list = field(default_factory=list)
    eigensolves: int = 0
    wall_time: float = 0.0
    max_dt_norm: float = 0.0


@dataclass
class EvolutionResult:
    final_state: SlaterState
    trajectory: list
    diagnostics: EvolutionDiagnostics
    snapshots: list = field(default_factory=list)


class _ReferenceCache:
    """Free Hamiltonian at the current mass, the pair-number reference."""

    def __init__(self, spec: LatticeSpec):
        self.spec = spec
        self._mass = None
        self._basis = None

    def __call__(self, mass: float) -> ModeBasis:
        if self._basis is None or mass != self._mass:
            self._basis = diagonalize(build_hamiltonian(self.spec, mass))
            self._mass = mass
        return self._basis


def evolve(
    state: SlaterState,
    schedule: ProtocolSchedule,
    dt: float,
    record_every: int = 0,
    *,
    reference: ModeBasis | Callable[[float], ModeBasis] | None = None,
    store_orbitals: bool = False,
    check_every: int = 16,
) -> EvolutionResult:
    """Propagate ``state`` through ``schedule``.

    Parameters
    ----------
    state : SlaterState
        Initial orbitals on ``schedule.spec``.
    schedule : ProtocolSchedule
    dt : float
        Time step; ``dt * max ||H||`` above 0.1 warns and above 0.5 raises.
        The final step is shortened to land exactly on the schedule end.
    record_every : int
        Record observables every this many steps (plus at ``t = 0`` and at
        the end).  ``0`` records only the end points.
    reference : ModeBasis or callable, optional
        Pair-number reference.  Defaults to the free chain (``Phi = 0``) at
        the instantaneous mass.
    store_orbitals : bool
        Keep ``(time, orbitals)`` snapshots at every record.
    check_every : int
        Steps between orthonormality and finiteness checks.

    Returns
    -------
    EvolutionResult

    Notes
    -----
    Where the schedule is constant the midpoint rule is exact, so runs of
    such steps are applied as one exponential ``exp(-i H k dt)`` (identical
    up to rounding to ``k`` separate steps).
    """
    spec = schedule.spec
    if state.spec.num_sites != spec.num_sites:
        raise DimensionError("state and schedule live on different lattices")
    dt = float(dt)
    if not (math.isfinite(dt) and dt > 0.0):
        raise StepSizeError(f"dt must be positive, got {dt!r}")
    norm = schedule.max_norm()
    if dt * norm > DT_ERROR:
        raise StepSizeError(f"dt * ||H|| = {dt * norm:.3g} exceeds {DT_ERROR}")
    if dt * norm > DT_WARN:
        warnings.warn(f"dt * ||H|| = {dt * norm:.3g} is above {DT_WARN}", StepSizeWarning, stacklevel=2)

    if reference is None:
        reference = _ReferenceCache(spec)
    ref_of = reference if callable(reference) else (lambda _m, _r=reference: _r)

    started = _time.perf_counter()
    diag = EvolutionDiagnostics(max_dt_norm=dt * norm)
    total = schedule.total_duration
    n_steps = 0 if total == 0.0 else max(1, int(math.ceil(total / dt - 1e-9)))
    psi = state.orbitals.copy()
    trajectory: list[ObservableRecord] = []
    snapshots: list = []

    def step_end(j: int) -> float:
        return total if j >= n_steps - 1 else (j + 1) * dt

    def record(t: float) -> None:
        H_t = schedule.hamiltonian(t)
        s = SlaterState(psi, spec, check=False)
        trajectory.append(measure(s, H_t, ref_of(schedule.mass(t)), time=t))
        if store_orbitals:
            snapshots.append((t, psi.copy()))

    def check(t: float) -> None:
        nonlocal psi
        if not np.all(np.isfinite(psi)):
            raise AbortedRunError(f"non-finite orbitals at t = {t:.6g}", trajectory, t)
        drift = orthonormality_drift(psi)
        diag.max_drift = max(diag.max_drift, drift)
        if drift > REORTHONORMALIZE_TOL:
            psi = _lowdin(psi)
            diag.reorthonormalizations.append((t, drift))
            log.info("re-orthonormalized orbitals at t=%.6g (drift %.3e)", t, drift)

    record(0.0)
    eig_cache: dict = {}
    k = 0
    since_check = 0
    while k < n_steps:
        t = k * dt
        limit = n_steps
        if record_every:
            limit = min(n_steps, (k // record_every + 1) * record_every)
        window = schedule.constant_until(t)
        m = k
        if window > t:
            if window >= total * (1.0 - 1e-14):
                m = limit
            else:
                m = min(limit, int(math.floor(window / dt + 1e-9)))
        if m - k >= 2:
            span = step_end(m - 1) - t
            key = schedule.locate(t)[0]
            if key not in eig_cache:
                eig_cache.clear()
                eig_cache[key] = _eigh(schedule.hamiltonian(t))
                diag.eigensolves += 1
            w, v = eig_cache[key]
            psi = _apply(v, np.exp(-1j * w * span), psi)
            since_check += m - k
            k = m
        else:
            h = step_end(k) - t
            w, v = _eigh(schedule.hamiltonian(t + 0.5 * h))
            diag.eigensolves += 1
            psi = _apply(v, np.exp(-1j * w * h), psi)
            since_check += 1
            k += 1
        diag.step_count = k
        recording = k == n_steps or (record_every and k % record_every == 0)
        if since_check >= check_every or recording:
            check(step_end(k - 1))
            since_check = 0
        if recording:
            record(step_end(k - 1))

    if n_steps == 0:
        check(0.0)
    diag.wall_time = _time.perf_counter() - started
    final = SlaterState(psi, spec)
    return EvolutionResult(final, trajectory, diag, snapshots)


def build_schwinger_protocol(
    spec: LatticeSpec,
    M_target: float,
    M_initial: float,
    field: Profile,
    durations: Sequence[float],
    shapes: Sequence[RampKind | str] | None = None,
    field_ramp_duration: float | None = None,
) -> ProtocolSchedule:
    """Five-stage pair-creation protocol.

    1. hold the deep gap ``M_initial`` with no potential;
    2. ramp the gap down to ``M_target``;
    3. ramp the potential ``field`` on (over ``field_ramp_duration``,
       default the whole stage) and hold it for the rest of the stage;
    4. ramp the potential off;
    5. ramp the gap back up to ``M_initial``.

    ``shapes`` gives the ramp kind of stages 2-5 (entry 0, for the hold,
    is ignored); the default is smootherstep everywhere.
    """
    if len(durations) != 5:
        raise ValidationError(f"need 5 stage durations, got {len(durations)}")
    d = [float(x) for x in durations]
    if any(not math.isfinite(x) or x < 0.0 for x in d):
        raise ValidationError("stage durations must be finite and >= 0")
    if shapes is None:
        shapes = [RampKind.SMOOTHERSTEP] * 5
    if len(shapes) != 5:
        raise ValidationError(f"need 5 ramp shapes, got {len(shapes)}")
    kinds = [RampKind(s) for s in shapes]
    M0 = float(M_initial)
    M1 = float(M_target)
    if not (math.isfinite(M0) and math.isfinite(M1)) or M1 < 0.0 or M0 < M1:
        raise ValidationError(f"need M_initial >= M_target >= 0, got {M0}, {M1}")
    ramp3 = d[2] if field_ramp_duration is None else float(field_ramp_duration)
    if ramp3 < 0.0 or ramp3 > d[2]:
        raise ValidationError("field_ramp_duration must lie within stage 3")

    prof = field.values(spec)
    if field.requires_open and spec.periodic:
        raise ValidationError("field-bearing protocols need open boundaries")
    limit = math.sqrt(M1 * M1 + 4.0 * spec.hopping**2)
    if np.max(np.abs(prof)) > limit:
        raise ValidationError(
            f"max |Phi| = {np.max(np.abs(prof)):.3g} exceeds the band edge {limit:.3g}"
        )

    def ramp(kind: RampKind, a: float, b: float, length: float) -> RampShape:
        if a == b:
            return RampShape.constant(a)
        if kind is RampKind.CONSTANT:
            raise ValidationError("a stage that changes a parameter cannot use a constant shape")
        return RampShape(kind, a, b, length)

    stages = [
        Stage(d[0], RampShape.constant(M0)),
        Stage(d[1], ramp(kinds[1], M0, M1, d[1])),
        Stage(d[2], RampShape.constant(M1), field, ramp(kinds[2], 0.0, 1.0, ramp3)),
        Stage(d[3], RampShape.constant(M1), field, ramp(kinds[3], 1.0, 0.0, d[3])),
        Stage(d[4], ramp(kinds[4], M1, M0, d[4])),
    ]
    # Zero-length stages are dropped; any jump they would have hidden is
    # caught by the continuity check of the schedule.
    kept = [st for st in stages if st.duration > 0.0] or stages[:1]
    return ProtocolSchedule(spec, kept)


def time_reversed(state: SlaterState) -> SlaterState:
    """Complex-conjugated orbitals; the antiunitary time reversal of a real ``H``."""
    return SlaterState(state.orbitals.conj(), state.spec, check=False)


def fidelity(a: SlaterState, b: SlaterState) -> float:
    """``|<a|b>|`` for two Slater determinants: ``|det(A^dag B)|``."""
    if a.orbitals.shape != b.orbitals.shape:
        return 0.0
    return float(abs(np.linalg.det(a.orbitals.conj().T @ b.orbitals)))
