"""Exact many-body reference for short chains.

Fock states are bitmasks with bit ``n`` set when site ``n`` is occupied.
Fermionic operators follow the ordering ``c_n |s> = (-1)^{#occupied m < n}``
so that ``c+_{n_1} ... c+_{n_k} |0>`` with ``n_1 < ... < n_k`` carries sign
``+1``.  Hardcore bosons use the same basis without any string sign.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, NumericalError, SizeCapError, StepSizeError, ValidationError
from .lattice import Boundary, LatticeSpec, SlaterState, build_hamiltonian, diagonalize, dirac_sea
from .observables import CorrelationMatrix

__all__ = [
    "MAX_SITES",
    "Statistics",
    "FockBasis",
    "ManyBodyOperator",
    "build_many_body_fermion",
    "build_many_body_hardcore_boson",
    "jordan_wigner_map",
    "string_sign_conjugate",
    "correlation_from_state",
    "slater_to_fock",
    "schedule_operator",
    "evolve_exact",
    "random_smooth_schedule",
    "compare_dynamics",
    "equivalence_battery",
]

MAX_SITES = 14


class Statistics(str, enum.Enum):
    FERMION = "fermion"
    HARDCORE_BOSON = "hardcore_boson"


def _popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    count = np.zeros_like(x)
    while np.any(x):
        count += x & 1
        x = x >> 1
    return count


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Occupation bitmasks on ``num_sites`` sites, optionally at fixed particle number."""

    num_sites: int
    sector: int | None
    states: np.ndarray

    @classmethod
    def build(cls, num_sites: int, sector: int | None = None, cap: int = MAX_SITES) -> "FockBasis":
        n = int(num_sites)
        if n < 1:
            raise ValidationError(f"num_sites must be positive, got {num_sites!r}")
        if n > cap:
            raise SizeCapError(f"{n} sites exceeds the oracle cap of {cap}")
        everything = np.arange(1 << n, dtype=np.int64)
        if sector is None:
            states = everything
        else:
            k = int(sector)
            if not 0 <= k <= n:
                raise ValidationError(f"sector {sector!r} outside [0, {n}]")
            states = everything[_popcount(everything) == k]
        return cls(n, None if sector is None else int(sector), states)

    @property
    def dimension(self) -> int:
        return int(self.states.size)

    def index(self, state: int) -> int:
        i = int(np.searchsorted(self.states, state))
        if i >= self.states.size or self.states[i] != state:
            raise KeyError(f"state {state:#b} is not in the basis")
        return i

    def occupations(self) -> np.ndarray:
        """``(dimension, num_sites)`` 0/1 array."""
        bits = np.arange(self.num_sites, dtype=np.int64)
        return ((self.states[:, None] >> bits[None, :]) & 1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class ManyBodyOperator:
    matrix: np.ndarray
    basis: FockBasis
    statistics: Statistics

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))


def _hopping_pairs(spec: LatticeSpec):
    n = spec.num_sites
    pairs = [(i, i + 1) for i in range(n - 1)]
    if spec.periodic:
        pairs.append((0, n - 1))
    return pairs


def _build(spec: LatticeSpec, mass: float, phi, basis: FockBasis, fermionic: bool) -> ManyBodyOperator:
    if basis.num_sites != spec.num_sites:
        raise DimensionError(f"basis has {basis.num_sites} sites, lattice has {spec.num_sites}")
    onsite = build_hamiltonian(spec, mass, phi).onsite
    occ = basis.occupations()
    dim = basis.dimension
    H = np.zeros((dim, dim))
    H[np.arange(dim), np.arange(dim)] = occ @ onsite
    states = basis.states
    for m, n in _hopping_pairs(spec):
        movable = occ[:, m] != occ[:, n]
        src = np.nonzero(movable)[0]
        dst_states = states[src] ^ ((1 << m) | (1 << n))
        dst = np.searchsorted(states, dst_states)
        amp = np.full(src.size, -spec.hopping)
        if fermionic:
            between = occ[src, m + 1:n].sum(axis=1) if n > m + 1 else np.zeros(src.size, int)
            amp = amp * np.where(between % 2 == 0, 1.0, -1.0)
        H[dst, src] += amp
    stats = Statistics.FERMION if fermionic else Statistics.HARDCORE_BOSON
    return ManyBodyOperator(H, basis, stats)


def build_many_body_fermion(spec: LatticeSpec, mass: float, phi, basis: FockBasis) -> ManyBodyOperator:
    """Second-quantized chain Hamiltonian with fermionic exchange signs.

    Hopping between sites ``m < n`` picks up ``(-1)`` per occupied site
    strictly between them; on a periodic chain this gives the wrap-around
    bond its ``(-1)^{N_f - 1}`` sign.
    """
    return _build(spec, mass, phi, basis, fermionic=True)


def build_many_body_hardcore_boson(spec: LatticeSpec, mass: float, phi, basis: FockBasis) -> ManyBodyOperator:
    """Same chain for hardcore bosons: every hopping element is ``-J``."""
    return _build(spec, mass, phi, basis, fermionic=False)


def jordan_wigner_map(basis: FockBasis) -> np.ndarray:
    """String sign ``(-1)^{#occupied m < n}`` per basis state (rows) and site (columns)."""
    occ = basis.occupations().astype(np.int64)
    before = np.cumsum(occ, axis=1) - occ
    return np.where(before % 2 == 0, 1, -1).astype(np.int8)


def string_sign_conjugate(operator: ManyBodyOperator) -> np.ndarray:
    """Hardcore-boson matrix with every hopping element multiplied by the string-sign ratio.

    ``c+_n c_m = d+_n d_m * sign_n(s') * sign_m(s)`` where ``s`` is the
    source state and ``s'`` the target, with the signs from
    :func:`jordan_wigner_map`.  Applied to a bosonic operator this yields
    the fermionic matrix elements.
    """
    basis = operator.basis
    signs = jordan_wigner_map(basis).astype(float)
    occ = basis.occupations()
    H = operator.matrix.copy()
    dst, src = np.nonzero(H)
    off = dst != src
    dst, src = dst[off], src[off]
    diff = occ[dst] != occ[src]
    # the created site is occupied in dst, the annihilated one in src
    created = np.argmax(diff & (occ[dst] == 1), axis=1)
    removed = np.argmax(diff & (occ[src] == 1), axis=1)
    # sign of c_m acting on src, then c+_n acting on the intermediate state
    factor = signs[src, removed] * signs[dst, created]
    H[dst, src] = H[dst, src] * factor
    return H


def correlation_from_state(psi: np.ndarray, basis: FockBasis) -> CorrelationMatrix:
    """``C[m, n] = <psi| c+_m c_n |psi>`` with fermionic signs."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (basis.dimension,):
        raise DimensionError(f"state has shape {psi.shape}, basis has dimension {basis.dimension}")
    N = basis.num_sites
    occ = basis.occupations()
    signs = jordan_wigner_map(basis).astype(float)
    C = np.zeros((N, N), dtype=complex)
    C[np.arange(N), np.arange(N)] = (np.abs(psi) ** 2) @ occ
    states = basis.states
    for m in range(N):
        for n in range(N):
            if m == n:
                continue
            src = np.nonzero((occ[:, n] == 1) & (occ[:, m] == 0))[0]
            if src.size == 0:
                continue
            mid = states[src] ^ (1 << n)
            dst = np.searchsorted(states, mid | (1 << m))
            # c_n on src, then c+_m on the intermediate state (which lacks n)
            s_n = signs[src, n]
            mid_before_m = _popcount(mid & ((1 << m) - 1))
            s_m = np.where(mid_before_m % 2 == 0, 1.0, -1.0)
            C[m, n] = np.sum(np.conj(psi[dst]) * psi[src] * s_n * s_m)
    return CorrelationMatrix(C)


def slater_to_fock(state: SlaterState, basis: FockBasis) -> np.ndarray:
    """Fock amplitudes of the Slater determinant ``prod_k (sum_n phi[n, k] c+_n) |0>``.

    The amplitude of a state with occupied sites ``n_1 < ... < n_k`` is
    ``det(phi[[n_1..n_k], :])``.
    """
    N, k = state.orbitals.shape
    if basis.num_sites != N:
        raise DimensionError("basis and state have different numbers of sites")
    if basis.sector is not None and basis.sector != k:
        raise DimensionError(f"basis sector {basis.sector} != {k} fermions")
    occ = basis.occupations()
    psi = np.zeros(basis.dimension, dtype=complex)
    for i, row in enumerate(occ):
        if row.sum() != k:
            continue
        sites = np.nonzero(row)[0]
        psi[i] = np.linalg.det(state.orbitals[sites, :]) if k else 1.0
    return psi


def schedule_operator(schedule, basis: FockBasis,
                      statistics: Statistics | str = Statistics.FERMION) -> Callable[[float], ManyBodyOperator]:
    """``t -> ManyBodyOperator`` following a :class:`~schwinger_sim.dynamics.ProtocolSchedule`."""
    stats = Statistics(statistics)
    builder = build_many_body_fermion if stats is Statistics.FERMION else build_many_body_hardcore_boson

    def H_of_t(t: float) -> ManyBodyOperator:
        return builder(schedule.spec, schedule.mass(t), schedule.phi(t), basis)

    return H_of_t


def evolve_exact(
    psi: np.ndarray,
    H_of_t: Callable[[float], ManyBodyOperator],
    dt: float,
    T: float,
    checkpoints=(),
) -> np.ndarray | tuple[np.ndarray, list]:
    """Midpoint exponential stepping on the full Fock space.

    Uses the same step grid as :func:`schwinger_sim.dynamics.evolve`:
    ``ceil(T / dt)`` steps of size ``dt`` with the last one shortened.
    If ``checkpoints`` (step indices) are given, the states after those
    steps are returned as a second value ``[(time, psi), ...]``.
    """
    psi = np.array(psi, dtype=complex)
    dt = float(dt)
    T = float(T)
    if not (math.isfinite(dt) and dt > 0.0):
        raise StepSizeError(f"dt must be positive, got {dt!r}")
    if not math.isfinite(T) or T < 0.0:
        raise ValidationError(f"T must be >= 0, got {T!r}")
    n_steps = 0 if T == 0.0 else max(1, int(math.ceil(T / dt - 1e-9)))
    wanted = set(int(c) for c in checkpoints)
    saved = []
    norm0 = float(np.linalg.norm(psi))
    for k in range(n_steps):
        t0 = k * dt
        t1 = T if k == n_steps - 1 else (k + 1) * dt
        H = H_of_t(0.5 * (t0 + t1)).matrix
        if H.shape[0] != psi.size:
            raise DimensionError("operator and state dimensions differ")
        w, v = np.linalg.eigh(H)
        psi = v @ (np.exp(-1j * w * (t1 - t0)) * (v.conj().T @ psi))
        if not np.all(np.isfinite(psi)):
            raise NumericalError(f"non-finite amplitudes after step {k}")
        if k + 1 in wanted:
            saved.append((t1, psi.copy()))
    drift = abs(float(np.linalg.norm(psi)) - norm0)
    if drift > 1e-10:
        raise NumericalError(f"norm drifted by {drift:.3g}")
    return (psi, saved) if checkpoints else psi


def random_smooth_schedule(spec: LatticeSpec, seed: int, duration: float = 4.0):
    """Two-stage schedule with smoothly ramped random mass and site potential."""
    from .dynamics import CustomProfile, ProtocolSchedule, RampKind, RampShape, Stage

    rng = np.random.default_rng(seed)
    M0, M1, M2 = rng.uniform(0.3, 1.5, size=3)
    profile = CustomProfile(tuple(rng.uniform(-0.8, 0.8, size=spec.num_sites)))
    final_amp = float(rng.uniform(-1.0, 1.0))
    half = 0.5 * float(duration)
    stages = [
        Stage(half, RampShape(RampKind.SMOOTHERSTEP, M0, M1, half), profile,
              RampShape(RampKind.SMOOTHSTEP, 0.0, 1.0, half)),
        Stage(half, RampShape(RampKind.LINEAR, M1, M2, half), profile,
              RampShape(RampKind.SMOOTHERSTEP, 1.0, final_amp, half)),
    ]
    return ProtocolSchedule(spec, stages)


def compare_dynamics(schedule, dt: float, checkpoints: int = 5,
                     statistics: Statistics | str = Statistics.FERMION) -> float:
    """Largest ``|C_slater - C_exact|`` entry over evenly spaced checkpoints.

    Both routes start from the Dirac sea of ``H(0)`` and use the same step
    grid.  For hardcore bosons the exact state is evolved with the bosonic
    Hamiltonian and its correlations are read with fermionic string signs.
    """
    from .dynamics import evolve
    from .observables import correlation_matrix

    spec = schedule.spec
    vacuum = dirac_sea(diagonalize(schedule.hamiltonian(0.0)))
    total = schedule.total_duration
    n_steps = max(1, int(math.ceil(total / dt - 1e-9)))
    every = max(1, n_steps // int(checkpoints))
    slater = evolve(vacuum, schedule, dt, record_every=every, store_orbitals=True)
    snaps = slater.snapshots[1:]
    steps = [min(every * (i + 1), n_steps) for i in range(len(snaps))]
    basis = FockBasis.build(spec.num_sites, vacuum.num_fermions)
    psi0 = slater_to_fock(vacuum, basis)
    _, exact = evolve_exact(psi0, schedule_operator(schedule, basis, statistics), dt, total,
                            checkpoints=steps)
    worst = 0.0
    for (t_s, orb), (t_e, psi) in zip(snaps, exact):
        if abs(t_s - t_e) > 1e-9:
            raise NumericalError(f"checkpoint times differ: {t_s} vs {t_e}")
        C_s = correlation_matrix(SlaterState(orb, spec, check=False)).matrix
        C_e = correlation_from_state(psi, basis).matrix
        worst = max(worst, float(np.max(np.abs(C_s - C_e))))
    return worst


def equivalence_battery(num_sites: int = 8, seed: int = 0, draws: int = 20,
                        duration: float = 4.0, dt: float = 0.02, checkpoints: int = 5):
    """Run the fixed oracle checks; return ``[(name, tolerance_group, deviation), ...]``."""
    rng = np.random.default_rng(seed)
    spec = LatticeSpec.from_hopping(num_sites, 1.0, Boundary.OPEN)
    half = FockBasis.build(num_sites, num_sites // 2)
    single = FockBasis.build(num_sites, 1)
    ground = one = entry = spectrum = 0.0
    for _ in range(int(draws)):
        M = float(rng.uniform(0.0, 2.0))
        phi = rng.uniform(-1.0, 1.0, size=num_sites)
        w = np.linalg.eigvalsh(build_hamiltonian(spec, M, phi).matrix)
        Hf = build_many_body_fermion(spec, M, phi, half)
        Hb = build_many_body_hardcore_boson(spec, M, phi, half)
        ef = Hf.eigvalsh()
        ground = max(ground, abs(ef[0] - np.sum(w[: num_sites // 2])))
        one = max(one, float(np.max(np.abs(build_many_body_fermion(spec, M, phi, single).eigvalsh() - w))))
        entry = max(entry, float(np.max(np.abs(string_sign_conjugate(Hb) - Hf.matrix))))
        spectrum = max(spectrum, float(np.max(np.abs(Hb.eigvalsh() - ef))))
    schedule = random_smooth_schedule(spec, int(rng.integers(2**31)), duration)
    return [
        ("free_fermion_ground_energy", "free_fermion", float(ground)),
        ("one_particle_spectrum", "one_particle", one),
        ("jordan_wigner_entrywise", "jordan_wigner", entry),
        ("jordan_wigner_spectrum", "spectrum", spectrum),
        ("slater_vs_exact_dynamics", "dynamics", compare_dynamics(schedule, dt, checkpoints)),
        ("boson_vs_fermion_dynamics", "dynamics",
         compare_dynamics(schedule, dt, checkpoints, Statistics.HARDCORE_BOSON)),
    ]
