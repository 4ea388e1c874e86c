"""Single-particle lattice Hamiltonians, band formulas and the Dirac-sea vacuum.

The chain carries spinless fermions ``c_n`` on sites ``n = 0..N-1`` with

    H = -J sum_n (c+_{n+1} c_n + h.c.) + sum_n V_n c+_n c_n,
    V_n = Phi_n + M  (n even),   V_n = Phi_n - M  (n odd).

Everything here works in natural units (hbar = c = q = 1).  Because the
Hamiltonian is quadratic, a many-fermion state is fully described by its
occupied orbitals (``SlaterState``) and all dynamics reduces to N x N
linear algebra.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    AmbiguousVacuumError,
    DimensionError,
    DomainError,
    MomentumRangeError,
    NumericalError,
    ValidationError,
)

__all__ = [
    "Boundary",
    "LatticeSpec",
    "SingleParticleHamiltonian",
    "ModeBasis",
    "SlaterState",
    "staggered_mass",
    "build_hamiltonian",
    "dispersion",
    "band_energies",
    "lattice_dispersion",
    "momentum_grid",
    "plane_wave_pair",
    "bloch_hamiltonian",
    "bogoliubov_matrix",
    "diagonalize",
    "dirac_sea",
]

#: relative width of the band around zero energy treated as a zero mode
ZERO_MODE_RTOL = 1e-9


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    OPEN = "open"


@dataclass(frozen=True)
class LatticeSpec:
    """Static geometry of the chain.

    Parameters
    ----------
    num_sites : int
        Number of sites N; even and at least 4 so that the two-site unit
        cell tiles the chain.
    lattice_constant : float
        Site spacing ``a``.
    hopping : float
        Hopping amplitude ``J``.  Use :meth:`from_lattice_constant` or
        :meth:`from_hopping` to tie the two through ``J = 1/(2a)``.
    boundary : Boundary or str
        ``"periodic"`` or ``"open"``.
    """

    num_sites: int
    lattice_constant: float
    hopping: float
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        if isinstance(self.num_sites, bool) or int(self.num_sites) != self.num_sites:
            raise ValidationError(f"num_sites must be an integer, got {self.num_sites!r}")
        object.__setattr__(self, "num_sites", int(self.num_sites))
        if self.num_sites < 4 or self.num_sites % 2:
            raise ValidationError(f"num_sites must be even and >= 4, got {self.num_sites}")
        for name in ("lattice_constant", "hopping"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0.0:
                raise ValidationError(f"{name} must be finite and positive, got {value!r}")
            object.__setattr__(self, name, value)
        try:
            object.__setattr__(self, "boundary", Boundary(self.boundary))
        except ValueError:
            raise ValidationError(f"unknown boundary {self.boundary!r}") from None

    @classmethod
    def from_lattice_constant(cls, num_sites, lattice_constant, boundary=Boundary.PERIODIC):
        """Chain with hopping ``J = 1/(2a)``."""
        a = float(lattice_constant)
        if not math.isfinite(a) or a <= 0.0:
            raise ValidationError(f"lattice_constant must be finite and positive, got {a!r}")
        return cls(num_sites, a, 1.0 / (2.0 * a), boundary)

    @classmethod
    def from_hopping(cls, num_sites, hopping, boundary=Boundary.PERIODIC):
        """Chain with lattice constant ``a = 1/(2J)``."""
        J = float(hopping)
        if not math.isfinite(J) or J <= 0.0:
            raise ValidationError(f"hopping must be finite and positive, got {J!r}")
        return cls(num_sites, 1.0 / (2.0 * J), J, boundary)

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def length(self) -> float:
        return self.num_sites * self.lattice_constant

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.num_sites) * self.lattice_constant

    @property
    def center(self) -> float:
        return 0.5 * (self.num_sites - 1) * self.lattice_constant

    @property
    def zero_tolerance(self) -> float:
        return ZERO_MODE_RTOL * self.hopping

    def with_boundary(self, boundary) -> "LatticeSpec":
        return LatticeSpec(self.num_sites, self.lattice_constant, self.hopping, boundary)


def _site_vector(spec: LatticeSpec, values, name: str) -> np.ndarray:
    if values is None:
        return np.zeros(spec.num_sites)
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(spec.num_sites, float(arr))
    if arr.shape != (spec.num_sites,):
        raise DimensionError(
            f"{name} has shape {arr.shape}, expected ({spec.num_sites},)"
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def _check_mass(mass) -> float:
    M = float(mass)
    if not math.isfinite(M):
        raise ValidationError(f"mass must be finite, got {mass!r}")
    if M < 0.0:
        raise ValidationError(f"mass must be >= 0, got {M}")
    return M


def staggered_mass(spec: LatticeSpec, mass: float) -> np.ndarray:
    """On-site ``+M`` on even sites and ``-M`` on odd sites."""
    signs = np.where(np.arange(spec.num_sites) % 2 == 0, 1.0, -1.0)
    return _check_mass(mass) * signs


@dataclass(frozen=True, eq=False)
class SingleParticleHamiltonian:
    """First-quantized N x N matrix of the chain.

    The matrix is real symmetric (the model has no complex couplings), which
    is a special case of Hermitian and lets the eigensolvers use real
    arithmetic.  ``onsite`` holds the diagonal ``V_n``.
    """

    matrix: np.ndarray
    spec: LatticeSpec
    mass: float
    potential: np.ndarray
    onsite: np.ndarray = field(repr=False)

    @property
    def num_sites(self) -> int:
        return self.spec.num_sites

    def norm(self) -> float:
        """Spectral norm (largest |eigenvalue|)."""
        w = _eigvalsh(self)
        return float(max(abs(w[0]), abs(w[-1])))


def build_hamiltonian(spec: LatticeSpec, mass: float, phi=None) -> SingleParticleHamiltonian:
    """Build the chain Hamiltonian for staggered mass ``mass`` and potential ``phi``.

    Parameters
    ----------
    spec : LatticeSpec
    mass : float
        Dirac mass ``M >= 0``.
    phi : array_like, optional
        Site potential ``Phi_n`` of length N (a scalar is broadcast).  Zero
        if omitted.

    Returns
    -------
    SingleParticleHamiltonian

    Examples
    --------
    >>> spec = LatticeSpec(4, 0.5, 1.0)
    >>> build_hamiltonian(spec, 0.5).matrix.diagonal()
    array([ 0.5, -0.5,  0.5, -0.5])
    """
    potential = _site_vector(spec, phi, "phi")
    onsite = potential + staggered_mass(spec, mass)
    N = spec.num_sites
    J = spec.hopping
    matrix = np.diag(onsite)
    idx = np.arange(N - 1)
    matrix[idx, idx + 1] = -J
    matrix[idx + 1, idx] = -J
    if spec.periodic:
        matrix[0, N - 1] = -J
        matrix[N - 1, 0] = -J
    return SingleParticleHamiltonian(matrix, spec, float(mass), potential, onsite)


def _check_zone(p, lattice_constant) -> np.ndarray:
    p_arr = np.asarray(p, dtype=float)
    edge = math.pi / (2.0 * lattice_constant)
    if not np.all(np.isfinite(p_arr)):
        raise ValidationError("momentum must be finite")
    if np.any(np.abs(p_arr) > edge * (1.0 + 1e-12)):
        raise MomentumRangeError(
            f"momentum outside the halved zone |p| <= pi/(2a) = {edge:.6g}; fold it first"
        )
    return p_arr


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def dispersion(p, mass: float, lattice_constant: float):
    """Closed-form band energy ``sqrt(M^2 + cos^2(a p) / (4 a^2))``.

    Defined on the halved zone ``|p| <= pi/(2a)``; equals ``M`` at the zone
    edge.  Note that the nearest-neighbour chain of :func:`build_hamiltonian`
    with ``J = 1/(2a)`` has cosine amplitude ``2J`` instead of ``J``; its exact
    bands are given by :func:`lattice_dispersion`.
    """
    a = float(lattice_constant)
    if not math.isfinite(a) or a <= 0.0:
        raise ValidationError(f"lattice_constant must be positive, got {lattice_constant!r}")
    M = _check_mass(mass)
    p_arr = _check_zone(p, a)
    return _scalar_or_array(np.sqrt(M * M + np.cos(a * p_arr) ** 2 / (4.0 * a * a)))


def band_energies(p, mass: float, hopping: float, lattice_constant: float):
    """Split sub-bands ``(-s, +s)`` with ``s = sqrt(M^2 + J^2 cos^2(a p))``."""
    a = float(lattice_constant)
    J = float(hopping)
    if not (math.isfinite(a) and a > 0.0 and math.isfinite(J) and J > 0.0):
        raise ValidationError("hopping and lattice_constant must be positive")
    M = _check_mass(mass)
    p_arr = _check_zone(p, a)
    s = np.sqrt(M * M + (J * np.cos(a * p_arr)) ** 2)
    return _scalar_or_array(-s), _scalar_or_array(s)


def lattice_dispersion(p, mass: float, hopping: float, lattice_constant: float):
    """Exact upper-band energy ``sqrt(M^2 + 4 J^2 cos^2(a p))`` of the chain.

    These are the eigenvalues of the 2 x 2 Bloch block returned by
    :func:`bloch_hamiltonian`, hence of the periodic free Hamiltonian.
    """
    a = float(lattice_constant)
    J = float(hopping)
    if not (math.isfinite(a) and a > 0.0 and math.isfinite(J) and J > 0.0):
        raise ValidationError("hopping and lattice_constant must be positive")
    M = _check_mass(mass)
    p_arr = _check_zone(p, a)
    return _scalar_or_array(np.sqrt(M * M + 4.0 * (J * np.cos(a * p_arr)) ** 2))


def momentum_grid(spec: LatticeSpec) -> np.ndarray:
    """The N/2 allowed momenta of the periodic chain, ascending in (-pi/2a, pi/2a].

    The unit cell holds two sites, so ``p_j = 2 pi j / (N a)`` with ``j``
    running over N/2 consecutive integers.  The zone edge ``pi/(2a)`` is on
    the grid iff N is a multiple of 4.
    """
    cells = spec.num_sites // 2
    hi = cells // 2
    j = np.arange(hi - cells + 1, hi + 1)
    return 2.0 * math.pi * j / (spec.num_sites * spec.lattice_constant)


def plane_wave_pair(spec: LatticeSpec, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Normalized plane waves on the even and odd sub-lattice at momentum ``p``.

    Phases use the site position ``x_n = n a``.  The odd-site wave carries an
    extra overall minus sign so that the Bloch block has a non-negative
    off-diagonal element (see :func:`bloch_hamiltonian`).
    """
    N = spec.num_sites
    n = np.arange(N)
    phase = np.exp(1j * p * spec.lattice_constant * n) / math.sqrt(N // 2)
    even = np.where(n % 2 == 0, phase, 0.0)
    odd = np.where(n % 2 == 1, -phase, 0.0)
    return even, odd


def bloch_hamiltonian(p, mass: float, hopping: float, lattice_constant: float) -> np.ndarray:
    """2 x 2 momentum block ``[[M, g], [g, -M]]`` with ``g = 2 J cos(a p)``.

    This is the free chain projected on :func:`plane_wave_pair`.
    """
    a = float(lattice_constant)
    _check_zone(p, a)
    M = _check_mass(mass)
    g = 2.0 * float(hopping) * math.cos(a * float(p))
    return np.array([[M, g], [g, -M]])


def bogoliubov_matrix(energy: float, mass: float) -> np.ndarray:
    """Rotation taking the sub-lattice pair ``(a_p, b_p)`` to band modes ``(A_p, B_p)``.

    Returns ``[[sqrt(E+M), sqrt(E-M)], [-sqrt(E-M), sqrt(E+M)]] / sqrt(2E)``.
    Its rows are the upper/lower eigenvectors of ``[[M, g], [g, -M]]`` with
    ``g = sqrt(E^2 - M^2)``.
    """
    E = float(energy)
    M = float(mass)
    if not (math.isfinite(E) and math.isfinite(M)):
        raise DomainError("energy and mass must be finite")
    if M < 0.0:
        raise DomainError(f"mass must be >= 0, got {M}")
    if E <= 0.0 or E < M * (1.0 - 1e-14):
        raise DomainError(f"need energy >= mass > 0 or energy > 0 at M = 0; got E={E}, M={M}")
    E = max(E, M)
    u = math.sqrt(E + M)
    v = math.sqrt(E - M)
    return np.array([[u, v], [-v, u]]) / math.sqrt(2.0 * E)


def _eigh(H: SingleParticleHamiltonian) -> tuple[np.ndarray, np.ndarray]:
    """Raw eigen-decomposition; tridiagonal fast path for open chains."""
    try:
        if H.spec.periodic:
            w, v = np.linalg.eigh(H.matrix)
        else:
            off = np.full(H.num_sites - 1, -H.spec.hopping)
            w, v = scipy.linalg.eigh_tridiagonal(H.onsite, off, lapack_driver="stemr")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(
            f"eigensolver failed for N={H.num_sites}, "
            f"max|V|={np.max(np.abs(H.onsite)):.3g}: {exc}"
        ) from exc
    if not np.all(np.isfinite(w)):
        raise NumericalError("eigensolver returned non-finite eigenvalues")
    return w, v


def _eigvalsh(H: SingleParticleHamiltonian) -> np.ndarray:
    if H.spec.periodic:
        return np.linalg.eigvalsh(H.matrix)
    off = np.full(H.num_sites - 1, -H.spec.hopping)
    return scipy.linalg.eigvalsh_tridiagonal(H.onsite, off)


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Eigen-decomposition of a single-particle Hamiltonian.

    ``energies`` ascend; ``modes[:, k]`` is the eigenvector of ``energies[k]``.
    ``num_negative`` counts eigenvalues below ``-zero_tolerance`` and
    ``num_zero`` those with ``|e| < zero_tolerance``.
    """

    energies: np.ndarray
    modes: np.ndarray
    num_negative: int
    num_zero: int
    zero_tolerance: float
    hamiltonian: SingleParticleHamiltonian

    @property
    def spec(self) -> LatticeSpec:
        return self.hamiltonian.spec

    @property
    def negative_modes(self) -> np.ndarray:
        return self.modes[:, : self.num_negative]

    @property
    def positive_modes(self) -> np.ndarray:
        return self.modes[:, self.num_negative + self.num_zero :]

    @property
    def gapped(self) -> bool:
        return self.num_zero == 0


def _fix_phases(v: np.ndarray) -> np.ndarray:
    # largest-magnitude component of every column made real positive
    idx = np.argmax(np.abs(v), axis=0)
    pivot = v[idx, np.arange(v.shape[1])]
    return v * (np.conj(pivot) / np.abs(pivot))


def _order_degenerate(w: np.ndarray, v: np.ndarray, rtol: float = 1e-10):
    order = np.arange(len(w))
    start = 0
    scale = max(1.0, float(np.max(np.abs(w))))
    while start < len(w):
        stop = start + 1
        while stop < len(w) and w[stop] - w[stop - 1] < rtol * scale:
            stop += 1
        if stop - start > 1:
            block = np.round(v[:, start:stop], 8)
            keys = [block.imag[::-1], block.real[::-1]] if np.iscomplexobj(block) else [block[::-1]]
            # np.lexsort uses the last key as primary: site 0 real part first
            sub = np.lexsort(np.vstack(keys))
            order[start:stop] = start + sub
        start = stop
    return w[order], v[:, order]


def diagonalize(H: SingleParticleHamiltonian) -> ModeBasis:
    """Eigen-decompose ``H`` with a deterministic phase and ordering convention.

    Each eigenvector has its largest-magnitude entry real and positive.
    Exactly degenerate eigenvalues are ordered lexicographically on the
    rounded eigenvector entries.
    """
    w, v = _eigh(H)
    v = _fix_phases(v)
    w, v = _order_degenerate(w, v)
    tol = H.spec.zero_tolerance
    num_negative = int(np.count_nonzero(w <= -tol))
    num_zero = int(np.count_nonzero(np.abs(w) < tol))
    return ModeBasis(w, v, num_negative, num_zero, tol, H)


@dataclass(frozen=True, eq=False)
class SlaterState:
    """Many-fermion Slater determinant given by orthonormal occupied orbitals.

    ``orbitals`` is N x N_f; column k is the k-th occupied orbital in the
    site basis.
    """

    orbitals: np.ndarray
    spec: LatticeSpec
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        orb = np.asarray(self.orbitals, dtype=complex)
        if orb.ndim == 1:
            orb = orb[:, None]
        if orb.ndim != 2 or orb.shape[0] != self.spec.num_sites:
            raise DimensionError(
                f"orbitals must be {self.spec.num_sites} x N_f, got shape {orb.shape}"
            )
        if orb.shape[1] > orb.shape[0]:
            raise ValidationError("more fermions than sites")
        if self.check:
            drift = orthonormality_drift(orb)
            if drift > 1e-9:
                raise ValidationError(f"orbitals are not orthonormal (drift {drift:.2e})")
        object.__setattr__(self, "orbitals", orb)

    @property
    def num_fermions(self) -> int:
        return self.orbitals.shape[1]

    def energy(self, H: SingleParticleHamiltonian) -> float:
        """Expectation value of ``H`` (sum of orbital energies)."""
        return float(np.real(np.sum(self.orbitals.conj() * (H.matrix @ self.orbitals))))


def orthonormality_drift(orbitals: np.ndarray) -> float:
    """``max |O^dag O - 1|`` for the orbital matrix ``O``."""
    gram = orbitals.conj().T @ orbitals
    return float(np.max(np.abs(gram - np.eye(gram.shape[0])))) if gram.size else 0.0


def dirac_sea(basis: ModeBasis) -> SlaterState:
    """Fill every negative-energy mode of ``basis``.

    Raises
    ------
    AmbiguousVacuumError
        If any eigenvalue lies inside the zero-mode band.
    """
    if basis.num_zero:
        raise AmbiguousVacuumError(
            f"{basis.num_zero} eigenvalue(s) within {basis.zero_tolerance:.1e} of zero; "
            "the vacuum is not unique"
        )
    return SlaterState(basis.negative_modes.astype(complex), basis.spec)
