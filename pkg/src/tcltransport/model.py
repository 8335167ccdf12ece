"""Anisotropic spin lattice restricted to the single-excitation subspace.

The lattice has extents ``(Lx, Ly, Lz)``. Spins along ``x`` are coupled by a
Heisenberg interaction; spins are coupled randomly along ``y``, along ``z``
and across the diagonals of each ``x``-``y`` plane. Because every coupling
conserves the number of excitations, all operators live on the
``M = Lx * Ly * Lz`` dimensional sector with exactly one excited spin, whose
basis state ``j`` is "spin ``j`` excited".

Site ordering is ``site = x + Lx * (y + Ly * z)``. Subunits (layers of ``n``
spins) are indexed ``0 .. N-1`` along the partition direction.

Energies are in units of the local splitting and ``hbar = 1``.
"""

from __future__ import annotations

import configparser
import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .exceptions import ConfigError, DimensionError

DEFAULT_MAX_DIMENSION = 50_000

# Pauli matrices in the (ground, excited) local basis.
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)  # ground -> excited
SIGMA_MINUS = SIGMA_PLUS.T.copy()

HEISENBERG_BOND = (np.kron(SIGMA_X, SIGMA_X) + np.kron(SIGMA_Y, SIGMA_Y)
                   + np.kron(SIGMA_Z, SIGMA_Z))


class Direction(str, enum.Enum):
    X = "x"
    Z = "z"


class Topology(str, enum.Enum):
    """How the random couplings inside a subunit are drawn.

    ``GEOMETRIC`` puts independent complex Gaussian hoppings on the lattice
    bonds. ``DENSE_BAND`` replaces each intra-subunit random block by a dense
    GUE block of unit mean-square off-diagonal elements; inter-subunit
    couplings stay geometric.
    """

    GEOMETRIC = "geometric"
    DENSE_BAND = "dense_band"


class WeakCouplingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    Lx: int
    Ly: int
    Lz: int
    partition: Direction = Direction.Z

    def __post_init__(self):
        for name in ("Lx", "Ly", "Lz"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        try:
            object.__setattr__(self, "partition", Direction(self.partition))
        except ValueError:
            raise ConfigError(f"unknown partition direction {self.partition!r}") from None
        if self.M < 2:
            raise ConfigError("the lattice needs at least two sites")

    @property
    def M(self) -> int:
        return self.Lx * self.Ly * self.Lz

    @property
    def N(self) -> int:
        """Number of subunits."""
        return self.Lz if self.partition is Direction.Z else self.Lx

    @property
    def n(self) -> int:
        """Sites per subunit."""
        return self.M // self.N

    def site(self, x, y, z):
        return x + self.Lx * (y + self.Ly * z)

    def coordinates(self):
        """Return integer arrays ``(x, y, z)`` indexed by site."""
        idx = np.arange(self.M)
        return idx % self.Lx, (idx // self.Lx) % self.Ly, idx // (self.Lx * self.Ly)

    def subunit_labels(self) -> np.ndarray:
        x, _, z = self.coordinates()
        return z if self.partition is Direction.Z else x

    def subunits(self) -> list[np.ndarray]:
        labels = self.subunit_labels()
        return [np.flatnonzero(labels == mu) for mu in range(self.N)]

    def with_partition(self, partition) -> "LatticeSpec":
        return LatticeSpec(self.Lx, self.Ly, self.Lz, Direction(partition))


@dataclass(frozen=True)
class ModelParams:
    lambda_H: float
    lambda_R: float
    seed: int = 0
    delta_E: float = 1.0
    topology: Topology = Topology.GEOMETRIC

    def __post_init__(self):
        for name in ("lambda_H", "lambda_R", "delta_E"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be finite and non-negative, got {value!r}")
            object.__setattr__(self, name, value)
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))
        try:
            object.__setattr__(self, "topology", Topology(self.topology))
        except ValueError:
            raise ConfigError(f"unknown random topology {self.topology!r}") from None
        if self.lambda_R >= self.lambda_H or self.lambda_H >= self.delta_E:
            warnings.warn(
                f"couplings outside the weak coupling ordering lambda_R << lambda_H << delta_E "
                f"(lambda_R={self.lambda_R}, lambda_H={self.lambda_H}, delta_E={self.delta_E})",
                WeakCouplingWarning, stacklevel=3)

    @property
    def hbar(self) -> float:
        return 1.0


# ---------------------------------------------------------------------------
# literal restriction of few-site operators to the one-excitation sector


def restrict_onsite(M: int, op: np.ndarray) -> sp.csr_matrix:
    """Restrict ``sum_i op^(i)`` to the single-excitation sector of ``M`` spins."""
    op = np.asarray(op, dtype=complex)
    if abs(op[0, 1]) > 0 or abs(op[1, 0]) > 0:
        raise ValueError("on-site operator does not conserve the excitation number")
    # spin j carries op[1,1]; the other M-1 spins sit in the ground state
    diag = np.full(M, op[1, 1] + (M - 1) * op[0, 0])
    return sp.diags(diag, format="csr")


def restrict_bonds(M: int, bonds: np.ndarray, op: np.ndarray) -> sp.csr_matrix:
    """Restrict ``sum_(a,b) op^(a,b)`` to the single-excitation sector.

    ``op`` is a 4x4 two-site operator in the basis ``|s_a s_b>`` with local
    index 0 = ground and 1 = excited (two-site index ``2*s_a + s_b``). Terms
    that would leave the sector must vanish.
    """
    op = np.asarray(op, dtype=complex)
    leaking = [op[0, 1], op[0, 2], op[1, 0], op[2, 0]] + list(op[3, :3]) + list(op[:3, 3])
    if np.max(np.abs(leaking)) > 1e-14:
        raise ValueError("two-site operator does not conserve the excitation number")
    bonds = np.asarray(bonds, dtype=np.int64).reshape(-1, 2)
    a, b = bonds[:, 0], bonds[:, 1]
    diag = np.full(M, len(bonds) * op[0, 0])  # both spins of every bond in the ground state
    np.add.at(diag, a, op[2, 2] - op[0, 0])
    np.add.at(diag, b, op[1, 1] - op[0, 0])
    rows = np.concatenate([np.arange(M), b, a])
    cols = np.concatenate([np.arange(M), a, b])
    vals = np.concatenate([diag, np.full(len(a), op[1, 2]), np.full(len(a), op[2, 1])])
    return sp.csr_matrix((vals, (rows, cols)), shape=(M, M))


def heisenberg_bonds(spec: LatticeSpec) -> np.ndarray:
    x, y, z = spec.coordinates()
    sites = np.flatnonzero(x < spec.Lx - 1)
    return np.column_stack([sites, sites + 1])


def random_bonds(spec: LatticeSpec) -> np.ndarray:
    """Bonds carrying random couplings, in a fixed enumeration order.

    ``y`` neighbours, ``z`` neighbours, then both diagonals of every
    plaquette in the ``x``-``y`` planes.
    """
    x, y, z = spec.coordinates()
    Lx, Ly = spec.Lx, spec.Ly
    groups = []
    s = np.flatnonzero(y < Ly - 1)
    groups.append(np.column_stack([s, s + Lx]))
    s = np.flatnonzero(z < spec.Lz - 1)
    groups.append(np.column_stack([s, s + Lx * Ly]))
    s = np.flatnonzero((x < Lx - 1) & (y < Ly - 1))
    groups.append(np.column_stack([s, s + 1 + Lx]))
    groups.append(np.column_stack([s + 1, s + Lx]))
    bonds = np.concatenate(groups) if groups else np.empty((0, 2), dtype=np.int64)
    return bonds.astype(np.int64)


# ---------------------------------------------------------------------------


def eta(V) -> float:
    """Coupling strength ``sqrt(tr V^dagger V) / d`` of a ``d x d`` block."""
    V = V.toarray() if sp.issparse(V) else np.asarray(V)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ValueError("eta is defined for square blocks")
    return float(np.sqrt(np.sum(np.abs(V) ** 2)) / V.shape[0])


@dataclass(frozen=True, eq=False)
class HamiltonianSet:
    """Operators of the model on the single-excitation sector.

    ``H_loc``, ``H_H`` and ``H_R`` are the bare operators; the full
    Hamiltonian is ``H_loc + lambda_H * H_H + lambda_R * H_R``. ``H_R`` is
    normalised so that every block coupling adjacent subunits has
    ``eta = 1``.
    """

    spec: LatticeSpec
    params: ModelParams
    H_loc: sp.csr_matrix
    H_H: sp.csr_matrix
    H_R: sp.csr_matrix
    subunits: list = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.H_loc.shape[0]

    @property
    def N(self) -> int:
        return len(self.subunits)

    @property
    def n(self) -> int:
        return len(self.subunits[0])

    def total(self) -> sp.csr_matrix:
        p = self.params
        return (self.H_loc + p.lambda_H * self.H_H + p.lambda_R * self.H_R).tocsr()

    def local_part(self, labels=None, include_random: bool = True) -> sp.csr_matrix:
        """Sum of all terms acting inside a single subunit.

        The splitting, Heisenberg bonds with both spins in one subunit and
        random couplings within a subunit. ``labels`` overrides the subunit
        label of every site (defaults to the lattice partition).
        """
        labels = self.spec.subunit_labels() if labels is None else np.asarray(labels)
        bonds = heisenberg_bonds(self.spec)
        intra = bonds[labels[bonds[:, 0]] == labels[bonds[:, 1]]]
        H_H_intra = restrict_bonds(self.dimension, intra, HEISENBERG_BOND)
        R = self.H_R.tocoo()
        same = labels[R.row] == labels[R.col]
        R_intra = sp.csr_matrix((R.data[same], (R.row[same], R.col[same])), shape=R.shape)
        p = self.params
        out = self.H_loc + p.lambda_H * H_H_intra
        if include_random:
            out = out + p.lambda_R * R_intra
        return out.tocsr()

    def interaction_part(self, labels=None) -> sp.csr_matrix:
        return (self.total() - self.local_part(labels)).tocsr()

    def _block(self, op, mu, nu):
        rows, cols = self.subunits[mu], self.subunits[nu]
        return op[rows][:, cols].toarray()

    def local_block(self, mu: int) -> np.ndarray:
        """``H_L(mu)``: local terms of subunit ``mu``."""
        return self._block(self.local_part(), mu, mu)

    def coupling_block(self, mu: int) -> np.ndarray:
        """``H_I(mu, mu+1)``: interaction between adjacent subunits."""
        return self._block(self.interaction_part(), mu, mu + 1)

    def random_block(self, mu: int) -> np.ndarray:
        """Bare random coupling ``V`` between subunits ``mu`` and ``mu + 1``."""
        return self._block(self.H_R, mu, mu + 1)

    def heisenberg_block(self, mu: int, nu: int) -> np.ndarray:
        return self._block(self.H_H, mu, nu)

    def eta(self, mu: int) -> float:
        return eta(self.random_block(mu))


def _complex_normal(rng, size):
    # unit mean-square modulus, real and imaginary parts i.i.d.
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def build_hamiltonians(spec: LatticeSpec, params: ModelParams, *,
                       max_dimension: int = DEFAULT_MAX_DIMENSION) -> HamiltonianSet:
    """Assemble ``H_loc``, ``H_H`` and ``H_R`` for one seeded instance."""
    from .randmat import sample_gue

    M = spec.M
    if M > max_dimension:
        raise DimensionError(f"dimension {M} exceeds the cap {max_dimension}")

    H_loc = restrict_onsite(M, params.delta_E / 2 * SIGMA_Z)
    H_H = restrict_bonds(M, heisenberg_bonds(spec), HEISENBERG_BOND)

    seq = np.random.SeedSequence(params.seed)
    bond_seq, block_seq = seq.spawn(2)
    bonds = random_bonds(spec)
    amps = _complex_normal(np.random.default_rng(bond_seq), len(bonds))

    labels = spec.subunit_labels()
    la, lb = labels[bonds[:, 0]], labels[bonds[:, 1]]
    inter = la != lb
    if np.any(np.abs(la - lb) > 1):
        raise AssertionError("random bond skips a subunit")
    lower = np.minimum(la, lb)

    # Common scale from the mean inter-subunit block weight, then each block
    # is normalised exactly.
    weights = np.array([np.sum(np.abs(amps[inter & (lower == mu)]) ** 2)
                        for mu in range(spec.N - 1)])
    n = spec.n
    if weights.size and np.all(weights > 0):
        amps = amps * (n / np.sqrt(weights.mean()))
        for mu in range(spec.N - 1):
            sel = inter & (lower == mu)
            amps[sel] *= n / np.sqrt(np.sum(np.abs(amps[sel]) ** 2))
    else:
        # no random bond crosses a subunit boundary: one bond per site
        # would give eta = 1, so use that element scale
        amps = amps * np.sqrt(n)

    keep = np.ones(len(bonds), dtype=bool)
    if params.topology is Topology.DENSE_BAND:
        keep = inter
    a, b, c = bonds[keep, 0], bonds[keep, 1], amps[keep]
    rows = [b, a]
    cols = [a, b]
    vals = [c, np.conj(c)]
    if params.topology is Topology.DENSE_BAND:
        for mu, (sites, child) in enumerate(zip(spec.subunits(), block_seq.spawn(spec.N))):
            block = sample_gue(n, 0.5, child) if n >= 2 else np.zeros((1, 1))
            r, q = np.meshgrid(sites, sites, indexing="ij")
            rows.append(r.ravel())
            cols.append(q.ravel())
            vals.append(block.ravel())
    H_R = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(M, M), dtype=complex)
    return HamiltonianSet(spec, params, H_loc, H_H, H_R, spec.subunits())


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Partition:
    """Subunits with the eigenbasis of their local Hamiltonians.

    ``band_states[mu]`` holds the eigenvectors of ``H_L(mu)`` as columns, in
    the coordinates of ``subunits[mu]``; ``band_energies[mu]`` is ascending.
    """

    hamiltonians: HamiltonianSet
    subunits: list
    band_energies: list
    band_states: list

    @property
    def N(self) -> int:
        return len(self.subunits)

    @property
    def n(self) -> int:
        return len(self.subunits[0])

    @property
    def dimension(self) -> int:
        return self.hamiltonians.dimension

    def band_width(self, mu: int) -> float:
        e = self.band_energies[mu]
        return float(e[-1] - e[0])

    def embed(self, mu: int, coefficients) -> np.ndarray:
        """Map band-basis coefficients of subunit ``mu`` to a full state."""
        psi = np.zeros(self.dimension, dtype=complex)
        psi[self.subunits[mu]] = self.band_states[mu] @ np.asarray(coefficients)
        return psi

    def projector(self, mu: int) -> sp.csr_matrix:
        """``Pi_mu = sum_k |k_mu><k_mu|`` on the full sector."""
        U = self.band_states[mu]
        sites = self.subunits[mu]
        block = U @ U.conj().T
        r, c = np.meshgrid(sites, sites, indexing="ij")
        P = sp.csr_matrix((block.ravel(), (r.ravel(), c.ravel())),
                          shape=(self.dimension, self.dimension))
        P.eliminate_zeros()
        return P

    def band_coupling(self, mu: int, coupling=None) -> np.ndarray:
        """``<k_mu|V|l_(mu+1)>`` for the random block (or a given ``coupling``)."""
        V = self.hamiltonians.random_block(mu) if coupling is None else np.asarray(coupling)
        return self.band_states[mu].conj().T @ V @ self.band_states[mu + 1]


def canonicalize_columns(U: np.ndarray) -> np.ndarray:
    """Fix eigenvector phases: largest-magnitude entry made real positive."""
    U = np.array(U, dtype=complex)
    pivot = np.argmax(np.abs(U) > np.abs(U).max(axis=0) * (1 - 1e-12), axis=0)
    ph = U[pivot, np.arange(U.shape[1])]
    U *= (np.abs(ph) / ph)[None, :]
    return U


def partition_model(h: HamiltonianSet, spec: LatticeSpec | None = None) -> Partition:
    if spec is not None and spec != h.spec:
        raise ConfigError("lattice spec does not match the Hamiltonian set")
    energies, states = [], []
    local = h.local_part()
    for mu in range(h.N):
        e, U = np.linalg.eigh(h._block(local, mu, mu))
        energies.append(e)
        states.append(canonicalize_columns(U))
    return Partition(h, list(h.subunits), energies, states)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CommutatorReport:
    norm_HH_HL: float
    norm_HH_HR: float
    norm_HH: float

    @property
    def relative(self) -> tuple[float, float]:
        if self.norm_HH == 0:
            return 0.0, 0.0
        return self.norm_HH_HL / self.norm_HH, self.norm_HH_HR / self.norm_HH

    def passes(self, tol: float = 1e-10) -> bool:
        return max(self.relative) <= tol


def operator_norm(A) -> float:
    """Spectral norm of a normal (Hermitian or anti-Hermitian) operator."""
    A = sp.csr_matrix(A)
    if A.nnz == 0:
        return 0.0
    d = A.shape[0]
    if d <= 2500:
        return float(np.max(np.abs(np.linalg.eigvals(A.toarray()))))
    herm = A if abs(A - A.getH()).max() == 0 else 1j * A
    return float(abs(eigsh(herm, k=1, which="LM", return_eigenvectors=False)[0]))


def commutator_check(h: HamiltonianSet) -> CommutatorReport:
    """Norms of ``[H_H, H_L]`` and ``[H_H, H_R]`` for the x-direction split.

    ``H_L`` is the local part of the partition along ``x`` (splitting plus
    random couplings inside each ``x`` plane); all operators carry their
    coupling constants.
    """
    p = h.params
    x, _, _ = h.spec.coordinates()
    HH = p.lambda_H * h.H_H
    HL = h.local_part(labels=x)
    HR = p.lambda_R * h.H_R
    return CommutatorReport(operator_norm(HH @ HL - HL @ HH),
                            operator_norm(HH @ HR - HR @ HH),
                            operator_norm(HH))


# ---------------------------------------------------------------------------
# full 2^M representation, for spot checks on small lattices


def full_space_hamiltonian(h: HamiltonianSet) -> sp.csr_matrix:
    """The same model on the full ``2^M`` space (``M <= 12``).

    Spin ``j`` is tensor factor ``j`` (most significant first). Used to check
    excitation-number conservation and the single-excitation restriction.
    """
    M = h.dimension
    if M > 12:
        raise DimensionError("full-space construction is limited to M <= 12")
    p = h.params
    eye = sp.identity(2, format="csr", dtype=complex)

    def embed(ops):
        out = sp.identity(1, format="csr", dtype=complex)
        for j in range(M):
            out = sp.kron(out, ops.get(j, eye), format="csr")
        return out

    H = sp.csr_matrix((2**M, 2**M), dtype=complex)
    for j in range(M):
        H = H + p.delta_E / 2 * embed({j: SIGMA_Z})
    for a, b in heisenberg_bonds(h.spec):
        for s in (SIGMA_X, SIGMA_Y, SIGMA_Z):
            H = H + p.lambda_H * embed({a: s, b: s})
    R = sp.triu(h.H_R, k=1).tocoo()
    for a, b, c in zip(R.row, R.col, R.data):
        # c |a excited><b excited| + h.c.
        hop = embed({a: SIGMA_PLUS, b: SIGMA_MINUS})
        H = H + p.lambda_R * (c * hop + np.conj(c) * hop.getH())
    diag = h.H_R.diagonal()
    for j in np.flatnonzero(diag):
        H = H + p.lambda_R * diag[j].real * embed({j: (SIGMA_Z + np.eye(2)) / 2})
    return H.tocsr()


def single_excitation_indices(M: int) -> np.ndarray:
    """Full-space basis index of "spin j excited" for j = 0..M-1."""
    return np.array([1 << (M - 1 - j) for j in range(M)])


# ---------------------------------------------------------------------------
# text formats


def write_triplets(path, op) -> None:
    """Dump a sparse operator as ``row col re im`` lines."""
    coo = sp.coo_matrix(op)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# {op.shape[0]} {op.shape[1]}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def read_triplets(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        shape = (int(header[1]), int(header[2]))
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape, dtype=complex)
    return sp.csr_matrix((data[:, 2] + 1j * data[:, 3],
                          (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)


LATTICE_KEYS = {"Lx", "Ly", "Lz", "partition"}
MODEL_KEYS = {"lambda_H", "lambda_R", "seed", "delta_E", "topology"}


def load_model_config(path) -> tuple[LatticeSpec, ModelParams]:
    """Read ``[lattice]`` and ``[model]`` sections of a ``key = value`` file."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string(text)
    for section, allowed in (("lattice", LATTICE_KEYS), ("model", MODEL_KEYS)):
        if section not in parser:
            raise ConfigError(f"missing [{section}] section in {path}")
        unknown = set(parser[section]) - allowed
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    lat, mod = parser["lattice"], parser["model"]
    try:
        spec = LatticeSpec(int(lat["Lx"]), int(lat["Ly"]), int(lat["Lz"]),
                           lat.get("partition", "z"))
        params = ModelParams(float(mod["lambda_H"]), float(mod["lambda_R"]),
                             int(mod.get("seed", "0")), float(mod.get("delta_E", "1.0")),
                             mod.get("topology", "geometric"))
    except KeyError as exc:
        raise ConfigError(f"missing key {exc.args[0]!r} in {path}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return spec, params
