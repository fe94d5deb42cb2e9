"""The 4x4 effective spin Hamiltonian for S = 1/2, I = 1/2 centers.

H = sum_kl A_kl I_k S_l + mu_B sum_kl B_k g_kl S_l - mu_n g_n sum_k B_k I_k

with A in GHz, B in mT (crystal frame D1, D2, b) and spin operators built
from Pauli matrices / 2.  The product basis is {|uu>, |ud>, |du>, |dd>}
(electron x nucleus), quantized along the crystal b axis.

Energies are in GHz throughout; magnetons are in GHz/T and converted to
GHz/mT internally.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .tensors import CRYSTAL, SymmetricTensor3, subsite_transform

# CODATA-derived magneton frequencies; the spin Hamiltonian only fixes
# mu_B ~ 14 GHz/T, the precise values are configurable per SpinSystem.
MU_B_GHZ_PER_T = 13.996245
MU_N_GHZ_PER_T = 7.6225932e-3
G_N_DEFAULT = 0.987

DEGENERACY_GAP_GHZ = 1e-6

_SIGMA_HALF = (
    np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex),
    np.array([[0.0, -0.5j], [0.5j, 0.0]], dtype=complex),
    np.array([[0.5, 0.0], [0.0, -0.5]], dtype=complex),
)
_ID2 = np.eye(2, dtype=complex)

# electron (S) and nuclear (I) spin operators on the 4-dim product space
S_OPS = tuple(np.kron(s, _ID2) for s in _SIGMA_HALF)
I_OPS = tuple(np.kron(_ID2, s) for s in _SIGMA_HALF)


def physical_constants() -> tuple[float, float]:
    """Default (mu_B, mu_n) in GHz/T."""
    return (MU_B_GHZ_PER_T, MU_N_GHZ_PER_T)


@dataclass(frozen=True)
class SpinSystem:
    """One electronic state (ground or excited) of one magnetic subsite.

    ``A`` (GHz) and ``g`` (dimensionless) are crystal-frame tensors of this
    subsite; ``with_subsite(2)`` applies the C2-about-b conjugation to a
    subsite-1 system.  The nuclear Zeeman coupling is isotropic.
    """

    A: SymmetricTensor3
    g: SymmetricTensor3
    g_n: float = G_N_DEFAULT
    subsite: int = 1
    mu_b: float = MU_B_GHZ_PER_T
    mu_n: float = MU_N_GHZ_PER_T

    def __post_init__(self):
        if self.A.frame != CRYSTAL or self.g.frame != CRYSTAL:
            raise ValueError("SpinSystem tensors must be in the crystal frame")
        if self.subsite not in (1, 2):
            raise ValueError("subsite must be 1 or 2")

    def with_subsite(self, subsite: int) -> "SpinSystem":
        if subsite == self.subsite:
            return self
        return replace(
            self,
            A=subsite_transform(self.A),
            g=subsite_transform(self.g),
            subsite=subsite,
        )


def as_field(B) -> np.ndarray:
    """Validate a field vector (B_D1, B_D2, B_b) in mT."""
    b = np.asarray(B, dtype=float).reshape(3)
    if not np.all(np.isfinite(b)):
        raise ValueError("field components must be finite")
    return b


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Sorted energies (GHz) and eigenvectors in the product basis.

    ``states[:, n]`` is the n-th eigenvector; columns are orthonormal and
    phase-fixed (largest-magnitude component real positive).
    """

    energies: np.ndarray
    states: np.ndarray

    def degenerate_groups(self, gap_ghz: float = DEGENERACY_GAP_GHZ) -> list[list[int]]:
        """Group level indices whose consecutive spacing is below ``gap_ghz``."""
        groups: list[list[int]] = [[0]]
        for n in range(1, len(self.energies)):
            if self.energies[n] - self.energies[n - 1] < gap_ghz:
                groups[-1].append(n)
            else:
                groups.append([n])
        return groups


def build_hamiltonian(sys: SpinSystem, B) -> np.ndarray:
    """Assemble the 4x4 Hamiltonian (GHz) at a field B (mT, crystal frame)."""
    return hamiltonian_batch(sys, as_field(B)[None, :])[0]


def hamiltonian_batch(sys: SpinSystem, fields: np.ndarray) -> np.ndarray:
    """Hamiltonians for a stack of field vectors, shape (N, 3) mT -> (N, 4, 4)."""
    fields = np.asarray(fields, dtype=float)
    A = sys.A.matrix
    g = sys.g.matrix

    h_hf = sum(A[k, l] * (I_OPS[k] @ S_OPS[l]) for k in range(3) for l in range(3))

    # effective electron field b_eff_l = sum_k B_k g_kl; magnetons GHz/T -> GHz/mT
    s_stack = np.stack(S_OPS)
    i_stack = np.stack(I_OPS)
    h_el = np.einsum("nl,lab->nab", (fields @ g) * (sys.mu_b * 1e-3), s_stack)
    h_nuc = np.einsum("nk,kab->nab", fields * (sys.mu_n * 1e-3 * sys.g_n), i_stack)
    return h_hf[None, :, :] + h_el - h_nuc


def diagonalize(H: np.ndarray) -> EigenSystem:
    """Solve a Hermitian 4x4 matrix; rejects non-Hermitian input beyond 1e-10."""
    H = np.asarray(H, dtype=complex)
    scale = max(np.abs(H).max(), 1e-30)
    if np.abs(H - H.conj().T).max() > 1e-10 * scale:
        raise ValueError("matrix is not Hermitian within 1e-10")
    w, v = np.linalg.eigh(H)
    for n in range(v.shape[1]):
        k = np.argmax(np.abs(v[:, n]))
        phase = v[k, n] / abs(v[k, n])
        v[:, n] = v[:, n] / phase
    w = w.copy()
    w.setflags(write=False)
    v.setflags(write=False)
    return EigenSystem(energies=w, states=v)


def eigensystem(sys: SpinSystem, B) -> EigenSystem:
    return diagonalize(build_hamiltonian(sys, B))


def energies_sweep(sys: SpinSystem, fields: np.ndarray) -> np.ndarray:
    """Eigenvalues along a stack of fields, shape (N, 3) -> (N, 4), ascending."""
    return np.linalg.eigvalsh(hamiltonian_batch(sys, fields))


@dataclass(frozen=True)
class ZeroFieldLevels:
    """The four analytic zero-field energies, tagged by their +/- branch.

    Branch order: (-A3 - (A1+A2), -A3 + (A1+A2), A3 - (A1-A2), A3 + (A1-A2)),
    each divided by 4.
    """

    energies: tuple[float, float, float, float]

    BRANCHES = ("-A3-(A1+A2)", "-A3+(A1+A2)", "A3-(A1-A2)", "A3+(A1-A2)")

    def sorted(self) -> np.ndarray:
        return np.sort(np.asarray(self.energies))


def zero_field_levels(a1: float, a2: float, a3: float) -> ZeroFieldLevels:
    """Closed-form B = 0 energies from the hyperfine eigenvalues (GHz)."""
    s, d = a1 + a2, a1 - a2
    return ZeroFieldLevels(
        (0.25 * (-a3 - s), 0.25 * (-a3 + s), 0.25 * (a3 - d), 0.25 * (a3 + d))
    )


def invert_zero_field(levels) -> tuple[float, float, float]:
    """Recover (|A1|, |A2|, |A3|) from four sorted zero-field energies.

    Uses |A1+A2| = 2(E2-E1), |A2-A1| = 2(E4-E3) and
    |A3| = (E3+E4) - (E1+E2), resolved so that |A3| >= |A2| >= |A1|.
    """
    e = np.asarray(levels, dtype=float).reshape(4)
    scale = max(np.abs(e).max(), 1e-30)
    if np.any(np.diff(e) < -1e-12 * scale):
        raise ValueError("levels must be sorted ascending")
    if abs(e.sum()) > 1e-6 * scale:
        raise ValueError(f"levels must sum to ~0 (got {e.sum():g})")
    d1 = e[1] - e[0]
    d3 = e[3] - e[2]
    a3 = (e[2] + e[3]) - (e[0] + e[1])
    a2 = d1 + d3
    a1 = abs(d1 - d3)
    if a3 < 0 or a2 < 0:
        raise ValueError("inconsistent level set: negative magnitudes")
    return (a1, a2, a3)


@dataclass(frozen=True)
class TransitionEntry:
    lower: int
    upper: int
    frequency_ghz: float
    field_mt: tuple[float, float, float]


@dataclass(frozen=True)
class TransitionTable:
    """All six pairwise level differences, labeled by ascending level index."""

    entries: tuple[TransitionEntry, ...]

    def frequencies(self) -> np.ndarray:
        return np.array([t.frequency_ghz for t in self.entries])

    def frequency(self, lower: int, upper: int) -> float:
        for t in self.entries:
            if (t.lower, t.upper) == (lower, upper):
                return t.frequency_ghz
        raise KeyError((lower, upper))


def transition_frequencies(es: EigenSystem, B=(0.0, 0.0, 0.0)) -> TransitionTable:
    b = tuple(as_field(B))
    e = es.energies
    entries = tuple(
        TransitionEntry(i, j, float(e[j] - e[i]), b)
        for i in range(4)
        for j in range(i + 1, 4)
    )
    return TransitionTable(entries)


def spin_half_states(axis=None) -> tuple[np.ndarray, np.ndarray]:
    """(up, down) spinors quantized along ``axis`` (default: crystal b = z)."""
    if axis is None:
        return (np.array([1.0, 0.0], dtype=complex), np.array([0.0, 1.0], dtype=complex))
    n = np.asarray(axis, dtype=float).reshape(3)
    norm = np.linalg.norm(n)
    if norm == 0:
        raise ValueError("quantization axis must be nonzero")
    n = n / norm
    theta = np.arccos(np.clip(n[2], -1.0, 1.0))
    phi = np.arctan2(n[1], n[0])
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    up = np.array([c, s * np.exp(1j * phi)], dtype=complex)
    down = np.array([-s * np.exp(-1j * phi), c], dtype=complex)
    return (up, down)


def product_basis(electron_axis=None, nuclear_axis=None) -> np.ndarray:
    """Columns = |e +/-> x |n +/-> product states, order (uu, ud, du, dd)."""
    eu, ed = spin_half_states(electron_axis)
    nu, nd = spin_half_states(nuclear_axis)
    cols = [np.kron(a, b) for a in (eu, ed) for b in (nu, nd)]
    return np.column_stack(cols)


def basis_overlaps(es: EigenSystem, electron_axis=None, nuclear_axis=None) -> np.ndarray:
    """|<basis_k|state_n>|^2; column n sums to 1.

    The default basis is quantized along the crystal b axis for both spins;
    pass explicit axes (e.g. the field-adapted electron axis g^T B-hat and
    nuclear axis A e-hat) to reproduce avoided-crossing overlap plots.
    """
    basis = product_basis(electron_axis, nuclear_axis)
    return np.abs(basis.conj().T @ es.states) ** 2


def zeeman_hamiltonian_derivatives(sys: SpinSystem) -> np.ndarray:
    """dH/dB_k for the three Cartesian components, shape (3, 4, 4), GHz/mT."""
    g = sys.g.matrix
    s_stack = np.stack(S_OPS)
    d = np.einsum("kl,lab->kab", g * (sys.mu_b * 1e-3), s_stack)
    d -= (sys.mu_n * 1e-3 * sys.g_n) * np.stack(I_OPS)
    return d


def zeeman_gradient(sys: SpinSystem, B, i: int, j: int) -> np.ndarray:
    """Hellmann-Feynman gradient of the (i, j) transition, GHz/mT.

    Valid only when both levels are separated from their neighbours by more
    than the degeneracy threshold; otherwise a ValueError points the caller
    to a finite-difference fallback.
    """
    es = eigensystem(sys, B)
    e = es.energies
    for level in (i, j):
        for other in range(4):
            if other != level and abs(e[other] - e[level]) < DEGENERACY_GAP_GHZ:
                raise ValueError(
                    f"levels {level} and {other} are degenerate at this field; "
                    "use finite differences instead of Hellmann-Feynman"
                )
    dh = zeeman_hamiltonian_derivatives(sys)
    vi, vj = es.states[:, i], es.states[:, j]
    grad = np.array(
        [(vj.conj() @ dh[k] @ vj - vi.conj() @ dh[k] @ vi).real for k in range(3)]
    )
    return grad
