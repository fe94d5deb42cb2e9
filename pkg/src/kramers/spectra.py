"""Optical-hyperfine line positions, inhomogeneous absorption profiles and
the level-ordering (sign-class) search.

Both manifolds of the effective Hamiltonian are traceless, so line (i, j)
sits at detuning Ee_j - Eg_i from the optical center; the 16 lines of one
site span the sum of the two extreme zero-field splittings.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .hamiltonian import SpinSystem, eigensystem, zero_field_levels
from .tensors import PrincipalTensor, assemble_tensor, decompose_tensor

INTENSITY_MODELS = ("overlap", "uniform")


def flip_sign_class(values) -> tuple[float, float, float]:
    """Toggle the level-ordering class of a principal-value triple.

    Flipping any single eigenvalue sign switches the ordering class;
    simultaneous sign changes of two elements do not alter the order, so
    flipping the first value is a canonical representative of the toggle.
    """
    v = tuple(float(x) for x in values)
    return (-v[0], v[1], v[2])


def _with_values(sys: SpinSystem, values) -> SpinSystem:
    p = decompose_tensor(sys.A)
    return replace(sys, A=assemble_tensor(PrincipalTensor(tuple(values), p.orientation)))


@dataclass(frozen=True)
class SiteModel:
    """Ground + excited spin systems of one site plus its optical metadata.

    ``ordering`` is the sign-class pair (ground, excited) currently applied
    relative to the stored tensor signs; presets carry (1, 1).
    """

    ground: SpinSystem
    excited: SpinSystem
    center_nm: float
    fwhm_mhz: float
    ordering: tuple[int, int] = (1, 1)
    label: str = ""

    def __post_init__(self):
        if self.fwhm_mhz <= 0:
            raise ValueError("inhomogeneous FWHM must be positive")
        if tuple(self.ordering) not in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            raise ValueError("ordering must be a pair of +/-1 sign classes")

    def with_ordering(self, ordering: tuple[int, int]) -> "SiteModel":
        """Re-sign the A tensors to realize another ordering class pair."""
        cg, ce = ordering
        ground, excited = self.ground, self.excited
        if cg != self.ordering[0]:
            ground = _with_values(ground, flip_sign_class(decompose_tensor(ground.A).values))
        if ce != self.ordering[1]:
            excited = _with_values(excited, flip_sign_class(decompose_tensor(excited.A).values))
        return replace(self, ground=ground, excited=excited, ordering=(cg, ce))

    def with_subsite(self, subsite: int) -> "SiteModel":
        return replace(
            self,
            ground=self.ground.with_subsite(subsite),
            excited=self.excited.with_subsite(subsite),
        )


@dataclass(frozen=True)
class OpticalLine:
    ground_level: int
    excited_level: int
    detuning_ghz: float
    strength: float


def optical_lines(site: SiteModel, B=(0.0, 0.0, 0.0), intensity_model: str = "overlap") -> list[OpticalLine]:
    """The 16 optical-hyperfine lines at a field, strengths normalized to max 1.

    The default intensity is the squared spin overlap |<psi_e|psi_g>|^2
    (frozen-orbital approximation); "uniform" assigns every line strength 1,
    which is sufficient for all position-based analyses.
    """
    if intensity_model not in INTENSITY_MODELS:
        raise ValueError(f"unknown intensity model {intensity_model!r}")
    es_g = eigensystem(site.ground, B)
    es_e = eigensystem(site.excited, B)
    if intensity_model == "overlap":
        raw = np.abs(es_e.states.conj().T @ es_g.states) ** 2  # [j, i]
        raw = raw / raw.max()
    else:
        raw = np.ones((4, 4))
    lines = [
        OpticalLine(i, j, float(es_e.energies[j] - es_g.energies[i]), float(raw[j, i]))
        for i in range(4)
        for j in range(4)
    ]
    return lines


def lorentzian_amplitude(x, fwhm: float):
    """Unit-peak Lorentzian; x and fwhm in the same units."""
    hw = 0.5 * fwhm
    return hw * hw / (np.square(x) + hw * hw)


def absorption_spectrum(site: SiteModel, B, grid, intensity_model: str = "overlap"):
    """Sampled inhomogeneous absorption profile, normalized to peak 1.

    ``grid`` is either an array of detunings (GHz) or a (start, stop, step)
    tuple; the step must resolve the profile (< FWHM / 10).
    """
    if isinstance(grid, tuple):
        start, stop, step = grid
        detunings = np.arange(start, stop + 0.5 * step, step)
    else:
        detunings = np.asarray(grid, dtype=float)
        step = float(np.min(np.diff(detunings))) if detunings.size > 1 else 0.0
    if detunings.size == 0:
        raise ValueError("empty detuning grid")
    fwhm_ghz = site.fwhm_mhz * 1e-3
    if detunings.size > 1 and step >= fwhm_ghz / 10.0:
        raise ValueError(f"grid step {step:g} GHz too coarse for FWHM {fwhm_ghz:g} GHz")

    amp = np.zeros_like(detunings)
    for line in optical_lines(site, B, intensity_model):
        amp += line.strength * lorentzian_amplitude(detunings - line.detuning_ghz, fwhm_ghz)
    peak = amp.max()
    if peak > 0:
        amp = amp / peak
    return detunings, amp


def _zero_field_line_positions(site: SiteModel, ordering) -> np.ndarray:
    """16 zero-field line detunings for an ordering class pair (positions only)."""
    vg = decompose_tensor(site.ground.A).values
    ve = decompose_tensor(site.excited.A).values
    if ordering[0] != site.ordering[0]:
        vg = flip_sign_class(vg)
    if ordering[1] != site.ordering[1]:
        ve = flip_sign_class(ve)
    eg = zero_field_levels(*vg).sorted()
    ee = zero_field_levels(*ve).sorted()
    return np.sort(np.array([e - g for g in eg for e in ee]))


def _offset_fit(peaks: np.ndarray, lines: np.ndarray) -> tuple[float, float]:
    """Best global offset aligning peaks to their nearest model lines.

    Seeds the 1-D least-squares fit from every peak-line pairing and
    iterates the nearest-line assignment to a fixed point; returns
    (rms, offset).
    """
    best_rms, best_offset = np.inf, 0.0
    for p in peaks:
        for l in lines:
            t = p - l
            for _ in range(4):
                assigned = lines[np.argmin(np.abs(lines[None, :] - (peaks - t)[:, None]), axis=1)]
                t = float(np.mean(peaks - assigned))
            rms = float(np.sqrt(np.mean((peaks - t - assigned) ** 2)))
            if rms < best_rms - 1e-15 or (abs(rms - best_rms) <= 1e-15 and t < best_offset):
                best_rms, best_offset = rms, t
    return best_rms, best_offset


@dataclass(frozen=True)
class OrderingResult:
    ordering: tuple[int, int]
    rms_ghz: float
    offset_ghz: float
    tied: bool = False


def ordering_search(site: SiteModel, peaks_ghz) -> list[OrderingResult]:
    """Rank the four sign-class combinations against measured peak detunings.

    Each combination fixes all 16 line spacings; only a global center offset
    is fitted (1-D least squares against nearest-line assignments).  Results
    are sorted by RMS residual; combinations whose residuals agree within
    1 kHz are flagged as tied.
    """
    peaks = np.sort(np.asarray(peaks_ghz, dtype=float).ravel())
    if peaks.size < 4:
        raise ValueError("ordering search needs at least 4 measured peaks")
    results = []
    for cg in (1, -1):
        for ce in (1, -1):
            lines = _zero_field_line_positions(site, (cg, ce))
            rms, offset = _offset_fit(peaks, lines)
            results.append(OrderingResult((cg, ce), rms, offset))
    results.sort(key=lambda r: (r.rms_ghz, r.ordering))
    tie_tol = 1e-6  # 1 kHz
    flagged = []
    for r in results:
        tied = any(
            o is not r and abs(o.rms_ghz - r.rms_ghz) < tie_tol for o in results
        )
        flagged.append(replace(r, tied=tied))
    return flagged
