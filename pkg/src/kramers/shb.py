"""Spectral-hole-burning patterns: ion classes, holes, antiholes and the
rate-equation pseudo-hole rule.

A burn pulse at a fixed detuning inside the inhomogeneous profile pumps a
different optical-hyperfine transition (i, j) for each ion *class*; every
class writes side holes at the excited-state splittings relative to its
burned transition and antiholes shifted additionally by ground-state
splittings.  Ground levels drained by fast spin relaxation show holes where
antiholes are expected ("pseudo-holes").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, null_space

from .hamiltonian import as_field, eigensystem
from .output import parallel_map
from .spectra import SiteModel, lorentzian_amplitude, optical_lines

HOLE = "hole"
ANTIHOLE = "antihole"
PSEUDO_HOLE = "pseudo-hole"

THERMAL_POPULATION = 0.25  # kT >> hyperfine splittings at a few kelvin
DEFAULT_CLASS_CUTOFF = 1e-3
DEFAULT_PSEUDO_EPSILON = 0.10
DEFAULT_HOLE_WIDTH_MHZ = 5.0


@dataclass(frozen=True)
class ClassAssignment:
    """One ion class: its burned transition and its spectral weight."""

    ground_level: int
    excited_level: int
    center_detuning_ghz: float
    weight: float


@dataclass(frozen=True)
class HoleEntry:
    detuning_ghz: float       # probe detuning from the burn frequency
    polarity: str             # hole | antihole | pseudo-hole
    weight: float
    class_label: tuple[int, int]   # (ground, excited) of the burned transition
    probe: tuple[int, int]         # (ground, excited) of the probed transition


@dataclass(frozen=True)
class HolePattern:
    entries: tuple[HoleEntry, ...]
    burn_detuning_ghz: float = 0.0
    field_mt: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def total_weight(self, polarity: str) -> float:
        return sum(e.weight for e in self.entries if e.polarity == polarity)


@dataclass(frozen=True)
class RateMatrix:
    """Ground-level relaxation rates R[k, l] (k -> l, 1/s) plus the pump.

    Off-diagonal entries are the relaxation rates; the optical pump drains
    the burned level at ``pump_rate`` and feeds the drained population back
    into the other three ground levels with equal branching, so the total
    population is conserved (the excited state is not modeled).
    """

    rates: np.ndarray
    pump_rate: float = 100.0
    duration_s: float = 0.3

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        if r.shape != (4, 4):
            raise ValueError("rate matrix must be 4x4")
        off = r[~np.eye(4, dtype=bool)]
        if np.any(off < 0) or self.pump_rate < 0 or self.duration_s < 0:
            raise ValueError("rates, pump rate and duration must be non-negative")
        r = r.copy()
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)

    @classmethod
    def symmetric(cls, pairs: dict, pump_rate: float = 100.0, duration_s: float = 0.3) -> "RateMatrix":
        """Build detailed-balance (symmetric) rates from {(k, l): rate} pairs."""
        r = np.zeros((4, 4))
        for (k, l), rate in pairs.items():
            r[k, l] = r[l, k] = rate
        return cls(r, pump_rate, duration_s)


def enumerate_classes(
    site: SiteModel,
    B,
    burn_detuning_ghz: float,
    cutoff: float = DEFAULT_CLASS_CUTOFF,
    intensity_model: str = "uniform",
) -> list[ClassAssignment]:
    """All (ground, excited) classes with weight >= cutoff at a burn frequency.

    A class burned on line (i, j) is centered at burn - line detuning inside
    the inhomogeneous profile; its weight is the Lorentzian envelope
    amplitude there times the line strength (both normalized to peak 1).
    """
    if not 0.0 < cutoff <= 1.0:
        raise ValueError("cutoff must be in (0, 1]")
    fwhm_ghz = site.fwhm_mhz * 1e-3
    out = []
    for line in optical_lines(site, B, intensity_model):
        offset = burn_detuning_ghz - line.detuning_ghz
        w = float(lorentzian_amplitude(offset, fwhm_ghz)) * line.strength
        if w >= cutoff:
            out.append(ClassAssignment(line.ground_level, line.excited_level, offset, w))
    return out


def _generator(rates: RateMatrix, pumped_level: int) -> np.ndarray:
    """Column-stochastic generator of the pumped rate equations (columns sum to 0)."""
    r = rates.rates
    m = np.zeros((4, 4))
    for k in range(4):
        for l in range(4):
            if k != l:
                m[l, k] += r[k, l]
                m[k, k] -= r[k, l]
    m[pumped_level, pumped_level] -= rates.pump_rate
    for l in range(4):
        if l != pumped_level:
            m[l, pumped_level] += rates.pump_rate / 3.0
    return m


def populations_after_burn(rates: RateMatrix, pumped_level: int, duration_s=None) -> np.ndarray:
    """Ground populations after burning, starting from the thermal 1/4 each.

    Propagates the linear rate equations with the matrix exponential;
    ``duration_s=inf`` returns the stationary distribution of the pumped
    generator.  The four populations always sum to 1.
    """
    if pumped_level not in range(4):
        raise ValueError("pumped level must be 0..3")
    m = _generator(rates, pumped_level)
    p0 = np.full(4, THERMAL_POPULATION)
    t = rates.duration_s if duration_s is None else float(duration_s)
    if np.isinf(t):
        ns = null_space(m)
        if ns.shape[1] == 0:
            raise ValueError("no stationary distribution")
        p = ns[:, 0]
        p = p / p.sum()
        return p
    return expm(m * t) @ p0


def _relative_population_changes(
    rates, pumped_level: int
) -> np.ndarray:
    """(p_after - p_thermal) / p_thermal per level.

    Without a rate model the burned level is fully depleted and its
    population is redistributed equally over the other three levels.
    """
    if rates is None:
        delta = np.full(4, 1.0 / 3.0)
        delta[pumped_level] = -1.0
        return delta
    p = populations_after_burn(rates, pumped_level)
    return (p - THERMAL_POPULATION) / THERMAL_POPULATION


def hole_pattern(
    site: SiteModel,
    B,
    burn_detuning_ghz: float = 0.0,
    rates: RateMatrix | None = None,
    cutoff: float = DEFAULT_CLASS_CUTOFF,
    pseudo_epsilon: float = DEFAULT_PSEUDO_EPSILON,
    intensity_model: str = "uniform",
) -> HolePattern:
    """Predict the hole/antihole spectrum for one burn configuration.

    Per class (i, j): holes at Ee_j' - Ee_j for every excited level j'
    (j' = j is the central hole at zero detuning) and antiholes at
    (Ee_j' - Ee_j) + (Eg_i - Eg_i') for every other ground level i'.  Entry
    weights combine the class weight with the relative population change of
    the probed ground level.  When a rate model is given, ground levels
    whose post-burn population falls more than ``pseudo_epsilon`` below
    thermal re-label their antiholes as pseudo-holes.
    """
    B = as_field(B)
    eg = eigensystem(site.ground, B).energies
    ee = eigensystem(site.excited, B).energies
    entries: list[HoleEntry] = []
    for cls in enumerate_classes(site, B, burn_detuning_ghz, cutoff, intensity_model):
        i, j = cls.ground_level, cls.excited_level
        delta = _relative_population_changes(rates, i)
        for jp in range(4):
            hole_shift = ee[jp] - ee[j]
            entries.append(
                HoleEntry(float(hole_shift), HOLE, cls.weight * (-delta[i]), (i, j), (i, jp))
            )
            for ip in range(4):
                if ip == i:
                    continue
                detuning = (ee[jp] - ee[j]) + (eg[i] - eg[ip])
                if delta[ip] >= 0.0:
                    polarity, w = ANTIHOLE, delta[ip]
                elif -delta[ip] > pseudo_epsilon:
                    polarity, w = PSEUDO_HOLE, -delta[ip]
                else:
                    continue  # sub-threshold depletion: negligible amplitude
                entries.append(
                    HoleEntry(float(detuning), polarity, cls.weight * w, (i, j), (ip, jp))
                )
    entries.sort(key=lambda e: (e.detuning_ghz, e.class_label, e.probe))
    return HolePattern(tuple(entries), burn_detuning_ghz, tuple(B))


def render_pattern(pattern: HolePattern, detunings: np.ndarray, hole_width_mhz: float = DEFAULT_HOLE_WIDTH_MHZ) -> np.ndarray:
    """Signed spectrum on a detuning grid: holes negative, antiholes positive."""
    width_ghz = hole_width_mhz * 1e-3
    amp = np.zeros_like(detunings, dtype=float)
    for e in pattern.entries:
        sign = 1.0 if e.polarity == ANTIHOLE else -1.0
        amp += sign * e.weight * lorentzian_amplitude(detunings - e.detuning_ghz, width_ghz)
    return amp


@dataclass(frozen=True, eq=False)
class FieldMap:
    """A stack of rendered hole patterns over a field-magnitude sweep."""

    direction: tuple[float, float, float]
    magnitudes_mt: np.ndarray
    detunings_ghz: np.ndarray
    amplitudes: np.ndarray  # shape (n_fields, n_detunings)


def shb_field_map(
    site: SiteModel,
    direction,
    magnitudes_mt,
    burn_detuning_ghz: float = 0.0,
    rates: RateMatrix | None = None,
    detuning_range_ghz: tuple[float, float] = (-5.0, 5.0),
    detuning_step_ghz: float = 0.002,
    hole_width_mhz: float = DEFAULT_HOLE_WIDTH_MHZ,
    cutoff: float = DEFAULT_CLASS_CUTOFF,
) -> FieldMap:
    """Render hole patterns for a monotone list of field magnitudes.

    Rows are computed independently (parallelizable) and assembled in field
    order, so the output is deterministic for fixed inputs.
    """
    d = np.asarray(direction, dtype=float).reshape(3)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise ValueError("field direction must be nonzero")
    d = d / norm
    mags = np.asarray(magnitudes_mt, dtype=float).ravel()
    if mags.size == 0:
        raise ValueError("empty magnitude list")
    if np.any(np.diff(mags) < 0):
        raise ValueError("field magnitudes must be monotone non-decreasing")
    lo, hi = detuning_range_ghz
    detunings = np.arange(lo, hi + 0.5 * detuning_step_ghz, detuning_step_ghz)

    def row(mag: float) -> np.ndarray:
        pattern = hole_pattern(site, mag * d, burn_detuning_ghz, rates, cutoff)
        return render_pattern(pattern, detunings, hole_width_mhz)

    amplitudes = np.vstack(parallel_map(row, mags))
    return FieldMap(tuple(d), mags, detunings, amplitudes)
