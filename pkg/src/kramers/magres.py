"""ODMR line sets and EPR resonance fields / angular maps.

ODMR lines are the six spin-transition frequencies of one manifold with
magnetic-dipole transition moments for an oscillating field along a chosen
axis (default: crystal b, the geometry of the drive coil).  EPR resonances
are the field magnitudes along a fixed direction where any transition
matches the microwave frequency, found by bracketing and bisection on each
transition branch; both magnetic subsites are included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonian import (
    I_OPS,
    S_OPS,
    SpinSystem,
    as_field,
    eigensystem,
    energies_sweep,
)
from .output import parallel_map

B_AXIS = (0.0, 0.0, 1.0)
STRONG_MOMENT_FRACTION = 0.01
EPR_FIELD_TOL_MT = 1e-3
_PAIRS = tuple((i, j) for i in range(4) for j in range(i + 1, 4))

PLANES = {
    "D1-D2": ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
    "b-D1": ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0)),
    "b-D2": ((0.0, 0.0, 1.0), (0.0, 1.0, 0.0)),
}


@dataclass(frozen=True)
class OdmrLine:
    frequency_mhz: float
    transition: tuple[int, int]
    moment: float
    strong: bool
    linewidth_mhz: float | None = None  # reporting only


@dataclass(frozen=True)
class EprResonance:
    field_mt: float
    direction: tuple[float, float, float]
    transition: tuple[int, int]
    subsite: int
    moment: float


def _moment_operator(sys: SpinSystem, ac_axis) -> np.ndarray:
    """Dimensionless magnetic-dipole operator (g.S - (mu_n/mu_B) g_n I) . n_ac."""
    n = np.asarray(ac_axis, dtype=float).reshape(3)
    norm = np.linalg.norm(n)
    if norm == 0:
        raise ValueError("AC field axis must be nonzero")
    n = n / norm
    g = sys.g.matrix
    op = np.zeros((4, 4), dtype=complex)
    for k in range(3):
        for l in range(3):
            op += n[k] * g[k, l] * S_OPS[l]
        op -= n[k] * (sys.mu_n / sys.mu_b) * sys.g_n * I_OPS[k]
    return op


def transition_moments(sys: SpinSystem, B, ac_axis=B_AXIS) -> dict[tuple[int, int], float]:
    """|<f| M |i>|^2 for the six transitions at a field."""
    es = eigensystem(sys, B)
    op = _moment_operator(sys, ac_axis)
    return {
        (i, j): float(abs(es.states[:, j].conj() @ op @ es.states[:, i]) ** 2)
        for i, j in _PAIRS
    }


def odmr_lines(sys: SpinSystem, B=(0.0, 0.0, 0.0), ac_axis=B_AXIS) -> list[OdmrLine]:
    """Six spin-transition frequencies (MHz) with drive moments.

    Lines with a moment of at least 1% of the strongest at this field are
    flagged ``strong`` (the observability heuristic).
    """
    es = eigensystem(sys, B)
    moments = transition_moments(sys, B, ac_axis)
    max_moment = max(moments.values())
    lines = [
        OdmrLine(
            frequency_mhz=float((es.energies[j] - es.energies[i]) * 1e3),
            transition=(i, j),
            moment=moments[(i, j)],
            strong=bool(max_moment > 0 and moments[(i, j)] >= STRONG_MOMENT_FRACTION * max_moment),
        )
        for i, j in _PAIRS
    ]
    lines.sort(key=lambda l: l.frequency_mhz)
    return lines


def _branch_frequencies(sys: SpinSystem, direction: np.ndarray, mags: np.ndarray) -> np.ndarray:
    """Transition frequencies along a field ray, shape (n_mags, 6)."""
    e = energies_sweep(sys, mags[:, None] * direction[None, :])
    return np.column_stack([e[:, j] - e[:, i] for i, j in _PAIRS])


def _bisect_branch(freq_at, lo: float, hi: float, flo: float, fhi: float) -> float:
    """Bisection for freq_at(b) = 0 given a sign change on [lo, hi]."""
    while hi - lo > EPR_FIELD_TOL_MT:
        mid = 0.5 * (lo + hi)
        fmid = freq_at(mid)
        if (flo <= 0.0) == (fmid <= 0.0):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    return 0.5 * (lo + hi)


def _brackets(freq_at, grid: np.ndarray, values: np.ndarray, depth: int = 8) -> list[tuple[float, float, float, float]]:
    """Sign-change brackets on a sampled branch, splitting non-monotone cells.

    Cells adjacent to a sampled local extremum are recursively halved (up to
    ``depth`` levels) so near-tangent crossings are not missed.
    """
    out = []

    def scan(lo, hi, flo, fhi, d):
        if (flo <= 0.0) != (fhi <= 0.0):
            out.append((lo, hi, flo, fhi))
            return
        if d == 0 or hi - lo <= EPR_FIELD_TOL_MT:
            return
        mid = 0.5 * (lo + hi)
        fmid = freq_at(mid)
        scan(lo, mid, flo, fmid, d - 1)
        scan(mid, hi, fmid, fhi, d - 1)

    slopes = np.diff(values)
    for n in range(len(grid) - 1):
        if (values[n] <= 0.0) != (values[n + 1] <= 0.0):
            out.append((grid[n], grid[n + 1], values[n], values[n + 1]))
        elif 0 < n < len(grid) - 1 and slopes[n - 1] * slopes[n] < 0:
            # local extremum at sample n: look inside both adjacent cells
            scan(grid[n - 1], grid[n], values[n - 1], values[n], depth)
            scan(grid[n], grid[n + 1], values[n], values[n + 1], depth)
    # deduplicate brackets found twice around an extremum
    uniq = []
    for b in sorted(out):
        if not uniq or b[0] >= uniq[-1][1] - 1e-12:
            uniq.append(b)
    return uniq


def epr_resonance_fields(
    sys: SpinSystem,
    direction,
    nu_mw_ghz: float,
    b_max_mt: float,
    grid_step_mt: float = 1.0,
    ac_axis=B_AXIS,
    subsites=(1, 2),
) -> list[EprResonance]:
    """All field magnitudes in (0, b_max] where a transition meets nu_mw.

    Each of the six transition branches of each requested subsite is sampled
    at ``grid_step_mt`` (<= 1 mT), bracketed, and bisected to 1e-3 mT.
    """
    if nu_mw_ghz <= 0:
        raise ValueError("microwave frequency must be positive")
    if b_max_mt <= 0:
        raise ValueError("b_max must be positive")
    d = np.asarray(direction, dtype=float).reshape(3)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise ValueError("direction must be a nonzero vector")
    d = d / norm
    step = min(grid_step_mt, 1.0)
    mags = np.arange(0.0, b_max_mt + 0.5 * step, step)
    if mags[-1] < b_max_mt:
        mags = np.append(mags, b_max_mt)

    results = []
    for subsite in subsites:
        ssys = sys.with_subsite(subsite)
        freqs = _branch_frequencies(ssys, d, mags) - nu_mw_ghz
        for col, (i, j) in enumerate(_PAIRS):

            def freq_at(b, _col=col, _s=ssys):
                e = energies_sweep(_s, np.array([b * d]))[0]
                return e[_PAIRS[_col][1]] - e[_PAIRS[_col][0]] - nu_mw_ghz

            for lo, hi, flo, fhi in _brackets(freq_at, mags, freqs[:, col]):
                b_res = _bisect_branch(freq_at, lo, hi, flo, fhi)
                if b_res <= 0.0 or b_res > b_max_mt:
                    continue
                moment = transition_moments(ssys, b_res * d, ac_axis)[(i, j)]
                results.append(EprResonance(float(b_res), tuple(d), (i, j), subsite, moment))
    results.sort(key=lambda r: (r.field_mt, r.subsite, r.transition))
    return results


def epr_angular_map(
    sys: SpinSystem,
    plane: str,
    angle_step_deg: float,
    nu_mw_ghz: float,
    b_max_mt: float,
    ac_axis=B_AXIS,
) -> list[tuple[float, list[EprResonance]]]:
    """Resonance fields swept over a crystallographic plane.

    ``plane`` is one of D1-D2, b-D1, b-D2; the direction at angle theta is
    cos(theta) e1 + sin(theta) e2.  Angle points are independent; the output
    is ordered by angle, then field.
    """
    if plane not in PLANES:
        raise ValueError(f"unknown plane {plane!r} (expected one of {sorted(PLANES)})")
    if angle_step_deg <= 0:
        raise ValueError("angle step must be positive")
    e1, e2 = (np.asarray(v) for v in PLANES[plane])
    angles = np.arange(0.0, 180.0 + 0.5 * angle_step_deg, angle_step_deg)

    def at_angle(theta_deg: float):
        t = np.radians(theta_deg)
        direction = np.cos(t) * e1 + np.sin(t) * e2
        return (theta_deg, epr_resonance_fields(sys, direction, nu_mw_ghz, b_max_mt, ac_axis=ac_axis))

    return parallel_map(at_angle, angles)
