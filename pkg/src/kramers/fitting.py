"""Least-squares fitting of hyperfine-tensor orientations to transition data.

The g tensors and the A eigenvalue magnitudes (obtained analytically from
zero-field splittings) stay fixed; the free parameters are the Euler angles
of the ground and/or excited A tensor, optionally a small lab-misalignment
rotation and eigenvalue refinements.  A local least-squares refiner is
restarted from uniformly sampled angle seeds and the best optimum is
reported together with the restart spread and a Jacobian-based covariance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares, nnls

from .hamiltonian import SpinSystem, energies_sweep, invert_zero_field
from .magres import epr_resonance_fields
from .spectra import SiteModel
from .tensors import (
    CRYSTAL,
    EulerAngles,
    PrincipalTensor,
    SymmetricTensor3,
    assemble_tensor,
    decompose_tensor,
    rx,
    rz,
    subsite_transform,
)

_PAIRS = tuple((i, j) for i in range(4) for j in range(i + 1, 4))

KINDS = ("shb", "odmr", "epr")
STATES = ("ground", "excited")

DEFAULT_SIGMA_GHZ = {"shb": 2e-3, "odmr": 0.5e-3}
DEFAULT_SIGMA_MT = 0.5


@dataclass(frozen=True)
class DataPoint:
    """One measured transition frequency (GHz) or EPR resonance field (mT).

    For shb/odmr points ``field_mt`` is the applied field vector and
    ``value`` the transition frequency; for epr points ``field_mt`` fixes
    the sweep direction (its magnitude is ignored) and ``value`` is the
    observed resonance field magnitude.
    """

    kind: str
    state: str
    field_mt: tuple[float, float, float]
    value: float
    sigma: float
    label: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown data kind {self.kind!r}")
        if self.state not in STATES:
            raise ValueError(f"unknown state tag {self.state!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "field_mt", tuple(float(x) for x in self.field_mt))


def _ry(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class FitProblem:
    """Free-parameter selection and gates for one fitting run.

    The parameter vector is, in order and only where enabled: ground A
    Euler angles (deg), excited A Euler angles (deg), misalignment xyz
    rotations (deg, bounded to +/-5), ground eigenvalue deltas (GHz),
    excited eigenvalue deltas (GHz).
    """

    site: SiteModel
    fit_ground: bool = True
    fit_excited: bool = False
    fit_misalignment: bool = False
    refine_eigenvalues: bool = False
    nu_mw_ghz: float = 9.7
    gate_freq_ghz: float = 0.5
    gate_field_mt: float = 50.0
    misalignment_bound_deg: float = 5.0
    eigenvalue_bound_ghz: float = 0.05

    def parameter_names(self) -> list[str]:
        names = []
        if self.fit_ground:
            names += ["ground_alpha", "ground_beta", "ground_gamma"]
        if self.fit_excited:
            names += ["excited_alpha", "excited_beta", "excited_gamma"]
        if self.fit_misalignment:
            names += ["mis_x", "mis_y", "mis_z"]
        if self.refine_eigenvalues:
            if self.fit_ground:
                names += ["ground_dA1", "ground_dA2", "ground_dA3"]
            if self.fit_excited:
                names += ["excited_dA1", "excited_dA2", "excited_dA3"]
        return names

    def initial_parameters(self) -> np.ndarray:
        x = []
        if self.fit_ground:
            x += list(decompose_tensor(self.site.ground.A).orientation.as_tuple())
        if self.fit_excited:
            x += list(decompose_tensor(self.site.excited.A).orientation.as_tuple())
        if self.fit_misalignment:
            x += [0.0, 0.0, 0.0]
        if self.refine_eigenvalues:
            x += [0.0, 0.0, 0.0] * (int(self.fit_ground) + int(self.fit_excited))
        return np.array(x)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = [], []
        for name in self.parameter_names():
            if name.startswith("mis"):
                lo.append(-self.misalignment_bound_deg)
                hi.append(self.misalignment_bound_deg)
            elif "_d" in name:
                lo.append(-self.eigenvalue_bound_ghz)
                hi.append(self.eigenvalue_bound_ghz)
            else:
                lo.append(-180.0)
                hi.append(180.0)
        return np.array(lo), np.array(hi)

    def realized_site(self, params: np.ndarray) -> SiteModel:
        """Apply a parameter vector to the base site model."""
        params = np.asarray(params, dtype=float)
        pos = 0
        ground, excited = self.site.ground, self.site.excited
        updates: dict[str, tuple] = {}
        if self.fit_ground:
            updates["ground"] = (params[pos], params[pos + 1], params[pos + 2])
            pos += 3
        if self.fit_excited:
            updates["excited"] = (params[pos], params[pos + 1], params[pos + 2])
            pos += 3
        mis = None
        if self.fit_misalignment:
            mis = rx(params[pos]) @ _ry(params[pos + 1]) @ rz(params[pos + 2])
            pos += 3
        deltas: dict[str, np.ndarray] = {}
        if self.refine_eigenvalues:
            for key in ("ground", "excited"):
                if (key == "ground" and self.fit_ground) or (key == "excited" and self.fit_excited):
                    deltas[key] = params[pos : pos + 3]
                    pos += 3

        def rebuild(sys: SpinSystem, key: str) -> SpinSystem:
            p = decompose_tensor(sys.A)
            values = np.array(p.values) + deltas.get(key, 0.0)
            angles = EulerAngles(*updates[key]) if key in updates else p.orientation
            A = assemble_tensor(PrincipalTensor(tuple(values), angles))
            return replace(sys, A=A)

        if "ground" in updates or "ground" in deltas:
            ground = rebuild(ground, "ground")
        if "excited" in updates or "excited" in deltas:
            excited = rebuild(excited, "excited")
        if mis is not None:
            # crystal axes as seen from the misaligned lab frame
            def tilt(sys: SpinSystem) -> SpinSystem:
                return replace(
                    sys,
                    A=SymmetricTensor3(mis @ sys.A.matrix @ mis.T, CRYSTAL),
                    g=SymmetricTensor3(mis @ sys.g.matrix @ mis.T, CRYSTAL),
                )

            ground, excited = tilt(ground), tilt(excited)
        return replace(self.site, ground=ground, excited=excited)


def residuals(problem: FitProblem, params, data, full: bool = False):
    """Observed-minus-model residuals for every data point.

    Labeled points compare against their own transition on the nearer of
    the two magnetic subsites; unlabeled points against the nearest of all
    twelve subsite transitions.  EPR points compare resonance fields at
    nu_mw instead.  Points farther from any model transition than the gate
    are flagged as outliers and contribute zero.
    """
    data = list(data)
    if not data:
        raise ValueError("no data points")
    site = problem.realized_site(np.asarray(params, dtype=float))
    res = np.zeros(len(data))
    model = np.full(len(data), np.nan)
    excluded: list[int] = []

    pair_lo = np.array([i for i, _ in _PAIRS])
    pair_hi = np.array([j for _, j in _PAIRS])
    for state in STATES:
        idx = np.array(
            [n for n, p in enumerate(data) if p.kind != "epr" and p.state == state], dtype=int
        )
        if idx.size == 0:
            continue
        fields = np.array([data[n].field_mt for n in idx], dtype=float)
        # many points share a field value; diagonalize each field once
        uniq, inverse = np.unique(fields, axis=0, return_inverse=True)
        sys1 = site.ground if state == "ground" else site.excited
        energies = [energies_sweep(sys1, uniq), energies_sweep(sys1.with_subsite(2), uniq)]
        values = np.array([data[n].value for n in idx])
        labels = [data[n].label for n in idx]

        def assign(rows: np.ndarray, cands: np.ndarray):
            k = np.argmin(np.abs(cands - values[rows, None]), axis=1)
            mv = cands[np.arange(rows.size), k]
            r = values[rows] - mv
            gated = np.abs(r) > problem.gate_freq_ghz
            model[idx[rows]] = mv
            res[idx[rows]] = np.where(gated, 0.0, r)
            excluded.extend(int(n) for n in idx[rows[gated]])

        labeled = np.array([r for r, l in enumerate(labels) if l is not None], dtype=int)
        if labeled.size:
            li = np.array([labels[r][0] for r in labeled])
            lj = np.array([labels[r][1] for r in labeled])
            u = inverse[labeled]
            assign(labeled, np.stack([e[u, lj] - e[u, li] for e in energies], axis=1))
        unlabeled = np.array([r for r, l in enumerate(labels) if l is None], dtype=int)
        if unlabeled.size:
            u = inverse[unlabeled]
            cands = np.concatenate(
                [e[u][:, pair_hi] - e[u][:, pair_lo] for e in energies], axis=1
            )
            assign(unlabeled, cands)

    for n, p in enumerate(data):
        if p.kind != "epr":
            continue
        direction = np.asarray(p.field_mt, dtype=float)
        norm = np.linalg.norm(direction)
        if norm == 0:
            raise ValueError("EPR point needs a nonzero direction")
        sys1 = site.ground if p.state == "ground" else site.excited
        found = epr_resonance_fields(
            sys1, direction / norm, problem.nu_mw_ghz, p.value + problem.gate_field_mt
        )
        if p.label is not None:
            found = [r for r in found if r.transition == tuple(p.label)]
        if not found:
            excluded.append(n)
            continue
        fields = np.array([r.field_mt for r in found])
        k = int(np.argmin(np.abs(fields - p.value)))
        model[n] = fields[k]
        r = p.value - fields[k]
        if abs(r) > problem.gate_field_mt:
            excluded.append(n)
            r = 0.0
        res[n] = r

    if full:
        return res, model, sorted(set(excluded))
    return res


def _weighted(problem: FitProblem, data):
    sigmas = np.array([p.sigma for p in data], dtype=float)
    weights = np.where(np.isfinite(sigmas), 1.0 / sigmas, 0.0)

    def fun(x):
        return residuals(problem, x, data) * weights

    return fun, weights


def closest_subsite_representative(
    tensor: SymmetricTensor3, reference: SymmetricTensor3
) -> SymmetricTensor3:
    """The subsite labelling of ``tensor`` nearest to ``reference``.

    Fits from subsite-degenerate field geometries determine the tensor only
    up to the C2-about-b reflection; comparisons against a known truth pick
    the representative with the smaller elementwise matrix distance.
    """
    flipped = subsite_transform(tensor)
    d_direct = np.abs(tensor.matrix - reference.matrix).max()
    d_flipped = np.abs(flipped.matrix - reference.matrix).max()
    return tensor if d_direct <= d_flipped else flipped


def canonical_orientation(tensor: SymmetricTensor3) -> tuple[EulerAngles, int]:
    """Angles of the subsite representative with the smaller Euler triple.

    The two magnetic subsites are physically equivalent labellings, so a
    fitted tensor is reported for the subsite whose decomposed (alpha,
    beta, gamma) sorts lexicographically smaller.  Returns (angles, subsite).
    """
    a1 = decompose_tensor(tensor).orientation
    a2 = decompose_tensor(subsite_transform(tensor)).orientation
    if a2.as_tuple() < a1.as_tuple():
        return a2, 2
    return a1, 1


@dataclass(frozen=True)
class FitResult:
    success: bool
    message: str
    parameter_names: tuple[str, ...]
    parameters: np.ndarray
    canonical_angles: dict
    rms_mhz: float
    rms_field_mt: float | None
    residuals: np.ndarray
    model_values: np.ndarray
    excluded: tuple[int, ...]
    covariance: np.ndarray
    restart_rms_mhz: tuple[float, ...]


def fit(problem: FitProblem, data, restarts: int = 64, seed: int = 0) -> FitResult:
    """Multistart weighted least squares over the problem's free parameters.

    Restart seeds are the problem's own starting angles plus uniformly
    sampled angle triples; each seed is refined locally and the best local
    optimum wins (ties broken by lexicographically smaller parameters).
    """
    data = list(data)
    if not data:
        raise ValueError("no data points")
    names = problem.parameter_names()
    x0 = problem.initial_parameters()
    fun, weights = _weighted(problem, data)

    if len(names) == 0:
        res, model, excl = residuals(problem, x0, data, full=True)
        rms, rms_field = _split_rms(data, res, excl)
        return FitResult(
            True, "no free parameters", tuple(names), x0,
            _canonical_report(problem, x0), rms, rms_field,
            res, model, tuple(excl), np.zeros((0, 0)), (rms,),
        )

    if len(data) < len(names):
        raise ValueError(f"{len(data)} points cannot determine {len(names)} parameters")

    lo, hi = problem.bounds()
    rng = np.random.default_rng(seed)
    seeds = [x0]
    for _ in range(max(0, restarts - 1)):
        seeds.append(rng.uniform(lo, hi))

    best = None
    restart_rms_list = []
    for x_start in seeds:
        try:
            sol = least_squares(
                fun, np.clip(x_start, lo, hi), bounds=(lo, hi),
                method="trf", xtol=1e-8, ftol=1e-12, gtol=1e-14, max_nfev=250,
            )
        except Exception:
            continue
        r, _, ex = residuals(problem, sol.x, data, full=True)
        restart_rms_list.append(_split_rms(data, r, ex)[0])
        if best is None or (sol.cost, tuple(sol.x)) < (best[0], best[1]):
            best = (sol.cost, tuple(sol.x), sol)

    if best is None:
        raise RuntimeError("all restarts failed")
    sol = best[2]
    res, model, excl = residuals(problem, sol.x, data, full=True)
    rms, rms_field = _split_rms(data, res, excl)

    # parameter covariance from the weighted Jacobian at the optimum
    dof = max(1, len(data) - len(names))
    jtj = sol.jac.T @ sol.jac
    cov = np.linalg.pinv(jtj) * (2.0 * sol.cost / dof)
    cov = 0.5 * (cov + cov.T)

    restart_rms = tuple(sorted(restart_rms_list))
    gate_mhz = problem.gate_freq_ghz * 1e3
    if len(excl) == len(data):
        success = False
        message = "all data points flagged as outliers; model nowhere near the data"
    elif rms <= gate_mhz:
        success = True
        message = "converged"
    else:
        success = False
        message = (
            f"no restart reached RMS below the gate ({rms:.3f} MHz > {gate_mhz:.1f} MHz); "
            f"{len(excl)} gated outliers"
        )
    return FitResult(
        success, message, tuple(names), sol.x,
        _canonical_report(problem, sol.x), rms, rms_field,
        res, model, tuple(excl), cov, restart_rms,
    )


def _split_rms(data, res, excluded) -> tuple[float, float | None]:
    keep = [n for n in range(len(data)) if n not in excluded]
    freq = [res[n] for n in keep if data[n].kind != "epr"]
    fld = [res[n] for n in keep if data[n].kind == "epr"]
    rms = float(np.sqrt(np.mean(np.square(freq)))) * 1e3 if freq else 0.0
    rms_field = float(np.sqrt(np.mean(np.square(fld)))) if fld else None
    return rms, rms_field


def _canonical_report(problem: FitProblem, params: np.ndarray) -> dict:
    site = problem.realized_site(params)
    report = {}
    if problem.fit_ground:
        angles, subsite = canonical_orientation(site.ground.A)
        report["ground"] = {"angles_deg": angles.as_tuple(), "subsite": subsite,
                            "values_ghz": decompose_tensor(site.ground.A).values}
    if problem.fit_excited:
        angles, subsite = canonical_orientation(site.excited.A)
        report["excited"] = {"angles_deg": angles.as_tuple(), "subsite": subsite,
                             "values_ghz": decompose_tensor(site.excited.A).values}
    return report


# the six pairwise differences expressed in the gap basis (d1, d2, d3)
_GAP_COMBOS = (
    (1, 0, 0), (0, 1, 0), (0, 0, 1),
    (1, 1, 0), (0, 1, 1), (1, 1, 1),
)


def reconstruct_levels(lines_ghz, tol_ghz: float = 2e-3) -> np.ndarray:
    """Four zero-field levels (sum 0) consistent with measured splittings.

    Measured lines are assigned injectively to the six pairwise differences
    of an ascending four-level ladder; each assignment is solved for the
    non-negative level gaps by least squares and the best-fitting assignment
    wins.  An incomplete line set can admit several exact ladders; ties are
    broken in favour of the largest central gap (the doublet-dominant
    structure of a large-|A3| hyperfine tensor), then lexicographically.
    Raises if even the best assignment misses by more than tol.
    """
    lines = np.sort(np.asarray(lines_ghz, dtype=float).ravel())
    if lines.size < 3:
        raise ValueError("need at least 3 zero-field splittings")
    if lines.size > 6:
        raise ValueError("a four-level system has at most 6 distinct splittings")
    best = None  # (rms, -central gap, gaps tuple)
    for combo in itertools.permutations(range(6), lines.size):
        C = np.array([_GAP_COMBOS[m] for m in combo], dtype=float)
        d, rnorm = nnls(C, lines)
        rms = rnorm / np.sqrt(lines.size)
        key = (round(rms / 1e-12) * 1e-12, -d[1], tuple(d))
        if best is None or key < best:
            best = key
    assert best is not None
    best_rms, best_d = best[0], np.array(best[2])
    levels = np.cumsum(np.concatenate(([0.0], best_d)))
    levels -= levels.mean()
    if best_rms > tol_ghz:
        fitted = np.sort([levels[j] - levels[i] for i, j in _PAIRS])
        raise ValueError(
            f"no consistent 4-level solution within {tol_ghz * 1e3:.1f} MHz "
            f"(best RMS {best_rms * 1e3:.2f} MHz; closest splittings {fitted})"
        )
    return levels


def invert_and_seed(
    lines_ghz, site: SiteModel, state: str = "ground", tol_ghz: float = 2e-3
) -> tuple[tuple[float, float, float], FitProblem]:
    """Fix A eigenvalue magnitudes from zero-field lines and seed a fit.

    The analytic zero-field inversion gives the magnitudes; signs follow
    the current ordering hypothesis of the base site.  Returns
    (magnitudes, FitProblem fitting only that state's orientation).
    """
    if state not in STATES:
        raise ValueError(f"unknown state {state!r}")
    levels = reconstruct_levels(lines_ghz, tol_ghz)
    mags = invert_zero_field(levels)
    sys = site.ground if state == "ground" else site.excited
    p = decompose_tensor(sys.A)
    signs = [1.0 if v >= 0 else -1.0 for v in p.values]
    values = tuple(s * m for s, m in zip(signs, mags))
    new_sys = replace(sys, A=assemble_tensor(PrincipalTensor(values, p.orientation)))
    new_site = replace(
        site,
        ground=new_sys if state == "ground" else site.ground,
        excited=new_sys if state == "excited" else site.excited,
    )
    problem = FitProblem(
        site=new_site,
        fit_ground=(state == "ground"),
        fit_excited=(state == "excited"),
    )
    return mags, problem
