"""Command-line surface: deterministic CSV/PGM outputs for every module.

All level indices printed or read by the CLI are 1-based (levels 1..4);
the library API is 0-based.  Every subcommand documents its CSV columns
via --schema and writes byte-identical outputs for identical inputs
(--no-stamp drops the version comment line).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys as _sys

import numpy as np

from . import fitting, magres, shb, spectra, zefoz
from .config import ConfigError, load_config
from .hamiltonian import eigensystem, transition_frequencies
from .output import write_csv, write_pgm
from .presets import get_site
from .selftest import run_selftest


class CliError(Exception):
    def __init__(self, code: str, message: str, key: str = ""):
        super().__init__(message)
        self.record = {"code": code, "message": message, "key": key}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


SCHEMAS = {
    "levels": "level,energy_ghz            -- level is 1-based, energies ascending, GHz",
    "transitions": "lower,upper,frequency_ghz  -- 1-based level pair, frequency in GHz",
    "absorption": "detuning_ghz,amplitude      -- amplitude normalized to peak 1"
                  " (with --peaks-out: detuning_ghz per detected peak)",
    "shb-map": "field_mt,detuning_ghz,amplitude -- signed amplitude, holes negative;"
               " a PGM heatmap (rows = fields, mid-gray = 0) is written alongside",
    "odmr": "frequency_mhz,lower,upper,moment,strong -- 1-based pair, moment dimensionless",
    "epr-map": "angle_deg,field_mt,lower,upper,subsite,moment",
    "fit": "index,kind,state,value,sigma,model,residual,excluded -- residual table;"
           " frequencies GHz, EPR fields mT",
    "invert": "axis,magnitude_ghz          -- |A1|,|A2|,|A3| from zero-field lines",
    "ordering": "rank,ground_class,excited_class,rms_mhz,offset_ghz,tied",
    "zefoz": "bx_mt,by_mt,bz_mt,lower,upper,grad_norm_mhz_per_mt,"
             "curv_eig1,curv_eig2,curv_eig3,classification,stationary",
    "selftest": "(no CSV output; prints one PASS/FAIL line per regression item)",
}

_DIRECTIONS = {"d1": (1.0, 0.0, 0.0), "d2": (0.0, 1.0, 0.0), "b": (0.0, 0.0, 1.0)}


def _parse_vector(text: str) -> tuple[float, float, float]:
    key = text.strip().lower()
    if key in _DIRECTIONS:
        return _DIRECTIONS[key]
    parts = text.split(",")
    try:
        if len(parts) == 1 and float(parts[0]) == 0.0:
            return (0.0, 0.0, 0.0)  # "--B 0" shorthand for zero field
        if len(parts) != 3:
            raise CliError(
                "bad-vector", f"expected D1|D2|b or three comma-separated numbers, got {text!r}", text
            )
        return tuple(float(p) for p in parts)
    except ValueError:
        raise CliError("bad-vector", f"non-numeric vector component in {text!r}", text)


def _parse_range(text: str, key: str) -> np.ndarray:
    """start:stop:step range or comma-separated list."""
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0:
                raise ValueError("step must be positive")
            return np.arange(start, stop + 0.5 * step, step)
        return np.array([float(p) for p in text.split(",") if p.strip() != ""])
    except ValueError as exc:
        raise CliError("bad-range", f"{key}: {exc}", key)


def _parse_floats(text: str, key: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise CliError("bad-value", f"{key} must be a comma-separated number list", key)


def _resolve_site(args) -> spectra.SiteModel:
    if getattr(args, "config", None):
        return load_config(args.config).site
    return get_site(getattr(args, "site", "I"))


def _state_system(site, state: str):
    return site.ground if state == "ground" else site.excited


def _load_rates(path) -> shb.RateMatrix:
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read or not parser.has_section("rates"):
        raise CliError("bad-rates", f"{path}: expected a [rates] section", "rates")
    rates = np.zeros((4, 4))
    pump_rate, duration = 100.0, 0.3
    for key, raw in parser["rates"].items():
        try:
            value = float(raw)
        except ValueError:
            raise CliError("bad-rates", f"rates.{key} must be a number", f"rates.{key}")
        if key == "pump_rate":
            pump_rate = value
        elif key == "duration_s":
            duration = value
        elif len(key) == 3 and key[0] == "r" and key[1:].isdigit():
            k, l = int(key[1]) - 1, int(key[2]) - 1
            if not (0 <= k < 4 and 0 <= l < 4 and k != l):
                raise CliError("bad-rates", f"rates.{key}: levels must be 1..4 and distinct", f"rates.{key}")
            rates[k, l] = rates[l, k] = value
        else:
            raise CliError("bad-rates", f"unknown key rates.{key}", f"rates.{key}")
    return shb.RateMatrix(rates, pump_rate, duration)


def _add_common(p: argparse.ArgumentParser, default_out: str):
    p.add_argument("--site", default="I", help="built-in site preset (I or II)")
    p.add_argument("--config", help="config file overriding the preset")
    p.add_argument("--out", default=default_out, help="output CSV path (PGM derived for maps)")
    p.add_argument("--no-stamp", action="store_true", help="omit the version comment line")
    p.add_argument("--schema", action="store_true", help="print the CSV schema and exit")


def _build_parser() -> _Parser:
    top = _Parser(prog="kramers", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("levels", help="hyperfine level energies at a field")
    _add_common(p, "levels.csv")
    p.add_argument("--state", choices=("ground", "excited"), default="ground")
    p.add_argument("--field", "--B", dest="field", default="0,0,0", help="B vector in mT (crystal frame) or D1|D2|b")
    p.add_argument("--magnitude", type=float, default=None, help="scale a direction by this many mT")

    p = sub.add_parser("transitions", help="all six transition frequencies at a field")
    _add_common(p, "transitions.csv")
    p.add_argument("--state", choices=("ground", "excited"), default="ground")
    p.add_argument("--field", "--B", dest="field", default="0,0,0")
    p.add_argument("--magnitude", type=float, default=None)

    p = sub.add_parser("absorption", help="inhomogeneous absorption spectrum")
    _add_common(p, "absorption.csv")
    p.add_argument("--field", "--B", dest="field", default="0,0,0")
    p.add_argument("--range", default="-5:5:0.005", help="detuning grid start:stop:step (GHz)")
    p.add_argument("--model", choices=spectra.INTENSITY_MODELS, default="overlap")
    p.add_argument("--peaks-out", help="also write detected peaks (local maxima + prominence rule)")
    p.add_argument("--prominence", type=float, default=0.05,
                   help="peak prominence threshold as a fraction of the maximum")

    p = sub.add_parser("shb-map", help="hole/antihole map over a field sweep")
    _add_common(p, "shb-map.csv")
    p.add_argument("--direction", default="D1")
    p.add_argument("--magnitudes", default="0:150:1", help="field magnitudes mT, range or list")
    p.add_argument("--burn", type=float, default=0.0, help="burn detuning (GHz)")
    p.add_argument("--span", default="-5:5:0.002", help="probe detuning grid (GHz)")
    p.add_argument("--width", type=float, default=shb.DEFAULT_HOLE_WIDTH_MHZ, help="hole width (MHz)")
    p.add_argument("--rates", help="rate file with a [rates] section (rNM, pump_rate, duration_s)")

    p = sub.add_parser("odmr", help="spin transition lines with drive moments")
    _add_common(p, "odmr.csv")
    p.add_argument("--state", choices=("ground", "excited"), default="ground")
    p.add_argument("--field", "--B", dest="field", default="0,0,0")
    p.add_argument("--magnitude", type=float, default=None)
    p.add_argument("--ac-axis", default="b", help="oscillating-field direction")

    p = sub.add_parser("epr-map", help="resonance fields over a crystallographic plane")
    _add_common(p, "epr-map.csv")
    p.add_argument("--state", choices=("ground", "excited"), default="ground")
    p.add_argument("--plane", choices=sorted(magres.PLANES), default="D1-D2")
    p.add_argument("--step", type=float, default=5.0, help="angle step (degrees)")
    p.add_argument("--freq", type=float, default=9.7, help="microwave frequency (GHz)")
    p.add_argument("--bmax", type=float, default=1000.0, help="maximum field (mT)")

    p = sub.add_parser("fit", help="fit tensor orientation angles to transition data")
    _add_common(p, "fit-residuals.csv")
    p.add_argument("--data", required=True, help="CSV: kind,state,bx_mt,by_mt,bz_mt,value,sigma[,label]")
    p.add_argument("--free", default="ground", help="comma list: ground,excited,misalignment,eigenvalues")
    p.add_argument("--restarts", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--freq", type=float, default=9.7, help="microwave frequency for EPR points (GHz)")
    p.add_argument("--report", default="fit-report.txt")

    p = sub.add_parser("invert", help="A eigenvalue magnitudes from zero-field lines")
    _add_common(p, "invert.csv")
    p.add_argument("--lines", required=True, help="zero-field splittings in MHz, comma list")

    p = sub.add_parser("ordering", help="rank level-ordering sign classes against peaks")
    _add_common(p, "ordering.csv")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--peaks", help="peak detunings in GHz, comma list")
    group.add_argument("--peaks-file", help="CSV with a detuning_ghz column")

    p = sub.add_parser("zefoz", help="low-field-sensitivity points of one transition")
    _add_common(p, "zefoz.csv")
    p.add_argument("--state", choices=("ground", "excited"), default="ground")
    p.add_argument("--transition", default="1,2", help="1-based level pair, e.g. 1,2")
    p.add_argument("--radius", type=float, default=100.0, help="search ball radius (mT)")
    p.add_argument("--grid", default="64,11", help="directions,magnitudes of the coarse scan")
    p.add_argument("--refine-tol", type=float, default=zefoz.DEFAULT_REFINE_TOL_MHZ_PER_MT)

    p = sub.add_parser("selftest", help="run the embedded regression suite")
    p.add_argument("--schema", action="store_true")

    return top


def _field_from_args(args) -> np.ndarray:
    vec = np.asarray(_parse_vector(args.field), dtype=float)
    if getattr(args, "magnitude", None) is not None:
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise CliError("bad-vector", "cannot scale a zero direction", "field")
        vec = vec / norm * args.magnitude
    return vec


def _cmd_levels(args) -> int:
    site = _resolve_site(args)
    es = eigensystem(_state_system(site, args.state), _field_from_args(args))
    rows = [(n + 1, e) for n, e in enumerate(es.energies)]
    write_csv(args.out, ["level", "energy_ghz"], rows, stamp=not args.no_stamp)
    for n, e in rows:
        print(f"level {n}: {e:+.6f} GHz")
    return 0


def _cmd_transitions(args) -> int:
    site = _resolve_site(args)
    field = _field_from_args(args)
    table = transition_frequencies(eigensystem(_state_system(site, args.state), field), field)
    rows = [(t.lower + 1, t.upper + 1, t.frequency_ghz) for t in table.entries]
    write_csv(args.out, ["lower", "upper", "frequency_ghz"], rows, stamp=not args.no_stamp)
    for lo, up, f in rows:
        print(f"{lo} -> {up}: {f * 1e3:9.3f} MHz")
    return 0


def _cmd_absorption(args) -> int:
    site = _resolve_site(args)
    lo, hi, step = (float(p) for p in args.range.split(":"))
    detunings, amp = spectra.absorption_spectrum(
        site, _parse_vector(args.field), (lo, hi, step), intensity_model=args.model
    )
    write_csv(args.out, ["detuning_ghz", "amplitude"], zip(detunings, amp), stamp=not args.no_stamp)
    print(f"wrote {len(detunings)} samples to {args.out}")
    if args.peaks_out:
        from scipy.signal import find_peaks

        peaks, _ = find_peaks(amp, prominence=args.prominence * amp.max())
        write_csv(args.peaks_out, ["detuning_ghz"], [(detunings[k],) for k in peaks],
                  stamp=not args.no_stamp)
        print(f"wrote {len(peaks)} peaks to {args.peaks_out}")
    return 0


def _cmd_shb_map(args) -> int:
    site = _resolve_site(args)
    mags = _parse_range(args.magnitudes, "magnitudes")
    if mags.size == 0:
        raise CliError("bad-range", "magnitude list is empty", "magnitudes")
    lo, hi, step = (float(p) for p in args.span.split(":"))
    rates = _load_rates(args.rates) if args.rates else None
    fmap = shb.shb_field_map(
        site, _parse_vector(args.direction), mags, args.burn, rates,
        detuning_range_ghz=(lo, hi), detuning_step_ghz=step, hole_width_mhz=args.width,
    )
    rows = (
        (b, d, fmap.amplitudes[nb, nd])
        for nb, b in enumerate(fmap.magnitudes_mt)
        for nd, d in enumerate(fmap.detunings_ghz)
    )
    write_csv(args.out, ["field_mt", "detuning_ghz", "amplitude"], rows, stamp=not args.no_stamp)
    pgm_path = args.out.rsplit(".", 1)[0] + ".pgm"
    write_pgm(pgm_path, fmap.amplitudes, stamp=not args.no_stamp)
    print(f"wrote {fmap.amplitudes.shape[0]}x{fmap.amplitudes.shape[1]} map to {args.out} and {pgm_path}")
    return 0


def _cmd_odmr(args) -> int:
    site = _resolve_site(args)
    lines = magres.odmr_lines(
        _state_system(site, args.state), _field_from_args(args), ac_axis=_parse_vector(args.ac_axis)
    )
    rows = [
        (l.frequency_mhz, l.transition[0] + 1, l.transition[1] + 1, l.moment, l.strong)
        for l in lines
    ]
    write_csv(args.out, ["frequency_mhz", "lower", "upper", "moment", "strong"], rows,
              stamp=not args.no_stamp)
    for f, lo, up, m, strong in rows:
        print(f"{f:9.3f} MHz  ({lo}->{up})  moment {m:.4f}{'  strong' if strong else ''}")
    return 0


def _cmd_epr_map(args) -> int:
    site = _resolve_site(args)
    swept = magres.epr_angular_map(
        _state_system(site, args.state), args.plane, args.step, args.freq, args.bmax
    )
    rows = [
        (angle, r.field_mt, r.transition[0] + 1, r.transition[1] + 1, r.subsite, r.moment)
        for angle, resonances in swept
        for r in resonances
    ]
    write_csv(args.out, ["angle_deg", "field_mt", "lower", "upper", "subsite", "moment"],
              rows, stamp=not args.no_stamp)
    print(f"wrote {len(rows)} resonances to {args.out}")
    return 0


def _read_data_csv(path) -> list[fitting.DataPoint]:
    points = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise CliError("bad-data", f"{path}: empty data file", "data")
    header = [c.strip().lower() for c in rows[0]]
    expected = ["kind", "state", "bx_mt", "by_mt", "bz_mt", "value", "sigma"]
    if header[: len(expected)] != expected:
        raise CliError("bad-data", f"{path}: header must start with {','.join(expected)}", "data")
    has_label = len(header) > len(expected) and header[len(expected)] == "label"
    for n, row in enumerate(rows[1:], start=2):
        try:
            kind, state = row[0].strip().lower(), row[1].strip().lower()
            bx, by, bz, value = (float(x) for x in row[2:6])
            if row[6].strip():
                sigma = float(row[6])
            else:
                # per-kind defaults: hole width scale for SHB, narrow ODMR
                # lines, field accuracy for EPR
                sigma = fitting.DEFAULT_SIGMA_MT if kind == "epr" else fitting.DEFAULT_SIGMA_GHZ.get(kind, 2e-3)
            label = None
            if has_label and len(row) > 7 and row[7].strip():
                lo, up = (int(x) for x in row[7].replace("-", ",").split(","))
                label = (lo - 1, up - 1)
            points.append(fitting.DataPoint(kind, state, (bx, by, bz), value, sigma, label))
        except (ValueError, IndexError) as exc:
            raise CliError("bad-data", f"{path}:{n}: {exc}", f"line {n}")
    return points


def _cmd_fit(args) -> int:
    site = _resolve_site(args)
    free = {f.strip().lower() for f in args.free.split(",") if f.strip()}
    unknown = free - {"ground", "excited", "misalignment", "eigenvalues"}
    if unknown:
        raise CliError("bad-value", f"unknown free-parameter group(s): {sorted(unknown)}", "free")
    data = _read_data_csv(args.data)
    problem = fitting.FitProblem(
        site=site,
        fit_ground="ground" in free,
        fit_excited="excited" in free,
        fit_misalignment="misalignment" in free,
        refine_eigenvalues="eigenvalues" in free,
        nu_mw_ghz=args.freq,
    )
    result = fitting.fit(problem, data, restarts=args.restarts, seed=args.seed)

    rows = [
        (n + 1, p.kind, p.state, p.value, p.sigma,
         result.model_values[n], result.residuals[n], n in result.excluded)
        for n, p in enumerate(data)
    ]
    write_csv(args.out, ["index", "kind", "state", "value", "sigma", "model", "residual", "excluded"],
              rows, stamp=not args.no_stamp)

    lines = [
        f"status: {'ok' if result.success else 'fit-failed'} ({result.message})",
        f"rms: {result.rms_mhz:.4f} MHz" + (
            f" / {result.rms_field_mt:.4f} mT (EPR)" if result.rms_field_mt is not None else ""
        ),
        f"gated outliers: {list(result.excluded) or 'none'}",
        f"restart RMS spread (MHz): min {result.restart_rms_mhz[0]:.4f}, "
        f"max {result.restart_rms_mhz[-1]:.4f} over {len(result.restart_rms_mhz)} restarts",
    ]
    for name, value in zip(result.parameter_names, result.parameters):
        lines.append(f"  {name} = {value:.6f}")
    for state, rep in result.canonical_angles.items():
        a = rep["angles_deg"]
        lines.append(
            f"canonical {state} angles (subsite {rep['subsite']}): "
            f"({a[0]:.4f}, {a[1]:.4f}, {a[2]:.4f}) deg; values {np.round(rep['values_ghz'], 6)} GHz"
        )
    if result.covariance.size:
        sigmas = np.sqrt(np.clip(np.diag(result.covariance), 0, None))
        lines.append("parameter sigmas: " + ", ".join(
            f"{n}={s:.4g}" for n, s in zip(result.parameter_names, sigmas)))
    report = "\n".join(lines) + "\n"
    with open(args.report, "w") as fh:
        fh.write(report)
    print(report, end="")
    return 0 if result.success else 1


def _cmd_invert(args) -> int:
    site = _resolve_site(args)
    lines_mhz = _parse_floats(args.lines, "lines")
    lines_ghz = np.asarray(lines_mhz) * 1e-3
    mags, _problem = fitting.invert_and_seed(lines_ghz, site)
    rows = [(n + 1, m) for n, m in enumerate(mags)]
    write_csv(args.out, ["axis", "magnitude_ghz"], rows, stamp=not args.no_stamp)
    for n, m in rows:
        print(f"|A{n}| = {m:.6f} GHz")
    return 0


def _cmd_ordering(args) -> int:
    site = _resolve_site(args)
    if args.peaks:
        peaks = _parse_floats(args.peaks, "peaks")
    else:
        with open(args.peaks_file, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
        if not rows or "detuning_ghz" not in rows[0]:
            raise CliError("bad-data", f"{args.peaks_file}: need a detuning_ghz column", "peaks-file")
        col = rows[0].index("detuning_ghz")
        try:
            peaks = [float(r[col]) for r in rows[1:]]
        except (ValueError, IndexError):
            raise CliError("bad-data", f"{args.peaks_file}: non-numeric detuning entries", "peaks-file")
    ranked = spectra.ordering_search(site, peaks)
    rows = [
        (n + 1, r.ordering[0], r.ordering[1], r.rms_ghz * 1e3, r.offset_ghz, r.tied)
        for n, r in enumerate(ranked)
    ]
    write_csv(args.out, ["rank", "ground_class", "excited_class", "rms_mhz", "offset_ghz", "tied"],
              rows, stamp=not args.no_stamp)
    best = ranked[0]
    print(f"best ordering classes (ground, excited) = {best.ordering}, "
          f"rms {best.rms_ghz * 1e3:.3f} MHz{'  [TIED]' if best.tied else ''}")
    return 0


def _cmd_zefoz(args) -> int:
    site = _resolve_site(args)
    try:
        lo, up = (int(x) for x in args.transition.split(","))
    except ValueError:
        raise CliError("bad-value", "transition must be two comma-separated 1-based levels", "transition")
    if not (1 <= lo < up <= 4):
        raise CliError("bad-value", "transition levels must satisfy 1 <= lower < upper <= 4", "transition")
    grid = tuple(int(x) for x in args.grid.split(","))
    candidates = zefoz.zefoz_search(
        _state_system(site, args.state), (lo - 1, up - 1),
        region=args.radius, grid=grid, refine_tol_mhz_per_mt=args.refine_tol,
    )
    rows = [
        (*c.field_mt, c.transition[0] + 1, c.transition[1] + 1, c.grad_norm_mhz_per_mt,
         *c.curvature_eigs_mhz_per_mt2, c.classification, c.stationary)
        for c in candidates
    ]
    write_csv(args.out, ["bx_mt", "by_mt", "bz_mt", "lower", "upper", "grad_norm_mhz_per_mt",
                         "curv_eig1", "curv_eig2", "curv_eig3", "classification", "stationary"],
              rows, stamp=not args.no_stamp)
    for c in candidates[:5]:
        print(f"B = ({c.field_mt[0]:8.3f}, {c.field_mt[1]:8.3f}, {c.field_mt[2]:8.3f}) mT  "
              f"|grad| = {c.grad_norm_mhz_per_mt:.3e} MHz/mT  {c.classification}")
    return 0


# options whose values may legitimately start with "-" (ranges, vectors);
# argparse would read them as option names, so fold them into --opt=value
_DASH_VALUE_OPTS = {
    "--field", "--B", "--range", "--span", "--magnitudes", "--peaks", "--lines",
    "--ac-axis", "--direction", "--burn", "--magnitude", "--transition",
}


def _fold_dash_values(argv: list[str]) -> list[str]:
    out = []
    k = 0
    while k < len(argv):
        tok = argv[k]
        if tok in _DASH_VALUE_OPTS and k + 1 < len(argv) and argv[k + 1].startswith("-"):
            out.append(f"{tok}={argv[k + 1]}")
            k += 2
        else:
            out.append(tok)
            k += 1
    return out


_COMMANDS = {
    "levels": _cmd_levels,
    "transitions": _cmd_transitions,
    "absorption": _cmd_absorption,
    "shb-map": _cmd_shb_map,
    "odmr": _cmd_odmr,
    "epr-map": _cmd_epr_map,
    "fit": _cmd_fit,
    "invert": _cmd_invert,
    "ordering": _cmd_ordering,
    "zefoz": _cmd_zefoz,
}


def main(argv=None) -> int:
    if argv is None:
        argv = _sys.argv[1:]
    try:
        args = _build_parser().parse_args(_fold_dash_values(list(argv)))
        if getattr(args, "schema", False):
            print(SCHEMAS[args.command])
            return 0
        if args.command == "selftest":
            return 0 if run_selftest() else 1
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(json.dumps(exc.record), file=_sys.stderr)
        return 2
    except ConfigError as exc:
        print(json.dumps(exc.record()), file=_sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(json.dumps({"code": "error", "message": str(exc), "key": ""}), file=_sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
