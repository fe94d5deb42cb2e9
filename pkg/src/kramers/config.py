"""Flat sectioned key/value configuration for sites, tensors and constants.

A config file either names a built-in preset or fully specifies the four
tensors; unknown sections and keys are rejected before any computation.

Example::

    [site]
    preset = site-I

    [constants]
    mu_b_ghz_per_t = 13.996245

or, fully explicit::

    [site]
    name = my-crystal
    center_nm = 981.463
    fwhm_mhz = 800

    [ground.a]
    unit = GHz
    values = 0.484, 1.162, 5.254
    angles_deg = 72.25, 92.11, 63.92

    [ground.g]
    unit = dimensionless
    values = 0.31, 1.60, 6.53
    angles_deg = 72.80, 91.30, 66.19

    ... [excited.a], [excited.g] alike ...
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace

from .hamiltonian import G_N_DEFAULT, MU_B_GHZ_PER_T, MU_N_GHZ_PER_T, SpinSystem
from .presets import get_site, principal
from .spectra import SiteModel
from .tensors import assemble_tensor


class ConfigError(Exception):
    """Validation failure with a machine-readable (code, message, key)."""

    def __init__(self, code: str, message: str, key: str = ""):
        super().__init__(message)
        self.code = code
        self.message = message
        self.key = key

    def record(self) -> dict:
        return {"code": self.code, "message": self.message, "key": self.key}


_TENSOR_SECTIONS = ("ground.a", "ground.g", "excited.a", "excited.g")
_KNOWN_KEYS = {
    "site": {"preset", "name", "center_nm", "fwhm_mhz", "ordering_ground", "ordering_excited"},
    "constants": {"mu_b_ghz_per_t", "mu_n_ghz_per_t", "g_n"},
    **{s: {"unit", "values", "angles_deg"} for s in _TENSOR_SECTIONS},
}
_TENSOR_UNITS = {
    "ground.a": {"ghz"},
    "excited.a": {"ghz"},
    "ground.g": {"dimensionless", "none", "1"},
    "excited.g": {"dimensionless", "none", "1"},
}


@dataclass(frozen=True)
class RunConfig:
    site: SiteModel
    mu_b_ghz_per_t: float = MU_B_GHZ_PER_T
    mu_n_ghz_per_t: float = MU_N_GHZ_PER_T
    g_n: float = G_N_DEFAULT


def _float(section: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError("bad-value", f"{section}.{key} must be a number, got {raw!r}", f"{section}.{key}")


def _triple(section: str, key: str, raw: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 3:
        raise ConfigError("bad-value", f"{section}.{key} must be three comma-separated numbers", f"{section}.{key}")
    return tuple(_float(section, key, p) for p in parts)


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text into a ready-to-use RunConfig."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("parse-error", str(exc))

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError("unknown-section", f"unknown section [{section}]", section)
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError("unknown-key", f"unknown key {key!r} in [{section}]", f"{section}.{key}")

    constants = {
        "mu_b_ghz_per_t": MU_B_GHZ_PER_T,
        "mu_n_ghz_per_t": MU_N_GHZ_PER_T,
        "g_n": G_N_DEFAULT,
    }
    if parser.has_section("constants"):
        for key in parser["constants"]:
            constants[key] = _float("constants", key, parser["constants"][key])
        if constants["mu_b_ghz_per_t"] <= 0 or constants["mu_n_ghz_per_t"] <= 0:
            raise ConfigError("bad-value", "magnetons must be positive", "constants")

    site_section = parser["site"] if parser.has_section("site") else {}
    preset = site_section.get("preset")
    tensor_sections_present = [s for s in _TENSOR_SECTIONS if parser.has_section(s)]

    if preset is not None:
        if tensor_sections_present:
            raise ConfigError(
                "conflict", "config may name a preset or specify tensors, not both",
                "site.preset",
            )
        try:
            site = get_site(preset)
        except KeyError as exc:
            raise ConfigError("unknown-preset", str(exc.args[0]), "site.preset")
    else:
        missing = [s for s in _TENSOR_SECTIONS if not parser.has_section(s)]
        if missing:
            raise ConfigError(
                "missing-section", f"tensor sections missing: {', '.join(missing)}", missing[0]
            )
        for need in ("center_nm", "fwhm_mhz"):
            if need not in site_section:
                raise ConfigError("missing-key", f"site.{need} is required", f"site.{need}")

        tensors = {}
        for section in _TENSOR_SECTIONS:
            sec = parser[section]
            for need in ("unit", "values", "angles_deg"):
                if need not in sec:
                    raise ConfigError("missing-key", f"{section}.{need} is required", f"{section}.{need}")
            unit = sec["unit"].strip().lower()
            if unit not in _TENSOR_UNITS[section]:
                raise ConfigError(
                    "bad-unit",
                    f"{section}.unit must be one of {sorted(_TENSOR_UNITS[section])}, got {unit!r}",
                    f"{section}.unit",
                )
            values = _triple(section, "values", sec["values"])
            angles = _triple(section, "angles_deg", sec["angles_deg"])
            tensors[section] = assemble_tensor(principal(values, angles))

        g_n = constants["g_n"]
        ground = SpinSystem(A=tensors["ground.a"], g=tensors["ground.g"], g_n=g_n)
        excited = SpinSystem(A=tensors["excited.a"], g=tensors["excited.g"], g_n=g_n)
        site = SiteModel(
            ground=ground,
            excited=excited,
            center_nm=_float("site", "center_nm", site_section["center_nm"]),
            fwhm_mhz=_float("site", "fwhm_mhz", site_section["fwhm_mhz"]),
            label=site_section.get("name", "custom"),
        )

    ordering = tuple(
        int(_float("site", key, site_section[key])) if key in site_section else default
        for key, default in (("ordering_ground", site.ordering[0]), ("ordering_excited", site.ordering[1]))
    )
    if ordering != site.ordering:
        if any(c not in (1, -1) for c in ordering):
            raise ConfigError("bad-value", "ordering classes must be +1 or -1", "site.ordering_ground")
        site = site.with_ordering(ordering)

    site = replace(
        site,
        ground=replace(
            site.ground,
            g_n=constants["g_n"], mu_b=constants["mu_b_ghz_per_t"], mu_n=constants["mu_n_ghz_per_t"],
        ),
        excited=replace(
            site.excited,
            g_n=constants["g_n"], mu_b=constants["mu_b_ghz_per_t"], mu_n=constants["mu_n_ghz_per_t"],
        ),
    )
    return RunConfig(site=site, **constants)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
