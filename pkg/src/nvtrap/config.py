"""Run-configuration parsing for the batch CLI.

Configs are TOML (JSON accepted as an alternative). Dimensioned numbers
are strings with an explicit unit suffix ("639.13 nm", "4 mW",
"100 GHz"); rates quoted as ordinary frequencies are converted to
angular units on parse. Unknown keys are rejected with their full path
so typos never silently fall back to defaults.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib

from scipy.constants import c as C_LIGHT

from .langevin import FluidEnvironment
from .montecarlo import PopulationModel
from .photophysics import (
    DEFAULT_DEBYE_WALLER,
    DEFAULT_GAMMA_PH,
    DEFAULT_N_HOST,
    DEFAULT_TOTAL_RATE,
    DEFAULT_ZPL_WAVELENGTH,
    NVPhotophysics,
)
from .trap import LAMBDA_REF, BeamConfig
from .collective import Nanodiamond

TWO_PI = 2.0 * math.pi


class ConfigError(Exception):
    """Raised for any schema, type, or unit problem; message carries the key path."""


_UNITS = {
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9, "pm": 1e-12},
    "power": {"W": 1.0, "mW": 1e-3, "uW": 1e-6, "µW": 1e-6},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9, "THz": 1e12},
    "temperature": {"K": 1.0},
}
# rates use frequency suffixes but land in angular units
_ANGULAR = {"rate"}


def parse_quantity(value, kind: str, path: str) -> float:
    """One dimensioned value -> SI float. Strings must carry a unit suffix."""
    table_kind = "frequency" if kind == "rate" else kind
    if kind in ("float", "int"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return int(value) if kind == "int" else float(value)
    if not isinstance(value, str):
        raise ConfigError(
            f"{path}: dimensioned values need a unit suffix string, got {value!r}"
        )
    parts = value.strip().split()
    if len(parts) != 2:
        raise ConfigError(f"{path}: expected '<number> <unit>', got {value!r}")
    try:
        num = float(parts[0])
    except ValueError:
        raise ConfigError(f"{path}: bad number in {value!r}") from None
    units = _UNITS[table_kind]
    if parts[1] not in units:
        raise ConfigError(
            f"{path}: unknown unit {parts[1]!r}, expected one of {sorted(units)}"
        )
    out = num * units[parts[1]]
    if kind in _ANGULAR:
        out *= TWO_PI
    return out


@dataclass(frozen=True)
class Field:
    kind: str
    default: object = None
    required: bool = False
    choices: tuple = ()

    def parse(self, value, path):
        if self.kind == "str":
            if not isinstance(value, str):
                raise ConfigError(f"{path}: expected a string, got {value!r}")
            if self.choices and value not in self.choices:
                raise ConfigError(
                    f"{path}: {value!r} not one of {list(self.choices)}"
                )
            return value
        if self.kind == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: expected a boolean, got {value!r}")
            return value
        if self.kind.endswith("_list"):
            base = self.kind[:-5]
            if not isinstance(value, list):
                raise ConfigError(f"{path}: expected a list, got {value!r}")
            return [parse_quantity(v, base, f"{path}[{i}]") for i, v in enumerate(value)]
        if self.kind == "pair_list":  # unreachable via _list branch; kept explicit
            raise AssertionError
        return parse_quantity(value, self.kind, path)


def _pairs_field(value, path):
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list of [blue, red] pairs")
    out = []
    for i, pair in enumerate(value):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ConfigError(f"{path}[{i}]: expected a [blue, red] pair")
        out.append(
            (
                parse_quantity(pair[0], "length", f"{path}[{i}][0]"),
                parse_quantity(pair[1], "length", f"{path}[{i}][1]"),
            )
        )
    return out


SCHEMA = {
    "pipeline": Field(
        "str",
        required=True,
        choices=("forces", "sweep", "virtual-experiment", "analyze", "mc", "fit-grain"),
    ),
    "seed": Field("int", default=0),
    "out": Field("str", default="out"),
    "workers": Field("int", default=1),
    "physics": {
        "gamma_total": Field("rate", default=DEFAULT_TOTAL_RATE),
        "gamma_ph": Field("rate", default=DEFAULT_GAMMA_PH),
        "gamma_c": Field("rate", default=None),
        "zpl_wavelength": Field("length", default=DEFAULT_ZPL_WAVELENGTH),
        "debye_waller": Field("float", default=DEFAULT_DEBYE_WALLER),
        "n_host": Field("float", default=DEFAULT_N_HOST),
    },
    "beam": {
        "wavelength": Field("length", default=LAMBDA_REF),
        "power": Field("power", default=4e-3),
        "w0_ref": Field("length", default=470e-9),
        "w0_ref_wavelength": Field("length", default=640e-9),
        "n_medium": Field("float", default=1.33),
        "waist_law": Field("str", default="linear", choices=("linear", "constant")),
    },
    "crystal": {
        "radius": Field("length", default=75e-9),
        "n_nv": Field("int", default=9500),
        "zpl_center": Field("length", default=639.08e-9),
        "zpl_sigma": Field("length", default=1.82e-9),
    },
    "sweep": {
        "lambda_min": Field("length", default=629e-9),
        "lambda_max": Field("length", default=648e-9),
        "lambda_step": Field("length", default=0.5e-9),
        "lambda_ref": Field("length", default=LAMBDA_REF),
        "mode": Field("str", default="collective", choices=("collective", "independent")),
        "grain_width": Field("rate", default=TWO_PI * 100e9),
    },
    "population": {
        "size_mean": Field("length", default=150e-9),
        "size_sd": Field("length", default=23e-9),
        "nv_mean": Field("float", default=9500.0),
        "nv_anchor_size": Field("length", default=150e-9),
        "zpl_mix_means": Field("length_list", default=[638.2e-9, 639.6e-9]),
        "zpl_mix_weights": Field("float_list", default=[0.4, 0.6]),
        "zpl_mix_sd": Field("length", default=0.15e-9),
        "zpl_sigma_mean": Field("length", default=1.82e-9),
        "zpl_sigma_sd": Field("length", default=0.55e-9),
        "zpl_sigma_min": Field("length", default=0.2e-9),
    },
    "mc": {
        "n_trials": Field("int", default=1000),
        "mode": Field("str", default="collective", choices=("collective", "independent")),
        "trust_n": Field("int", default=320),
        "xi_noise_sd": Field("float", default=0.0),
    },
    "sim": {
        "dt": Field("time", default=1e-5),
        "segment_duration": Field("time", default=10.0),
        "temperature": Field("temperature", default=295.0),
        "viscosity": Field("float", default=8.9e-4),
        "integrator": Field("str", default="euler", choices=("euler", "exact")),
        "restoring": Field("str", default="two_kappa", choices=("two_kappa", "kappa")),
        "readout_noise_sd": Field("length", default=0.0),
    },
    "experiment": {
        "pairs": Field("pairs", default=[(633e-9, 642e-9)]),
        "repeats": Field("int", default=5),
        "power_parking": Field("power", default=6e-3),
        "power_probe": Field("power", default=4e-3),
        "parking_wavelength": Field("length", default=660e-9),
        "mode": Field("str", default="independent", choices=("collective", "independent")),
        "write_traces": Field("bool", default=False),
    },
    "analyze": {
        "trace_csv": Field("str", default=""),
        "nperseg": Field("int", default=2**14),
        "lof": Field("bool", default=True),
        "lof_k": Field("int", default=6),
        "lof_threshold": Field("float", default=5.7),
    },
    "fit_grain": {
        "candidates": Field("rate_list", default=[TWO_PI * w for w in (50e9, 100e9, 200e9)]),
        "target_csv": Field("str", default=""),
        "synthesize_width": Field("rate", default=None),
    },
}


def _walk(raw: dict, schema: dict, path: str) -> dict:
    out = {}
    for key, val in raw.items():
        full = f"{path}{key}"
        if key not in schema:
            raise ConfigError(f"unknown key: {full}")
        node = schema[key]
        if isinstance(node, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{full}: expected a table")
            out[key] = _walk(val, node, full + ".")
        elif node.kind == "pairs":
            out[key] = _pairs_field(val, full)
        else:
            out[key] = node.parse(val, full)
    # fill defaults and catch missing required keys
    for key, node in schema.items():
        if key in out:
            continue
        full = f"{path}{key}"
        if isinstance(node, dict):
            out[key] = _walk({}, node, full + ".")
        elif node.required:
            raise ConfigError(f"missing required key: {full}")
        else:
            out[key] = node.default
    return out


def load_raw(path: str) -> dict:
    """Read TOML or JSON from disk; extension picks the parser."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.endswith(".json"):
        try:
            raw = json.loads(blob)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    else:
        try:
            raw = tomllib.loads(blob.decode("utf-8"))
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a table")
    return raw


@dataclass(frozen=True)
class RunConfig:
    pipeline: str
    seed: int
    out_dir: str
    workers: int
    physics: NVPhotophysics
    beam: BeamConfig
    crystal: Nanodiamond
    population: PopulationModel
    environment: FluidEnvironment
    sweep: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    analyze: dict = field(default_factory=dict)
    fit_grain: dict = field(default_factory=dict)


def build_run_config(raw: dict) -> RunConfig:
    cfg = _walk(raw, SCHEMA, "")
    try:
        return _assemble(cfg)
    except ValueError as exc:
        # dataclass invariants (negative power, bad radius, ...) are
        # configuration mistakes, not numerical failures
        raise ConfigError(str(exc)) from exc


def _assemble(cfg: dict) -> RunConfig:
    p = cfg["physics"]
    phys = NVPhotophysics.from_total_rate(
        gamma_total=p["gamma_total"],
        omega0=TWO_PI * C_LIGHT / p["zpl_wavelength"],
        debye_waller=p["debye_waller"],
        gamma_ph=p["gamma_ph"],
        gamma_c=p["gamma_c"],
        n_host=p["n_host"],
    )
    b = cfg["beam"]
    beam = BeamConfig(
        wavelength=b["wavelength"],
        power=b["power"],
        w0_ref=b["w0_ref"],
        w0_ref_wavelength=b["w0_ref_wavelength"],
        n_medium=b["n_medium"],
        waist_law=b["waist_law"],
    )
    c = cfg["crystal"]
    lam_c = c["zpl_center"]
    crystal = Nanodiamond(
        radius=c["radius"],
        n_nv=c["n_nv"],
        zpl_center=TWO_PI * C_LIGHT / lam_c,
        zpl_sigma=TWO_PI * C_LIGHT * c["zpl_sigma"] / lam_c**2,
    )
    pop = cfg["population"]
    lam_mix = pop["zpl_mix_means"]
    population = PopulationModel(
        size_mean=pop["size_mean"],
        size_sd=pop["size_sd"],
        nv_mean=pop["nv_mean"],
        nv_anchor_size=pop["nv_anchor_size"],
        zpl_mix_means=tuple(lam_mix),
        zpl_mix_weights=tuple(pop["zpl_mix_weights"]),
        zpl_mix_sd=pop["zpl_mix_sd"],
        zpl_sigma_mean=pop["zpl_sigma_mean"],
        zpl_sigma_sd=pop["zpl_sigma_sd"],
        zpl_sigma_min=pop["zpl_sigma_min"],
    )
    env = FluidEnvironment(
        temperature=cfg["sim"]["temperature"], viscosity=cfg["sim"]["viscosity"]
    )
    return RunConfig(
        pipeline=cfg["pipeline"],
        seed=cfg["seed"],
        out_dir=cfg["out"],
        workers=cfg["workers"],
        physics=phys,
        beam=beam,
        crystal=crystal,
        population=population,
        environment=env,
        sweep=cfg["sweep"],
        mc=cfg["mc"],
        sim=cfg["sim"],
        experiment=cfg["experiment"],
        analyze=cfg["analyze"],
        fit_grain=cfg["fit_grain"],
    )


def validate_config(raw: dict) -> list:
    """Schema plus plausibility checks, no execution. Returns diagnostics."""
    diags = []
    try:
        rc = build_run_config(raw)
    except ConfigError as exc:
        return [f"error: {exc}"]

    if rc.beam.power <= 0:
        diags.append("error: beam.power must be positive")
    if rc.crystal.radius <= 0:
        diags.append("error: crystal.radius must be positive")
    lam_min = rc.sweep["lambda_min"]
    if rc.crystal.radius > lam_min / rc.beam.n_medium / 4.0:
        diags.append(
            "warning: crystal radius exceeds lambda/4 in the medium; "
            "point-dipole gradient stiffness is approximate there"
        )
    # dt stability against the stiffest configured trap
    from .langevin import RESTORING_FACTORS, drag_coefficient
    from .trap import classical_stiffness

    beta = drag_coefficient(rc.crystal.radius, rc.environment)
    try:
        with warnings.catch_warnings():
            # the marginal-radius case already has its own diagnostic above
            warnings.simplefilter("ignore")
            k_cl = classical_stiffness(rc.crystal.radius, rc.beam, rc.physics.n_host)
    except Exception:
        k_cl = 0.0
    k_eff = RESTORING_FACTORS[rc.sim["restoring"]] * max(k_cl, 1e-30)
    dt_max = 0.1 * beta / k_eff
    if rc.sim["dt"] > dt_max:
        diags.append(
            f"warning: sim.dt={rc.sim['dt']:.3e} s exceeds the stability bound "
            f"0.1*beta/k = {dt_max:.3e} s for the configured beam"
        )
    if rc.pipeline == "analyze" and not rc.analyze["trace_csv"]:
        diags.append("error: analyze.trace_csv is required for the analyze pipeline")
    if rc.pipeline == "fit-grain":
        fg = rc.fit_grain
        if not fg["target_csv"] and fg["synthesize_width"] is None:
            diags.append(
                "error: fit_grain needs target_csv or synthesize_width"
            )
    return diags
