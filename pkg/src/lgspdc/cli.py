"""Command-line front end: config ingestion, one subcommand per report type,
CSV/JSON emission, and a run manifest.

Configuration precedence is flags > config file > built-in defaults.  The
config file is JSON against a fixed schema; unknown keys are rejected before
any computation starts.  Every run writes its data files plus manifest.json
(config hash, tool version, dispersion model, wall time, per-output
convergence flags) into the output directory and nothing anywhere else.

Exit status: 0 success, 1 computational failure (domain, phase-matching, or
boundary-hit errors), 2 usage or config failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .amplitude import Method, QuadratureSettings
from .dispersion import (
    REFERENCE_LENGTH,
    REFERENCE_POLING_PERIOD,
    REFERENCE_PUMP_WAVELENGTH,
    CrystalSpec,
    DispersionModel,
    DomainError,
    PhaseMatchingError,
)
from .lgmodes import FocalConfig, ModeSpec
from .optimizer import BoundaryHitError, mode_table, rate_surface, temp_scan
from .rates import (
    Normalization,
    _config_hash,
    _csv_table,
    _json_envelope,
    pair_rate_kernel,
    spectrum,
    waist_surface,
)

CONFIG_ENV = "LGSPDC_CONFIG"

_METHODS = {
    "full": Method.FULL_CLOSED_FORM,
    "degenerate": Method.DEGENERATE_APPROX,
    "quadratic": Method.QUADRATIC_KZ,
}


class ConfigError(ValueError):
    """Invalid usage or configuration; maps to exit status 2."""


# ---------------------------------------------------------------------------
# configuration

_DEFAULTS = {
    "crystal": {
        "length_m": REFERENCE_LENGTH,
        "poling_period_m": REFERENCE_POLING_PERIOD,
        "pump_wavelength_m": REFERENCE_PUMP_WAVELENGTH,
    },
    "model": "ktp_fradkin_emanueli",
    "temperature_C": 24.5,
    "normalization": "GlobalMax",
    "output_dir": "lgspdc-out",
    "threads": 0,
    "quadrature": {
        "base_nodes": 32,
        "max_refinements": 10,
        "rel_tolerance": 1e-10,
    },
    "spectrum": {"omega_min": 0.7, "omega_max": 1.3, "omega_points": 1201},
    "compare": {"omega_min": 0.7, "omega_max": 1.3, "omega_points": 601},
    "surface": {
        "fp_min": 0.05, "fp_max": 10.0,
        "fsi_min": 0.05, "fsi_max": 20.0,
        "grid_fp": 9, "grid_fsi": 13,
        "rel_tolerance": 1e-3,
    },
    "optimize": {
        "fp_min": 0.05, "fp_max": 10.0,
        "fsi_min": 0.05, "fsi_max": 20.0,
        "rel_tolerance": 1e-3,
    },
    "mode_table": {
        "fp_min": 0.05, "fp_max": 10.0,
        "fsi_min": 0.05, "fsi_max": 20.0,
        "rel_tolerance": 1e-3,
    },
    "waist_surface": {
        "ws_min_um": 18.0, "ws_max_um": 60.0,
        "wi_min_um": 18.0, "wi_max_um": 60.0,
        "grid_density": 15,
        "pump_waist_um": "optimize",
    },
    "temp_scan": {"fsi_min": 0.05, "fsi_max": 20.0, "rel_tolerance": 1e-3},
}


def _check_tree(doc, defaults, prefix=""):
    """Reject unknown keys and type mismatches against the defaults tree."""
    for key, value in doc.items():
        dotted = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key: {dotted}")
        ref = defaults[key]
        if isinstance(ref, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {dotted} must be an object")
            _check_tree(value, ref, prefix=f"{dotted}.")
        elif key == "pump_waist_um":
            ok = value == "optimize" or _is_number(value)
            if not ok:
                raise ConfigError(
                    f"config key {dotted} must be a number or 'optimize'")
        elif isinstance(ref, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"config key {dotted} must be a boolean")
        elif isinstance(ref, int):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"config key {dotted} must be an integer")
        elif isinstance(ref, float):
            if not _is_number(value):
                raise ConfigError(f"config key {dotted} must be a number")
        elif isinstance(ref, str):
            if not isinstance(value, str):
                raise ConfigError(f"config key {dotted} must be a string")


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _merge(base, doc):
    for key, value in doc.items():
        if isinstance(value, dict):
            _merge(base[key], value)
        else:
            base[key] = value


class RunConfig:
    """Validated, fully defaulted configuration tree."""

    def __init__(self, data: dict):
        self.data = data

    def __getitem__(self, key):
        return self.data[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.data == other.data

    def section(self, name: str) -> dict:
        return self.data[name]

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"


def load_config(path) -> RunConfig:
    """Parse, validate, and default a JSON config file.

    Raises ConfigError naming the path, the malformed document, the unknown
    key, or the out-of-range value.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}")
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    _check_tree(doc, _DEFAULTS)
    data = copy.deepcopy(_DEFAULTS)
    _merge(data, doc)
    cfg = RunConfig(data)
    _validate_ranges(cfg, _load_model(cfg))
    return cfg


def _load_model(cfg: RunConfig) -> DispersionModel:
    name = cfg["model"]
    if name.endswith(".json") or os.sep in name:
        if not Path(name).is_file():
            raise ConfigError(f"dispersion model file not found: {name}")
        return DispersionModel.from_json(name)
    try:
        return DispersionModel.from_name(name)
    except FileNotFoundError:
        raise ConfigError(f"unknown dispersion model: {name}")


def _require(condition, dotted, message):
    if not condition:
        raise ConfigError(f"config key {dotted}: {message}")


def _validate_ranges(cfg: RunConfig, model: DispersionModel) -> None:
    crystal = cfg["crystal"]
    for key in ("length_m", "poling_period_m", "pump_wavelength_m"):
        _require(_is_number(crystal[key]) and crystal[key] > 0,
                 f"crystal.{key}", "must be positive")
    lam_lo, lam_hi = model.validity_wavelength_range
    _require(lam_lo <= crystal["pump_wavelength_m"] <= lam_hi,
             "crystal.pump_wavelength_m",
             f"{crystal['pump_wavelength_m']:g} outside dispersion model "
             f"validity range [{lam_lo:g}, {lam_hi:g}] m")
    _check_temperature(cfg["temperature_C"], model, "temperature_C")
    _require(cfg["normalization"] in tuple(n.value for n in Normalization),
             "normalization", "must be 'GlobalMax' or 'Raw'")
    _require(cfg["threads"] >= 0, "threads", "must be non-negative")

    quad = cfg.section("quadrature")
    _require(quad["base_nodes"] >= 16, "quadrature.base_nodes",
             "must be at least 16")
    _require(quad["max_refinements"] >= 1, "quadrature.max_refinements",
             "must be at least 1")
    _require(quad["rel_tolerance"] > 0, "quadrature.rel_tolerance",
             "must be positive")

    for name in ("spectrum", "compare"):
        sec = cfg.section(name)
        _require(0.0 < sec["omega_min"] < sec["omega_max"] < 2.0,
                 f"{name}.omega_min",
                 "window must satisfy 0 < omega_min < omega_max < 2")
        _require(sec["omega_points"] >= 9, f"{name}.omega_points",
                 "must be at least 9")

    for name in ("surface", "optimize", "mode_table", "temp_scan"):
        sec = cfg.section(name)
        if "fp_min" in sec:
            _require(0.0 < sec["fp_min"] < sec["fp_max"], f"{name}.fp_min",
                     "bounds must be positive and increasing")
        _require(0.0 < sec["fsi_min"] < sec["fsi_max"], f"{name}.fsi_min",
                 "bounds must be positive and increasing")
        _require(sec["rel_tolerance"] > 0, f"{name}.rel_tolerance",
                 "must be positive")
    _require(cfg["surface"]["grid_fp"] >= 8, "surface.grid_fp",
             "must be at least 8")
    _require(cfg["surface"]["grid_fsi"] >= 8, "surface.grid_fsi",
             "must be at least 8")

    ws = cfg.section("waist_surface")
    _require(0.0 < ws["ws_min_um"] < ws["ws_max_um"], "waist_surface.ws_min_um",
             "bounds must be positive and increasing")
    _require(0.0 < ws["wi_min_um"] < ws["wi_max_um"], "waist_surface.wi_min_um",
             "bounds must be positive and increasing")
    _require(ws["grid_density"] >= 2, "waist_surface.grid_density",
             "must be at least 2")
    if ws["pump_waist_um"] != "optimize":
        _require(_is_number(ws["pump_waist_um"]) and ws["pump_waist_um"] > 0,
                 "waist_surface.pump_waist_um",
                 "must be a positive number or 'optimize'")


def _check_temperature(T, model, dotted):
    t_lo, t_hi = model.validity_temperature_range
    _require(_is_number(T) and t_lo <= T <= t_hi, dotted,
             f"{T:g} outside dispersion model validity range "
             f"[{t_lo:g}, {t_hi:g}] C")


def _resolve(args) -> tuple[RunConfig, DispersionModel]:
    """flags > config file (--config or $LGSPDC_CONFIG) > defaults."""
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        cfg = load_config(path)
    else:
        cfg = RunConfig(copy.deepcopy(_DEFAULTS))

    for dest, section, key in _OVERRIDES.get(args.command, ()):
        value = getattr(args, dest, None)
        if value is None:
            continue
        target = cfg.section(section) if section else cfg.data
        target[key] = value
    if getattr(args, "out", None) is not None:
        cfg.data["output_dir"] = args.out
    if getattr(args, "threads", None) is not None:
        cfg.data["threads"] = args.threads
    if getattr(args, "model", None) is not None:
        cfg.data["model"] = args.model
    temp = getattr(args, "temp", None)
    if temp is not None and args.command != "spectrum":
        cfg.data["temperature_C"] = temp

    model = _load_model(cfg)
    _validate_ranges(cfg, model)
    return cfg, model


_OVERRIDES = {
    "spectrum": [
        ("omega_min", "spectrum", "omega_min"),
        ("omega_max", "spectrum", "omega_max"),
        ("omega_points", "spectrum", "omega_points"),
        ("normalization", None, "normalization"),
    ],
    "compare": [
        ("omega_min", "compare", "omega_min"),
        ("omega_max", "compare", "omega_max"),
        ("omega_points", "compare", "omega_points"),
    ],
    "surface": [
        ("fp_min", "surface", "fp_min"),
        ("fp_max", "surface", "fp_max"),
        ("fsi_min", "surface", "fsi_min"),
        ("fsi_max", "surface", "fsi_max"),
        ("grid_fp", "surface", "grid_fp"),
        ("grid_fsi", "surface", "grid_fsi"),
        ("rel_tolerance", "surface", "rel_tolerance"),
    ],
    "optimize": [
        ("fp_min", "optimize", "fp_min"),
        ("fp_max", "optimize", "fp_max"),
        ("fsi_min", "optimize", "fsi_min"),
        ("fsi_max", "optimize", "fsi_max"),
        ("rel_tolerance", "optimize", "rel_tolerance"),
    ],
    "mode-table": [
        ("fp_min", "mode_table", "fp_min"),
        ("fp_max", "mode_table", "fp_max"),
        ("fsi_min", "mode_table", "fsi_min"),
        ("fsi_max", "mode_table", "fsi_max"),
        ("rel_tolerance", "mode_table", "rel_tolerance"),
    ],
    "waist-surface": [
        ("ws_min", "waist_surface", "ws_min_um"),
        ("ws_max", "waist_surface", "ws_max_um"),
        ("wi_min", "waist_surface", "wi_min_um"),
        ("wi_max", "waist_surface", "wi_max_um"),
        ("density", "waist_surface", "grid_density"),
        ("wp", "waist_surface", "pump_waist_um"),
    ],
    "temp-scan": [
        ("fsi_min", "temp_scan", "fsi_min"),
        ("fsi_max", "temp_scan", "fsi_max"),
        ("rel_tolerance", "temp_scan", "rel_tolerance"),
    ],
}


# ---------------------------------------------------------------------------
# shared helpers

def _crystal_for(cfg: RunConfig, T: float) -> CrystalSpec | None:
    """None when the configured geometry is the library reference, so
    library envelopes keep their canonical configuration records."""
    c = cfg["crystal"]
    geometry = (c["length_m"], c["poling_period_m"], c["pump_wavelength_m"])
    if geometry == (REFERENCE_LENGTH, REFERENCE_POLING_PERIOD,
                    REFERENCE_PUMP_WAVELENGTH):
        return None
    return CrystalSpec(c["length_m"], c["poling_period_m"], float(T),
                       c["pump_wavelength_m"])


def _settings(cfg: RunConfig) -> QuadratureSettings:
    return QuadratureSettings(**cfg.section("quadrature"))


def _threads(cfg: RunConfig) -> int:
    return cfg["threads"] or (os.cpu_count() or 1)


def _parse_multi(raw: str, cast, flag: str) -> list:
    try:
        return [cast(tok) for tok in str(raw).split(",") if tok != ""]
    except ValueError:
        raise ConfigError(f"flag {flag} has a malformed value: {raw!r}")


def _write(outdir: Path, name: str, text: str) -> str:
    (outdir / name).write_text(text, encoding="utf-8")
    return name


def _hash_payload(cfg: RunConfig, command: str, parameters: dict) -> dict:
    config = {k: v for k, v in cfg.data.items()
              if k not in ("output_dir", "threads")}
    return {"command": command, "parameters": parameters, "config": config}


def _write_manifest(outdir, cfg, model, command, parameters, outputs,
                    wall_time) -> None:
    doc = {
        "schema": "lgspdc.manifest/1",
        "command": command,
        "version": __version__,
        "model": model.name,
        "parameters": parameters,
        "config": cfg.data,
        "config_hash": _config_hash(_hash_payload(cfg, command, parameters)),
        "wall_time_s": wall_time,
        "outputs": outputs,
    }
    _write(outdir, "manifest.json", json.dumps(doc, indent=2, sort_keys=True)
           + "\n")


# ---------------------------------------------------------------------------
# subcommand handlers

def cmd_spectrum(args, cfg, model, outdir):
    sets = {
        "l": _parse_multi(args.l, int, "--l"),
        "n": _parse_multi(args.n, int, "--n"),
        "fp": _parse_multi(args.fp, float, "--fp"),
        "fsi": _parse_multi(args.fsi, float, "--fsi"),
        "temp": (_parse_multi(args.temp, float, "--temp")
                 if args.temp is not None else [cfg["temperature_C"]]),
    }
    if args.ns is not None:
        sets["ns"] = _parse_multi(args.ns, int, "--ns")
    if args.ni is not None:
        sets["ni"] = _parse_multi(args.ni, int, "--ni")
    varying = [flag for flag, vals in sets.items() if len(vals) > 1]
    if len(varying) > 1:
        raise ConfigError(
            f"vary at most one parameter per invocation, got: "
            f"{', '.join('--' + f for f in varying)}")
    for T in sets["temp"]:
        _check_temperature(T, model, "temperature_C")

    base = {flag: vals[0] for flag, vals in sets.items()}
    if varying:
        runs = [{**base, varying[0]: v} for v in sets[varying[0]]]
    else:
        runs = [base]

    sec = cfg.section("spectrum")
    grid = np.linspace(sec["omega_min"], sec["omega_max"],
                       sec["omega_points"])
    method = _METHODS[args.method]
    normalization = Normalization(cfg["normalization"])
    column = ("P_normalized" if normalization is Normalization.GLOBAL_MAX
              else "P_raw")

    outputs, curves = {}, []
    for run in runs:
        mode = ModeSpec(run["l"], run.get("ns", run["n"]),
                        run.get("ni", run["n"]))
        focal = FocalConfig(run["fp"], run["fsi"])
        result = spectrum(mode, focal, run["temp"], grid,
                          normalization=normalization, method=method,
                          crystal=_crystal_for(cfg, run["temp"]), model=model,
                          settings=_settings(cfg))
        suffix = f"_{varying[0]}{run[varying[0]]:g}" if varying else ""
        name = f"spectrum{suffix}.csv"
        rows = [(w, p, method.value)
                for w, p in zip(result.omega_r, result.probability)]
        outputs[_write(outdir, name, _csv_table(
            ["omega_r", column, "method"], rows))] = {
                "converged": bool(result.converged)}
        curves.append((name, result.omega_r, result.probability))

    params = {**base, "method": method.value,
              "varying": varying[0] if varying else None,
              "values": sets[varying[0]] if varying else None}
    return outputs, params, {"curves": curves, "column": column}


def cmd_compare(args, cfg, model, outdir):
    mode = ModeSpec(args.l, args.ns if args.ns is not None else args.n,
                    args.ni if args.ni is not None else args.n)
    focal = FocalConfig(args.fp, args.fsi)
    T = cfg["temperature_C"]
    sec = cfg.section("compare")
    grid = np.linspace(sec["omega_min"], sec["omega_max"],
                       sec["omega_points"])

    curves, converged = {}, True
    for method in (Method.FULL_CLOSED_FORM, Method.DEGENERATE_APPROX,
                   Method.QUADRATIC_KZ):
        result = spectrum(mode, focal, T, grid,
                          normalization=Normalization.GLOBAL_MAX,
                          method=method, crystal=_crystal_for(cfg, T),
                          model=model, settings=_settings(cfg))
        curves[method.value] = result.probability
        converged = converged and result.converged

    reference = curves[Method.FULL_CLOSED_FORM.value]
    labels = [m.value for m in (Method.FULL_CLOSED_FORM,
                                Method.DEGENERATE_APPROX,
                                Method.QUADRATIC_KZ)]
    rows = [("sample", w, *(curves[label][i] for label in labels))
            for i, w in enumerate(grid)]
    distances = {}
    for label in labels:
        diff = curves[label] - reference
        distances[label] = {"Linf": float(np.max(np.abs(diff))),
                            "L2": float(math.sqrt(np.mean(diff**2)))}
    rows.append(("Linf_vs_full", "",
                 *(distances[label]["Linf"] for label in labels)))
    rows.append(("L2_vs_full", "",
                 *(distances[label]["L2"] for label in labels)))
    header = ["row_kind", "omega_r"] + [f"P_{label}" for label in labels]

    config = {
        "kind": "compare",
        "mode": {"l": mode.l, "n_s": mode.n_s, "n_i": mode.n_i},
        "focal": {"f_p": focal.f_p, "f_si_d": focal.f_si_d},
        "T_C": float(T),
        "window": [sec["omega_min"], sec["omega_max"]],
        "points": sec["omega_points"],
        "model": model.name,
    }
    payload = {
        "omega_r": grid.tolist(),
        "spectra": {label: curves[label].tolist() for label in labels},
        "distance_vs_full": distances,
    }
    outputs = {
        _write(outdir, "compare.csv", _csv_table(header, rows)):
            {"converged": bool(converged)},
        _write(outdir, "compare.json",
               _json_envelope("lgspdc.compare/1", config, payload)):
            {"converged": bool(converged)},
    }
    params = {"l": mode.l, "n_s": mode.n_s, "n_i": mode.n_i,
              "fp": focal.f_p, "fsi": focal.f_si_d, "temp": T}
    return outputs, params, {"grid": grid, "curves": curves, "labels": labels}


def _surface_for(args, cfg, model, section):
    sec = cfg.section(section)
    mode = ModeSpec(args.l, args.n, args.n)
    T = cfg["temperature_C"]
    grid = ((sec["grid_fp"], sec["grid_fsi"]) if "grid_fp" in sec
            else (9, 13))
    return rate_surface(
        mode, (sec["fp_min"], sec["fp_max"]), (sec["fsi_min"], sec["fsi_max"]),
        grid, T, rel_tolerance=sec["rel_tolerance"],
        crystal=_crystal_for(cfg, T), model=model), mode, T


def cmd_surface(args, cfg, model, outdir):
    surface, mode, T = _surface_for(args, cfg, model, "surface")
    outputs = {
        _write(outdir, "surface.csv", surface.to_csv()): {"converged": True},
        _write(outdir, "surface.json", surface.to_json()): {"converged": True},
    }
    params = {"l": mode.l, "n_si": mode.n_s, "temp": T}
    return outputs, params, {"surface": surface}


def cmd_optimize(args, cfg, model, outdir):
    surface, mode, T = _surface_for(args, cfg, model, "optimize")
    rows = [("ridge", p.f_p, p.f_si_d, p.rate) for p in surface.ridge]
    rows.append(("summit", surface.summit.f_p, surface.summit.f_si_d,
                 surface.summit.rate))
    outputs = {
        _write(outdir, "optimize.csv",
               _csv_table(["kind", "f_p", "f_si_d", "rate_arb"], rows)):
            {"converged": True},
        _write(outdir, "optimize.json", surface.to_json()):
            {"converged": True},
    }
    params = {"l": mode.l, "n_si": mode.n_s, "temp": T}
    return outputs, params, {"surface": surface}


def cmd_mode_table(args, cfg, model, outdir):
    sec = cfg.section("mode_table")
    T = cfg["temperature_C"]
    table = mode_table(
        args.lmax, args.nmax, T,
        f_p_bounds=(sec["fp_min"], sec["fp_max"]),
        f_si_bounds=(sec["fsi_min"], sec["fsi_max"]),
        rel_tolerance=sec["rel_tolerance"],
        crystal=_crystal_for(cfg, T), model=model,
        max_workers=_threads(cfg))
    outputs = {
        _write(outdir, "mode_table.csv", table.to_csv()):
            {"converged": True},
        _write(outdir, "mode_table.json", table.to_json()):
            {"converged": True},
    }
    params = {"lmax": args.lmax, "nmax": args.nmax, "temp": T}
    return outputs, params, {"table": table}


def cmd_waist_surface(args, cfg, model, outdir):
    sec = cfg.section("waist_surface")
    T = cfg["temperature_C"]
    policy = sec["pump_waist_um"]
    if policy != "optimize":
        policy = float(policy) * 1e-6
    result = waist_surface(
        args.l, args.ns, args.ni,
        w_s_range=(sec["ws_min_um"] * 1e-6, sec["ws_max_um"] * 1e-6),
        w_i_range=(sec["wi_min_um"] * 1e-6, sec["wi_max_um"] * 1e-6),
        grid_density=sec["grid_density"], T=T, w_p_policy=policy,
        crystal=_crystal_for(cfg, T), model=model, settings=_settings(cfg))
    outputs = {
        _write(outdir, "waist_surface.csv", result.to_csv()):
            {"converged": True},
        _write(outdir, "waist_surface.json", result.to_json()):
            {"converged": True},
    }
    params = {"l": args.l, "n_s": args.ns, "n_i": args.ni, "temp": T,
              "pump_waist_um": sec["pump_waist_um"]}
    return outputs, params, {"result": result}


def cmd_temp_scan(args, cfg, model, outdir):
    sec = cfg.section("temp_scan")
    temps = _parse_multi(args.temps, float, "--temps")
    if len(temps) < 2:
        raise ConfigError("flag --temps needs at least two temperatures")
    for T in temps:
        _check_temperature(T, model, "temperature_C")
    mode = ModeSpec(args.l, args.n, args.n)

    rate_fn = None
    if _crystal_for(cfg, temps[0]) is not None:
        c = cfg["crystal"]

        def rate_fn(m, focal, T):
            grating = CrystalSpec(c["length_m"], c["poling_period_m"],
                                  float(T), c["pump_wavelength_m"])
            return pair_rate_kernel(m, focal, T, crystal=grating, model=model,
                                    clip_probe=False).value

    scan = temp_scan(mode, args.fp, temps,
                     search_bounds=(sec["fsi_min"], sec["fsi_max"]),
                     rel_tolerance=sec["rel_tolerance"],
                     rate_fn=rate_fn, model=model)
    outputs = {
        _write(outdir, "temp_scan.csv", scan.to_csv()): {"converged": True},
        _write(outdir, "temp_scan.json", scan.to_json()): {"converged": True},
    }
    params = {"l": mode.l, "n_si": mode.n_s, "fp": args.fp, "temps": temps}
    return outputs, params, {"scan": scan}


# ---------------------------------------------------------------------------
# plotting (direct rendering and emitted scripts)

def _render_plots(command, artifacts, outdir) -> list[str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    name = f"{command.replace('-', '_')}.png"
    if command == "spectrum":
        for label, omega_r, prob in artifacts["curves"]:
            ax.plot(omega_r, prob, label=label.removesuffix(".csv"))
        ax.set_xlabel("omega_r")
        ax.set_ylabel(artifacts["column"])
        ax.legend(fontsize=8)
    elif command == "compare":
        for label in artifacts["labels"]:
            ax.plot(artifacts["grid"], artifacts["curves"][label],
                    label=label)
        ax.set_xlabel("omega_r")
        ax.set_ylabel("P_normalized")
        ax.legend(fontsize=8)
    elif command in ("surface", "optimize"):
        surface = artifacts["surface"]
        if command == "surface":
            mesh = ax.pcolormesh(surface.f_si_d, surface.f_p, surface.values,
                                 shading="nearest")
            fig.colorbar(mesh, ax=ax, label="rate_arb")
            ax.set_yscale("log")
            ax.set_xscale("log")
            ax.plot([p.f_si_d for p in surface.ridge],
                    [p.f_p for p in surface.ridge], "w.-", label="ridge")
            ax.plot(surface.summit.f_si_d, surface.summit.f_p, "r*",
                    markersize=12, label="summit")
            ax.set_xlabel("f_si_d")
            ax.set_ylabel("f_p")
        else:
            ax.semilogx([p.f_p for p in surface.ridge],
                        [p.rate for p in surface.ridge], ".-", label="ridge")
            ax.plot(surface.summit.f_p, surface.summit.rate, "r*",
                    markersize=12, label="summit")
            ax.set_xlabel("f_p")
            ax.set_ylabel("rate_arb")
        ax.legend(fontsize=8)
    elif command == "mode-table":
        table = artifacts["table"]
        ls = sorted({l for l, _ in table.entries})
        ns = sorted({n for _, n in table.entries})
        grid = np.array([[table.entries[(l, n)].f_p for n in ns] for l in ls])
        mesh = ax.pcolormesh(ns, ls, np.log10(grid), shading="nearest")
        fig.colorbar(mesh, ax=ax, label="log10 f_p_opt")
        ax.set_xlabel("n_si")
        ax.set_ylabel("l")
    elif command == "waist-surface":
        result = artifacts["result"]
        mesh = ax.pcolormesh(result.w_i * 1e6, result.w_s * 1e6,
                             result.values, shading="nearest")
        fig.colorbar(mesh, ax=ax, label="rate_norm")
        ax.plot(result.peak_w_i * 1e6, result.peak_w_s * 1e6, "r.",
                markersize=10)
        ax.set_xlabel("w_i (um)")
        ax.set_ylabel("w_s (um)")
    elif command == "temp-scan":
        scan = artifacts["scan"]
        ax.plot([p.T for p in scan], [p.f_si_d for p in scan], "o-")
        ax.set_xlabel("T (C)")
        ax.set_ylabel("f_si_d_opt")
    fig.tight_layout()
    fig.savefig(outdir / name, dpi=160)
    plt.close(fig)
    return [name]


_SCRIPT_PREFIX = '''\
#!/usr/bin/env python3
"""Plot the delimited outputs emitted alongside this script."""
import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
FILES = {files!r}


def read_rows(name):
    with open(HERE / name, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


'''

_SCRIPT_BODIES = {
    "spectrum": '''\
for name in FILES:
    header, rows = read_rows(name)
    plt.plot([float(r[0]) for r in rows], [float(r[1]) for r in rows],
             label=name.removesuffix(".csv"))
plt.xlabel("omega_r")
plt.ylabel(header[1])
plt.legend(fontsize=8)
''',
    "compare": '''\
header, rows = read_rows(FILES[0])
samples = [r for r in rows if r[0] == "sample"]
x = [float(r[1]) for r in samples]
for j, label in enumerate(header[2:], start=2):
    plt.plot(x, [float(r[j]) for r in samples], label=label)
plt.xlabel("omega_r")
plt.ylabel("P_normalized")
plt.legend(fontsize=8)
''',
    "surface": '''\
header, rows = read_rows(FILES[0])
ridge = [r for r in rows if r[0] == "ridge"]
summit = [r for r in rows if r[0] == "summit"][0]
plt.semilogx([float(r[1]) for r in ridge], [float(r[3]) for r in ridge],
             ".-", label="ridge")
plt.plot(float(summit[1]), float(summit[3]), "r*", markersize=12,
         label="summit")
plt.xlabel("f_p")
plt.ylabel("rate_arb")
plt.legend(fontsize=8)
''',
    "mode-table": '''\
header, rows = read_rows(FILES[0])
ls = sorted({int(r[0]) for r in rows})
ns = sorted({int(r[1]) for r in rows})
import math
grid = [[math.log10(float(next(r[2] for r in rows
                               if int(r[0]) == l and int(r[1]) == n)))
         for n in ns] for l in ls]
mesh = plt.pcolormesh(ns, ls, grid, shading="nearest")
plt.colorbar(mesh, label="log10 f_p_opt")
plt.xlabel("n_si")
plt.ylabel("l")
''',
    "waist-surface": '''\
header, rows = read_rows(FILES[0])
ws = sorted({float(r[0]) for r in rows})
wi = sorted({float(r[1]) for r in rows})
lookup = {(float(r[0]), float(r[1])): float(r[2]) for r in rows}
grid = [[lookup[(s, i)] for i in wi] for s in ws]
mesh = plt.pcolormesh(wi, ws, grid, shading="nearest")
plt.colorbar(mesh, label="rate_norm")
plt.xlabel("w_i (um)")
plt.ylabel("w_s (um)")
''',
    "temp-scan": '''\
header, rows = read_rows(FILES[0])
plt.plot([float(r[0]) for r in rows], [float(r[1]) for r in rows], "o-")
plt.xlabel("T (C)")
plt.ylabel("f_si_d_opt")
''',
}
_SCRIPT_BODIES["optimize"] = _SCRIPT_BODIES["surface"]

_SCRIPT_SUFFIX = '''\

plt.tight_layout()
plt.savefig(HERE / "{png}", dpi=160)
'''


def _emit_plot_script(command, outdir, outputs) -> str:
    files = sorted(name for name in outputs if name.endswith(".csv"))
    png = f"{command.replace('-', '_')}.png"
    text = (_SCRIPT_PREFIX.format(files=files)
            + _SCRIPT_BODIES[command]
            + _SCRIPT_SUFFIX.format(png=png))
    return _write(outdir, f"plot_{command.replace('-', '_')}.py", text)


# ---------------------------------------------------------------------------
# parser and entry point

def _add_common(sub):
    sub.add_argument("--config", help=f"JSON config file (or ${CONFIG_ENV})")
    sub.add_argument("--out", help="output directory (default lgspdc-out)")
    sub.add_argument("--model",
                     help="dispersion model name or JSON path "
                          "(default ktp_fradkin_emanueli)")
    sub.add_argument("--threads", type=int,
                     help="worker cap, 0 = machine parallelism (default 0)")
    sub.add_argument("--emit-plot-script", action="store_true",
                     help="write a matplotlib script referencing the CSVs")
    sub.add_argument("--plot", action="store_true",
                     help="render figures to PNG alongside the CSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lgspdc",
        description="Pair-collection rates and focusing optima for "
                    "Laguerre-Gaussian photon pairs from type-0 ppKTP.")
    parser.add_argument("--version", action="version",
                        version=f"lgspdc {__version__}")
    subs = parser.add_subparsers(dest="command", required=True,
                                 metavar="command")

    sub = subs.add_parser(
        "spectrum", help="projected spectral probability on an omega_r grid")
    _add_common(sub)
    sub.add_argument("--l", default="0",
                     help="azimuthal index; comma list varies it (default 0)")
    sub.add_argument("--n", default="0",
                     help="radial index for both photons (default 0)")
    sub.add_argument("--ns", help="signal radial index override")
    sub.add_argument("--ni", help="idler radial index override")
    sub.add_argument("--fp", default="1",
                     help="pump focal parameter (default 1)")
    sub.add_argument("--fsi", default="1",
                     help="degenerate signal/idler focal parameter "
                          "(default 1)")
    sub.add_argument("--temp", help="temperature in C (config default 24.5)")
    sub.add_argument("--method", choices=sorted(_METHODS), default="degenerate",
                     help="amplitude route (default degenerate)")
    sub.add_argument("--omega-min", dest="omega_min", type=float,
                     help="grid start (config default 0.7)")
    sub.add_argument("--omega-max", dest="omega_max", type=float,
                     help="grid end (config default 1.3)")
    sub.add_argument("--omega-points", dest="omega_points", type=int,
                     help="grid size (config default 1201)")
    sub.add_argument("--normalization", choices=["GlobalMax", "Raw"],
                     help="probability scaling (config default GlobalMax)")
    sub.set_defaults(handler=cmd_spectrum)

    sub = subs.add_parser(
        "compare",
        help="side-by-side spectra for the three amplitude routes")
    _add_common(sub)
    sub.add_argument("--l", type=int, default=0)
    sub.add_argument("--n", type=int, default=0)
    sub.add_argument("--ns", type=int, help="signal radial index override")
    sub.add_argument("--ni", type=int, help="idler radial index override")
    sub.add_argument("--fp", type=float, default=1.0)
    sub.add_argument("--fsi", type=float, default=1.0)
    sub.add_argument("--temp", type=float,
                     help="temperature in C (config default 24.5)")
    sub.add_argument("--omega-min", dest="omega_min", type=float)
    sub.add_argument("--omega-max", dest="omega_max", type=float)
    sub.add_argument("--omega-points", dest="omega_points", type=int)
    sub.set_defaults(handler=cmd_compare)

    for name, help_text in (
            ("surface", "rate landscape over (f_p, f_si_d) with ridge "
                        "and summit"),
            ("optimize", "ridge and summit search for one mode pair")):
        sub = subs.add_parser(name, help=help_text)
        _add_common(sub)
        sub.add_argument("--l", type=int, default=0)
        sub.add_argument("--n", type=int, default=0)
        sub.add_argument("--temp", type=float)
        sub.add_argument("--fp-min", dest="fp_min", type=float)
        sub.add_argument("--fp-max", dest="fp_max", type=float)
        sub.add_argument("--fsi-min", dest="fsi_min", type=float)
        sub.add_argument("--fsi-max", dest="fsi_max", type=float)
        sub.add_argument("--rel-tolerance", dest="rel_tolerance", type=float)
        if name == "surface":
            sub.add_argument("--grid-fp", dest="grid_fp", type=int)
            sub.add_argument("--grid-fsi", dest="grid_fsi", type=int)
            sub.set_defaults(handler=cmd_surface)
        else:
            sub.set_defaults(handler=cmd_optimize)

    sub = subs.add_parser(
        "mode-table", help="summit per (l, n_si) mode pair")
    _add_common(sub)
    sub.add_argument("--lmax", type=int, default=4)
    sub.add_argument("--nmax", type=int, default=4)
    sub.add_argument("--temp", type=float)
    sub.add_argument("--fp-min", dest="fp_min", type=float)
    sub.add_argument("--fp-max", dest="fp_max", type=float)
    sub.add_argument("--fsi-min", dest="fsi_min", type=float)
    sub.add_argument("--fsi-max", dest="fsi_max", type=float)
    sub.add_argument("--rel-tolerance", dest="rel_tolerance", type=float)
    sub.set_defaults(handler=cmd_mode_table)

    sub = subs.add_parser(
        "waist-surface", help="rate over signal/idler waists")
    _add_common(sub)
    sub.add_argument("--l", type=int, default=0)
    sub.add_argument("--ns", type=int, default=0)
    sub.add_argument("--ni", type=int, default=0)
    sub.add_argument("--temp", type=float)
    sub.add_argument("--ws-min", dest="ws_min", type=float,
                     help="signal waist start in um (config default 18)")
    sub.add_argument("--ws-max", dest="ws_max", type=float)
    sub.add_argument("--wi-min", dest="wi_min", type=float)
    sub.add_argument("--wi-max", dest="wi_max", type=float)
    sub.add_argument("--density", type=int,
                     help="grid points per axis (config default 15)")
    sub.add_argument("--wp",
                     help="pump waist in um, or 'optimize' (config default)")
    sub.set_defaults(handler=cmd_waist_surface)

    sub = subs.add_parser(
        "temp-scan", help="per-temperature signal/idler focal optimum")
    _add_common(sub)
    sub.add_argument("--l", type=int, default=0)
    sub.add_argument("--n", type=int, default=0)
    sub.add_argument("--fp", type=float, default=1.0)
    sub.add_argument("--temps", required=True,
                     help="comma-separated temperatures in C")
    sub.add_argument("--fsi-min", dest="fsi_min", type=float)
    sub.add_argument("--fsi-max", dest="fsi_max", type=float)
    sub.add_argument("--rel-tolerance", dest="rel_tolerance", type=float)
    sub.set_defaults(handler=cmd_temp_scan)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        if getattr(args, "wp", None) is not None and args.wp != "optimize":
            args.wp = _parse_multi(args.wp, float, "--wp")[0]
        cfg, model = _resolve(args)
        outdir = Path(cfg["output_dir"])
        outdir.mkdir(parents=True, exist_ok=True)
        outputs, params, artifacts = args.handler(args, cfg, model, outdir)
        if args.emit_plot_script:
            name = _emit_plot_script(args.command, outdir, outputs)
            outputs[name] = {"converged": True}
        if args.plot:
            for name in _render_plots(args.command, artifacts, outdir):
                outputs[name] = {"converged": True}
        _write_manifest(outdir, cfg, model, args.command, params, outputs,
                        time.perf_counter() - start)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except BoundaryHitError as err:
        print(f"error: {err} (diagnostics: {err.diagnostics})",
              file=sys.stderr)
        return 1
    except (DomainError, PhaseMatchingError, ValueError, ArithmeticError,
            RuntimeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
