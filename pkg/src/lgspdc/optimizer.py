"""Focal-parameter optimization: ridges, summits, mode tables, and scans.

The optimization landscape is R_c(f_p, f_si_d) for a fixed mode pair.  For
every pump focal parameter there is a best signal/idler focal parameter
(the ridge); the best point on the ridge is the summit.  Searches run on
the logarithmic focal axis with a coarse scan followed by golden-section
refinement, assume a single ridge but guard against bimodal scans, break
exact ties toward the smaller (less tightly focused) parameter, and widen
a boundary-hitting bound once by a factor of four before giving up.

Rates come from the phase-kernel route by default, which amortizes the
frequency integral into a per-temperature cache; every operation accepts
a rate_fn(mode, focal, T) override, so the search logic can be exercised
against synthetic landscapes and rates in different arbitrary units.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .dispersion import CrystalSpec, DispersionModel, default_model, reference_crystal
from .lgmodes import INDEX_CAP, FocalConfig, ModeSpec
from .rates import _crystal_config, _csv_table, _json_envelope, pair_rate_kernel

__all__ = [
    "DEFAULT_F_P_BOUNDS",
    "DEFAULT_F_SI_BOUNDS",
    "BoundaryHitError",
    "ColumnOptimum",
    "RidgePoint",
    "SummitPoint",
    "TempPoint",
    "RateSurface",
    "ModeTable",
    "TempScanResult",
    "opt_fsi_given_fp",
    "rate_surface",
    "mode_table",
    "crossmode_penalty",
    "temp_scan",
]

DEFAULT_F_P_BOUNDS = (0.05, 10.0)
DEFAULT_F_SI_BOUNDS = (0.05, 20.0)
COARSE_POINTS = 25
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class BoundaryHitError(RuntimeError):
    """A refined optimum sits on a search boundary even after widening."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ColumnOptimum(NamedTuple):
    f_si_d: float
    rate: float


class RidgePoint(NamedTuple):
    f_p: float
    f_si_d: float
    rate: float


class SummitPoint(NamedTuple):
    f_p: float
    f_si_d: float
    rate: float


class TempPoint(NamedTuple):
    T: float
    f_si_d: float
    rate: float


RateFn = Callable[[ModeSpec, FocalConfig, float], float]


def _resolve_rate_fn(rate_fn, crystal, model) -> RateFn:
    if rate_fn is not None:
        return rate_fn

    def kernel_rate(mode, focal, T):
        return pair_rate_kernel(mode, focal, T, crystal=crystal, model=model,
                                clip_probe=False).value

    return kernel_rate


def _golden_log_max(fn, lo: float, hi: float, rel_tolerance: float):
    """Golden-section maximum of fn on [lo, hi] along the log axis.

    Returns the best evaluated point (not the bracket midpoint), so the
    result never falls below any sample the search has seen; exact ties
    resolve to the smaller abscissa.
    """
    a, b = math.log(lo), math.log(hi)
    evals = []

    def probe(x):
        v = fn(math.exp(x))
        evals.append((x, v))
        return v

    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = probe(c), probe(d)
    tol_log = math.log1p(rel_tolerance)
    while (b - a) > tol_log:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = probe(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = probe(d)
    x_best, v_best = max(evals, key=lambda e: (e[1], -e[0]))
    return math.exp(x_best), v_best


def _best_candidate(candidates):
    """Largest rate; exact rate ties resolve to the smaller parameter."""
    return max(candidates, key=lambda c: (c[1], -c[0]))


def _scan_and_refine(fn, lo, hi, coarse_points, rel_tolerance, label,
                     diagnostics, allow_widen=True):
    """Coarse log scan plus golden refinement of a 1-D rate section.

    A boundary argmax widens the offending bound once by a factor of four
    and rescans; a second hit raises BoundaryHitError.  If the coarse scan
    shows two interior local maxima more than two cells apart, both are
    refined and the larger wins (unimodality is expected but not trusted).
    """
    if not (0.0 < lo < hi):
        raise ValueError(f"{label} bounds must be positive and increasing")
    grid = np.geomspace(lo, hi, coarse_points)
    vals = np.array([fn(float(x)) for x in grid])
    k = int(np.argmax(vals))
    if k == 0 or k == len(grid) - 1:
        if allow_widen:
            if k == 0:
                lo = lo / 4.0
            else:
                hi = hi * 4.0
            return _scan_and_refine(fn, lo, hi, coarse_points, rel_tolerance,
                                    label, diagnostics, allow_widen=False)
        raise BoundaryHitError(
            f"{label} maximum sits on the search boundary",
            {**diagnostics, "bounds": (lo, hi), "argmax": float(grid[k]),
             "boundary_rates": (float(vals[0]), float(vals[-1]))})

    peaks = [i for i in range(1, len(grid) - 1)
             if vals[i] > vals[i - 1] and vals[i] >= vals[i + 1]]
    brackets = [(k - 1, k + 1)]
    for i in peaks:
        if abs(i - k) > 2:
            brackets.append((i - 1, i + 1))

    candidates = [(float(grid[k]), float(vals[k]))]
    for i0, i1 in brackets:
        candidates.append(_golden_log_max(fn, float(grid[i0]),
                                          float(grid[i1]), rel_tolerance))
    return _best_candidate(candidates)


# ---------------------------------------------------------------------------
# operations

def opt_fsi_given_fp(mode: ModeSpec, f_p: float, T: float,
                     search_bounds=None, *,
                     coarse_points: int = COARSE_POINTS,
                     rel_tolerance: float = 1e-3,
                     rate_fn: RateFn | None = None,
                     crystal: CrystalSpec | None = None,
                     model: DispersionModel | None = None) -> ColumnOptimum:
    """Best signal/idler focal parameter at a fixed pump focal parameter.

    Coarse log-grid scan (25 points over [0.05, 20] by default) followed
    by golden-section refinement to 1e-3 relative in f_si_d.  The returned
    point dominates every coarse sample.
    """
    rate = _resolve_rate_fn(rate_fn, crystal, model)
    lo, hi = search_bounds or DEFAULT_F_SI_BOUNDS

    def column(f_si):
        return rate(mode, FocalConfig(f_p, f_si), T)

    diagnostics = {"mode": (mode.l, mode.n_s, mode.n_i), "f_p": f_p, "T": T}
    f_si, value = _scan_and_refine(column, float(lo), float(hi),
                                   coarse_points, rel_tolerance,
                                   "f_si_d", diagnostics)
    return ColumnOptimum(f_si, value)


@dataclass(frozen=True)
class RateSurface:
    """R_c sampled on a log-spaced (f_p, f_si_d) grid, with the per-f_p
    ridge and the global summit.

    values[i, j] is the rate at f_p[i], f_si_d[j].  Ridge entries are
    refined per-f_p optima and dominate every grid sample at their f_p;
    the summit dominates every ridge entry.
    """

    f_p: np.ndarray
    f_si_d: np.ndarray
    values: np.ndarray
    ridge: tuple
    summit: SummitPoint
    config: dict = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (len(self.f_p), len(self.f_si_d)):
            raise ValueError("values must be shaped (len(f_p), len(f_si_d))")

    def to_csv(self) -> str:
        rows = []
        for i, fp in enumerate(self.f_p.tolist()):
            for j, fsi in enumerate(self.f_si_d.tolist()):
                rows.append(("grid", fp, fsi, float(self.values[i, j])))
        for point in self.ridge:
            rows.append(("ridge", point.f_p, point.f_si_d, point.rate))
        rows.append(("summit", self.summit.f_p, self.summit.f_si_d,
                     self.summit.rate))
        return _csv_table(["kind", "f_p", "f_si_d", "rate_arb"], rows)

    def to_json(self) -> str:
        return _json_envelope(
            "lgspdc.rate_surface/1", self.config,
            {"f_p": self.f_p.tolist(),
             "f_si_d": self.f_si_d.tolist(),
             "rate_arb": self.values.tolist(),
             "ridge": [list(p) for p in self.ridge],
             "summit": list(self.summit)})


def rate_surface(mode: ModeSpec, f_p_range=DEFAULT_F_P_BOUNDS,
                 f_si_range=DEFAULT_F_SI_BOUNDS, grid=(9, 13),
                 T: float = 24.5, *,
                 rel_tolerance: float = 1e-3,
                 coarse_points: int = COARSE_POINTS,
                 rate_fn: RateFn | None = None,
                 crystal: CrystalSpec | None = None,
                 model: DispersionModel | None = None) -> RateSurface:
    """Rate landscape over focal parameters with ridge and summit.

    The ridge runs opt_fsi_given_fp at every f_p grid value; the summit
    refines over f_p by golden section between the best ridge entry's
    neighbors, re-optimizing f_si_d from a warm bracket at each probe.
    """
    n_fp, n_fsi = grid
    if n_fp < 8 or n_fsi < 8:
        raise ValueError("grid must be at least 8x8")
    rate = _resolve_rate_fn(rate_fn, crystal, model)
    fp_grid = np.geomspace(float(f_p_range[0]), float(f_p_range[1]), n_fp)
    fsi_grid = np.geomspace(float(f_si_range[0]), float(f_si_range[1]), n_fsi)

    values = np.empty((n_fp, n_fsi))
    for i, fp in enumerate(fp_grid):
        for j, fsi in enumerate(fsi_grid):
            values[i, j] = rate(mode, FocalConfig(float(fp), float(fsi)), T)

    ridge = []
    for i, fp in enumerate(fp_grid):
        col = opt_fsi_given_fp(mode, float(fp), T, f_si_range,
                               coarse_points=coarse_points,
                               rel_tolerance=rel_tolerance, rate_fn=rate)
        j_best = int(np.argmax(values[i]))
        if values[i, j_best] > col.rate:
            # The surface grid caught something the scan protocol missed;
            # refine around that sample and keep the better of the two.
            lo = fsi_grid[max(j_best - 1, 0)]
            hi = fsi_grid[min(j_best + 1, n_fsi - 1)]
            refined = _golden_log_max(
                lambda f: rate(mode, FocalConfig(float(fp), f), T),
                float(lo), float(hi), rel_tolerance)
            col = ColumnOptimum(*_best_candidate([refined, tuple(col)]))
        ridge.append(RidgePoint(float(fp), col.f_si_d, col.rate))

    summit = _refine_summit_over_fp(mode, T, ridge, f_si_range,
                                    coarse_points, rel_tolerance, rate)
    # Dominance by construction: never report a summit below a ridge entry.
    best_ridge = _best_candidate([(p.f_p, p.rate) for p in ridge])
    if best_ridge[1] > summit.rate:
        match = next(p for p in ridge
                     if p.f_p == best_ridge[0] and p.rate == best_ridge[1])
        summit = SummitPoint(*match)

    config = {
        "kind": "rate_surface",
        "mode": {"l": mode.l, "n_s": mode.n_s, "n_i": mode.n_i},
        "T_C": float(T),
        "f_p_range": [float(f_p_range[0]), float(f_p_range[1])],
        "f_si_range": [float(f_si_range[0]), float(f_si_range[1])],
        "grid": [int(n_fp), int(n_fsi)],
        "rel_tolerance": rel_tolerance,
        "rate_fn": "PhaseKernel" if rate_fn is None else "custom",
        "model": (model or default_model()).name,
        "crystal": _crystal_config(crystal
                                   if crystal is not None
                                   else reference_crystal(T)),
    }
    return RateSurface(fp_grid, fsi_grid, values, tuple(ridge), summit,
                       config)


def _refine_summit_over_fp(mode, T, ridge, f_si_bounds, coarse_points,
                           rel_tolerance, rate):
    """Golden refinement over f_p between the best ridge entry's
    neighbors, each probe re-optimizing f_si_d from a warm bracket."""
    rates = [p.rate for p in ridge]
    k = int(np.argmax(rates))
    lo = ridge[max(k - 1, 0)].f_p
    hi = ridge[min(k + 1, len(ridge) - 1)].f_p
    warm_center = ridge[k].f_si_d

    def section(f_p):
        warm = (max(f_si_bounds[0], warm_center / 3.2),
                min(f_si_bounds[1], warm_center * 3.2))
        col = opt_fsi_given_fp(mode, f_p, T, warm, coarse_points=9,
                               rel_tolerance=rel_tolerance, rate_fn=rate)
        return col.rate

    f_p_best, _ = _golden_log_max(section, float(lo), float(hi),
                                  rel_tolerance)
    # Canonical re-evaluation with the full public protocol, so summits
    # are reproducible independently of the warm search path taken here.
    final = opt_fsi_given_fp(mode, f_p_best, T, f_si_bounds,
                             coarse_points=coarse_points,
                             rel_tolerance=rel_tolerance, rate_fn=rate)
    return SummitPoint(f_p_best, final.f_si_d, final.rate)


@dataclass(frozen=True)
class ModeTable:
    """Summit per (l, n_si) mode pair, keys sorted and unique."""

    entries: dict
    config: dict = field(repr=False)

    def __post_init__(self):
        for (l, n) in self.entries:
            if l < 0 or n < 0:
                raise ValueError("mode indices must be non-negative")

    def to_csv(self) -> str:
        rows = [(l, n, p.f_p, p.f_si_d, p.rate, int(l == n))
                for (l, n), p in sorted(self.entries.items())]
        return _csv_table(
            ["l", "n_si", "f_p_opt", "f_si_d_opt", "rate_max_arb",
             "diagonal"], rows)

    def to_json(self) -> str:
        data = {"entries": [
            {"l": l, "n_si": n, "f_p_opt": p.f_p, "f_si_d_opt": p.f_si_d,
             "rate_max_arb": p.rate, "diagonal": l == n}
            for (l, n), p in sorted(self.entries.items())]}
        return _json_envelope("lgspdc.mode_table/1", self.config, data)


def _summit(mode, T, f_p_bounds, f_si_bounds, rel_tolerance, rate,
            coarse_points_f_p=13, coarse_points=COARSE_POINTS,
            allow_widen=True):
    """Two-stage summit search: full-bounds column optima on a coarse f_p
    grid, then golden refinement over f_p with warm columns."""
    lo, hi = float(f_p_bounds[0]), float(f_p_bounds[1])
    fp_grid = np.geomspace(lo, hi, coarse_points_f_p)
    ridge = []
    for fp in fp_grid:
        col = opt_fsi_given_fp(mode, float(fp), T, f_si_bounds,
                               coarse_points=coarse_points,
                               rel_tolerance=rel_tolerance, rate_fn=rate)
        ridge.append(RidgePoint(float(fp), col.f_si_d, col.rate))
    k = int(np.argmax([p.rate for p in ridge]))
    if k == 0 or k == len(ridge) - 1:
        if allow_widen:
            widened = (lo / 4.0, hi) if k == 0 else (lo, hi * 4.0)
            return _summit(mode, T, widened, f_si_bounds, rel_tolerance,
                           rate, coarse_points_f_p, coarse_points,
                           allow_widen=False)
        raise BoundaryHitError(
            "f_p maximum sits on the search boundary",
            {"mode": (mode.l, mode.n_s, mode.n_i), "T": T,
             "bounds": (lo, hi), "argmax": ridge[k].f_p,
             "boundary_rates": (ridge[0].rate, ridge[-1].rate)})
    return _refine_summit_over_fp(mode, T, ridge, f_si_bounds,
                                  coarse_points, rel_tolerance, rate)


def mode_table(l_max: int, n_max: int, T: float = 24.5, *,
               f_p_bounds=DEFAULT_F_P_BOUNDS,
               f_si_bounds=DEFAULT_F_SI_BOUNDS,
               rel_tolerance: float = 1e-3,
               rate_fn: RateFn | None = None,
               crystal: CrystalSpec | None = None,
               model: DispersionModel | None = None,
               max_workers: int = 1) -> ModeTable:
    """Summit (f_p_opt, f_si_d_opt, R_c_max) for every l <= l_max,
    n_si <= n_max with n_s = n_i = n_si.

    Entries are computed independently (optionally across threads) and
    reduced in sorted key order, so the table is deterministic for a
    given configuration regardless of scheduling.
    """
    if not (0 <= l_max <= INDEX_CAP and 0 <= n_max <= INDEX_CAP):
        raise ValueError(f"l_max and n_max must lie in [0, {INDEX_CAP}]")
    rate = _resolve_rate_fn(rate_fn, crystal, model)
    keys = [(l, n) for l in range(l_max + 1) for n in range(n_max + 1)]

    def solve(key):
        l, n = key
        return _summit(ModeSpec(l, n, n), T, f_p_bounds, f_si_bounds,
                       rel_tolerance, rate)

    if max_workers > 1:
        # Warm the per-temperature kernel cache once before fanning out.
        rate(ModeSpec(0, 0, 0), FocalConfig(1.0, 1.0), T)
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = {key: pool.submit(solve, key) for key in keys}
        entries = {key: futures[key].result() for key in sorted(keys)}
    else:
        entries = {key: solve(key) for key in sorted(keys)}

    config = {
        "kind": "mode_table",
        "l_max": int(l_max),
        "n_max": int(n_max),
        "T_C": float(T),
        "f_p_bounds": [float(f_p_bounds[0]), float(f_p_bounds[1])],
        "f_si_bounds": [float(f_si_bounds[0]), float(f_si_bounds[1])],
        "rel_tolerance": rel_tolerance,
        "rate_fn": "PhaseKernel" if rate_fn is None else "custom",
        "model": (model or default_model()).name,
        "crystal": _crystal_config(crystal
                                   if crystal is not None
                                   else reference_crystal(T)),
    }
    return ModeTable(entries, config)


def crossmode_penalty(mode_a: ModeSpec, mode_b: ModeSpec, T: float = 24.5, *,
                      f_p_bounds=DEFAULT_F_P_BOUNDS,
                      f_si_bounds=DEFAULT_F_SI_BOUNDS,
                      rel_tolerance: float = 1e-3,
                      rate_fn: RateFn | None = None,
                      crystal: CrystalSpec | None = None,
                      model: DispersionModel | None = None) -> float:
    """Rate retained by mode_b when the pump focus is optimized for
    mode_a: R_c(mode_b at f_p_opt(mode_a), f_si re-optimized) / R_c_max(b).

    A ratio of rates, so it is invariant under the arbitrary-units
    constant; refinement tolerance can land a hair above 1 and the value
    is clamped to [0, 1].
    """
    rate = _resolve_rate_fn(rate_fn, crystal, model)
    summit_a = _summit(mode_a, T, f_p_bounds, f_si_bounds, rel_tolerance,
                       rate)
    summit_b = _summit(mode_b, T, f_p_bounds, f_si_bounds, rel_tolerance,
                       rate)
    held = opt_fsi_given_fp(mode_b, summit_a.f_p, T, f_si_bounds,
                            rel_tolerance=rel_tolerance, rate_fn=rate)
    return min(max(held.rate / summit_b.rate, 0.0), 1.0)


@dataclass(frozen=True)
class TempScanResult:
    """Per-temperature column optima at a fixed pump focal parameter."""

    entries: tuple
    config: dict = field(repr=False)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def to_csv(self) -> str:
        return _csv_table(["T_C", "f_si_d_opt", "rate_max_arb"],
                          [tuple(p) for p in self.entries])

    def to_json(self) -> str:
        data = {"entries": [
            {"T_C": p.T, "f_si_d_opt": p.f_si_d, "rate_max_arb": p.rate}
            for p in self.entries]}
        return _json_envelope("lgspdc.temp_scan/1", self.config, data)


def temp_scan(mode: ModeSpec, f_p: float, temperatures, *,
              search_bounds=None, rel_tolerance: float = 1e-3,
              rate_fn: RateFn | None = None,
              crystal: CrystalSpec | None = None,
              model: DispersionModel | None = None) -> TempScanResult:
    """opt_fsi_given_fp per temperature; dispersion validity errors
    propagate from the rate evaluations."""
    rate = _resolve_rate_fn(rate_fn, crystal, model)
    entries = []
    for T in temperatures:
        col = opt_fsi_given_fp(mode, f_p, float(T), search_bounds,
                               rel_tolerance=rel_tolerance, rate_fn=rate)
        entries.append(TempPoint(float(T), col.f_si_d, col.rate))

    config = {
        "kind": "temp_scan",
        "mode": {"l": mode.l, "n_s": mode.n_s, "n_i": mode.n_i},
        "f_p": float(f_p),
        "temperatures_C": [float(T) for T in temperatures],
        "rel_tolerance": rel_tolerance,
        "rate_fn": "PhaseKernel" if rate_fn is None else "custom",
        "model": (model or default_model()).name,
    }
    return TempScanResult(tuple(entries), config)
