"""Pair collection rates, emission spectra, and waist-plane rate surfaces.

Two independent routes compute the collected pair rate R_c.  The direct
route integrates the projected spectral probability over the signal
frequency window.  The kernel route swaps the integration order: the
frequency integral collapses into a phase kernel Q(du) that depends only
on temperature, crystal, and window, leaving a double integral over the
normalized crystal coordinate.  Q is cached per operating point, which is
what makes focal-parameter optimization affordable; agreement between the
routes is a strong end-to-end check and is enforced in the test suite.

Frequencies are expressed throughout as omega_r = omega / omega_d, the
signal frequency in units of the degenerate frequency omega_p / 2, and
rates carry arbitrary units (the omega_r measure is used consistently in
both routes, so route comparisons and all trend statements are exact).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve

from .amplitude import (
    Method,
    QuadratureSettings,
    _flat_nodes,
    degenerate_integrand,
    spectrum_amplitudes,
)
from .dispersion import (
    CrystalSpec,
    DispersionModel,
    DomainError,
    default_model,
    phase_mismatch,
    reference_crystal,
)
from .lgmodes import FocalConfig, ModeSpec, WaistConfig

__all__ = [
    "DEFAULT_WINDOW",
    "SURFACE_WINDOW",
    "Normalization",
    "RateRoute",
    "SpectrumResult",
    "RateResult",
    "WaistSurfaceResult",
    "QKernelTable",
    "spectrum",
    "pair_rate_direct",
    "pair_rate_kernel",
    "q_kernel",
    "waist_surface",
]

# Signal window in omega_r units.  The wide default captures the full
# phase-matched band including the oscillatory tails; the narrow surface
# default trades a ~3e-4 relative tail loss for a ~20x cheaper scan, which
# does not move waist-plane argmax positions at the micrometre level.
DEFAULT_WINDOW = (0.55, 1.45)
SURFACE_WINDOW = (0.95, 1.05)

# A window boundary is flagged as clipping when the spectral probability
# there exceeds this fraction of the in-window maximum.
CLIP_FRACTION = 1e-4

_MAX_DELTA_U = 2.0


class Normalization(str, Enum):
    """Spectrum scaling conventions."""

    GLOBAL_MAX = "GlobalMax"
    RAW = "Raw"


class RateRoute(str, Enum):
    """Which integration order produced a rate."""

    DIRECT = "DirectFrequencyIntegral"
    KERNEL = "PhaseKernel"


def _config_hash(config: dict) -> str:
    """sha256 over the canonical JSON form of a configuration dict."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _crystal_config(crystal: CrystalSpec) -> dict:
    return {
        "length_m": crystal.length_L,
        "poling_period_m": crystal.poling_period_Lambda,
        "temperature_C": crystal.temperature_T,
        "pump_wavelength_m": crystal.pump_wavelength_vacuum,
    }


def _csv_table(header: list[str], rows) -> str:
    sio = io.StringIO()
    writer = csv.writer(sio, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format(v, ".12g") if isinstance(v, float) else v
                         for v in row])
    return sio.getvalue()


def _json_envelope(schema: str, config: dict, data: dict) -> str:
    envelope = {
        "schema": schema,
        "config": config,
        "config_hash": _config_hash(config),
        "data": data,
    }
    return json.dumps(envelope, sort_keys=True, indent=2)


@dataclass(frozen=True)
class SpectrumResult:
    """Projected spectral probability on an omega_r grid.

    probability is |C|^2 in arbitrary units, scaled according to
    normalization: GlobalMax divides by the grid maximum (so the peak is
    exactly 1), Raw leaves the route's native units.
    """

    omega_r: np.ndarray
    probability: np.ndarray
    normalization: Normalization
    method: Method
    converged: bool
    config: dict = field(repr=False)

    def __post_init__(self):
        omega = np.asarray(self.omega_r, dtype=float)
        prob = np.asarray(self.probability, dtype=float)
        if omega.shape != prob.shape or omega.ndim != 1:
            raise ValueError("omega_r and probability must be 1-D and congruent")
        if np.any(prob < 0.0):
            raise ValueError("probability must be non-negative")
        if self.normalization is Normalization.GLOBAL_MAX:
            if abs(prob.max() - 1.0) > 1e-12:
                raise ValueError("GlobalMax spectrum must peak at exactly 1")
        object.__setattr__(self, "omega_r", omega)
        object.__setattr__(self, "probability", prob)

    @property
    def peak_omega_r(self) -> float:
        return float(self.omega_r[int(np.argmax(self.probability))])

    def to_csv(self) -> str:
        return _csv_table(
            ["omega_r", "probability_arb"],
            zip(self.omega_r.tolist(), self.probability.tolist()))

    def to_json(self) -> str:
        return _json_envelope(
            "lgspdc.spectrum/1", self.config,
            {"omega_r": self.omega_r.tolist(),
             "probability_arb": self.probability.tolist()})


@dataclass(frozen=True)
class RateResult:
    """A collected pair rate with its convergence provenance.

    residual is the relative change over the final step-halving rung;
    clipped reports whether the spectral probability at a window boundary
    exceeded CLIP_FRACTION of the in-window maximum (truncation warning,
    not an error).
    """

    value: float
    route: RateRoute
    converged: bool
    residual: float
    clipped: bool
    points: int
    window: tuple[float, float]
    config: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.value >= 0.0:
            raise ValueError("rate must be non-negative")


@dataclass(frozen=True)
class WaistSurfaceResult:
    """Normalized pair rate over a (w_s, w_i) waist grid.

    values[i, j] is the rate at w_s[i], w_i[j] divided by the grid
    maximum.  When n_s == n_i only the w_s <= w_i triangle is evaluated
    and the rest is mirrored, so the exchange symmetry of the returned
    surface is exact by construction.  peak_w_s / peak_w_i refine the
    grid argmax by a per-axis parabolic fit.
    """

    w_s: np.ndarray
    w_i: np.ndarray
    values: np.ndarray
    peak_w_s: float
    peak_w_i: float
    peak_value_raw: float
    w_p_policy: str
    w_p_best: np.ndarray
    window: tuple[float, float]
    config: dict = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (len(self.w_s), len(self.w_i)):
            raise ValueError("values must be shaped (len(w_s), len(w_i))")

    def to_csv(self) -> str:
        rows = []
        for i, ws in enumerate(self.w_s.tolist()):
            for j, wi in enumerate(self.w_i.tolist()):
                rows.append((ws * 1e6, wi * 1e6,
                             float(self.values[i, j]),
                             float(self.w_p_best[i, j]) * 1e6))
        return _csv_table(["w_s_um", "w_i_um", "rate_norm", "w_p_um"], rows)

    def to_json(self) -> str:
        return _json_envelope(
            "lgspdc.waist_surface/1", self.config,
            {"w_s_m": self.w_s.tolist(),
             "w_i_m": self.w_i.tolist(),
             "rate_norm": self.values.tolist(),
             "w_p_best_m": self.w_p_best.tolist(),
             "peak_w_s_m": self.peak_w_s,
             "peak_w_i_m": self.peak_w_i})


def _clamped_window(window, crystal, model):
    """Clip an omega_r window so signal and idler wavelengths both stay
    inside the dispersion model's validity range."""
    lo, hi = float(window[0]), float(window[1])
    if not (0.0 < lo < hi < 2.0):
        raise DomainError("window must satisfy 0 < lo < hi < 2 in omega_r")
    lam_lo, lam_hi = model.validity_wavelength_range
    lam_d = 2.0 * crystal.pump_wavelength_vacuum
    # omega_r = lam_d / lam; both omega_r and 2 - omega_r must fit.
    wr_min = lam_d / lam_hi
    wr_max = lam_d / lam_lo
    lo = max(lo, wr_min, 2.0 - wr_max)
    hi = min(hi, wr_max, 2.0 - wr_min)
    if not lo < hi:
        raise DomainError("window collapses after validity clipping")
    return lo, hi


def _omega_d(crystal: CrystalSpec) -> float:
    return crystal.pump_angular_frequency / 2.0


# ---------------------------------------------------------------------------
# spectrum

def spectrum(mode: ModeSpec, focal: FocalConfig, T: float, grid=None, *,
             normalization: Normalization = Normalization.GLOBAL_MAX,
             method: Method = Method.DEGENERATE_APPROX,
             crystal: CrystalSpec | None = None,
             model: DispersionModel | None = None,
             settings: QuadratureSettings | None = None) -> SpectrumResult:
    """Projected spectral probability for a mode pair on an omega_r grid.

    grid defaults to 1201 points on [0.7, 1.3].  method selects the
    amplitude route; the full closed form reconstructs physical waists
    from the focal parameters at the degenerate frequency.
    """
    crystal = reference_crystal(T) if crystal is None else crystal
    model = model or default_model()
    normalization = Normalization(normalization)
    method = Method(method)
    if grid is None:
        grid = np.linspace(0.7, 1.3, 1201)
    omega_r = np.asarray(grid, dtype=float)
    if omega_r.ndim != 1 or len(omega_r) < 2:
        raise ValueError("grid must be a 1-D array of at least two points")

    geometry = _geometry_for(method, focal, crystal, T, model)
    values, conv, _ = spectrum_amplitudes(
        mode, geometry, omega_r * _omega_d(crystal), crystal, method,
        settings=settings, model=model)
    prob = np.abs(values) ** 2
    if normalization is Normalization.GLOBAL_MAX:
        peak = prob.max()
        if not peak > 0.0:
            raise DomainError("spectrum is identically zero; cannot normalize")
        prob = prob / peak

    config = {
        "kind": "spectrum",
        "mode": {"l": mode.l, "n_s": mode.n_s, "n_i": mode.n_i},
        "focal": {"f_p": focal.f_p, "f_si_d": focal.f_si_d},
        "T_C": float(T),
        "grid": {"lo": float(omega_r[0]), "hi": float(omega_r[-1]),
                 "n": int(len(omega_r))},
        "normalization": normalization.value,
        "method": method.value,
        "model": model.name,
        "crystal": _crystal_config(crystal),
    }
    return SpectrumResult(omega_r, prob, normalization, method,
                          bool(np.all(conv)), config)


def _geometry_for(method, focal, crystal, T, model):
    if method is Method.FULL_CLOSED_FORM:
        from .lgmodes import waists_from_focal
        return waists_from_focal(focal, crystal, model, T)
    return focal


# ---------------------------------------------------------------------------
# direct route

def pair_rate_direct(mode: ModeSpec, focal: FocalConfig, T: float, *,
                     crystal: CrystalSpec | None = None,
                     model: DispersionModel | None = None,
                     window=None, rel_tolerance: float = 1e-6,
                     initial_points: int = 1025, max_doublings: int = 4,
                     settings: QuadratureSettings | None = None) -> RateResult:
    """R_c by trapezoid integration of the spectral probability.

    The omega_r grid is refined by nested step halving (each rung reuses
    all previous evaluations) until the rate changes by less than
    rel_tolerance, or max_doublings rungs are exhausted, in which case
    converged is False and residual reports the last relative change.
    """
    crystal = reference_crystal(T) if crystal is None else crystal
    model = model or default_model()
    lo, hi = _clamped_window(window or DEFAULT_WINDOW, crystal, model)
    om_d = _omega_d(crystal)

    def prob_on(omega_r):
        vals, conv, _ = spectrum_amplitudes(
            mode, focal, omega_r * om_d, crystal, Method.DEGENERATE_APPROX,
            settings=settings, model=model)
        return np.abs(vals) ** 2, bool(np.all(conv))

    grid = np.linspace(lo, hi, initial_points)
    h = (hi - lo) / (initial_points - 1)
    prob, all_conv = prob_on(grid)
    total = h * (prob.sum() - 0.5 * (prob[0] + prob[-1]))

    residual = math.inf
    converged = False
    for _ in range(max_doublings):
        mid = 0.5 * (grid[:-1] + grid[1:])
        prob_mid, conv_mid = prob_on(mid)
        all_conv = all_conv and conv_mid
        refined = total / 2.0 + (h / 2.0) * prob_mid.sum()

        merged = np.empty(2 * len(grid) - 1)
        merged[0::2] = grid
        merged[1::2] = mid
        merged_p = np.empty_like(merged)
        merged_p[0::2] = prob
        merged_p[1::2] = prob_mid
        grid, prob, h = merged, merged_p, h / 2.0

        residual = abs(refined - total) / max(abs(refined), 1e-300)
        total = refined
        if residual <= rel_tolerance:
            converged = True
            break

    peak = prob.max()
    clipped = bool(max(prob[0], prob[-1]) > CLIP_FRACTION * peak)
    config = _rate_config("pair_rate_direct", mode, focal, T, (lo, hi),
                          model, crystal)
    return RateResult(float(total), RateRoute.DIRECT,
                      converged and all_conv, float(residual), clipped,
                      len(grid), (lo, hi), config)


def _rate_config(kind, mode, focal, T, window, model, crystal):
    return {
        "kind": kind,
        "mode": {"l": mode.l, "n_s": mode.n_s, "n_i": mode.n_i},
        "focal": {"f_p": focal.f_p, "f_si_d": focal.f_si_d},
        "T_C": float(T),
        "window": [window[0], window[1]],
        "model": model.name,
        "crystal": _crystal_config(crystal),
    }


# ---------------------------------------------------------------------------
# phase kernel

@dataclass(frozen=True)
class _PhaseNodes:
    """Composite Gauss-Legendre discretization of the signal window,
    fine enough to resolve exp(i Phi du) for |du| <= 2."""

    Phi: np.ndarray
    weights: np.ndarray
    phi_max: float


@dataclass(frozen=True)
class _QGrid:
    """Q sampled on the uniform grid du = step * arange(n), plus the
    relative error of a spot check against a doubled discretization."""

    step: float
    values: np.ndarray
    check_rel: float


_PHASE_CACHE: dict = {}
_QGRID_CACHE: dict = {}
_CACHE_LIMIT = 8


def _cache_key(T, crystal, model, window):
    return (float(T), crystal.length_L, crystal.poling_period_Lambda,
            crystal.pump_wavelength_vacuum, model.name,
            float(window[0]), float(window[1]))


def _trim(cache):
    while len(cache) > _CACHE_LIMIT:
        cache.pop(next(iter(cache)))


def _phase_nodes(T, crystal, model, window, level=0) -> _PhaseNodes:
    key = _cache_key(T, crystal, model, window) + (level,)
    hit = _PHASE_CACHE.get(key)
    if hit is not None:
        return hit
    lo, hi = window
    om_d = _omega_d(crystal)
    probe = np.linspace(lo, hi, 65)
    phi_probe = np.asarray(phase_mismatch(probe * om_d, T, crystal, model).Phi)
    phi_max = float(np.max(np.abs(phi_probe)))
    # One panel per half oscillation of exp(i Phi du) at |du| = 2, with a
    # 16th-order rule per panel; level doubles the panel count.
    panels = max(8, int(math.ceil(_MAX_DELTA_U * phi_max / math.pi))) << level
    x, wts = _flat_nodes(panels, 16)
    omega_r = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
    phi = np.asarray(phase_mismatch(omega_r * om_d, T, crystal, model).Phi)
    nodes = _PhaseNodes(phi, 0.5 * (hi - lo) * wts, phi_max)
    _PHASE_CACHE[key] = nodes
    _trim(_PHASE_CACHE)
    return nodes


def _q_at(delta_u, nodes: _PhaseNodes, chunk: int = 512) -> np.ndarray:
    """Q at arbitrary non-negative offsets by direct summation."""
    du = np.asarray(delta_u, dtype=float)
    out = np.empty(du.shape, dtype=complex)
    flat = du.ravel()
    res = out.ravel()
    for i0 in range(0, len(flat), chunk):
        sl = slice(i0, min(i0 + chunk, len(flat)))
        res[sl] = np.exp(1j * np.outer(flat[sl], nodes.Phi)) @ nodes.weights
    return out


def _q_grid(T, crystal, model, window) -> _QGrid:
    """Q on a uniform du grid fine enough for the kernel double integral.

    The step keeps the phase advance per sample below pi/4 at the largest
    |Phi| in the window, which is what the trapezoid double integral needs
    to see the narrow ridge of Q around du = 0.  Built by a multiplicative
    phase recurrence (one exp per 2048 samples) and spot-checked against
    direct evaluation and a doubled frequency discretization.
    """
    key = _cache_key(T, crystal, model, window)
    hit = _QGRID_CACHE.get(key)
    if hit is not None:
        return hit
    nodes = _phase_nodes(T, crystal, model, window)
    quarters = max(1024, int(math.ceil(_MAX_DELTA_U * nodes.phi_max / math.pi)))
    n = 4 * quarters + 1
    step = _MAX_DELTA_U / (n - 1)

    values = np.empty(n, dtype=complex)
    stride_rot = np.exp(1j * nodes.Phi * step)
    running = nodes.weights.astype(complex)
    for k in range(n):
        if k % 2048 == 0:
            running = nodes.weights * np.exp(1j * nodes.Phi * (k * step))
        values[k] = running.sum()
        running *= stride_rot

    sample = np.unique(np.geomspace(1, n - 1, 9).astype(int))
    fine = _q_at(sample * step, _phase_nodes(T, crystal, model, window, level=1))
    direct = _q_at(sample * step, nodes)
    drift = np.max(np.abs(values[sample] - direct) / np.abs(direct))
    disc = np.max(np.abs(direct - fine) / np.abs(fine))
    grid = _QGrid(step, values, float(max(drift, disc)))
    _QGRID_CACHE[key] = grid
    _trim(_QGRID_CACHE)
    return grid


def q_kernel(T: float, delta_u, *, crystal: CrystalSpec | None = None,
             model: DispersionModel | None = None, window=None):
    """Phase kernel Q(du) = integral of exp(i Phi(omega_r) du) over the
    signal window, in the omega_r measure.

    Q(0) equals the window width to quadrature rounding, and
    Q(-du) = conj(Q(du)) holds bitwise because negative offsets are
    evaluated through the conjugate.  Offsets must satisfy |du| <= 2 (the
    normalized crystal coordinate spans [-1, 1], so larger separations
    never occur).
    """
    crystal = reference_crystal(T) if crystal is None else crystal
    model = model or default_model()
    win = _clamped_window(window or DEFAULT_WINDOW, crystal, model)
    du = np.asarray(delta_u, dtype=float)
    if np.any(np.abs(du) > _MAX_DELTA_U):
        raise DomainError("|delta_u| must not exceed 2")
    nodes = _phase_nodes(T, crystal, model, win)
    out = _q_at(np.abs(du), nodes)
    out = np.where(du < 0, np.conj(out), out)
    if np.isscalar(delta_u) or du.ndim == 0:
        return complex(out)
    return out


@dataclass(frozen=True)
class QKernelTable:
    """Q tabulated on a uniform du grid with a cubic interpolant.

    The kernel route normally reads Q off an exact difference grid; this
    table exists for reuse at arbitrary offsets and for serialization.
    Interpolation error is averaged down by the double integral, and the
    table-vs-exact agreement on rates is pinned to 1e-4 in the tests.
    """

    delta_u: np.ndarray
    values: np.ndarray
    T: float
    window: tuple[float, float]

    def __post_init__(self):
        spline_re = CubicSpline(self.delta_u, self.values.real)
        spline_im = CubicSpline(self.delta_u, self.values.imag)
        object.__setattr__(self, "_spline_re", spline_re)
        object.__setattr__(self, "_spline_im", spline_im)

    @classmethod
    def build(cls, T: float, n_points: int = 4097, *,
              crystal: CrystalSpec | None = None,
              model: DispersionModel | None = None,
              window=None) -> "QKernelTable":
        if n_points < 5 or n_points % 2 == 0:
            raise ValueError("n_points must be odd and at least 5")
        crystal = reference_crystal(T) if crystal is None else crystal
        model = model or default_model()
        win = _clamped_window(window or DEFAULT_WINDOW, crystal, model)
        nodes = _phase_nodes(T, crystal, model, win)
        du = np.linspace(-_MAX_DELTA_U, _MAX_DELTA_U, n_points)
        positive = du[du >= 0.0]
        q_pos = _q_at(positive, nodes)
        values = np.concatenate([np.conj(q_pos[:0:-1]), q_pos])
        return cls(du, values, float(T), win)

    def __call__(self, delta_u):
        du = np.asarray(delta_u, dtype=float)
        if np.any(np.abs(du) > _MAX_DELTA_U):
            raise DomainError("|delta_u| must not exceed 2")
        out = self._spline_re(du) + 1j * self._spline_im(du)
        if np.isscalar(delta_u) or du.ndim == 0:
            return complex(out)
        return out


def pair_rate_kernel(mode: ModeSpec, focal: FocalConfig, T: float, *,
                     crystal: CrystalSpec | None = None,
                     model: DispersionModel | None = None,
                     window=None, rel_tolerance: float = 1e-6,
                     q_table: QKernelTable | None = None,
                     clip_probe: bool = True,
                     settings: QuadratureSettings | None = None) -> RateResult:
    """R_c by the phase-kernel double integral.

    Evaluates the frequency-independent degenerate integrand S on a
    uniform u grid and contracts S(u1) conj(S(u2)) against Q(u1 - u2).
    With q_table None, Q comes from the cached exact difference grid; a
    QKernelTable reroutes the lookup through its interpolant.  The value
    is the Richardson limit of three nested trapezoid rungs; residual is
    the change between the last two extrapolants.  clip_probe=False skips
    the boundary truncation probe and reports clipped=False; optimization
    loops that hold the window fixed use this to avoid re-proving the
    same thing on every evaluation.
    """
    if mode.n_s != mode.n_i:
        raise ValueError("kernel route requires n_s == n_i")
    crystal = reference_crystal(T) if crystal is None else crystal
    model = model or default_model()
    win = _clamped_window(window or DEFAULT_WINDOW, crystal, model)

    integrand = degenerate_integrand(mode, focal, crystal, T=T, model=model)
    qgrid = _q_grid(T, crystal, model, win)
    n_fine = len(qgrid.values)

    def rung(stride):
        n = (n_fine - 1) // stride + 1
        h = qgrid.step * stride
        u = -1.0 + h * np.arange(n)
        s_u = integrand(u)
        wts = np.full(n, h)
        wts[0] = wts[-1] = h / 2.0
        if q_table is None:
            q_pos = qgrid.values[::stride]
            q_all = np.concatenate([np.conj(q_pos[:0:-1]), q_pos])
        else:
            q_all = q_table(h * np.arange(-(n - 1), n))
        folded = fftconvolve(wts * np.conj(s_u), q_all)[n - 1:2 * n - 1]
        return float(np.real(np.sum(wts * s_u * folded)))

    r4, r2, r1 = rung(4), rung(2), rung(1)
    extrap_a = (4.0 * r2 - r4) / 3.0
    extrap_b = (4.0 * r1 - r2) / 3.0
    residual = abs(extrap_b - extrap_a) / max(abs(extrap_b), 1e-300)
    converged = residual <= rel_tolerance and qgrid.check_rel <= 1e-8

    clipped = (clip_probe
               and _boundary_clipped(mode, focal, T, crystal, model, win,
                                     settings))
    config = _rate_config("pair_rate_kernel", mode, focal, T, win,
                          model, crystal)
    return RateResult(max(extrap_b, 0.0), RateRoute.KERNEL, converged,
                      float(residual), clipped, n_fine, win, config)


def _boundary_clipped(mode, focal, T, crystal, model, window, settings):
    """Window truncation probe: spectral probability at the two window
    edges against a coarse scan of the interior peak region."""
    om_d = _omega_d(crystal)
    lo, hi = window
    interior = np.linspace(max(lo, 0.8), min(hi, 1.2), 41)
    probe = np.concatenate([[lo], interior, [hi]])
    vals, _, _ = spectrum_amplitudes(
        mode, focal, probe * om_d, crystal, Method.DEGENERATE_APPROX,
        settings=settings, model=model)
    prob = np.abs(vals) ** 2
    return bool(max(prob[0], prob[-1]) > CLIP_FRACTION * prob.max())


# ---------------------------------------------------------------------------
# waist surface

def waist_surface(l: int, n_s: int, n_i: int,
                  w_s_range=(18e-6, 60e-6), w_i_range=(18e-6, 60e-6),
                  grid_density: int = 15, T: float = 24.5,
                  w_p_policy="optimize", *,
                  crystal: CrystalSpec | None = None,
                  model: DispersionModel | None = None,
                  window=None, omega_points: int = 193,
                  w_p_candidates=None,
                  settings: QuadratureSettings | None = None
                  ) -> WaistSurfaceResult:
    """Collected rate over a grid of physical signal/idler waists.

    Uses the full closed-form amplitude (no degenerate approximation), so
    w_s and w_i may differ freely.  w_p_policy "optimize" maximizes the
    rate over a log-spaced pump-waist ladder at every grid point, refined
    by one parabolic step; a float fixes w_p instead.  The rate at each
    point is a fixed-resolution trapezoid over the surface window, which
    keeps the scan consistent across the grid.
    """
    mode = ModeSpec(l, n_s, n_i)
    crystal = reference_crystal(T) if crystal is None else crystal
    model = model or default_model()
    lo, hi = _clamped_window(window or SURFACE_WINDOW, crystal, model)
    if grid_density < 2:
        raise ValueError("grid_density must be at least 2")
    om_grid = np.linspace(lo, hi, omega_points) * _omega_d(crystal)
    om_r = np.linspace(lo, hi, omega_points)

    w_s = np.linspace(float(w_s_range[0]), float(w_s_range[1]), grid_density)
    w_i = np.linspace(float(w_i_range[0]), float(w_i_range[1]), grid_density)

    if isinstance(w_p_policy, str):
        if w_p_policy != "optimize":
            raise ValueError("w_p_policy must be 'optimize' or a float")
        candidates = (np.geomspace(10e-6, 90e-6, 7)
                      if w_p_candidates is None
                      else np.asarray(w_p_candidates, dtype=float))
        policy_label = "optimize"
    else:
        candidates = np.array([float(w_p_policy)])
        policy_label = "fixed"

    def rate_at(wp, ws, wi):
        geometry = WaistConfig(wp, ws, wi)
        vals, _, _ = spectrum_amplitudes(
            mode, geometry, om_grid, crystal, Method.FULL_CLOSED_FORM,
            settings=settings, model=model)
        return float(np.trapezoid(np.abs(vals) ** 2, om_r))

    def best_over_wp(ws, wi):
        rates = [rate_at(wp, ws, wi) for wp in candidates]
        k = int(np.argmax(rates))
        best_v, best_w = rates[k], candidates[k]
        if policy_label == "optimize" and 0 < k < len(candidates) - 1:
            vertex = _parabola_vertex(np.log(candidates[k - 1:k + 2]),
                                      np.array(rates[k - 1:k + 2]))
            if vertex is not None:
                wp_ref = float(np.exp(vertex))
                v_ref = rate_at(wp_ref, ws, wi)
                if v_ref > best_v:
                    best_v, best_w = v_ref, wp_ref
        return best_v, best_w

    symmetric = (n_s == n_i
                 and len(w_s) == len(w_i)
                 and np.array_equal(w_s, w_i))
    values = np.empty((len(w_s), len(w_i)))
    w_p_best = np.empty_like(values)
    for i, ws in enumerate(w_s):
        j_start = i if symmetric else 0
        for j in range(j_start, len(w_i)):
            v, wp = best_over_wp(ws, float(w_i[j]))
            values[i, j] = v
            w_p_best[i, j] = wp
            if symmetric and j != i:
                values[j, i] = v
                w_p_best[j, i] = wp

    peak_raw = float(values.max())
    if not peak_raw > 0.0:
        raise DomainError("rate surface is identically zero")
    normalized = values / peak_raw
    i0, j0 = np.unravel_index(int(np.argmax(values)), values.shape)
    peak_ws = _axis_refine(w_s, values[:, j0], i0)
    peak_wi = _axis_refine(w_i, values[i0, :], j0)

    config = {
        "kind": "waist_surface",
        "mode": {"l": l, "n_s": n_s, "n_i": n_i},
        "T_C": float(T),
        "w_s_range_m": [float(w_s[0]), float(w_s[-1])],
        "w_i_range_m": [float(w_i[0]), float(w_i[-1])],
        "grid_density": int(grid_density),
        "w_p_policy": policy_label if policy_label == "optimize"
        else float(candidates[0]),
        "window": [lo, hi],
        "omega_points": int(omega_points),
        "model": model.name,
        "crystal": _crystal_config(crystal),
    }
    return WaistSurfaceResult(w_s, w_i, normalized, peak_ws, peak_wi,
                              peak_raw, policy_label, w_p_best, (lo, hi),
                              config)


def _parabola_vertex(x, y):
    """Vertex abscissa of the parabola through three points, or None when
    the points do not bend downward."""
    d1 = (y[1] - y[0]) / (x[1] - x[0])
    d2 = (y[2] - y[1]) / (x[2] - x[1])
    curv = (d2 - d1) / (x[2] - x[0])
    if not curv < 0.0:
        return None
    vertex = 0.5 * (x[0] + x[1]) - d1 / (2.0 * curv)
    return min(max(vertex, x[0]), x[2])


def _axis_refine(axis, slice_values, k):
    """Parabolic sub-grid refinement of an argmax along one axis."""
    if k <= 0 or k >= len(axis) - 1:
        return float(axis[k])
    vertex = _parabola_vertex(axis[k - 1:k + 2].astype(float),
                              slice_values[k - 1:k + 2].astype(float))
    return float(axis[k]) if vertex is None else float(vertex)
