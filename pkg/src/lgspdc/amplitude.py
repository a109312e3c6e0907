"""Coincidence amplitudes for Laguerre-Gaussian signal/idler projections.

Four evaluation routes share one request type: the closed-form double sum
(`coincidence_full`), its degenerate-dispersion approximation driven purely
by focal parameters (`coincidence_degenerate`), the same sum with the phase
mismatch replaced by its quadratic Taylor model (`coincidence_quadratic_kz`),
and a brute-force triple integral kept as a cross-check (`coincidence_oracle`).
All routes use a unit pump spectral amplitude, so returned values are in
arbitrary units; only ratios and normalized spectra are meaningful.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy.special import eval_genlaguerre

from .dispersion import (
    C_LIGHT,
    CrystalSpec,
    DispersionModel,
    default_model,
    phase_mismatch,
    quadratic_phi_model,
    wavenumber,
)
from .lgmodes import (
    FocalConfig,
    ModeSpec,
    WaistConfig,
    alpha_coeff,
    beta_coeff,
    g_star_values,
    g_term_values,
    gd_term_values,
    waists_from_focal,
)

__all__ = [
    "AmplitudeRequest",
    "AmplitudeResult",
    "CostGuardError",
    "Method",
    "NonConvergenceError",
    "QuadratureResult",
    "QuadratureSettings",
    "coincidence_degenerate",
    "coincidence_full",
    "coincidence_oracle",
    "coincidence_quadratic_kz",
    "evaluate_amplitude",
    "spectrum_amplitudes",
    "u_integral",
]

# Single-panel Gauss-Legendre loses efficiency once the oscillatory factor
# packs many cycles into [-1, 1]; beyond this |Phi| the interval is split
# into ceil(|Phi|/pi) panels so each spans about one half-cycle.
PANEL_SPLIT_PHI = 50.0

# Oracle refuses above these indices: the radial polynomial degree and the
# oscillation count both grow with them and the triple integral gets slow
# without telling the caller anything the closed form does not.
ORACLE_MAX_INDEX = 2


class Method(str, Enum):
    """Evaluation route selector for an amplitude request."""

    FULL_CLOSED_FORM = "FullClosedForm"
    DEGENERATE_APPROX = "DegenerateApprox"
    QUADRATIC_KZ = "QuadraticKz"
    NUMERIC_ORACLE = "NumericOracle"


class NonConvergenceError(RuntimeError):
    """Adaptive quadrature ran out of refinements.

    Carries the best available estimate and the last doubling residual so a
    caller can still inspect how close the run got.
    """

    def __init__(self, message: str, best_estimate: complex, residual: float):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.residual = residual


class CostGuardError(RuntimeError):
    """Oracle request exceeds the documented small-index cost guard."""


@dataclass(frozen=True)
class QuadratureSettings:
    """Controls for the adaptive Gauss-Legendre u-integral."""

    base_nodes: int = 32
    max_refinements: int = 10
    rel_tolerance: float = 1e-10

    def __post_init__(self):
        if self.base_nodes < 16:
            raise ValueError("base_nodes must be at least 16")
        if self.max_refinements < 1:
            raise ValueError("max_refinements must be at least 1")
        if not self.rel_tolerance > 0.0:
            raise ValueError("rel_tolerance must be positive")


@dataclass(frozen=True)
class QuadratureResult:
    """Value of a u-integral plus its convergence evidence."""

    value: complex
    converged: bool
    residual: float
    nodes: int


@dataclass(frozen=True)
class AmplitudeResult:
    """One coincidence amplitude with quadrature provenance.

    `value` is the complex amplitude in arbitrary units; `converged` must be
    checked before trusting it.  `probability` is the squared modulus, the
    only quantity whose comparisons are meaningful across routes.
    """

    value: complex
    converged: bool
    residual: float
    nodes: int

    @property
    def probability(self) -> float:
        return abs(self.value) ** 2


Geometry = Union[WaistConfig, FocalConfig]


@dataclass(frozen=True)
class AmplitudeRequest:
    """Everything needed to evaluate one amplitude at one signal frequency.

    The geometry kind must match the method: the full closed form and the
    numeric oracle work from physical waists, while the degenerate and
    quadratic routes are parametrized by focal parameters alone and demand
    n_s == n_i.
    """

    mode: ModeSpec
    geometry: Geometry
    omega_s: float
    crystal: CrystalSpec
    method: Method

    def __post_init__(self):
        if not isinstance(self.mode, ModeSpec):
            raise TypeError("mode must be a ModeSpec")
        if not isinstance(self.crystal, CrystalSpec):
            raise TypeError("crystal must be a CrystalSpec")
        method = Method(self.method)
        object.__setattr__(self, "method", method)
        if not self.omega_s > 0.0:
            raise ValueError("omega_s must be positive")
        if not self.omega_s < self.crystal.pump_angular_frequency:
            raise ValueError("omega_s must lie below the pump frequency")
        if method in (Method.FULL_CLOSED_FORM, Method.NUMERIC_ORACLE):
            if not isinstance(self.geometry, WaistConfig):
                raise TypeError(f"{method.value} requires a WaistConfig geometry")
        else:
            if not isinstance(self.geometry, FocalConfig):
                raise TypeError(f"{method.value} requires a FocalConfig geometry")
            if self.mode.n_s != self.mode.n_i:
                raise ValueError(f"{method.value} requires n_s == n_i")


@lru_cache(maxsize=64)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _initial_panels(Phi: float) -> int:
    if abs(Phi) > PANEL_SPLIT_PHI:
        return math.ceil(abs(Phi) / math.pi)
    return 1


def _flat_nodes(n_panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on [-1, 1], flattened."""
    x, w = _leggauss(order)
    edges = np.linspace(-1.0, 1.0, n_panels + 1)
    half = np.diff(edges) / 2.0
    centers = (edges[:-1] + edges[1:]) / 2.0
    u = (centers[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return u, wts


def u_integral(integrand: Callable[[np.ndarray], np.ndarray], Phi: float,
               settings: QuadratureSettings | None = None) -> QuadratureResult:
    """Adaptive Gauss-Legendre evaluation of int_{-1}^{1} f(u) e^{i Phi u} du.

    The integrand is called with an ndarray of u values and must broadcast.
    Composite base_nodes-point panels cover the interval and the panel count
    doubles until one more doubling changes the value by less than
    rel_tolerance.  The residual is measured against the larger of the
    current magnitude and a small fraction of int |f| du, so values that are
    exact cancellation zeros (e.g. the sinc zeros of a flat integrand) still
    converge; a roundoff floor keeps strongly cancelling integrals from
    chasing precision below the node-sum noise.  Intervals with |Phi| > 50
    start pre-split into ceil(|Phi|/pi) panels.  Raises NonConvergenceError,
    carrying the best estimate and the final residual, when max_refinements
    doublings are not enough.
    """
    settings = settings or QuadratureSettings()

    def evaluate(n_panels: int) -> complex:
        u, wts = _flat_nodes(n_panels, settings.base_nodes)
        vals = np.asarray(integrand(u)) * np.exp(1j * Phi * u)
        return complex(np.sum(wts * vals))

    panels = _initial_panels(Phi)
    u0, w0 = _flat_nodes(panels, settings.base_nodes)
    # An integrand assembled from strongly cancelling terms may advertise its
    # pre-cancellation magnitude via a `magnitude` attribute; that is the
    # honest anchor for the roundoff plateau, |f| alone underestimates it.
    magnitude = getattr(integrand, "magnitude", None)
    mag_vals = np.abs(np.asarray(integrand(u0))) if magnitude is None else np.asarray(magnitude(u0))
    scale = float(np.sum(w0 * mag_vals))
    # Floor for near-zero results: 1e-3 of the magnitude integral keeps the
    # relative criterion meaningful without hiding genuine slow convergence.
    floor = 1e-3 * scale

    value = evaluate(panels)
    residual = math.inf
    for _ in range(settings.max_refinements):
        panels *= 2
        refined = evaluate(panels)
        residual = abs(refined - value)
        value = refined
        nodes = panels * settings.base_nodes
        # second term: roundoff plateau of the node sum; strongly cancelling
        # integrals (|Phi| large) cannot resolve below accumulated eps
        tol = max(settings.rel_tolerance * max(abs(value), floor),
                  8.0 * np.finfo(float).eps * scale * math.sqrt(nodes))
        if residual <= tol:
            return QuadratureResult(value, True, residual, nodes)
    raise NonConvergenceError(
        f"u-integral did not converge after {settings.max_refinements} "
        f"doublings (residual {residual:.3e})",
        best_estimate=value,
        residual=residual,
    )


def _focal_parameter(length_L: float, k: float, waist: float) -> float:
    return length_L / (k * waist * waist)


def full_integrand(mode: ModeSpec, waists: WaistConfig, omega_s: float,
                   crystal: CrystalSpec, T: float | None = None,
                   model: DispersionModel | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Summed closed-form integrand S(u) for the exact-dispersion route.

    Signal and idler beam parameters use their own wavenumbers at the
    requested frequencies, so the returned closure is specific to omega_s.
    """
    model = model or default_model()
    T = crystal.temperature_T if T is None else T
    omega_p = crystal.pump_angular_frequency
    omega_i = omega_p - omega_s
    k_p = float(wavenumber(omega_p, T, model))
    k_s = float(wavenumber(omega_s, T, model))
    k_i = float(wavenumber(omega_i, T, model))
    L = crystal.length_L
    f_p = _focal_parameter(L, k_p, waists.w_p)
    f_s = _focal_parameter(L, k_s, waists.w_s)
    f_i = _focal_parameter(L, k_i, waists.w_i)
    terms = [
        (alpha_coeff(mode, m_s, m_i, waists, crystal), m_s, m_i)
        for m_s in range(mode.n_s + 1)
        for m_i in range(mode.n_i + 1)
    ]

    def integrand(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        g_p = 1.0 + 1j * f_p * u
        g_s = 1.0 + 1j * f_s * u
        g_i = 1.0 + 1j * f_i * u
        g_st = g_star_values(g_p, g_s, g_i, waists)
        total = np.zeros(np.shape(u), dtype=complex)
        for coeff, m_s, m_i in terms:
            total += coeff * g_term_values(mode, m_s, m_i, g_p, g_s, g_i, g_st)
        return total

    def magnitude(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        g_p = 1.0 + 1j * f_p * u
        g_s = 1.0 + 1j * f_s * u
        g_i = 1.0 + 1j * f_i * u
        g_st = g_star_values(g_p, g_s, g_i, waists)
        total = np.zeros(np.shape(u), dtype=float)
        for coeff, m_s, m_i in terms:
            total += abs(coeff) * np.abs(g_term_values(mode, m_s, m_i, g_p, g_s, g_i, g_st))
        return total

    integrand.magnitude = magnitude
    return integrand


def degenerate_integrand(mode: ModeSpec, focal: FocalConfig, crystal: CrystalSpec,
                         T: float | None = None,
                         model: DispersionModel | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Summed degenerate-dispersion integrand S(u).

    Both daughter beams share the degenerate beam parameter, so the closure
    depends on geometry only through (f_p, f_si_d) and not on omega_s; it can
    be reused across a whole spectrum.
    """
    terms = [
        (beta_coeff(mode, m_s, m_i, focal, crystal, model=model, T=T), m_s, m_i)
        for m_s in range(mode.n_s + 1)
        for m_i in range(mode.n_i + 1)
    ]
    f_p = focal.f_p
    f_d = focal.f_si_d

    def integrand(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        g_p = 1.0 + 1j * f_p * u
        g_d = 1.0 + 1j * f_d * u
        total = np.zeros(np.shape(u), dtype=complex)
        for coeff, m_s, m_i in terms:
            total += coeff * gd_term_values(mode, m_s, m_i, g_p, g_d)
        return total

    def magnitude(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        g_p = 1.0 + 1j * f_p * u
        g_d = 1.0 + 1j * f_d * u
        total = np.zeros(np.shape(u), dtype=float)
        for coeff, m_s, m_i in terms:
            total += abs(coeff) * np.abs(gd_term_values(mode, m_s, m_i, g_p, g_d))
        return total

    integrand.magnitude = magnitude
    return integrand


def _require_method(request: AmplitudeRequest, method: Method):
    if request.method is not method:
        raise ValueError(f"request.method is {request.method.value}, expected {method.value}")


def coincidence_full(request: AmplitudeRequest,
                     settings: QuadratureSettings | None = None,
                     model: DispersionModel | None = None) -> AmplitudeResult:
    """Closed-form coincidence amplitude with exact dispersion.

    Evaluates the alpha-weighted double sum over Gaussian pump decomposition
    indices, each term carrying its own beam-parameter product, against the
    exact phase mismatch at the requested signal frequency.
    """
    _require_method(request, Method.FULL_CLOSED_FORM)
    T = request.crystal.temperature_T
    S = full_integrand(request.mode, request.geometry, request.omega_s,
                       request.crystal, T=T, model=model)
    Phi = phase_mismatch(request.omega_s, T, request.crystal, model).Phi
    q = u_integral(S, Phi, settings)
    return AmplitudeResult(q.value, q.converged, q.residual, q.nodes)


def coincidence_degenerate(request: AmplitudeRequest,
                           settings: QuadratureSettings | None = None,
                           model: DispersionModel | None = None) -> AmplitudeResult:
    """Degenerate-dispersion amplitude driven by focal parameters alone.

    The beta-weighted sum treats both daughters with the degenerate
    wavenumber inside the beam parameters, but the phase mismatch keeps its
    exact frequency dependence: degeneracy is not imposed on Phi.
    """
    _require_method(request, Method.DEGENERATE_APPROX)
    T = request.crystal.temperature_T
    S = degenerate_integrand(request.mode, request.geometry, request.crystal,
                             T=T, model=model)
    Phi = phase_mismatch(request.omega_s, T, request.crystal, model).Phi
    q = u_integral(S, Phi, settings)
    return AmplitudeResult(q.value, q.converged, q.residual, q.nodes)


def coincidence_quadratic_kz(request: AmplitudeRequest,
                             settings: QuadratureSettings | None = None,
                             model: DispersionModel | None = None) -> AmplitudeResult:
    """Degenerate sum with Phi replaced by its quadratic Taylor model.

    The expansion is taken about the phase-matched signal frequency, with
    linear and quadratic coefficients built from group velocities and
    group-velocity dispersion; a missing root propagates as
    PhaseMatchingError.
    """
    _require_method(request, Method.QUADRATIC_KZ)
    T = request.crystal.temperature_T
    omega_root, a1, g_tot = quadratic_phi_model(T, request.crystal, model)
    S = degenerate_integrand(request.mode, request.geometry, request.crystal,
                             T=T, model=model)
    d = request.omega_s - omega_root
    Phi = a1 * d - request.crystal.length_L * g_tot * d * d / 4.0
    q = u_integral(S, Phi, settings)
    return AmplitudeResult(q.value, q.converged, q.residual, q.nodes)


def _lg_radial(n: int, l: int, w: float, r: np.ndarray, z: np.ndarray,
               k: float) -> np.ndarray:
    """Propagated Laguerre-Gauss radial profile (azimuthal phase excluded)."""
    g = 1.0 + 2j * z / (k * w * w)
    norm = math.sqrt(math.exp(math.lgamma(n + 1) - math.lgamma(n + l + 1)) / math.pi)
    gw = g * w
    x = 2.0 * r * r / (w * w * np.abs(g) ** 2)
    val = (
        norm
        * (np.conj(g) / g) ** n
        * np.exp(-(r * r) / (gw * w))
        * (math.sqrt(2.0) / gw) ** (l + 1)
        * r**l
        * eval_genlaguerre(n, l, x)
    )
    return val


def coincidence_oracle(request: AmplitudeRequest,
                       model: DispersionModel | None = None,
                       l_s: int | None = None, l_i: int | None = None,
                       r_max_factor: float = 12.0,
                       n_r: int = 400, n_z: int | None = None) -> AmplitudeResult:
    """Brute-force triple integral over (r, phi, z) of the mode overlap.

    The azimuthal integral is done analytically (2 pi when the projected
    topological charges cancel against the plain pump, exactly zero
    otherwise); the radial integral is tail-truncated Gauss-Legendre out to
    r_max_factor times the largest waist and the longitudinal integral is
    Gauss-Legendre over the crystal.  Small indices only (l, n <= 2): the
    cost guard raises instead of silently grinding.  l_s/l_i default to the
    mode's +l/-l and may be overridden to probe charge conservation.
    """
    _require_method(request, Method.NUMERIC_ORACLE)
    mode, waists, crystal = request.mode, request.geometry, request.crystal
    if mode.l > ORACLE_MAX_INDEX or mode.n_s > ORACLE_MAX_INDEX or mode.n_i > ORACLE_MAX_INDEX:
        raise CostGuardError(
            f"oracle indices limited to l, n_s, n_i <= {ORACLE_MAX_INDEX}; "
            f"got l={mode.l}, n_s={mode.n_s}, n_i={mode.n_i}"
        )
    l_s = mode.l if l_s is None else l_s
    l_i = -mode.l if l_i is None else l_i
    if l_s + l_i != 0:
        return AmplitudeResult(0.0 + 0.0j, True, 0.0, 0)

    T = crystal.temperature_T
    model = model or default_model()
    omega_p = crystal.pump_angular_frequency
    omega_i = omega_p - request.omega_s
    k_p = float(wavenumber(omega_p, T, model))
    k_s = float(wavenumber(request.omega_s, T, model))
    k_i = float(wavenumber(omega_i, T, model))
    dk = phase_mismatch(request.omega_s, T, crystal, model).delta_k
    L = crystal.length_L
    Phi = dk * (L / 2.0)
    if n_z is None:
        n_z = max(256, 12 * math.ceil(abs(Phi) / math.pi))

    def run(nr: int, nz: int) -> complex:
        xr, wr = _flat_nodes(max(1, math.ceil(nr / 100)), 100)
        xz, wz = _flat_nodes(max(4, math.ceil(nz / 64)), 64)
        r_max = r_max_factor * max(waists.w_p, waists.w_s, waists.w_i)
        r = 0.5 * r_max * (xr + 1.0)
        jr = 0.5 * r_max * wr * r
        z = 0.5 * L * xz
        jz = 0.5 * L * wz
        total = 0.0 + 0.0j
        for zj, wj in zip(z, jz):
            pump = _lg_radial(0, 0, waists.w_p, r, zj, k_p)
            sig = np.conj(_lg_radial(mode.n_s, abs(l_s), waists.w_s, r, zj, k_s))
            idl = np.conj(_lg_radial(mode.n_i, abs(l_i), waists.w_i, r, zj, k_i))
            total += wj * np.exp(1j * dk * zj) * np.sum(jr * pump * sig * idl)
        return complex(2.0 * math.pi * total / (4.0 * math.pi**2))

    value = run(n_r, n_z)
    check = run(n_r // 2, max(n_z // 2, 128))
    residual = abs(value - check)
    converged = residual <= 1e-7 * max(abs(value), 1e-300)
    return AmplitudeResult(value, converged, residual, n_r * n_z)


def _band_values(eval_chunk, idx: np.ndarray, u: np.ndarray, wts: np.ndarray,
                 Phi: np.ndarray, chunk: int = 64) -> tuple[np.ndarray, np.ndarray]:
    mag_chunk = getattr(eval_chunk, "magnitude", None)
    vals = np.empty(len(idx), dtype=complex)
    scale = np.empty(len(idx), dtype=float)
    for s in range(0, len(idx), chunk):
        sl = idx[s:s + chunk]
        S = eval_chunk(sl, u)
        E = np.exp(1j * np.outer(Phi[sl], u))
        vals[s:s + len(sl)] = (S * E) @ wts
        mag = np.abs(S) if mag_chunk is None else mag_chunk(sl, u)
        scale[s:s + len(sl)] = mag @ wts
    return vals, scale


def _full_chunk_evaluator(mode: ModeSpec, waists: WaistConfig, omega: np.ndarray,
                          crystal: CrystalSpec, T: float, model: DispersionModel):
    omega_p = crystal.pump_angular_frequency
    L = crystal.length_L
    k_p = float(wavenumber(omega_p, T, model))
    k_s = np.asarray(wavenumber(omega, T, model), dtype=float)
    k_i = np.asarray(wavenumber(omega_p - omega, T, model), dtype=float)
    f_p = _focal_parameter(L, k_p, waists.w_p)
    f_s = L / (k_s * waists.w_s**2)
    f_i = L / (k_i * waists.w_i**2)
    terms = [
        (alpha_coeff(mode, m_s, m_i, waists, crystal), m_s, m_i)
        for m_s in range(mode.n_s + 1)
        for m_i in range(mode.n_i + 1)
    ]

    def eval_chunk(sl: np.ndarray, u: np.ndarray) -> np.ndarray:
        g_p = 1.0 + 1j * f_p * u
        g_s = 1.0 + 1j * np.outer(f_s[sl], u)
        g_i = 1.0 + 1j * np.outer(f_i[sl], u)
        g_st = g_star_values(g_p, g_s, g_i, waists)
        total = np.zeros(g_s.shape, dtype=complex)
        for coeff, m_s, m_i in terms:
            total += coeff * g_term_values(mode, m_s, m_i, g_p, g_s, g_i, g_st)
        return total

    def magnitude(sl: np.ndarray, u: np.ndarray) -> np.ndarray:
        g_p = 1.0 + 1j * f_p * u
        g_s = 1.0 + 1j * np.outer(f_s[sl], u)
        g_i = 1.0 + 1j * np.outer(f_i[sl], u)
        g_st = g_star_values(g_p, g_s, g_i, waists)
        total = np.zeros(g_s.shape, dtype=float)
        for coeff, m_s, m_i in terms:
            total += abs(coeff) * np.abs(g_term_values(mode, m_s, m_i, g_p, g_s, g_i, g_st))
        return total

    eval_chunk.magnitude = magnitude
    return eval_chunk


def spectrum_amplitudes(mode: ModeSpec, geometry: Geometry, omega_grid,
                        crystal: CrystalSpec, method: Method,
                        settings: QuadratureSettings | None = None,
                        model: DispersionModel | None = None,
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Amplitudes C(omega_s) on a grid, with shared quadrature across bands.

    Grid points are grouped by a power-of-two quantized panel count so each
    band reuses one set of Gauss-Legendre nodes; within a band the node
    count doubles until every point satisfies the settings tolerance, which
    makes wide spectra tractable where the one-point routes would rebuild
    their quadrature at every frequency.  Returns (values, converged,
    residuals) arrays aligned with omega_grid.  The oracle route has no
    spectrum fast path.
    """
    settings = settings or QuadratureSettings()
    model = model or default_model()
    method = Method(method)
    if method is Method.NUMERIC_ORACLE:
        raise ValueError("spectrum_amplitudes does not support the oracle route")
    omega = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    if omega.size == 0:
        raise ValueError("omega_grid must not be empty")
    # route the geometry/index validation through the request type
    AmplitudeRequest(mode, geometry, float(omega[0]), crystal, method)
    T = crystal.temperature_T

    if method is Method.QUADRATIC_KZ:
        omega_root, a1, g_tot = quadratic_phi_model(T, crystal, model)
        d = omega - omega_root
        Phi = a1 * d - crystal.length_L * g_tot * d * d / 4.0
    else:
        Phi = np.asarray(phase_mismatch(omega, T, crystal, model).Phi, dtype=float)

    if method is Method.FULL_CLOSED_FORM:
        eval_chunk = _full_chunk_evaluator(mode, geometry, omega, crystal, T, model)
    else:
        S = degenerate_integrand(mode, geometry, crystal, T=T, model=model)

        def eval_chunk(sl: np.ndarray, u: np.ndarray) -> np.ndarray:
            return np.broadcast_to(S(u), (len(sl), u.size))

        eval_chunk.magnitude = lambda sl, u: np.broadcast_to(
            S.magnitude(u), (len(sl), u.size))

    values = np.empty(omega.shape, dtype=complex)
    converged = np.zeros(omega.shape, dtype=bool)
    residuals = np.full(omega.shape, np.inf)

    n_panels = np.ones(omega.shape, dtype=int)
    big = np.abs(Phi) > PANEL_SPLIT_PHI
    n_panels[big] = np.ceil(np.abs(Phi[big]) / math.pi).astype(int)
    quantized = 2 ** np.ceil(np.log2(n_panels)).astype(int)

    for q in np.unique(quantized):
        idx = np.nonzero(quantized == q)[0]
        panels = int(q)
        u, wts = _flat_nodes(panels, settings.base_nodes)
        prev, scale = _band_values(eval_chunk, idx, u, wts, Phi)
        floor = 1e-3 * scale
        for _ in range(settings.max_refinements):
            panels *= 2
            u, wts = _flat_nodes(panels, settings.base_nodes)
            cur, _ = _band_values(eval_chunk, idx, u, wts, Phi)
            resid = np.abs(cur - prev)
            tol = np.maximum(
                settings.rel_tolerance * np.maximum(np.abs(cur), floor),
                8.0 * np.finfo(float).eps * scale * math.sqrt(panels * settings.base_nodes),
            )
            ok = resid <= tol
            prev = cur
            if ok.all():
                break
        values[idx] = prev
        residuals[idx] = resid
        converged[idx] = ok
    return values, converged, residuals


_DISPATCH = {
    Method.FULL_CLOSED_FORM: coincidence_full,
    Method.DEGENERATE_APPROX: coincidence_degenerate,
    Method.QUADRATIC_KZ: coincidence_quadratic_kz,
}


def evaluate_amplitude(request: AmplitudeRequest,
                       settings: QuadratureSettings | None = None,
                       model: DispersionModel | None = None) -> AmplitudeResult:
    """Dispatch a request to the route named by its method field."""
    if request.method is Method.NUMERIC_ORACLE:
        return coincidence_oracle(request, model=model)
    return _DISPATCH[request.method](request, settings, model)


def waists_for_degenerate(focal: FocalConfig, crystal: CrystalSpec,
                          model: DispersionModel | None = None,
                          T: float | None = None) -> WaistConfig:
    """Physical waists reproducing a focal configuration at degeneracy."""
    return waists_from_focal(focal, crystal, model=model, T=T)
