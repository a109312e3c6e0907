"""Temperature-dependent dispersion of z-polarized light in periodically poled KTP.

The refractive index follows a four-pole Sellmeier fit with a quadratic
thermo-optic correction,

    n(lam, T)^2_Sellmeier = A + B/(1 - C/lam^2) + D/(1 - E/lam^2) - F lam^2
    n(lam, T) = sqrt(...) + n1(lam) dT + n2(lam) dT^2

with lam the vacuum wavelength in micrometres, dT the temperature offset from
25 C, and n1, n2 cubic polynomials in 1/lam.  The packaged coefficients are
the n_z values of Fradkin et al., Appl. Phys. Lett. 74, 914 (1999) for the
Sellmeier part and Emanueli and Arie, Appl. Opt. 42, 6661 (2003) for the
thermo-optic part.  The default model also carries a calibration offset on
the thermo-optic temperature argument that absorbs the fabrication tolerance
of the poling period (see models/ktp_fradkin_emanueli.json).

Everything downstream needs only scalar dispersion quantities: wave numbers
k = n omega / c, the quasi-phase-matching mismatch

    delta_k = k_p - k_s - k_i - 2 pi / Lambda,    Phi = delta_k L / 2,

group velocities u_g = 1/k', group-velocity dispersion G = k'', and the
quadratic-in-frequency model of Phi near the phase-matched point that gives
the spectral half-width parameter Phi_half.

All public functions are pure; arguments are SI unless the name says
otherwise.  Frequencies are angular (rad/s).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.constants import c as C_LIGHT

TWO_PI = 2.0 * math.pi

# Reference geometry used throughout: a 30 mm grating poled at 3.425 um,
# pumped by a 405 nm continuous-wave beam.
REFERENCE_LENGTH = 0.030
REFERENCE_POLING_PERIOD = 3.425e-6
REFERENCE_PUMP_WAVELENGTH = 405e-9

DEFAULT_MODEL_NAME = "ktp_fradkin_emanueli"

_MODEL_JSON_KEYS = {
    "name",
    "comment",
    "sellmeier",
    "thermo_optic",
    "lambda_range_um",
    "temp_range_C",
    "temperature_offset_C",
    "thermal_expansion",
}


class DomainError(ValueError):
    """An input lies outside the dispersion model's declared validity range."""


class PhaseMatchingError(RuntimeError):
    """No delta_k = 0 solution exists at the requested temperature."""


@dataclass(frozen=True)
class DispersionModel:
    """Immutable coefficient set for n_z(lam, T).

    sellmeier_coefficients: (A, B, C, D, E, F) of the four-pole fit above.
    thermo_optic_coefficients: (a0..a3, b0..b3), the coefficients of the two
        inverse-wavelength cubics n1 and n2.
    validity_wavelength_range / validity_temperature_range: closed intervals
        (metres, Celsius) inside which the fit is trusted.
    temperature_offset: Celsius added to the thermo-optic argument dT; used
        to absorb poling-period fabrication tolerance into an equivalent
        temperature shift.
    thermal_expansion: (alpha, beta) of the crystal expansion polynomial
        1 + alpha dT + beta dT^2, applied to the poling period only when
        explicitly requested.
    """

    name: str
    sellmeier_coefficients: tuple[float, ...]
    thermo_optic_coefficients: tuple[float, ...]
    validity_wavelength_range: tuple[float, float]
    validity_temperature_range: tuple[float, float]
    temperature_offset: float = 0.0
    thermal_expansion: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if len(self.sellmeier_coefficients) != 6:
            raise ValueError("sellmeier_coefficients must hold 6 numbers (A..F)")
        if len(self.thermo_optic_coefficients) != 8:
            raise ValueError("thermo_optic_coefficients must hold 8 numbers (a0..a3, b0..b3)")
        lo, hi = self.validity_wavelength_range
        if not 0 < lo < hi:
            raise ValueError("validity_wavelength_range must be an increasing positive pair")
        tlo, thi = self.validity_temperature_range
        if not tlo < thi:
            raise ValueError("validity_temperature_range must be an increasing pair")

    @staticmethod
    def from_dict(doc: dict) -> "DispersionModel":
        unknown = set(doc) - _MODEL_JSON_KEYS
        if unknown:
            raise ValueError(f"unknown dispersion-model keys: {sorted(unknown)}")
        lam_lo, lam_hi = doc["lambda_range_um"]
        return DispersionModel(
            name=doc["name"],
            sellmeier_coefficients=tuple(float(x) for x in doc["sellmeier"]),
            thermo_optic_coefficients=tuple(float(x) for x in doc["thermo_optic"]),
            validity_wavelength_range=(lam_lo * 1e-6, lam_hi * 1e-6),
            validity_temperature_range=tuple(float(t) for t in doc["temp_range_C"]),
            temperature_offset=float(doc.get("temperature_offset_C", 0.0)),
            thermal_expansion=tuple(float(x) for x in doc.get("thermal_expansion", (0.0, 0.0))),
        )

    @staticmethod
    def from_json(path) -> "DispersionModel":
        with open(path, encoding="utf-8") as fh:
            return DispersionModel.from_dict(json.load(fh))

    @staticmethod
    def from_name(name: str) -> "DispersionModel":
        """Load one of the coefficient files packaged under lgspdc/models."""
        text = resources.files("lgspdc.models").joinpath(f"{name}.json").read_text("utf-8")
        return DispersionModel.from_dict(json.loads(text))


@lru_cache(maxsize=None)
def default_model() -> DispersionModel:
    return DispersionModel.from_name(DEFAULT_MODEL_NAME)


@dataclass(frozen=True)
class CrystalSpec:
    """Grating geometry and operating point: length, poling period, oven
    temperature, and vacuum pump wavelength."""

    length_L: float
    poling_period_Lambda: float
    temperature_T: float
    pump_wavelength_vacuum: float

    def __post_init__(self):
        for field in ("length_L", "poling_period_Lambda", "pump_wavelength_vacuum"):
            if not getattr(self, field) > 0:
                raise ValueError(f"{field} must be positive")

    @property
    def pump_angular_frequency(self) -> float:
        return TWO_PI * C_LIGHT / self.pump_wavelength_vacuum


def reference_crystal(T: float = 24.5) -> CrystalSpec:
    """The 30 mm, 3.425 um, 405 nm-pumped grating at oven temperature T."""
    return CrystalSpec(REFERENCE_LENGTH, REFERENCE_POLING_PERIOD, T, REFERENCE_PUMP_WAVELENGTH)


@dataclass(frozen=True)
class PhaseMismatch:
    """Longitudinal wave-vector mismatch delta_k and Phi = delta_k L / 2."""

    delta_k: float
    Phi: float


def _check_range(value, lo, hi, what, unit):
    vmin = np.min(value)
    vmax = np.max(value)
    if vmin < lo:
        raise DomainError(f"{what} {vmin:g} {unit} below model validity bound {lo:g} {unit}")
    if vmax > hi:
        raise DomainError(f"{what} {vmax:g} {unit} above model validity bound {hi:g} {unit}")


def _inv_lambda_cubic(c0, c1, c2, c3, lam_um):
    return c0 + c1 / lam_um + c2 / lam_um**2 + c3 / lam_um**3


def refractive_index(wavelength_vacuum, T: float, model: DispersionModel | None = None):
    """n_z at vacuum wavelength (metres) and temperature T (Celsius).

    Accepts scalar or ndarray wavelength.  Raises DomainError outside the
    model's declared wavelength or temperature validity range.
    """
    model = model or default_model()
    _check_range(wavelength_vacuum, *model.validity_wavelength_range, "wavelength", "m")
    _check_range(T, *model.validity_temperature_range, "temperature", "C")
    A, B, C, D, E, F = model.sellmeier_coefficients
    lam = np.asarray(wavelength_vacuum, dtype=float) * 1e6
    lam2 = lam * lam
    n2 = A + B / (1.0 - C / lam2) + D / (1.0 - E / lam2) - F * lam2
    a0, a1, a2, a3, b0, b1, b2, b3 = model.thermo_optic_coefficients
    dT = T - 25.0 + model.temperature_offset
    n = (np.sqrt(n2)
         + _inv_lambda_cubic(a0, a1, a2, a3, lam) * dT
         + _inv_lambda_cubic(b0, b1, b2, b3, lam) * dT * dT)
    return float(n) if np.isscalar(wavelength_vacuum) else n


def _n_and_derivatives(lam_m, T, model):
    """n, dn/dlam, d2n/dlam2 with lam in metres (derivatives per metre)."""
    A, B, C, D, E, F = model.sellmeier_coefficients
    lam = np.asarray(lam_m, dtype=float) * 1e6
    lam2 = lam * lam
    sC = 1.0 - C / lam2
    sE = 1.0 - E / lam2
    n2 = A + B / sC + D / sE - F * lam2
    # d(n^2)/dlam and d2(n^2)/dlam2, per micrometre
    d1 = -2.0 * B * C / (lam2 * lam * sC**2) - 2.0 * D * E / (lam2 * lam * sE**2) - 2.0 * F * lam
    d2 = (6.0 * B * C / (lam2 * lam2 * sC**2) + 8.0 * B * C**2 / (lam2**3 * sC**3)
          + 6.0 * D * E / (lam2 * lam2 * sE**2) + 8.0 * D * E**2 / (lam2**3 * sE**3)
          - 2.0 * F)
    ns = np.sqrt(n2)
    ns1 = d1 / (2.0 * ns)
    ns2 = d2 / (2.0 * ns) - d1 * d1 / (4.0 * n2 * ns)
    a0, a1, a2, a3, b0, b1, b2, b3 = model.thermo_optic_coefficients
    dT = T - 25.0 + model.temperature_offset
    n = ns + _inv_lambda_cubic(a0, a1, a2, a3, lam) * dT \
        + _inv_lambda_cubic(b0, b1, b2, b3, lam) * dT * dT
    dp1 = -a1 / lam2 - 2.0 * a2 / (lam2 * lam) - 3.0 * a3 / (lam2 * lam2)
    dp2 = -b1 / lam2 - 2.0 * b2 / (lam2 * lam) - 3.0 * b3 / (lam2 * lam2)
    d2p1 = 2.0 * a1 / (lam2 * lam) + 6.0 * a2 / (lam2 * lam2) + 12.0 * a3 / (lam2**2 * lam)
    d2p2 = 2.0 * b1 / (lam2 * lam) + 6.0 * b2 / (lam2 * lam2) + 12.0 * b3 / (lam2**2 * lam)
    n1 = ns1 + dp1 * dT + dp2 * dT * dT
    n_2 = ns2 + d2p1 * dT + d2p2 * dT * dT
    # rescale derivatives from per-um to per-m
    return n, n1 * 1e6, n_2 * 1e12


def wavenumber(omega, T: float, model: DispersionModel | None = None):
    """k = n(lam, T) omega / c for angular frequency omega (rad/s)."""
    model = model or default_model()
    lam = TWO_PI * C_LIGHT / np.asarray(omega, dtype=float)
    n = refractive_index(lam, T, model)
    k = n * np.asarray(omega, dtype=float) / C_LIGHT
    return float(k) if np.isscalar(omega) else k


def _fd_first(omega, T, model, h):
    d = h * omega
    da = (wavenumber(omega + d, T, model) - wavenumber(omega - d, T, model)) / (2 * d)
    db = (wavenumber(omega + d / 2, T, model) - wavenumber(omega - d / 2, T, model)) / d
    return (4.0 * db - da) / 3.0


def _fd_second(omega, T, model, h):
    d = h * omega
    k0 = wavenumber(omega, T, model)
    da = (wavenumber(omega + d, T, model) - 2 * k0 + wavenumber(omega - d, T, model)) / d**2
    db = (wavenumber(omega + d / 2, T, model) - 2 * k0
          + wavenumber(omega - d / 2, T, model)) / (d / 2) ** 2
    return (4.0 * db - da) / 3.0


def _check_stencil(omega, T, model, h):
    lam_hi = TWO_PI * C_LIGHT / (omega * (1.0 - h))
    lam_lo = TWO_PI * C_LIGHT / (omega * (1.0 + h))
    _check_range(lam_lo, *model.validity_wavelength_range, "stencil wavelength", "m")
    _check_range(lam_hi, *model.validity_wavelength_range, "stencil wavelength", "m")


def group_velocity(omega: float, T: float, model: DispersionModel | None = None,
                   fd_step: float | None = None) -> float:
    """Group velocity u_g = 1/(dk/domega).

    The derivative is analytic by default.  Passing fd_step switches to a
    Richardson-extrapolated central difference with relative step fd_step,
    kept as an independent cross-check of the closed-form derivative.
    """
    model = model or default_model()
    if fd_step is not None:
        _check_stencil(omega, T, model, fd_step)
        return 1.0 / _fd_first(omega, T, model, fd_step)
    lam = TWO_PI * C_LIGHT / omega
    n, n1, _ = _n_and_derivatives(lam, T, model)
    _check_range(lam, *model.validity_wavelength_range, "wavelength", "m")
    _check_range(T, *model.validity_temperature_range, "temperature", "C")
    # dk/domega = (n - lam dn/dlam)/c, the group index over c
    return float(C_LIGHT / (n - lam * n1))


def gvd(omega: float, T: float, model: DispersionModel | None = None,
        fd_step: float | None = None) -> float:
    """Group-velocity dispersion G = d2k/domega2 (s^2/m)."""
    model = model or default_model()
    if fd_step is not None:
        _check_stencil(omega, T, model, fd_step)
        return _fd_second(omega, T, model, fd_step)
    lam = TWO_PI * C_LIGHT / omega
    _check_range(lam, *model.validity_wavelength_range, "wavelength", "m")
    _check_range(T, *model.validity_temperature_range, "temperature", "C")
    _, _, n2 = _n_and_derivatives(lam, T, model)
    return float(lam**3 * n2 / (TWO_PI * C_LIGHT**2))


def phase_mismatch(omega_s: float, T: float, crystal: CrystalSpec,
                   model: DispersionModel | None = None,
                   include_thermal_expansion: bool = False) -> PhaseMismatch:
    """delta_k = k_p - k_s - k_i - 2 pi / Lambda with omega_i = omega_p - omega_s.

    The idler frequency follows from energy conservation.  Accepts a scalar
    or an ndarray of signal frequencies.  Thermal expansion of the poling
    period is off by default; when enabled it rescales Lambda by the model's
    quadratic expansion polynomial in (T - 25).
    """
    omega_p = crystal.pump_angular_frequency
    omega_arr = np.asarray(omega_s, dtype=float)
    if not (np.all(omega_arr > 0.0) and np.all(omega_arr < omega_p)):
        raise DomainError("omega_s outside (0, omega_p)")
    model = model or default_model()
    dk = _delta_k_grid(omega_s, T, crystal, model, include_thermal_expansion)
    if np.isscalar(omega_s):
        dk = float(dk)
    return PhaseMismatch(dk, dk * crystal.length_L / 2)


def _delta_k_grid(omega_s, T, crystal, model, include_thermal_expansion=False):
    """Vector-friendly delta_k over an array of signal frequencies."""
    omega_p = crystal.pump_angular_frequency
    omega_s = np.asarray(omega_s, dtype=float)
    # canonicalize the pair so omega_s and omega_p - omega_s give bitwise
    # identical results: the subtraction from the high-frequency side is
    # exact in floats, the low side may round
    omega_hi = np.where(omega_s >= omega_p - omega_s, omega_s, omega_p - omega_s)
    omega_lo = omega_p - omega_hi
    k_p = wavenumber(omega_p, T, model)
    k_pair = wavenumber(omega_hi, T, model) + wavenumber(omega_lo, T, model)
    period = crystal.poling_period_Lambda
    if include_thermal_expansion:
        alpha, beta = model.thermal_expansion
        dT = T - 25.0
        period = period * (1.0 + alpha * dT + beta * dT * dT)
    return k_p - k_pair - TWO_PI / period


def delta_k_roots(T: float, crystal: CrystalSpec,
                  model: DispersionModel | None = None,
                  rel_tol: float = 1e-12) -> tuple[float, float]:
    """The phase-matched pair (omega_s, omega_i) with delta_k = 0.

    Scans the ratio 2 omega / omega_p over (1, 1.5) for a sign change of
    delta_k and bisects it to rel_tol; the mirror root below degeneracy
    follows from exchange symmetry.  Signal is the higher frequency.
    Raises PhaseMatchingError when no root exists at this temperature.
    """
    model = model or default_model()
    omega_p = crystal.pump_angular_frequency
    omega_d = omega_p / 2

    def dk_at(ratio):
        return _delta_k_grid(ratio * omega_d, T, crystal, model)

    ratios = np.linspace(1.0, 1.4999, 1024)
    dk = dk_at(ratios)
    if dk[0] < 0.0:
        raise PhaseMatchingError(
            f"no phase matching at T = {T:g} C: delta_k({omega_d:g} rad/s) = {dk[0]:g} 1/m < 0")
    if dk[0] == 0.0:
        return omega_d, omega_d
    sign_change = np.nonzero((dk[:-1] > 0) & (dk[1:] <= 0))[0]
    if sign_change.size == 0:
        raise PhaseMatchingError(f"no delta_k sign change for omega_r in (1, 1.5) at T = {T:g} C")
    lo = ratios[sign_change[0]]
    hi = ratios[sign_change[0] + 1]
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if dk_at(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi) * omega_d
    return root, omega_p - root


def _quadratic_phi_coefficients(T, crystal, model):
    """(A1, Gtot) of the quadratic model Phi(root + delta) = A1 delta - L Gtot delta^2 / 4."""
    omega_s, omega_i = delta_k_roots(T, crystal, model)
    u_gs = group_velocity(omega_s, T, model)
    u_gi = group_velocity(omega_i, T, model)
    g_tot = gvd(omega_s, T, model) + gvd(omega_i, T, model)
    a1 = 0.5 * crystal.length_L * (-1.0 / u_gs + 1.0 / u_gi)
    return a1, g_tot


def quadratic_phi_model(T: float, crystal: CrystalSpec | None = None,
                        model: DispersionModel | None = None) -> tuple[float, float, float]:
    """(omega_root, A1, G_tot) of the quadratic mismatch model.

    Phi(omega_s) is approximated near the phase-matched signal frequency by
    A1 d - L G_tot d^2 / 4 with d = omega_s - omega_root; A1 collects the
    group-velocity difference, G_tot the summed dispersion.  Raises
    PhaseMatchingError when there is no root to expand about.
    """
    crystal = crystal or reference_crystal(T)
    model = model or default_model()
    omega_root, _ = delta_k_roots(T, crystal, model)
    a1, g_tot = _quadratic_phi_coefficients(T, crystal, model)
    return omega_root, a1, g_tot


def phi_quadratic(omega_s, T: float, crystal: CrystalSpec | None = None,
                  model: DispersionModel | None = None):
    """Second-order Taylor expansion of Phi about the delta_k = 0 signal root."""
    crystal = crystal or reference_crystal(T)
    omega_root, a1, g_tot = quadratic_phi_model(T, crystal, model)
    d = np.asarray(omega_s, dtype=float) - omega_root
    phi = a1 * d - crystal.length_L * g_tot * d * d / 4.0
    return float(phi) if np.isscalar(omega_s) else phi


def phi_half(T: float, crystal: CrystalSpec | None = None,
             model: DispersionModel | None = None) -> float:
    """Phi at which |domega/dPhi| falls to half its delta_k = 0 value.

    Evaluates -(3/4) L (1/u_gi - 1/u_gs)^2 / (G_s + G_i) at the
    phase-matched frequencies.  Zero when the roots are exactly degenerate.
    """
    crystal = crystal or reference_crystal(T)
    model = model or default_model()
    a1, g_tot = _quadratic_phi_coefficients(T, crystal, model)
    return -3.0 * a1 * a1 / (crystal.length_L * g_tot)


def domega_dphi(Phi: float, T: float, crystal: CrystalSpec | None = None,
                model: DispersionModel | None = None) -> float:
    """|domega_si/dPhi| from the quadratic wavenumber model around delta_k = 0.

    Magnitude of 1/sqrt(A1^2 - L (G_s + G_i) Phi) where A1 is the linear
    Phi coefficient at the phase-matched point; signal and idler branches
    carry opposite signs, so only the magnitude is returned.  Raises
    DomainError when Phi exceeds the turning point of the quadratic model
    and the radicand goes negative.
    """
    crystal = crystal or reference_crystal(T)
    model = model or default_model()
    a1, g_tot = _quadratic_phi_coefficients(T, crystal, model)
    radicand = a1 * a1 - crystal.length_L * g_tot * Phi
    if radicand <= 0.0:
        raise DomainError(
            f"Phi = {Phi:g} beyond the quadratic model turning point "
            f"{a1 * a1 / (crystal.length_L * g_tot):g}")
    return 1.0 / math.sqrt(radicand)
