"""Laguerre-Gaussian mode functions and the coefficient algebra of the
coincidence-amplitude sums.

The collected signal and idler modes are LG beams indexed by a common
azimuthal magnitude l (the collected pair satisfies l_s = -l_i, so only the
magnitude is stored) and radial indices n_s, n_i.  Projecting the two-photon
state onto this pair reduces every amplitude to a double sum over
(m_s, m_i) of coefficient * integral terms; this module supplies the
coefficients:

  alpha  full closed form, waist parametrization
  G      u-dependent factor built from complex beam parameters g = 1 + i f u
  g*     waist-weighted combination of g_p, g_s, g_i entering G
  beta   degenerate approximation, focal parametrization (n_s = n_i only)
  G^d    degenerate u-dependent factor
  zeta   the exact rational index factor common to beta
  h      diagnostic bound for the degenerate replacement of g*

Factorial ratios are assembled in log space with the sign tracked
separately; naive 64-bit factorial products overflow near l + 2n = 20.
"""

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import eval_genlaguerre

from .dispersion import CrystalSpec, DispersionModel, wavenumber

# Above this l or n the u-integrand oscillates hard enough that default
# quadrature settings deserve scrutiny; ModeSpec warns but does not refuse.
INDEX_CAP = 8

_LOG_FACTORIAL = tuple(math.lgamma(i + 1) for i in range(65))


def _log_factorial(n: int) -> float:
    return _LOG_FACTORIAL[n] if n < len(_LOG_FACTORIAL) else math.lgamma(n + 1)


@dataclass(frozen=True)
class ModeSpec:
    """Collected LG mode pair: azimuthal magnitude l and radial indices.

    Only opposite-OAM pairs are collectable (l_s = -l_i = l), so a single
    non-negative l represents the pair and OAM conservation is structural.
    """

    l: int
    n_s: int
    n_i: int

    def __post_init__(self):
        for field in ("l", "n_s", "n_i"):
            v = getattr(self, field)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"{field} must be a non-negative integer, got {v!r}")
        if max(self.l, self.n_s, self.n_i) > INDEX_CAP:
            warnings.warn(
                f"mode indices above {INDEX_CAP} produce strongly oscillatory "
                "u-integrands; raise the quadrature refinement budget",
                stacklevel=2)


@dataclass(frozen=True)
class WaistConfig:
    """Pump, signal, and idler beam waists at the crystal center (metres)."""

    w_p: float
    w_s: float
    w_i: float

    def __post_init__(self):
        for field in ("w_p", "w_s", "w_i"):
            if not getattr(self, field) > 0:
                raise ValueError(f"{field} must be positive")

    @property
    def big_w(self) -> float:
        """The symmetric waist polynomial W = wp2 ws2 + wp2 wi2 + ws2 wi2."""
        return (self.w_p**2 * self.w_s**2 + self.w_p**2 * self.w_i**2
                + self.w_s**2 * self.w_i**2)


@dataclass(frozen=True)
class FocalConfig:
    """Dimensionless focal parameters f_k = L/(k_k w_k^2).

    f_si_d is the common signal/idler focal parameter evaluated at the
    degenerate wave number k_d = k(omega_p / 2).
    """

    f_p: float
    f_si_d: float

    def __post_init__(self):
        if not self.f_p > 0:
            raise ValueError("f_p must be positive")
        if not self.f_si_d > 0:
            raise ValueError("f_si_d must be positive")


@dataclass(frozen=True)
class ComplexBeamParam:
    """g = 1 + i f u along the normalized crystal coordinate u in [-1, 1]."""

    value: complex
    f: float
    u: float

    def __post_init__(self):
        if not -1.0 <= self.u <= 1.0:
            raise ValueError(f"u = {self.u} outside [-1, 1]")
        if self.value.real != 1.0 or self.value.imag != self.f * self.u:
            raise ValueError("value inconsistent with g = 1 + i f u")


def beam_param(f: float, u: float) -> ComplexBeamParam:
    return ComplexBeamParam(complex(1.0, f * u), f, u)


def assoc_laguerre(n: int, alpha: int, x) -> float:
    """Associated Laguerre polynomial L_n^alpha(x) by stable recurrence."""
    if not (isinstance(n, (int, np.integer)) and n >= 0):
        raise ValueError("n must be a non-negative integer")
    if not (isinstance(alpha, (int, np.integer)) and alpha >= 0):
        raise ValueError("alpha must be a non-negative integer")
    out = eval_genlaguerre(int(n), int(alpha), x)
    return float(out) if np.isscalar(x) else out


def lg_amplitude_x(n: int, l: int, w: float, r, z, k: float):
    """Radial LG amplitude at axial position z inside the crystal.

    Carries the Gouy factor (g*/g)^n, the (sqrt(2)/(g w))^(l+1) envelope,
    and the r^l Laguerre polynomial part; normalized so the transverse
    intensity integrates to one at any z.  r may be an ndarray.
    """
    if not w > 0:
        raise ValueError("w must be positive")
    g = 1.0 + 2.0j * np.asarray(z) / (k * w * w)
    norm = math.exp(0.5 * (_log_factorial(n) - _log_factorial(n + l)) - 0.5 * math.log(math.pi))
    rr = np.asarray(r)
    amp = (norm * (np.conj(g) / g) ** n * np.exp(-rr**2 / (g * w * w))
           * (math.sqrt(2.0) / (g * w)) ** (l + 1) * rr**l
           * eval_genlaguerre(n, l, 2.0 * rr**2 / (w * w * np.abs(g) ** 2)))
    return complex(amp) if np.isscalar(r) and np.isscalar(z) else amp


def _check_summation_indices(mode: ModeSpec, m_s: int, m_i: int):
    if not 0 <= m_s <= mode.n_s:
        raise ValueError(f"m_s = {m_s} outside [0, n_s = {mode.n_s}]")
    if not 0 <= m_i <= mode.n_i:
        raise ValueError(f"m_i = {m_i} outside [0, n_i = {mode.n_i}]")


def alpha_coeff(mode: ModeSpec, m_s: int, m_i: int, waists: WaistConfig,
                crystal: CrystalSpec) -> float:
    """Waist-parametrized coefficient of the (m_s, m_i) term of the full sum.

    Note the crossed waist exponents: w_s carries 2 m_i and w_i carries
    2 m_s.  Assembled in log space; the sign is (-1)^(m_s + m_i).
    """
    _check_summation_indices(mode, m_s, m_i)
    l, n_s, n_i = mode.l, mode.n_s, mode.n_i
    log_fact = (0.5 * (_log_factorial(n_s) + _log_factorial(n_i)
                       + _log_factorial(n_s + l) + _log_factorial(n_i + l))
                + _log_factorial(l + m_s + m_i)
                - _log_factorial(n_s - m_s) - _log_factorial(l + m_s) - _log_factorial(m_s)
                - _log_factorial(n_i - m_i) - _log_factorial(l + m_i) - _log_factorial(m_i))
    log_mag = (math.log(crystal.length_L)
               + (l + m_s + m_i - 1.5) * math.log(2.0)
               - 2.5 * math.log(math.pi)
               + log_fact
               + (2 * m_s + 2 * m_i + 2 * l + 1) * math.log(waists.w_p)
               + (2 * m_i + l + 1) * math.log(waists.w_s)
               + (2 * m_s + l + 1) * math.log(waists.w_i)
               - (m_s + m_i + l + 1) * math.log(waists.big_w))
    sign = -1.0 if (m_s + m_i) % 2 else 1.0
    return sign * math.exp(log_mag)


def g_star_values(g_p, g_s, g_i, waists: WaistConfig):
    """g*(g_p, g_s, g_i) on raw complex values (scalar or ndarray)."""
    wp2, ws2, wi2 = waists.w_p**2, waists.w_s**2, waists.w_i**2
    return (wp2 * ws2 * g_p * np.conj(g_s) + wp2 * wi2 * g_p * np.conj(g_i)
            + ws2 * wi2 * np.conj(g_s) * np.conj(g_i)) / waists.big_w


def g_star(g_p: ComplexBeamParam, g_s: ComplexBeamParam, g_i: ComplexBeamParam,
           waists: WaistConfig) -> complex:
    """Waist-weighted combination of the three beam parameters.

    The three inputs must sit at the same u; the result factors as
    (1 + i f1 u)(1 + i f2 u) with f1 f2 fixed by the wave numbers.
    """
    if not (g_p.u == g_s.u == g_i.u):
        raise ValueError(f"mismatched u: {g_p.u}, {g_s.u}, {g_i.u}")
    return complex(g_star_values(g_p.value, g_s.value, g_i.value, waists))


def g_term_values(mode: ModeSpec, m_s: int, m_i: int, g_p, g_s, g_i, g_st):
    """u-dependent factor of the (m_s, m_i) term on raw complex values.

    The conjugate exponents are crossed like the alpha waist powers:
    conj(g_s) carries n_s - m_i and conj(g_i) carries n_i - m_s.
    """
    l, n_s, n_i = mode.l, mode.n_s, mode.n_i
    return (g_p ** (m_s + m_i + l) * g_s ** (n_s - m_s) * g_i ** (n_i - m_i)
            / (np.conj(g_s) ** (n_s - m_i) * np.conj(g_i) ** (n_i - m_s)
               * g_st ** (m_s + m_i + l + 1)))


def G_term(mode: ModeSpec, m_s: int, m_i: int, g_p: ComplexBeamParam,
           g_s: ComplexBeamParam, g_i: ComplexBeamParam,
           waists: WaistConfig) -> complex:
    _check_summation_indices(mode, m_s, m_i)
    g_st = g_star(g_p, g_s, g_i, waists)
    return complex(g_term_values(mode, m_s, m_i, g_p.value, g_s.value,
                                 g_i.value, g_st))


def gd_term_values(mode: ModeSpec, m_s: int, m_i: int, g_p, g_d):
    """Degenerate u-dependent factor on raw complex values (n_s = n_i)."""
    l, n_si = mode.l, mode.n_s
    return (g_p ** (m_s + m_i + l) * g_d ** (2 * n_si - m_s - m_i)
            / np.conj(g_d) ** (2 * n_si + l + 1))


def Gd_term(mode: ModeSpec, m_s: int, m_i: int, g_p: ComplexBeamParam,
            g_d: ComplexBeamParam) -> complex:
    """Degenerate replacement of G: g_s, g_i, and g* all collapse to g_d."""
    if mode.n_s != mode.n_i:
        raise ValueError("degenerate factor requires n_s == n_i")
    _check_summation_indices(mode, m_s, m_i)
    if g_p.u != g_d.u:
        raise ValueError(f"mismatched u: {g_p.u}, {g_d.u}")
    return complex(gd_term_values(mode, m_s, m_i, g_p.value, g_d.value))


def zeta_coeff(l: int, n_si: int, m_s: int, m_i: int) -> float:
    """Exact rational index factor of the degenerate coefficient.

    Computed with integer factorials and a Fraction, then converted, so the
    value is the correctly rounded rational for any indices.
    """
    if not 0 <= m_s <= n_si:
        raise ValueError(f"m_s = {m_s} outside [0, n_si = {n_si}]")
    if not 0 <= m_i <= n_si:
        raise ValueError(f"m_i = {m_i} outside [0, n_si = {n_si}]")
    if l < 0:
        raise ValueError("l must be non-negative")
    num = (math.factorial(n_si) * math.factorial(n_si + l)
           * math.factorial(l + m_s + m_i))
    den = (math.factorial(n_si - m_s) * math.factorial(l + m_s) * math.factorial(m_s)
           * math.factorial(n_si - m_i) * math.factorial(l + m_i) * math.factorial(m_i))
    value = float(Fraction(num, den))
    return -value if (m_s + m_i) % 2 else value


def beta_prefactor(l: int, m_sum: int, focal: FocalConfig, crystal: CrystalSpec,
                   model: DispersionModel | None = None,
                   T: float | None = None) -> float:
    """Positive prefactor multiplying zeta in the degenerate coefficient."""
    T = crystal.temperature_T if T is None else T
    k_p = wavenumber(crystal.pump_angular_frequency, T, model)
    return (math.sqrt(crystal.length_L * k_p) / (2.0 * math.pi) ** 2.5
            * math.sqrt(focal.f_p)
            / (1.0 + focal.f_p / focal.f_si_d) ** (m_sum + l + 1))


def beta_coeff(mode: ModeSpec, m_s: int, m_i: int, focal: FocalConfig,
               crystal: CrystalSpec, model: DispersionModel | None = None,
               T: float | None = None) -> float:
    """Focal-parametrized coefficient of the degenerate sum (n_s = n_i)."""
    if mode.n_s != mode.n_i:
        raise ValueError("degenerate coefficients require n_s == n_i")
    _check_summation_indices(mode, m_s, m_i)
    pref = beta_prefactor(mode.l, m_s + m_i, focal, crystal, model, T)
    return pref * zeta_coeff(mode.l, mode.n_s, m_s, m_i)


def h_bound(k_p: float, k_d: float, gamma: float) -> float:
    """Diagnostic ratio h(k_p, k_d, gamma) controlling the degenerate
    replacement of g*; decreases monotonically from 1 + delta_k/k_p at
    gamma = 0 toward 1, and stays below (1 + dk/kd)/(1 + dk/(2 kd))."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    g2 = gamma * gamma
    return 2.0 * (k_p * (1.0 + g2) - k_d) / (k_p * (1.0 + 2.0 * g2))


def waists_from_focal(focal: FocalConfig, crystal: CrystalSpec,
                      model: DispersionModel | None = None,
                      T: float | None = None) -> WaistConfig:
    """Reconstruct physical waists: w_si = sqrt(L/(k_d f_si_d)) at the
    degenerate wave number, w_p = sqrt(L/(k_p f_p))."""
    T = crystal.temperature_T if T is None else T
    omega_p = crystal.pump_angular_frequency
    k_p = wavenumber(omega_p, T, model)
    k_d = wavenumber(omega_p / 2.0, T, model)
    w_p = math.sqrt(crystal.length_L / (k_p * focal.f_p))
    w_si = math.sqrt(crystal.length_L / (k_d * focal.f_si_d))
    return WaistConfig(w_p, w_si, w_si)


def focal_from_waists(waists: WaistConfig, crystal: CrystalSpec,
                      model: DispersionModel | None = None,
                      T: float | None = None) -> FocalConfig:
    """Inverse of waists_from_focal; requires w_s == w_i."""
    if waists.w_s != waists.w_i:
        raise ValueError("degenerate focal parameters require w_s == w_i")
    T = crystal.temperature_T if T is None else T
    omega_p = crystal.pump_angular_frequency
    k_p = wavenumber(omega_p, T, model)
    k_d = wavenumber(omega_p / 2.0, T, model)
    return FocalConfig(crystal.length_L / (k_p * waists.w_p**2),
                       crystal.length_L / (k_d * waists.w_s**2))
