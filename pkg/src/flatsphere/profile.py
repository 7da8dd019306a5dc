"""Closed-form flat profile and its structural functions.

With a = (p-1) e^{-s} / kappa and beta = 1/(p-1) the profile reads

    phi = kappa * (E / Dh)^beta,   E = 1 + 12 a (y^2 - 1),   Dh = 1 + a y^4.

Everything below is written in terms of E and Dh so that the quantities
which vanish as s grows (phi - kappa, V, R) are evaluated without
subtracting nearly equal numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .errors import DomainError
from .hermite import ExactPoly, hermite_poly


def kappa_of(p: float) -> float:
    if not p > 1:
        raise DomainError(f"p must exceed 1, got {p}")
    return (p - 1.0) ** (-1.0 / (p - 1.0))


@dataclass(frozen=True)
class ModelParams:
    p: float = 2.0
    d: int = 2
    r0: float = 1.0
    eps0: float = 0.25
    A: float = 1.0
    eta0: float = 1.0
    s0: float = 10.0

    def __post_init__(self):
        if not self.p > 1:
            raise DomainError(f"p must exceed 1, got {self.p}")
        if int(self.d) != self.d or self.d < 2:
            raise DomainError(f"d must be an integer >= 2, got {self.d}")
        if (self.d - 2) * self.p > self.d + 2:
            raise DomainError(f"(d-2)p <= d+2 violated for p={self.p}, d={self.d}")
        if not self.r0 > 0:
            raise DomainError("r0 must be positive")
        if not 0 < self.eps0 < 1:
            raise DomainError("eps0 must lie in (0, 1)")
        if not self.A >= 1:
            raise DomainError("A must be >= 1")
        if not 0 < self.eta0 <= 1:
            raise DomainError("eta0 must lie in (0, 1]")

    @property
    def kappa(self) -> float:
        return kappa_of(self.p)

    @property
    def beta(self) -> float:
        return 1.0 / (self.p - 1.0)

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


def correction_poly(params: ModelParams):
    """P(y) * kappa / (p-1), which is the exact polynomial y^4 - h_4 = 12y^2 - 12."""
    return ExactPoly.monomial(4) - hermite_poly(4)


def s_half(params: ModelParams) -> float:
    """Log-time from which 1 + e^{-s} P(y) >= 1/2 for every y."""
    return math.log(24 * (params.p - 1) / params.kappa)


def _a(s, params):
    return (params.p - 1) * np.exp(-np.asarray(s, dtype=float)) / params.kappa


def _factors(y, s, params, check=True):
    y = np.asarray(y, dtype=float)
    a = _a(s, params)
    y2 = y * y
    E = 1 + 12 * a * (y2 - 1)
    Dh = 1 + a * y2 * y2
    if check and np.any(E <= 0):
        idx = np.unravel_index(np.argmin(E), np.shape(E)) if np.ndim(E) else ()
        yy = np.broadcast_to(y, np.shape(E))[idx] if np.ndim(E) else float(y)
        ss = np.broadcast_to(np.asarray(s, float), np.shape(E))[idx] if np.ndim(E) else float(s)
        raise DomainError(f"profile numerator nonpositive at y={float(yy):.6g}, s={float(ss):.6g}")
    return y, a, E, Dh


def phi(y, s, params: ModelParams):
    _, _, E, Dh = _factors(y, s, params)
    return params.kappa * (E / Dh) ** params.beta


def phi_minus_kappa(y, s, params: ModelParams):
    y, a, E, Dh = _factors(y, s, params)
    h4 = y**4 - 12 * y**2 + 12
    # E - Dh = -a h4
    return params.kappa * np.expm1(params.beta * np.log1p(-a * h4 / Dh))


def phi_derivatives(y, s, params: ModelParams):
    """Return (phi, d_y phi, d_yy phi, d_s phi) from logarithmic differentiation."""
    y, a, E, Dh = _factors(y, s, params)
    b = params.beta
    Ey, Eyy = 24 * a * y, 24 * a
    Dy, Dyy = 4 * a * y**3, 12 * a * y**2
    f = params.kappa * (E / Dh) ** b
    Ly = b * (Ey / E - Dy / Dh)
    Lyy = b * (Eyy / E - (Ey / E) ** 2 - Dyy / Dh + (Dy / Dh) ** 2)
    h4 = y**4 - 12 * y**2 + 12
    Ls = b * a * h4 / (E * Dh)
    return f, f * Ly, f * (Lyy + Ly * Ly), f * Ls


def dphi_dy(y, s, params):
    return phi_derivatives(y, s, params)[1]


def dphi_ds(y, s, params):
    return phi_derivatives(y, s, params)[3]


def phi_uncorrected(y, s, params: ModelParams):
    """(p-1 + e^{-s} y^4)^{-1/(p-1)}, kept for comparison only."""
    y = np.asarray(y, dtype=float)
    return (params.p - 1 + np.exp(-s) * y**4) ** (-params.beta)


def f_profile(z, params: ModelParams):
    z = np.asarray(z, dtype=float)
    p = params.p
    return (p - 1 + (p - 1) ** 2 * z**4 / params.kappa) ** (-params.beta)


def u_star(xi, params: ModelParams):
    xi = np.asarray(xi, dtype=float)
    if np.any(xi == 0):
        raise DomainError("u_star is singular at xi = 0")
    p = params.p
    return ((p - 1) ** 2 * xi**4 / params.kappa) ** (-params.beta)


def heteroclinic_psi(s, params: ModelParams):
    s = np.asarray(s, dtype=float)
    return params.kappa * np.exp(-params.beta * np.logaddexp(0.0, s))


def heteroclinic_psi_prime(s, params: ModelParams):
    s = np.asarray(s, dtype=float)
    return -params.beta * heteroclinic_psi(s, params) * expit(s)


# smooth step built from g(t) = exp(-1/t): step(t) = g(t) / (g(t) + g(1-t))
# written as a logistic of k(t) = 1/(1-t) - 1/t, which avoids overflow
def _smooth_step(t):
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1, 1.0, 0.0)
    mid = (t > 0) & (t < 1)
    tm = np.where(mid, t, 0.5)
    k = 1 / (1 - tm) - 1 / tm
    return np.where(mid, expit(k), out)


def _smooth_step_derivs(t):
    t = np.asarray(t, dtype=float)
    mid = (t > 0) & (t < 1)
    tm = np.where(mid, t, 0.5)
    k = 1 / (1 - tm) - 1 / tm
    k1 = 1 / (1 - tm) ** 2 + 1 / tm**2
    k2 = 2 / (1 - tm) ** 3 - 2 / tm**3
    sg = expit(k)
    sw = sg * expit(-k)
    d1 = np.where(mid, sw * k1, 0.0)
    d2 = np.where(mid, sw * (1 - 2 * sg) * k1 * k1 + sw * k2, 0.0)
    return d1, d2


def cutoff_chi(xi):
    """0 for xi <= 1/8, 1 for xi >= 1/4."""
    return _smooth_step((np.asarray(xi, dtype=float) - 0.125) / 0.125)


def cutoff_chi_derivs(xi):
    """(chi, chi', chi'') with respect to xi."""
    t = (np.asarray(xi, dtype=float) - 0.125) / 0.125
    d1, d2 = _smooth_step_derivs(t)
    return _smooth_step(t), d1 / 0.125, d2 / 0.125**2


def cutoff_chibar(xi):
    """1 for xi <= 3/8, 0 for xi >= 3/4."""
    return 1.0 - _smooth_step((np.asarray(xi, dtype=float) - 0.375) / 0.375)


def cutoff_chibar_derivs(xi):
    t = (np.asarray(xi, dtype=float) - 0.375) / 0.375
    d1, d2 = _smooth_step_derivs(t)
    return 1.0 - _smooth_step(t), -d1 / 0.375, -d2 / 0.375**2


def potential_V(y, s, params: ModelParams):
    """p phi^{p-1} - p/(p-1) = -p beta a h4 / Dh."""
    y, a, E, Dh = _factors(y, s, params)
    h4 = y**4 - 12 * y**2 + 12
    return -params.p * params.beta * a * h4 / Dh


# ---- remainder -----------------------------------------------------------
# Multiply R / (phi beta) by E^2 Dh^2. The result is a polynomial in (y, a)
# whose terms of order a^0 and a^1 cancel identically, so
#     R = phi * beta * a^2 * (S(y, a) + beta * S2(y, a)) / (E^2 Dh^2).
# The polynomials in a are stored as lists of ExactPoly in y.

def _pa_mul(f, g):
    out = [ExactPoly() for _ in range(len(f) + len(g) - 1)]
    for i, fi in enumerate(f):
        for j, gj in enumerate(g):
            out[i + j] = out[i + j] + fi * gj
    return out


def _pa_add(*terms):
    n = max(len(t) for t in terms)
    out = [ExactPoly() for _ in range(n)]
    for t in terms:
        for i, c in enumerate(t):
            out[i] = out[i] + c
    return out


def _pa_scale(f, c):
    return [fi * c for fi in f]


@lru_cache(maxsize=1)
def remainder_polynomials():
    Y = ExactPoly.y()
    h4 = hermite_poly(4)
    eps = ExactPoly([-12, 0, 12])
    delta = Y**4
    E = [ExactPoly([1]), eps]
    D = [ExactPoly([1]), delta]
    # derivatives carry one explicit power of a
    e1, e2 = ExactPoly([0, 24]), ExactPoly([24])
    d1, d2 = ExactPoly([0, 0, 0, 4]), ExactPoly([0, 0, 12])
    a = [ExactPoly(), ExactPoly([1])]
    Ey, Eyy, Dy, Dyy = [_pa_mul(a, [c]) for c in (e1, e2, d1, d2)]
    T1 = _pa_add(
        _pa_mul(_pa_add(_pa_mul(Eyy, E), _pa_scale(_pa_mul(Ey, Ey), -1)), _pa_mul(D, D)),
        _pa_scale(_pa_mul(_pa_add(_pa_mul(Dyy, D), _pa_scale(_pa_mul(Dy, Dy), -1)), _pa_mul(E, E)), -1),
    )
    W = _pa_add(_pa_mul(Ey, D), _pa_scale(_pa_mul(Dy, E), -1))
    T2 = _pa_mul(W, W)
    T3 = _pa_mul(_pa_mul(_pa_scale(W, ExactPoly([0, Fraction(-1, 2)])), E), D)
    T4 = _pa_mul(_pa_mul(_pa_mul(_pa_scale(a, -h4), E), D), _pa_add(E, [ExactPoly([1])]))
    main = _pa_add(T1, T3, T4)
    for k in (0, 1):
        if main[k] != ExactPoly() or T2[k] != ExactPoly():
            raise AssertionError("low-order remainder terms failed to cancel")
    return tuple(main[2:]), tuple(T2[2:])


def remainder_R(y, s, params: ModelParams):
    """d_yy phi - y d_y phi / 2 - phi/(p-1) + phi^p - d_s phi, cancellation-free."""
    y, a, E, Dh = _factors(y, s, params)
    main, sq = remainder_polynomials()
    acc = 0.0
    for k in range(max(len(main), len(sq)) - 1, -1, -1):
        term = 0.0
        if k < len(main):
            term = term + main[k](y)
        if k < len(sq):
            term = term + params.beta * sq[k](y)
        acc = acc * a + term
    f = params.kappa * (E / Dh) ** params.beta
    return f * params.beta * a * a * acc / (E * E * Dh * Dh)


def remainder_R_direct(y, s, params: ModelParams):
    """Same quantity assembled term by term; loses precision for large s."""
    f, fy, fyy, fs = phi_derivatives(y, s, params)
    y = np.asarray(y, dtype=float)
    return fyy - 0.5 * y * fy - f / (params.p - 1) + f**params.p - fs


class RemainderOnGrid:
    """Precomputed remainder polynomials on a fixed grid, for repeated evaluation."""

    def __init__(self, y, params: ModelParams):
        self.y = np.asarray(y, dtype=float)
        self.params = params
        main, sq = remainder_polynomials()
        n = max(len(main), len(sq))
        rows = []
        for k in range(n):
            row = np.zeros_like(self.y)
            if k < len(main):
                row = row + main[k](self.y)
            if k < len(sq):
                row = row + params.beta * sq[k](self.y)
            rows.append(row)
        self.rows = rows

    def __call__(self, s, E=None, Dh=None, phi_vals=None):
        params = self.params
        a = float(_a(s, params))
        if E is None:
            _, _, E, Dh = _factors(self.y, s, params)
        acc = np.zeros_like(self.y)
        for row in reversed(self.rows):
            acc = acc * a + row
        f = phi_vals if phi_vals is not None else params.kappa * (E / Dh) ** params.beta
        return f * params.beta * a * a * acc / (E * E * Dh * Dh)
