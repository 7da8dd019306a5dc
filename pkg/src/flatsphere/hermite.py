"""Hermite algebra over the Gaussian weight rho(y) = exp(-y^2/4)/sqrt(4 pi).

Two layers live here. ``ExactPoly`` does ring arithmetic on rational
coefficients, used for identities that must hold exactly. The quadrature
layer (``GaussianWeight``, ``inner_product``, ``project``) works in double
precision and is what the solvers call.

Convention: for a function q, ``q_m = <q, h_m> / (2^m m!)`` so that
``q = sum_m q_m h_m + q_minus`` is a plain orthogonal expansion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import BoundsError, InconsistencyError, NumericFault

M_MAX = 16
M_LOW = 6
QUAD_ORDER = 64

Number = Union[int, Fraction]


class ExactPoly:
    """Polynomial in y with exact rational coefficients (index = power)."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[Number] = ()):
        cs = [Fraction(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        self.coeffs = tuple(cs)

    @classmethod
    def monomial(cls, k: int, c: Number = 1) -> "ExactPoly":
        return cls([0] * k + [c])

    @classmethod
    def y(cls) -> "ExactPoly":
        return cls([0, 1])

    @property
    def degree(self) -> int:
        # zero polynomial has degree -1
        return len(self.coeffs) - 1

    def coeff(self, k: int) -> Fraction:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else Fraction(0)

    def _coerce(self, other) -> "ExactPoly":
        if isinstance(other, ExactPoly):
            return other
        if isinstance(other, (int, Fraction)):
            return ExactPoly([other])
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        n = max(len(self.coeffs), len(other.coeffs))
        return ExactPoly(self.coeff(k) + other.coeff(k) for k in range(n))

    __radd__ = __add__

    def __neg__(self):
        return ExactPoly(-c for c in self.coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if not self.coeffs or not other.coeffs:
            return ExactPoly()
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return ExactPoly(out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = ExactPoly([1])
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return False
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __repr__(self):
        return f"ExactPoly({[str(c) for c in self.coeffs]})"

    def deriv(self) -> "ExactPoly":
        return ExactPoly(k * c for k, c in enumerate(self.coeffs) if k > 0)

    def __call__(self, y):
        """Horner evaluation. Exact for int/Fraction input, float otherwise."""
        if isinstance(y, (int, Fraction)):
            acc = Fraction(0)
            for c in reversed(self.coeffs):
                acc = acc * y + c
            return acc
        y = np.asarray(y, dtype=float)
        acc = np.zeros_like(y)
        for c in reversed(self.coeffs):
            acc = acc * y + float(c)
        return acc

    def to_json(self) -> list:
        # str(Fraction) is "n" or "n/d": exact and human readable
        return [str(c) for c in self.coeffs]

    @classmethod
    def from_json(cls, data: Sequence[str]) -> "ExactPoly":
        return cls(Fraction(c) for c in data)


@lru_cache(maxsize=None)
def _hermite(m: int) -> ExactPoly:
    coeffs = [0] * (m + 1)
    for n in range(m // 2 + 1):
        coeffs[m - 2 * n] = (
            math.factorial(m) // (math.factorial(n) * math.factorial(m - 2 * n)) * (-1) ** n
        )
    return ExactPoly(coeffs)


def hermite_poly(m: int, m_max: int = M_MAX) -> ExactPoly:
    """h_m(y) = sum_n m!/(n!(m-2n)!) (-1)^n y^(m-2n); monic, integer coefficients."""
    if m < 0 or m > m_max:
        raise BoundsError(f"mode {m} outside [0, {m_max}]")
    return _hermite(m)


def hermite_norm_sq(m: int) -> int:
    if m < 0:
        raise BoundsError(f"mode {m} is negative")
    return 2**m * math.factorial(m)


def to_hermite_basis(poly: ExactPoly) -> list:
    """Exact coefficients c_m with poly = sum c_m h_m (top-down elimination)."""
    rest = poly
    out = [Fraction(0)] * (poly.degree + 1)
    for k in range(poly.degree, -1, -1):
        c = rest.coeff(k)
        if c:
            out[k] = c
            rest = rest - _hermite(k) * c
    return out


def from_hermite_basis(coeffs: Sequence[Number]) -> ExactPoly:
    out = ExactPoly()
    for m, c in enumerate(coeffs):
        if c:
            out = out + _hermite(m) * Fraction(c)
    return out


def apply_L(poly: ExactPoly) -> ExactPoly:
    """The operator p'' - y p'/2 + p, exactly."""
    d1 = poly.deriv()
    return d1.deriv() - ExactPoly([0, Fraction(1, 2)]) * d1 + poly


def eigenvalue(m: int) -> float:
    return 1.0 - m / 2.0


class GaussianWeight:
    """Gauss-Hermite rule for rho_d, the d-fold product of exp(-y^2/4)/sqrt(4 pi).

    Nodes for d > 1 form a tensor grid of shape (order**d, d).
    """

    def __init__(self, dimension: int = 1, order: int = QUAD_ORDER):
        if dimension < 1 or order < 1:
            raise ValueError("dimension and order must be positive")
        self.dimension = dimension
        self.order = order
        x, w = np.polynomial.hermite.hermgauss(order)
        # exp(-x^2) -> exp(-y^2/4) via y = 2x; the 1/sqrt(pi) makes weights sum to 1
        self.nodes_1d = 2.0 * x
        self.weights_1d = w / math.sqrt(math.pi)
        if dimension == 1:
            self.nodes = self.nodes_1d
            self.weights = self.weights_1d
        else:
            grids = np.meshgrid(*([self.nodes_1d] * dimension), indexing="ij")
            wgrids = np.meshgrid(*([self.weights_1d] * dimension), indexing="ij")
            self.nodes = np.stack([g.ravel() for g in grids], axis=1)
            self.weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)

    def integrate(self, f: Callable) -> float:
        vals = np.asarray(f(self.nodes), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NumericFault("non-finite samples in quadrature")
        return float(np.dot(self.weights, vals))


@lru_cache(maxsize=8)
def default_weight(order: int = QUAD_ORDER) -> GaussianWeight:
    return GaussianWeight(1, order)


def _sample(f, nodes) -> np.ndarray:
    if isinstance(f, (int, float)):
        return np.full_like(nodes, float(f))
    vals = np.asarray(f(nodes), dtype=float)
    if vals.shape != nodes.shape:
        vals = np.broadcast_to(vals, nodes.shape).astype(float)
    if not np.all(np.isfinite(vals)):
        raise NumericFault("non-finite samples in quadrature")
    return vals


def inner_product(f, g, weight: Optional[GaussianWeight] = None) -> float:
    """Quadrature value of the integral of f g rho_1."""
    weight = weight or default_weight()
    if isinstance(f, ExactPoly) and isinstance(g, ExactPoly):
        need = (f.degree + g.degree) / 2 + 1
        if need > weight.order:
            raise ValueError(f"quadrature order {weight.order} below degree budget {need}")
    return float(np.dot(weight.weights, _sample(f, weight.nodes) * _sample(g, weight.nodes)))


@dataclass(frozen=True)
class SpectralDecomp:
    q_low: tuple
    q_minus_norm: float
    tail: Optional[tuple] = None  # coefficients for m = M_LOW+1 .. m_max
    norm_sq: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "q_low", tuple(float(v) for v in self.q_low))
        if self.tail is not None:
            object.__setattr__(self, "tail", tuple(float(v) for v in self.tail))

    def coefficient(self, m: int) -> float:
        if m <= M_LOW:
            return self.q_low[m]
        if self.tail is None or m - M_LOW - 1 >= len(self.tail):
            raise BoundsError(f"mode {m} not stored")
        return self.tail[m - M_LOW - 1]


@lru_cache(maxsize=32)
def _basis_on(nodes_key: bytes, n: int, m_max: int) -> np.ndarray:
    nodes = np.frombuffer(nodes_key, dtype=float, count=n)
    return np.stack([_hermite(m)(nodes) for m in range(m_max + 1)])


def _decompose_samples(vals, nodes, weights, m_max, tol) -> SpectralDecomp:
    basis = _basis_on(np.ascontiguousarray(nodes).tobytes(), len(nodes), m_max)
    norms = np.array([hermite_norm_sq(m) for m in range(m_max + 1)], dtype=float)
    coeffs = basis @ (weights * vals) / norms
    low = coeffs[: M_LOW + 1]
    norm_sq = float(np.dot(weights, vals * vals))
    radicand = norm_sq - float(np.sum(low**2 * norms[: M_LOW + 1]))
    if radicand < -tol * max(norm_sq, 1e-300):
        raise InconsistencyError(f"negative Parseval remainder {radicand:.3e}")
    # residual norm equals the Parseval value under discrete orthogonality but
    # avoids the cancellation when q_minus is tiny
    resid = vals - low @ basis[: M_LOW + 1]
    q_minus = math.sqrt(float(np.dot(weights, resid * resid)))
    return SpectralDecomp(tuple(low), q_minus, tuple(coeffs[M_LOW + 1 :]), norm_sq)


def project(f, weight: Optional[GaussianWeight] = None, m_max: int = M_MAX,
            tol: float = 1e-9) -> SpectralDecomp:
    """Project an evaluable f onto h_0..h_6, keeping the tail up to m_max."""
    weight = weight or default_weight()
    vals = _sample(f, weight.nodes)
    return _decompose_samples(vals, weight.nodes, weight.weights, m_max, tol)


def grid_weights(y: np.ndarray) -> np.ndarray:
    """Trapezoid weights for rho_1 on a uniform grid.

    For smooth, Gaussian-damped integrands the trapezoid rule converges
    faster than any power of the spacing.
    """
    y = np.asarray(y, dtype=float)
    h = np.diff(y)
    w = np.zeros_like(y)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w * np.exp(-(y**2) / 4) / math.sqrt(4 * math.pi)


def project_samples(y: np.ndarray, values: np.ndarray, m_max: int = M_MAX,
                    tol: float = 1e-9) -> SpectralDecomp:
    """Same as ``project`` for data given on a grid."""
    y = np.asarray(y, dtype=float)
    vals = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericFault("non-finite grid values")
    return _decompose_samples(vals, y, grid_weights(y), m_max, tol)


def weighted_norm(y: np.ndarray, values: np.ndarray) -> float:
    vals = np.asarray(values, dtype=float)
    return math.sqrt(float(np.dot(grid_weights(y), vals * vals)))


def semigroup_step(decomp: SpectralDecomp, ds: float) -> SpectralDecomp:
    """Exact action of exp(ds * L) on a decomposition.

    Modes above the stored tail are only known through their norm; that part
    is scaled by the eigenvalue of the first unstored mode, an upper bound on
    its decay.
    """
    if ds < 0:
        raise ValueError("ds must be nonnegative")
    low = tuple(c * math.exp(eigenvalue(m) * ds) for m, c in enumerate(decomp.q_low))
    if decomp.tail is None:
        raise ValueError("semigroup_step needs tail coefficients")
    first = M_LOW + 1
    tail = tuple(c * math.exp(eigenvalue(first + k) * ds) for k, c in enumerate(decomp.tail))
    stored = sum(c * c * hermite_norm_sq(first + k) for k, c in enumerate(decomp.tail))
    rest = max(0.0, decomp.q_minus_norm**2 - stored)
    beyond = first + len(decomp.tail)
    new_stored = sum(c * c * hermite_norm_sq(first + k) for k, c in enumerate(tail))
    new_rest = rest * math.exp(2 * eigenvalue(beyond) * ds)
    return SpectralDecomp(low, math.sqrt(new_stored + new_rest), tail)


def synthesize(decomp: SpectralDecomp, y: np.ndarray) -> np.ndarray:
    """Evaluate sum q_m h_m over the stored modes."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    coeffs = list(decomp.q_low) + list(decomp.tail or ())
    for m, c in enumerate(coeffs):
        if c:
            out += c * _hermite(m)(y)
    return out
