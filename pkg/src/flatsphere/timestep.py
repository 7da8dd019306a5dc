"""Dormand-Prince 5(4) with a PI step controller.

Written out by hand rather than using scipy.integrate so that the caller
controls step caps (diffusion and reaction limits), exact landing on
snapshot times, and the step/rejection counters that go into run metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BlowUpProximity, NumericFault

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    rhs_calls: int = 0
    min_dt: float = math.inf
    max_dt: float = 0.0

    def as_dict(self):
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rhs_calls": self.rhs_calls,
            "min_dt": self.min_dt if self.accepted else None,
            "max_dt": self.max_dt,
        }


class DormandPrince:
    """Adaptive explicit integrator for u' = rhs(t, u).

    ``dt_cap(t, u)`` bounds each attempted step. ``advance`` stops exactly at
    ``t_end``; the optional ``stop(t, u)`` callback is checked after each
    accepted step.
    """

    def __init__(self, rhs: Callable, rtol: float = 1e-8, atol: float = 1e-12,
                 dt_cap: Optional[Callable] = None, dt_floor: float = 1e-300,
                 safety: float = 0.9):
        self.rhs = rhs
        self.rtol = rtol
        self.atol = atol
        self.dt_cap = dt_cap
        self.dt_floor = dt_floor
        self.safety = safety
        self.stats = StepStats()
        self.dt = None
        self._k1 = None
        self._last_t = None
        self._last_u = None
        self._err_prev = 1e-4

    def _call(self, t, u):
        self.stats.rhs_calls += 1
        return self.rhs(t, u)

    def _attempt(self, t, u, dt, k1):
        ks = [k1]
        for i in range(1, 7):
            acc = u.copy()
            for j, aij in enumerate(_A[i]):
                if aij:
                    acc += (dt * aij) * ks[j]
            ks.append(self._call(t + _C[i] * dt, acc))
        # row 6 of A equals B5, so the 7th stage argument is the 5th-order solution
        u_new = acc
        err_vec = dt * sum(e * k for e, k in zip(_E, ks) if e)
        scale = self.atol + self.rtol * np.maximum(np.abs(u), np.abs(u_new))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
        return u_new, ks[6], err

    def advance(self, t, u, t_end, stop: Optional[Callable] = None):
        """Integrate from t to t_end. Returns (t, u, stopped_early)."""
        u = np.array(u, dtype=float)
        fresh = (self._k1 is None or self._last_t != t
                 or self._last_u.shape != u.shape or not np.array_equal(self._last_u, u))
        if fresh:
            self._k1 = self._call(t, u)
            if not np.all(np.isfinite(self._k1)):
                raise NumericFault(f"non-finite right-hand side at t={t:.17g}")
        k1 = self._k1
        if self.dt is None:
            self.dt = 1e-3 * max(abs(t_end - t), 1e-12)
        while t < t_end:
            dt = min(self.dt, t_end - t)
            if self.dt_cap is not None:
                dt = min(dt, self.dt_cap(t, u))
            landing = dt >= t_end - t
            while True:
                if dt < self.dt_floor or not math.isfinite(dt):
                    raise BlowUpProximity(f"step size {dt:.3e} below floor at t={t:.17g}")
                u_new, k_last, err = self._attempt(t, u, dt, k1)
                if not np.all(np.isfinite(u_new)):
                    err = math.inf
                if err <= 1.0:
                    break
                self.stats.rejected += 1
                fac = 0.2 if not math.isfinite(err) else max(0.2, self.safety * err ** (-0.2))
                dt *= fac
                landing = False
            self.stats.accepted += 1
            self.stats.min_dt = min(self.stats.min_dt, dt)
            self.stats.max_dt = max(self.stats.max_dt, dt)
            t = t_end if landing else t + dt
            u = u_new
            k1 = k_last
            if not np.all(np.isfinite(k1)):
                raise NumericFault(f"non-finite right-hand side at t={t:.17g}")
            # PI controller (Gustafsson); errors clipped to avoid zero division
            e = max(err, 1e-10)
            fac = self.safety * e ** (-0.7 / 5) * self._err_prev ** (0.4 / 5)
            fac = min(5.0, max(0.2, fac))
            self._err_prev = e
            if not landing:
                self.dt = dt * fac
            elif fac < 1:
                self.dt = min(self.dt, dt * fac)
            if stop is not None and stop(t, u):
                self._remember(t, u, k1)
                return t, u, True
        self._remember(t, u, k1)
        return t, u, False

    def _remember(self, t, u, k1):
        self._k1, self._last_t, self._last_u = k1, t, u

    def reset_derivative(self):
        """Forget the cached first stage (needed after the state is edited)."""
        self._k1 = None
