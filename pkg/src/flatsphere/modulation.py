"""Decomposition around phi, shrinking-set monitoring and exit classification.

Also holds the region diagnostics away from the sphere: the G1 region
labels, the rescaled field W_{x0}, and fits to the heteroclinic orbit psi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import least_squares

from .errors import FrameError, InsufficientData, NotInBasin
from .hermite import SpectralDecomp, default_weight, project, project_samples
from .profile import ModelParams, heteroclinic_psi, phi, remainder_R

COMPONENTS = (0, 1, 2, 3, 4, 5, 6, "tail", "sup", "regular")


@dataclass(frozen=True)
class ShrinkingSetParams:
    """Envelopes of the shrinking set.

    Modes 0..5: A e^{-2s}. Mode 6: A^a6 s^b6 e^{-2s}. Tail norm:
    A^at s^bt e^{-3s}. The defaults are a6=1, b6=2, at=2, bt=2.
    """

    A: float = 1.0
    q6_A_power: float = 1.0
    q6_s_power: float = 2.0
    tail_A_power: float = 2.0
    tail_s_power: float = 2.0
    sup_factor: float = 2.0
    eta0: float = 1.0

    def envelope(self, comp, s: float) -> float:
        if comp == 6:
            return self.A**self.q6_A_power * s**self.q6_s_power * math.exp(-2 * s)
        if comp == "tail":
            return self.A**self.tail_A_power * s**self.tail_s_power * math.exp(-3 * s)
        if isinstance(comp, int) and 0 <= comp <= 5:
            return self.A * math.exp(-2 * s)
        raise KeyError(comp)

    def envelope_rate(self, comp, s: float) -> float:
        """d/ds of the envelope."""
        env = self.envelope(comp, s)
        if comp == 6:
            return env * (self.q6_s_power / s - 2)
        if comp == "tail":
            return env * (self.tail_s_power / s - 3)
        return -2 * env


@dataclass(frozen=True)
class MembershipReport:
    in_set: bool
    margins: dict
    exit: Optional[tuple] = None  # (component, sign)

    def as_record(self, s):
        return {"s": s, "in_set": self.in_set,
                "exit": list(self.exit) if self.exit else None,
                "margins": {str(k): v for k, v in self.margins.items()}}


def decompose(frame, params: ModelParams) -> SpectralDecomp:
    """Project q = values - phi(., s) onto the Hermite modes."""
    if frame.deviation is not None:
        q = frame.deviation
    else:
        q = frame.values - phi(frame.y, frame.s, params)
    return project_samples(frame.y, q)


def check_membership(decomp: SpectralDecomp, frame, s: float, set_params: ShrinkingSetParams,
                     params: Optional[ModelParams] = None,
                     inner_sup: Optional[float] = None) -> MembershipReport:
    """Compare every monitored quantity with its envelope.

    The exit is the component with the largest margin above 1; ties go to
    the component listed first in COMPONENTS.
    """
    margins = {}
    signs = {}
    for i in range(7):
        v = decomp.q_low[i]
        margins[i] = abs(v) / set_params.envelope(i, s)
        signs[i] = 1 if v >= 0 else -1
    margins["tail"] = decomp.q_minus_norm / set_params.envelope("tail", s)
    signs["tail"] = 1
    if frame is not None:
        kappa = params.kappa if params is not None else 1.0
        margins["sup"] = float(np.max(np.abs(frame.values))) / (set_params.sup_factor * kappa)
        signs["sup"] = 1
    if inner_sup is not None:
        margins["regular"] = inner_sup / set_params.eta0
        signs["regular"] = 1
    worst = None
    for comp in COMPONENTS:
        if comp in margins and margins[comp] > 1:
            if worst is None or margins[comp] > margins[worst]:
                worst = comp
    ex = (worst, signs[worst]) if worst is not None else None
    return MembershipReport(worst is None, margins, ex)


def _component_value(decomp: SpectralDecomp, comp):
    if comp == "tail":
        return decomp.q_minus_norm
    return decomp.q_low[comp]


def exit_flow_direction(window: Sequence, exit: tuple, set_params: ShrinkingSetParams,
                        s1: Optional[float] = None, noise_rel: float = 1e-6) -> dict:
    """Classify a boundary crossing as outward, inward or ambiguous.

    ``window`` holds (s, value) pairs, value being a SpectralDecomp or the
    scalar component itself. The derivative at s1 comes from the quadratic
    through the three samples closest to s1. Growth rates are compared in
    logarithmic form, theta q'/|q| against env'/env, which is the same test
    as theta q' > env' at an exact crossing |q| = env.
    """
    if len(window) < 3:
        raise InsufficientData("need at least 3 samples around the exit")
    comp, theta = exit
    s_arr = np.array([w[0] for w in window], dtype=float)
    vals = np.array([w[1] if np.isscalar(w[1]) else _component_value(w[1], comp)
                     for w in window], dtype=float)
    s1 = float(s_arr[-1]) if s1 is None else s1
    idx = np.argsort(np.abs(s_arr - s1), kind="stable")[:3]
    coef = np.polyfit(s_arr[idx] - s1, vals[idx], 2)
    value, slope = coef[2], coef[1]
    if value == 0:
        raise InsufficientData("component vanishes at s1")
    lhs = theta * slope / abs(value)
    rhs = set_params.envelope_rate(comp, s1) / set_params.envelope(comp, s1)
    diff = lhs - rhs
    floor = noise_rel * max(abs(rhs), abs(lhs))
    label = "ambiguous" if abs(diff) <= floor else ("outward" if diff > 0 else "inward")
    return {"label": label, "component": comp, "theta": theta, "s1": s1,
            "flow_rate": lhs, "envelope_rate": rhs, "difference": diff}


def decompose_trajectory(traj, params: ModelParams):
    return [(f.s, decompose(f, params)) for f in traj.snapshots]


def remainder_projection(s: float, params: ModelParams) -> SpectralDecomp:
    return project(lambda y: remainder_R(y, s, params))


def verify_modulation_odes(series, params: ModelParams, include_remainder: bool = True,
                           delta: float = 0.25,
                           set_params: Optional[ShrinkingSetParams] = None) -> dict:
    """Residuals r_i = q_i' - (1 - i/2) q_i - P_i(R) along a series.

    ``series`` is a trajectory or a list of (s, SpectralDecomp).
    """
    if hasattr(series, "snapshots"):
        series = decompose_trajectory(series, params)
    if len(series) < 3:
        raise InsufficientData("need at least 3 samples")
    s = np.array([x[0] for x in series])
    q = np.array([x[1].q_low for x in series])
    dq = np.gradient(q, s, axis=0, edge_order=2)
    pr = np.zeros_like(q)
    if include_remainder:
        pr = np.array([remainder_projection(si, params).q_low for si in s])
    lam = 1 - np.arange(7) / 2
    resid = dq - lam * q - pr
    scale = np.exp((3 - delta) * s) / s
    flagged = False
    if set_params is not None:
        flagged = any(not check_membership(d, None, si, set_params).in_set for si, d in series)
    return {
        "s": s.tolist(),
        "residuals": resid.tolist(),
        "sup_abs": np.max(np.abs(resid), axis=0).tolist(),
        "scaled_sup": np.max(np.abs(resid) * scale[:, None], axis=0).tolist(),
        "membership_violated": flagged,
    }


# ---- regions and W_{x0} ---------------------------------------------------

@dataclass(frozen=True)
class RegionParams:
    M: float = 1.0
    m: float = 0.5
    s0: float = 10.0

    def __post_init__(self):
        if not (0 < self.m < 1 <= self.M):
            raise ValueError("need 0 < m < 1 <= M")


def g1(x0_norm: float, params: ModelParams) -> float:
    return (params.p - 1) / params.kappa * (x0_norm - params.r0) ** 4


def region_classify(x0_norm: float, region: RegionParams, params: ModelParams,
                    rel_tol: float = 1e-12) -> str:
    """'R1' far from the sphere, 'R3' close to it, 'R2' (closed) in between."""
    if x0_norm < 0:
        raise ValueError("x0_norm must be nonnegative")
    g = g1(x0_norm, params)
    hi = region.M * math.exp(-region.s0)
    lo = region.m * math.exp(-region.s0)
    if g > hi * (1 + rel_tol):
        return "R1"
    if g < lo * (1 - rel_tol):
        return "R3"
    return "R2"


def W_x0_eval(frame, x0_norm: float, Y1: float) -> float:
    e = math.exp(-frame.s / 2)
    yy = (abs(Y1 * e + x0_norm) - frame.a) / e
    if yy < frame.y[0] or yy > frame.y[-1]:
        raise FrameError(f"mapped coordinate {yy:.6g} outside the frame")
    return float(PchipInterpolator(frame.y, frame.values)(yy))


def W_x0_series_from_radial(traj, x0_norm: float, T: float, p: float):
    """(s_k, W_{x0}(0, s_k)) sampled from a physical-variable trajectory."""
    out_s, out_w = [], []
    for f in traj.snapshots:
        if f.t >= T:
            continue
        tau = T - f.t
        u = float(np.interp(x0_norm, f.r, f.values))
        out_s.append(-math.log(tau))
        out_w.append(tau ** (1 / (p - 1)) * u)
    return np.array(out_s), np.array(out_w)


def heteroclinic_fit(s: Sequence[float], W: Sequence[float], params: ModelParams) -> dict:
    """Least-squares shift sigma with W(s) ~ psi(s + sigma)."""
    s = np.asarray(s, dtype=float)
    W = np.asarray(W, dtype=float)
    if len(s) < 10:
        raise InsufficientData("need at least 10 samples")
    k = params.kappa
    if np.any(W <= 0) or np.any(W >= k):
        raise NotInBasin("samples leave (0, kappa)")
    # invert psi pointwise for a starting guess
    guess = np.log(np.expm1((params.p - 1) * np.log(k / W))) - s
    sol = least_squares(lambda sg: heteroclinic_psi(s + sg[0], params) - W,
                        x0=[float(np.median(guess))], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    res = sol.fun
    return {"sigma": float(sol.x[0]), "residual": float(np.sqrt(np.mean(res**2))),
            "max_abs_residual": float(np.max(np.abs(res)))}
