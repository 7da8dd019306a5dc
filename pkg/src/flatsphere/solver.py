"""Method-of-lines solvers in physical (radial) and similarity variables.

Physical variables: u_t = u_rr + (d-1)/r u_r + |u|^{p-1} u on [0, r_max],
symmetric at r = 0 and Neumann at r_max.

Similarity variables around the sphere r = r0:
    w(y, s) = (T-t)^{1/(p-1)} u,   y = (r - r0)/sqrt(T-t),   s = -log(T-t).
The cut-off field wt = chi * w is advanced on y in [-L, L]. Internally the
state is the deviation q = wt - phi, which keeps small perturbations at full
relative precision.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (BlowUpProximity, FrameError, InitializationError,
                     InsufficientResolution, NotBlowingUp, NumericFault)
from .hermite import hermite_poly
from .profile import (ModelParams, RemainderOnGrid, _factors, cutoff_chi,
                      cutoff_chi_derivs, phi_derivatives, u_star)
from .timestep import DormandPrince


@dataclass(frozen=True)
class WSolverSettings:
    L: float = 20.0
    dy: float = 0.05
    rtol: float = 1e-9
    atol: float = 1e-16
    c_safe: float = 1.0
    drift: str = "central"  # or "upwind"
    profile_correction: bool = True
    snapshot_ds: float = 0.05

    def grid(self) -> np.ndarray:
        n = int(round(2 * self.L / self.dy))
        return np.linspace(-self.L, self.L, n + 1)


@dataclass(frozen=True)
class RadialSettings:
    r_max: float = 3.0
    dr: float = 1e-3
    rtol: float = 1e-8
    atol: float = 1e-12
    c_safe: float = 0.25
    snapshot_growth: float = 10**0.05
    snapshot_dt: Optional[float] = None
    dt_floor: float = 1e-300

    def grid(self) -> np.ndarray:
        n = int(round(self.r_max / self.dr))
        return np.linspace(0.0, self.r_max, n + 1)


@dataclass(frozen=True)
class RadialField:
    r: np.ndarray
    values: np.ndarray
    t: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericFault("non-finite radial field")


@dataclass(frozen=True)
class SimilarityFrame:
    y: np.ndarray
    values: np.ndarray
    s: float
    a: float = 1.0
    deviation: Optional[np.ndarray] = None  # values - phi, kept at full precision

    @property
    def time(self):
        return self.s


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    stop_reason: str = ""

    def times(self) -> np.ndarray:
        return np.array([getattr(f, "s", getattr(f, "t", None)) for f in self.snapshots])

    def append(self, frame):
        tnew = getattr(frame, "s", None)
        if tnew is None:
            tnew = frame.t
        if self.snapshots:
            last = self.snapshots[-1]
            tl = getattr(last, "s", None)
            tl = last.t if tl is None else tl
            if not tnew > tl:
                return
        self.snapshots.append(frame)


def run_id(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha1(text.encode()).hexdigest()[:12]


# ---- first and second differences with quadratic-extrapolation ghosts ----

def _ghosts(q):
    left = 3 * q[0] - 3 * q[1] + q[2]
    right = 3 * q[-1] - 3 * q[-2] + q[-3]
    return left, right


def _d1_central(q, h):
    out = np.empty_like(q)
    out[1:-1] = (q[2:] - q[:-2]) / (2 * h)
    gl, gr = _ghosts(q)
    out[0] = (q[1] - gl) / (2 * h)
    out[-1] = (gr - q[-2]) / (2 * h)
    return out


def _d2(q, h):
    out = np.empty_like(q)
    out[1:-1] = (q[2:] - 2 * q[1:-1] + q[:-2]) / (h * h)
    gl, gr = _ghosts(q)
    out[0] = (q[1] - 2 * q[0] + gl) / (h * h)
    out[-1] = (gr - 2 * q[-1] + q[-2]) / (h * h)
    return out


def _d1_upwind(q, h, velocity):
    """Upwind difference for q_s + v q_y = 0."""
    gl, gr = _ghosts(q)
    ext = np.concatenate(([gl], q, [gr]))
    back = (ext[1:-1] - ext[:-2]) / h
    fwd = (ext[2:] - ext[1:-1]) / h
    return np.where(velocity > 0, back, fwd)


def _power(w, p):
    return np.abs(w) ** (p - 1) * w


def _power_increment(base, q, p):
    """|base+q|^{p-1}(base+q) - base^p for base > 0, accurate when q is small."""
    if p == 2:
        return q * (2 * base + q) if np.all(base + q >= 0) else _power(base + q, p) - base * base
    w = base + q
    pos = w > 0
    ratio = np.where(pos, q / base, 0.0)
    smooth = base**p * np.expm1(p * np.log1p(np.where(pos, ratio, 0.0)))
    return np.where(pos, smooth, _power(w, p) - base**p)


class WEquation:
    """Right-hand side of the cut-off equation for the deviation q = wt - phi."""

    def __init__(self, params: ModelParams, settings: WSolverSettings, y=None):
        self.params = params
        self.settings = settings
        self.y = settings.grid() if y is None else np.asarray(y, dtype=float)
        self.h = float(self.y[1] - self.y[0])
        self.remainder = RemainderOnGrid(self.y, params)
        y = self.y
        self._y2 = y * y
        self._y4 = self._y2 * self._y2
        self._h4 = self._y4 - 12 * self._y2 + 12
        self._ylo, self._yhi = float(y.min()), float(y.max())

    def _cut_active(self, s):
        # chi(r/eps0) < 1 somewhere iff the smallest radius is below eps0/4
        rmin = self.params.r0 + self._ylo * math.exp(-s / 2)
        return rmin < self.params.eps0 / 4

    def geometry(self, s):
        """Radius and curvature drift coefficient at log-time s."""
        pr = self.params
        e = math.exp(-s / 2)
        r = pr.r0 + self.y * e
        drift = np.where(r > 0, e * (pr.d - 1) / np.where(r > 0, r, 1.0), 0.0)
        if pr.r0 + self._ylo * e < pr.eps0 / 2:
            drift = drift * cutoff_chi(r / (2 * pr.eps0))
        return r, drift

    def profile(self, s):
        """phi, phi_y, E, Dh on the grid (E must stay positive)."""
        pr = self.params
        b = pr.beta
        a = (pr.p - 1) * math.exp(-s) / pr.kappa
        y, y2 = self.y, self._y2
        E = 1 + 12 * a * (y2 - 1)
        Dh = 1 + a * self._y4
        if E.min() <= 0:
            _factors(y, s, pr)
        f = pr.kappa * (E / Dh) ** b
        fy = f * b * (24 * a * y / E - 4 * a * y * y2 / Dh)
        return f, fy, E, Dh

    def __call__(self, s, q):
        pr, y, h = self.params, self.y, self.h
        p = pr.p
        f, fy, E, Dh = self.profile(s)
        r, drift = self.geometry(s)
        d2q = _d2(q, h)
        if self.settings.drift == "upwind":
            velocity = 0.5 * y - drift
            adv = -velocity * _d1_upwind(q, h, velocity)
        else:
            adv = (drift - 0.5 * y) * _d1_central(q, h)
        out = d2q + adv - q / (p - 1) + _power_increment(f, q, p)
        if self.settings.profile_correction:
            out += self.remainder(s, E, Dh, f) + drift * fy
        else:
            fs = phi_derivatives(y, s, pr)[3]
            fd = _d2(f, h) + (drift - 0.5 * y) * _d1_central(f, h) - f / (p - 1) + f**p
            out += fd - fs
        if self._cut_active(s):
            out += self.cutoff_source(s, f + q, r)
        return out

    def cutoff_source(self, s, wt, r):
        """Source created by multiplying the uncut field by chi(r/eps0)."""
        pr, y = self.params, self.y
        e = math.exp(-s / 2)
        chi, c1, c2 = cutoff_chi_derivs(r / pr.eps0)
        chi_y = c1 * e / pr.eps0
        chi_yy = c2 * e * e / pr.eps0**2
        chi_s = c1 * (-0.5 * y * e) / pr.eps0
        live = chi > 1e-12
        w1 = np.where(live, wt / np.where(live, chi, 1.0), 0.0)
        w1_y = _d1_central(w1, self.h)
        curv = np.where(r > 0, (pr.d - 1) * e / np.where(r > 0, r, 1.0), 0.0)
        src = (w1 * chi_s - 2 * chi_y * w1_y - w1 * chi_yy + 0.5 * y * w1 * chi_y
               - curv * w1 * chi_y + _power(w1, pr.p) * (chi - chi**pr.p))
        return np.where(live, src, 0.0)


# ---- initial data --------------------------------------------------------

def _shape_poly(d6):
    S = np.zeros(6)
    S[: len(d6)] = d6
    return S


def initial_w1(y, s, d6, params: ModelParams):
    """Uncut initial field and its deviation from phi on a y-array."""
    y = np.asarray(y, dtype=float)
    d6 = np.asarray(d6, dtype=float)
    if d6.shape != (6,):
        raise InitializationError("d6 must have 6 entries")
    _, a, E, Dh = _factors(y, s, params, check=False)
    S = sum(d6[i] * hermite_poly(i)(y) for i in range(6))
    X = params.A * math.exp(-2 * s) * S / (params.kappa * Dh * E)
    bracket = E * (1 + X)
    if np.any(bracket <= 0):
        i = int(np.argmin(bracket))
        raise InitializationError(f"initial bracket nonpositive at y={y[i]:.6g} (value {bracket[i]:.3e})")
    f = params.kappa * (E / Dh) ** params.beta
    q = f * np.expm1(params.beta * np.log1p(X))
    return f + q, q, bracket


def build_initial_data(d6: Sequence[float], params: ModelParams,
                       settings: WSolverSettings = WSolverSettings(),
                       radial: RadialSettings = RadialSettings(),
                       T: Optional[float] = None, with_radial: bool = True):
    """Initial frame at s0 and the matching radial field at t0 = T - e^{-s0}.

    T defaults to e^{-s0}, so that t0 = 0. With ``with_radial=False`` only
    the frame is built and the radial slot is None.
    """
    s0 = params.s0
    if any(abs(v) > 2 for v in d6):
        raise InitializationError("d6 entries must lie in [-2, 2]")
    y = settings.grid()
    w1, q, _ = initial_w1(y, s0, d6, params)
    r_of_y = params.r0 + y * math.exp(-s0 / 2)
    chi = cutoff_chi(r_of_y / params.eps0)
    values = chi * w1
    dev = np.where(chi == 1.0, q, values - (w1 - q))
    frame = SimilarityFrame(y, values, s0, params.r0, dev)

    if not with_radial:
        return frame, None
    T = math.exp(-s0) if T is None else T
    r = radial.grid()
    yr = (r - params.r0) * math.exp(s0 / 2)
    w1r, _, _ = initial_w1(yr, s0, d6, params)
    u = math.exp(s0 / (params.p - 1)) * cutoff_chi(r / params.eps0) * w1r
    fld = RadialField(r, u, T - math.exp(-s0))
    return frame, fld


# ---- similarity solver ----------------------------------------------------

def solve_w_equation(frame: SimilarityFrame, params: ModelParams, s_end: float,
                     settings: WSolverSettings = WSolverSettings(),
                     monitor: Optional[Callable] = None) -> Trajectory:
    """Advance the cut-off field from frame.s to s_end.

    ``monitor(frame)`` is called on each snapshot; returning True stops the run.
    """
    if not s_end > frame.s:
        raise ValueError("s_end must exceed the frame time")
    eq = WEquation(params, settings, frame.y)
    f0 = phi_derivatives(frame.y, frame.s, params)[0]
    q = np.array(frame.deviation if frame.deviation is not None else frame.values - f0, dtype=float)
    cap = settings.c_safe * eq.h**2 / 2
    integ = DormandPrince(eq, rtol=settings.rtol, atol=settings.atol,
                          dt_cap=lambda s, u: cap)
    traj = Trajectory(metadata={"solver": "w", "settings": asdict(settings), "params": asdict(params)})
    first = SimilarityFrame(frame.y, f0 + q, frame.s, frame.a, q.copy())
    traj.append(first)
    traj.stop_reason = "time"
    if monitor is not None and monitor(first):
        traj.stop_reason = "monitor"
        traj.metadata["steps"] = integ.stats.as_dict()
        return traj
    s = frame.s
    k = 1
    while s < s_end:
        s_next = min(frame.s + k * settings.snapshot_ds, s_end)
        k += 1
        if s_next <= s:
            continue
        s, q, _ = integ.advance(s, q, s_next)
        f = phi_derivatives(frame.y, s, params)[0]
        snap = SimilarityFrame(frame.y, f + q, s, frame.a, q.copy())
        traj.append(snap)
        if monitor is not None and monitor(snap):
            traj.stop_reason = "monitor"
            break
    traj.metadata["steps"] = integ.stats.as_dict()
    return traj


def advance_frame(frame: SimilarityFrame, params: ModelParams, s_end: float,
                  settings: WSolverSettings = WSolverSettings()) -> SimilarityFrame:
    """Single-shot advance without intermediate snapshots."""
    if s_end == frame.s:
        return frame
    eq = WEquation(params, settings, frame.y)
    f0 = phi_derivatives(frame.y, frame.s, params)[0]
    q = np.array(frame.deviation if frame.deviation is not None else frame.values - f0, dtype=float)
    cap = settings.c_safe * eq.h**2 / 2
    integ = DormandPrince(eq, rtol=settings.rtol, atol=settings.atol, dt_cap=lambda s, u: cap)
    s, q, _ = integ.advance(frame.s, q, s_end)
    f = phi_derivatives(frame.y, s, params)[0]
    return SimilarityFrame(frame.y, f + q, s, frame.a, q)


# ---- radial solver --------------------------------------------------------

@dataclass(frozen=True)
class StopRule:
    t_end: Optional[float] = None
    u_max: Optional[float] = None


class RadialEquation:
    def __init__(self, r, params: ModelParams):
        self.r = np.asarray(r, dtype=float)
        self.h = float(self.r[1] - self.r[0])
        self.params = params
        inv = np.zeros_like(self.r)
        inv[1:] = (params.d - 1) / self.r[1:]
        self.curv = inv

    def __call__(self, t, u):
        h, p, d = self.h, self.params.p, self.params.d
        out = np.empty_like(u)
        out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / (h * h) + self.curv[1:-1] * (u[2:] - u[:-2]) / (2 * h)
        out[0] = d * 2 * (u[1] - u[0]) / (h * h)
        out[-1] = 2 * (u[-2] - u[-1]) / (h * h)
        return out + _power(u, p)


def solve_radial(fld: RadialField, params: ModelParams, stop: StopRule,
                 settings: RadialSettings = RadialSettings(),
                 ode_check_eps: float = 0.2) -> Trajectory:
    """Integrate the radial equation until a stop rule fires.

    Reaching ``stop.u_max`` ends the run normally. If the step size falls
    below ``settings.dt_floor`` a BlowUpProximity error carries the
    trajectory accumulated so far.
    """
    if stop.t_end is None and stop.u_max is None:
        raise ValueError("stop rule needs t_end or u_max")
    eq = RadialEquation(fld.r, params)
    p = params.p

    def cap(t, u):
        m = float(np.max(np.abs(u)))
        react = m ** (1 - p) if m > 0 else math.inf
        return settings.c_safe * min(eq.h**2 / 2, react)

    integ = DormandPrince(eq, rtol=settings.rtol, atol=settings.atol, dt_cap=cap,
                          dt_floor=settings.dt_floor)
    traj = Trajectory(metadata={"solver": "radial", "settings": asdict(settings),
                                "params": asdict(params)})
    inner = fld.r <= params.eps0 / 4
    hist_t, hist_sup, hist_arg, hist_inner = [], [], [], []
    ode_checks = []

    def record(t, u):
        i = int(np.argmax(np.abs(u)))
        hist_t.append(t)
        hist_sup.append(float(abs(u[i])))
        hist_arg.append(float(fld.r[i]))
        hist_inner.append(float(np.max(np.abs(u[inner]))) if np.any(inner) else 0.0)

    def ode_check(t, u):
        big = u >= 10
        if not np.any(big):
            return
        ut = eq(t, u)[big]
        up = u[big] ** p
        excess = np.maximum((1 - ode_check_eps) * up - ut, ut - (1 + ode_check_eps) * up)
        ode_checks.append({"t": t, "nodes": int(big.sum()),
                           "additive_constant": float(max(0.0, excess.max()))})

    u = np.array(fld.values, dtype=float)
    t = fld.t
    record(t, u)
    traj.append(RadialField(fld.r, u.copy(), t))
    ode_check(t, u)
    last_sup = hist_sup[-1]
    t_end = stop.t_end if stop.t_end is not None else math.inf
    next_snap = t + settings.snapshot_dt if settings.snapshot_dt else math.inf
    traj.stop_reason = "time"

    def stepper(tt, uu):
        record(tt, uu)
        if stop.u_max is not None and hist_sup[-1] >= stop.u_max:
            return True
        return hist_sup[-1] >= last_sup * settings.snapshot_growth or tt >= next_snap

    try:
        while t < t_end:
            target = min(t_end, next_snap)
            if not math.isfinite(target):
                target = t + 1e6
            t, u, early = integ.advance(t, u, target, stop=stepper)
            traj.append(RadialField(fld.r, u.copy(), t))
            ode_check(t, u)
            last_sup = hist_sup[-1]
            if t >= next_snap:
                next_snap += settings.snapshot_dt
            if stop.u_max is not None and last_sup >= stop.u_max:
                traj.stop_reason = "threshold"
                break
    except BlowUpProximity as exc:
        traj.stop_reason = "step_floor"
        _finish(traj, integ, hist_t, hist_sup, hist_arg, hist_inner, ode_checks)
        raise BlowUpProximity(str(exc), traj) from None
    _finish(traj, integ, hist_t, hist_sup, hist_arg, hist_inner, ode_checks)
    return traj


def _finish(traj, integ, ht, hs, ha, hi, checks):
    traj.metadata["steps"] = integ.stats.as_dict()
    traj.metadata["sup_history"] = {"t": ht, "sup": hs, "argmax_r": ha}
    traj.metadata["inner_sup"] = hi
    traj.metadata["inner_sup_max"] = max(hi) if hi else 0.0
    traj.metadata["ode_localization"] = checks


def to_similarity(fld: RadialField, T: float, a: float = 1.0, p: float = 2.0,
                  y: Optional[np.ndarray] = None) -> SimilarityFrame:
    """Resample (T-t)^{1/(p-1)} u at r = a + y sqrt(T-t) with monotone cubics."""
    if not fld.t < T:
        raise FrameError(f"field time {fld.t} is not before T={T}")
    y = WSolverSettings().grid() if y is None else np.asarray(y, dtype=float)
    tau = T - fld.t
    r = a + y * math.sqrt(tau)
    if r.min() < fld.r[0] - 1e-12 or r.max() > fld.r[-1] + 1e-12:
        raise FrameError("similarity grid leaves the radial domain")
    vals = PchipInterpolator(fld.r, fld.values)(r) * tau ** (1 / (p - 1))
    return SimilarityFrame(y, vals, -math.log(tau), a)


def to_radial_values(frame: SimilarityFrame, T: float, r: np.ndarray, p: float = 2.0):
    """Inverse map on a radial grid; zero outside the frame's support."""
    tau = math.exp(-frame.s)
    yr = (np.asarray(r) - frame.a) / math.sqrt(tau)
    inside = (yr >= frame.y[0]) & (yr <= frame.y[-1])
    out = np.zeros_like(yr)
    out[inside] = PchipInterpolator(frame.y, frame.values)(yr[inside]) * tau ** (-1 / (p - 1))
    return out


def detect_blowup(traj: Trajectory, p: Optional[float] = None):
    """Estimate (T, r_blow) from the sup-norm history."""
    p = traj.metadata.get("params", {}).get("p", 2.0) if p is None else p
    hist = traj.metadata.get("sup_history")
    if hist:
        t = np.asarray(hist["t"])
        sup = np.asarray(hist["sup"])
    else:
        t = np.array([f.t for f in traj.snapshots])
        sup = np.array([np.max(np.abs(f.values)) for f in traj.snapshots])
    if len(sup) < 3 or not sup[0] >= 0 or sup[-1] < 10 * max(sup[0], 1e-300) or sup[-1] == 0:
        raise NotBlowingUp("sup norm did not grow tenfold")
    sel = sup >= sup[-1] / 10
    if sel.sum() < 3:
        sel = np.zeros_like(sel)
        sel[-3:] = True
    slope, icpt = np.polyfit(t[sel], sup[sel] ** (-(p - 1)), 1)
    if not slope < 0:
        raise NotBlowingUp("inverse sup norm is not decreasing")
    T_est = -icpt / slope
    last = traj.snapshots[-1]
    r_blow = float(last.r[int(np.argmax(np.abs(last.values)))])
    return float(T_est), r_blow


def final_profile_check(traj: Trajectory, T_est: float, params: ModelParams,
                        inner_cells: int = 2, outer_cells: int = 10) -> dict:
    """Ratio u / u_star(|r - r0|) over the annulus 2dr <= |r - r0| <= 10dr."""
    last = traj.snapshots[-1]
    r = last.r
    dr = float(r[1] - r[0])
    dist = np.abs(r - params.r0)
    tol = 1e-9 * dr
    sel = (dist >= inner_cells * dr - tol) & (dist <= outer_cells * dr + tol)
    if sel.sum() < 2:
        raise InsufficientResolution("reporting annulus holds fewer than two nodes")
    ratios = last.values[sel] / u_star(dist[sel], params)
    return {
        "t": last.t,
        "T_est": T_est,
        "r": r[sel].tolist(),
        "ratios": ratios.tolist(),
        "min": float(ratios.min()),
        "max": float(ratios.max()),
        "spread": float(ratios.max() / ratios.min()) if ratios.min() > 0 else math.inf,
    }
