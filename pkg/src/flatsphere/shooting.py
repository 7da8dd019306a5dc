"""Shooting over the six-parameter initial-data family.

Each evaluation runs the similarity solver from s0 and stops at the first
exit from the shrinking set. The exit time is located by root finding on
the exiting component's margin, re-integrating from the last in-set
snapshot. The search tunes one coordinate at a time by bisection on the
sign of that coordinate at exit.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidBracket, NoExit
from .modulation import (ShrinkingSetParams, check_membership, decompose,
                         exit_flow_direction)
from .profile import ModelParams
from .solver import (SimilarityFrame, WSolverSettings, advance_frame,
                     build_initial_data, run_id, solve_w_equation)

THREADS_ENV = "FLATSPHERE_THREADS"


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class ShootingState:
    d6: tuple
    s_exit: float
    exit_sig: Optional[tuple] = None
    run_id: str = ""
    margins: dict = field(default_factory=dict)
    q_exit: Optional[tuple] = None
    extras: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "d6": list(self.d6),
            "s_exit": self.s_exit if math.isfinite(self.s_exit) else None,
            "budget_reached": not math.isfinite(self.s_exit),
            "exit_sig": list(self.exit_sig) if self.exit_sig else None,
            "run_id": self.run_id,
            "margins": {str(k): v for k, v in self.margins.items()},
            "q_exit": list(self.q_exit) if self.q_exit else None,
            "extras": self.extras,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ShootingState":
        sig = rec.get("exit_sig")
        if sig is not None and isinstance(sig[0], str) and sig[0].isdigit():
            sig = (int(sig[0]), sig[1])
        return cls(tuple(rec["d6"]), math.inf if rec["s_exit"] is None else rec["s_exit"],
                   tuple(sig) if sig else None, rec.get("run_id", ""), rec.get("margins", {}),
                   tuple(rec["q_exit"]) if rec.get("q_exit") else None, rec.get("extras", {}))


@dataclass(frozen=True)
class ShootingSettings:
    solver: WSolverSettings = WSolverSettings()
    q6_A_power: float = 1.0
    q6_s_power: float = 2.0
    tail_A_power: float = 2.0
    tail_s_power: float = 2.0
    root_xtol: float = 1e-13
    near_sphere: float = 2.0  # |y| range for the sup|q| diagnostic

    def set_params(self, params: ModelParams) -> ShrinkingSetParams:
        return ShrinkingSetParams(params.A, self.q6_A_power, self.q6_s_power,
                                  self.tail_A_power, self.tail_s_power, 2.0, params.eta0)


def _margin(frame, comp, set_params, params):
    dec = decompose(frame, params)
    rep = check_membership(dec, frame, frame.s, set_params, params)
    return rep.margins[comp], rep, dec


def exit_time(d6: Sequence[float], params: ModelParams, s_budget: float,
              settings: ShootingSettings = ShootingSettings(),
              keep_trajectory: bool = False) -> ShootingState:
    """First exit from the shrinking set before log-time s_budget.

    A state with s_exit = inf means the budget was reached in the set.
    """
    d6 = tuple(float(v) for v in d6)
    sp = settings.set_params(params)
    frame0, _ = build_initial_data(d6, params, settings.solver, with_radial=False)
    rid = run_id({"d6": d6, "params": asdict(params), "settings": asdict(settings),
                  "s_budget": s_budget})
    y = frame0.y
    near = np.abs(y) <= settings.near_sphere
    reports = []
    decs = []

    def monitor(fr):
        dec = decompose(fr, params)
        rep = check_membership(dec, fr, fr.s, sp, params)
        reports.append(rep)
        decs.append(dec)
        return not rep.in_set

    traj = solve_w_equation(frame0, params, s_budget, settings.solver, monitor)
    snaps = traj.snapshots
    extras = {"steps": traj.metadata.get("steps"),
              "near_dev_s0": float(np.max(np.abs(snaps[0].deviation[near])))}
    last_in = None
    for fr, rep in zip(snaps, reports):
        if rep.in_set:
            last_in = fr
    if last_in is not None:
        extras["last_in_set_s"] = last_in.s
        extras["near_dev_last_in_set"] = float(np.max(np.abs(last_in.deviation[near])))
    if reports[-1].in_set:
        st = ShootingState(d6, math.inf, None, rid, dict(reports[-1].margins),
                           tuple(decs[-1].q_low[:6]), extras)
        if keep_trajectory:
            st.extras["_trajectory"] = traj
        return st

    if len(snaps) == 1:
        rep = reports[0]
        extras["exit_at_start"] = True
        st = ShootingState(d6, snaps[0].s, rep.exit, rid, dict(rep.margins),
                           tuple(decs[0].q_low[:6]), extras)
        if keep_trajectory:
            st.extras["_trajectory"] = traj
        return st

    fa, fb = snaps[-2], snaps[-1]
    comp = reports[-1].exit[0]
    lo, hi = fa.s, fb.s
    for _ in range(12):

        def g(s):
            fr = advance_frame(fa, params, s, settings.solver)
            return _margin(fr, comp, sp, params)[0] - 1.0

        s_star = brentq(g, lo, hi, xtol=settings.root_xtol, rtol=4 * np.finfo(float).eps)
        fr_star = advance_frame(fa, params, s_star, settings.solver)
        _, rep_star, dec_star = _margin(fr_star, comp, sp, params)
        others = {k: v for k, v in rep_star.margins.items() if k != comp and v > 1}
        if not others:
            break
        # another component crossed first: retarget and shrink the bracket
        comp = max(others, key=lambda k: (others[k],))
        hi = s_star
    sign = 1
    if isinstance(comp, int):
        sign = 1 if dec_star.q_low[comp] >= 0 else -1
    window = [(f.s, d) for f, d in zip(snaps[-4:-1], decs[-4:-1])] + [(s_star, dec_star), (fb.s, decs[-1])]
    if len(window) >= 3 and (comp in range(7) or comp == "tail"):
        flow = exit_flow_direction(window, (comp, sign), sp, s1=s_star)
        extras["flow"] = flow["label"]
        extras["flow_difference"] = flow["difference"]
    extras["exit_margin"] = rep_star.margins[comp]
    if isinstance(comp, int) and comp <= 5 and s_star - params.s0 >= 1:
        extras["dominance_monotone"] = _dominance(snaps, decs, comp, s_star, sp)
    st = ShootingState(d6, s_star, (comp, sign), rid, dict(rep_star.margins),
                       tuple(dec_star.q_low[:6]), extras)
    if keep_trajectory:
        st.extras["_trajectory"] = traj
        st.extras["_exit_frame"] = fr_star
    return st


def _dominance(snaps, decs, comp, s_star, sp):
    ratio = [abs(d.q_low[comp]) / sp.envelope(comp, f.s)
             for f, d in zip(snaps, decs) if s_star - 0.5 <= f.s <= s_star]
    return bool(all(b >= a for a, b in zip(ratio, ratio[1:])))


def _coordinate_sign(state: ShootingState, i: int) -> int:
    if state.exit_sig is None:
        return 0
    comp, theta = state.exit_sig
    if comp == i:
        return theta
    return 1 if state.q_exit[i] >= 0 else -1


def _evaluate_many(evaluate, points):
    n = thread_cap()
    if n == 1 or len(points) == 1:
        return [evaluate(p) for p in points]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(evaluate, points))


def bisect_coordinate(i: int, bracket: Sequence[float], frozen: Sequence[float],
                      evaluate: Callable, steps: int = 40, min_width: float = 0.0,
                      budget: Optional[int] = None, on_eval: Optional[Callable] = None) -> dict:
    """Bisection on d_i with the other coordinates fixed.

    The sign at a point is theta when the exit is through i, otherwise the
    sign of q_i at the exit. Raises InvalidBracket when both ends agree.
    """
    lo, hi = float(bracket[0]), float(bracket[1])

    def point(v):
        d = list(frozen)
        d[i] = v
        return tuple(d)

    evals = []

    def record(states):
        for st in states:
            evals.append(st)
            if on_eval:
                on_eval(st)

    if budget is not None and budget < 2:
        return {"bracket": (lo, hi), "evaluations": evals, "success": False}
    ends = _evaluate_many(evaluate, [point(lo), point(hi)])
    record(ends)
    s_lo, s_hi = (_coordinate_sign(st, i) for st in ends)
    if s_lo == 0 or s_hi == 0:
        v = lo if s_lo == 0 else hi
        return {"bracket": (v, v), "evaluations": evals, "success": True}
    if s_lo == s_hi:
        raise InvalidBracket(f"coordinate {i}: both ends give sign {s_lo}")
    for _ in range(steps):
        if hi - lo <= min_width or (budget is not None and len(evals) >= budget):
            break
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        st = evaluate(point(mid))
        record([st])
        sg = _coordinate_sign(st, i)
        if sg == 0:
            return {"bracket": (mid, mid), "evaluations": evals, "success": True}
        if sg == s_lo:
            lo = mid
        else:
            hi = mid
    return {"bracket": (lo, hi), "evaluations": evals, "success": False}


@dataclass
class SearchResult:
    best: ShootingState
    history: List[ShootingState]
    reached: bool
    evaluations: int


def search(params: ModelParams, s_target: float, budget: int,
           evaluate: Optional[Callable] = None, settings: ShootingSettings = ShootingSettings(),
           steps_per_coordinate: int = 40, history_path: Optional[str] = None) -> SearchResult:
    """Cyclic coordinate bisection, fastest-growing mode first.

    The best-so-far s_exit is tracked in each history record, so the
    recorded sequence is monotone by construction.
    """
    if evaluate is None:
        def evaluate(d6):
            return exit_time(d6, params, s_target, settings)

    history: List[ShootingState] = []
    best_box = {}
    fh = open(history_path, "w") if history_path else None

    def on_eval(st):
        if "best" not in best_box or st.s_exit > best_box["best"].s_exit:
            best_box["best"] = st
        st.extras["best_s_exit"] = best_box["best"].s_exit
        st.extras["eval_index"] = len(history)
        history.append(st)
        if fh:
            rec = st.to_record()
            rec["extras"] = {k: v for k, v in rec["extras"].items() if not k.startswith("_")}
            rec["extras"]["best_s_exit"] = (None if not math.isfinite(rec["extras"]["best_s_exit"])
                                            else rec["extras"]["best_s_exit"])
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()

    def done():
        return len(history) >= budget or best_box["best"].s_exit >= s_target

    try:
        on_eval(evaluate((0.0,) * 6))
        half = [2.0] * 6
        stalled_rounds = 0
        while not done():
            start_best = best_box["best"].s_exit
            # coordinates move to their refined brackets even when s_exit does
            # not improve, since another mode may be the one setting the exit
            current = list(best_box["best"].d6)
            for i in range(6):
                if done():
                    break
                lo = max(-2.0, current[i] - half[i])
                hi = min(2.0, current[i] + half[i])
                try:
                    res = bisect_coordinate(i, (lo, hi), current, evaluate, steps_per_coordinate,
                                            budget=budget - len(history), on_eval=on_eval)
                except InvalidBracket:
                    if (lo, hi) == (-2.0, 2.0) or done():
                        continue
                    half[i] = 2.0
                    try:
                        res = bisect_coordinate(i, (-2.0, 2.0), current, evaluate,
                                                steps_per_coordinate,
                                                budget=budget - len(history), on_eval=on_eval)
                    except InvalidBracket:
                        continue
                b0, b1 = res["bracket"]
                current[i] = 0.5 * (b0 + b1)
                half[i] = max(4 * (b1 - b0), 1e-12)
            if not done() and tuple(current) != best_box["best"].d6:
                on_eval(evaluate(tuple(current)))
            if best_box["best"].s_exit <= start_best:
                stalled_rounds += 1
                if stalled_rounds >= 3:
                    break
            else:
                stalled_rounds = 0
    finally:
        if fh:
            fh.close()
    best = best_box["best"]
    return SearchResult(best, history, best.s_exit >= s_target, len(history))


def read_history(path: str) -> List[ShootingState]:
    with open(path) as fh:
        return [ShootingState.from_record(json.loads(line)) for line in fh if line.strip()]


def exit_map(d6: Sequence[float], params: ModelParams, s_probe: float,
             evaluate: Optional[Callable] = None,
             settings: ShootingSettings = ShootingSettings()) -> np.ndarray:
    """(q_0..q_5)(s*) e^{2 s*} / A at the first exit s*."""
    st = evaluate(tuple(d6)) if evaluate else exit_time(d6, params, s_probe, settings)
    if st.exit_sig is None or st.s_exit > s_probe:
        raise NoExit(f"no exit before s={s_probe}")
    return np.array(st.q_exit) * math.exp(2 * st.s_exit) / params.A


def corner_sign_census(center: Sequence[float], half_width: float, params: ModelParams,
                       s_probe: float, evaluate: Optional[Callable] = None) -> list:
    """Exit signatures over the 64 corners of a box around ``center``."""
    out = []
    for k in range(64):
        signs = [1 if (k >> j) & 1 else -1 for j in range(6)]
        d = [min(2.0, max(-2.0, c + s * half_width)) for c, s in zip(center, signs)]
        try:
            m = exit_map(d, params, s_probe, evaluate)
            st_sig = [int(np.sign(v)) for v in m]
        except NoExit:
            st_sig = None
        out.append({"corner": signs, "exit_map_signs": st_sig})
    return out
