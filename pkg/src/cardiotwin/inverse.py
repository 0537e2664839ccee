"""Infarct recovery from an observed QRS by simulation-based optimisation.

Stage 1 scores every candidate scenario and keeps the best one.  Stage 2
refines ``(ab0, rt0, r_tm, r_ab, r_rt)`` with Nelder-Mead starting from the
stage-1 winner, under a budget of forward solves.
"""
from __future__ import annotations

import hashlib
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .errors import CardioTwinError, NumericalError, ValidationError
from .forward import ForwardModel
from .pseudo_ecg import EcgRecord
from .qrs_analysis import dtw_record
from .scenario import SLOW_SCENARIO, CvConfig, InfarctSpec, ScenarioSpec, catalogue, label_tissue

log = logging.getLogger(__name__)

PARAMS = ("ab0", "rt0", "r_tm", "r_ab", "r_rt")


def default_candidates() -> list[ScenarioSpec]:
    return [s for s in catalogue() if s.name != SLOW_SCENARIO]


@dataclass(frozen=True)
class InverseConfig:
    candidates: tuple = field(default_factory=lambda: tuple(default_candidates()))
    budget: int = 200
    steps: tuple = (0.05, 0.04, 0.5, 0.05, 0.03)
    tol: float = 1e-4
    seed: int = 0
    jobs: int = 1
    decimals: int = 3
    gamma: float = 1.0
    restart: bool = True

    def __post_init__(self):
        if self.budget < 0:
            raise ValidationError("budget must be nonnegative")
        if self.tol <= 0:
            raise ValidationError("tol must be positive")
        if len(self.steps) != len(PARAMS) or min(self.steps) <= 0:
            raise ValidationError("one positive step per parameter is required")
        if not self.candidates:
            raise ValidationError("at least one stage-1 candidate is required")


@dataclass
class InverseResult:
    infarct: InfarctSpec
    labeling: np.ndarray
    objective: float
    forward_solves: int
    stage1_name: str
    stage1_objective: float
    stage1_objectives: list
    cv: CvConfig
    history: list = field(default_factory=list)  # best-so-far objective after each stage-2 evaluation
    evaluation: dict | None = None

    def report(self, header: dict | None = None) -> str:
        lines = [f"# {k}={v}" for k, v in (header or {}).items()]
        lines.append(f"stage1_winner: {self.stage1_name}")
        lines.append(f"stage1_objective: {self.stage1_objective:.12g}")
        lines.append(f"objective: {self.objective:.12g}")
        lines.append(f"forward_solves: {self.forward_solves}")
        lines.append(f"stage2_evaluations: {len(self.history)}")
        for k, v in self.infarct.as_dict().items():
            lines.append(f"{k}: {v:.6f}")
        lines.append(f"scar_nodes: {int((self.labeling == 1).sum())}")
        lines.append(f"bz_nodes: {int((self.labeling == 2).sum())}")
        for name, v in self.stage1_objectives:
            lines.append(f"candidate {name}: {v:.12g}")
        if self.evaluation:
            for k, v in self.evaluation.items():
                lines.append(f"eval_{k}: {v:.6f}" if isinstance(v, float) else f"eval_{k}: {v}")
        return "\n".join(lines) + "\n"


class _BudgetExhausted(Exception):
    pass


def objective_from_record(observed: EcgRecord, simulated: EcgRecord, gamma: float = 1.0) -> float:
    return float(np.mean(dtw_record(observed, simulated, gamma)))


def objective(theta: InfarctSpec | None, observed: EcgRecord, model: ForwardModel, cv: CvConfig | None = None,
              gamma: float = 1.0) -> float:
    """Mean per-lead DTW between the observed record and the one simulated under ``theta``."""
    sim = model.run(theta, cv).record
    return objective_from_record(observed, sim, gamma)


def theta_from_vector(x, tm0: float = 0.0, bz_scale: float = 1.5, decimals: int | None = 3) -> InfarctSpec:
    """Map an unconstrained vector onto a valid infarct (clip ab0, wrap rt0, clamp radii)."""
    ab0, rt0, r_tm, r_ab, r_rt = (float(v) for v in x)
    vals = [min(max(ab0, 0.0), 1.0), rt0 % 1.0, max(r_tm, 0.0), max(r_ab, 0.0), max(r_rt, 0.0)]
    if decimals is not None:
        vals = [round(v, decimals) for v in vals]
        vals[1] = vals[1] % 1.0
    return InfarctSpec(tm0, vals[0], vals[1], vals[2], vals[3], vals[4], bz_scale)


def theta_vector(inf: InfarctSpec) -> np.ndarray:
    return np.array([getattr(inf, p) for p in PARAMS], float)


class _Evaluator:
    """Objective with caching by quantised parameters and by labeling, and solve accounting."""

    def __init__(self, observed, model, cv, gamma, budget):
        self.observed, self.model, self.cv, self.gamma = observed, model, cv, gamma
        self.budget = budget
        self.solves = 0
        self.by_theta: dict = {}
        self.by_label: dict = {}
        self.lock = threading.Lock()

    def labeled(self, inf: InfarctSpec):
        lab = label_tissue(self.model.mesh, inf)
        return lab, hashlib.sha1(lab.tobytes()).hexdigest()

    def __call__(self, inf: InfarctSpec, cv: CvConfig | None = None, counted: bool = True):
        cv = cv or self.cv
        key = (tuple(inf.as_dict().values()), cv)
        if key in self.by_theta:
            return self.by_theta[key]
        lab, h = self.labeled(inf)
        lkey = (h, cv)
        if lkey not in self.by_label:
            with self.lock:
                if counted and self.solves >= self.budget:
                    raise _BudgetExhausted
                self.solves += 1
            sim = self.model.run_labeling(lab, cv).record
            self.by_label[lkey] = objective_from_record(self.observed, sim, self.gamma)
        out = (self.by_label[lkey], lab)
        self.by_theta[key] = out
        return out


def invert(observed: EcgRecord, model: ForwardModel, icfg: InverseConfig | None = None,
           truth=None, aha=None) -> InverseResult:
    """Two-stage recovery of the infarct that generated ``observed``.

    ``truth`` (a labeling) adds Dice and localisation metrics to the result.
    """
    icfg = icfg or InverseConfig()
    ev = _Evaluator(observed, model, None, icfg.gamma, budget=np.inf)

    def stage1(s: ScenarioSpec):
        try:
            return ev(s.infarct, s.cv)[0]
        except (CardioTwinError, ArithmeticError) as exc:
            log.warning("candidate %s failed: %s", s.name, exc)
            return np.inf

    cands = list(icfg.candidates)
    if icfg.jobs > 1:
        with ThreadPoolExecutor(icfg.jobs) as ex:
            scores = list(ex.map(stage1, cands))
    else:
        scores = [stage1(s) for s in cands]
    scores = np.asarray(scores, float)
    if not np.isfinite(scores).any():
        raise NumericalError("no stage-1 candidate could be simulated")
    k = int(np.argmin(scores))
    win = cands[k]
    stage1_solves = ev.solves
    best = {"f": float(scores[k]), "theta": win.infarct, "lab": ev(win.infarct, win.cv)[1]}
    history: list = []

    ev.cv = win.cv
    if icfg.budget > 0 and win.infarct is not None:
        inf0 = win.infarct

        def f(x):
            theta = theta_from_vector(x, inf0.tm0, inf0.bz_scale, icfg.decimals)
            val, lab = ev(theta)
            if val < best["f"]:
                best.update(f=val, theta=theta, lab=lab)
            history.append(best["f"])
            return val

        # The objective is rugged between neighbouring territories, so the single
        # restart starts from the stage-1 runner-up rather than from the incumbent.
        # The first simplex may use at most half the budget.
        steps = np.asarray(icfg.steps, float)
        starts = [(theta_vector(inf0), stage1_solves + (icfg.budget + 1) // 2 if icfg.restart else None)]
        if icfg.restart:
            order = [j for j in np.argsort(scores, kind="stable") if j != k and cands[j].infarct is not None
                     and np.isfinite(scores[j])]
            x1 = theta_vector(cands[order[0]].infarct) if order else None
            starts.append((x1, None))
        for x_start, cap in starts:
            if x_start is None:
                x_start = theta_vector(best["theta"])
            ev.budget = stage1_solves + icfg.budget if cap is None else cap
            simplex = np.vstack([x_start, x_start + np.diag(steps)])
            try:
                minimize(f, x_start, method="Nelder-Mead",
                         options={"initial_simplex": simplex, "fatol": icfg.tol, "xatol": 10.0 ** -icfg.decimals,
                                  "maxfev": 20 * (icfg.budget + 1)})
            except _BudgetExhausted:
                pass
            if ev.solves >= stage1_solves + icfg.budget:
                break

    res = InverseResult(
        infarct=best["theta"] if best["theta"] is not None else InfarctSpec(r_tm=0, r_ab=0, r_rt=0),
        labeling=best["lab"], objective=best["f"], forward_solves=ev.solves,
        stage1_name=win.name, stage1_objective=float(scores[k]),
        stage1_objectives=[(s.name, float(v)) for s, v in zip(cands, scores)],
        cv=win.cv, history=history)
    if truth is not None:
        res.evaluation = evaluate(res.labeling, truth, model.mesh, aha)
    return res


def evaluate(pred, truth, mesh, cfg=None) -> dict:
    from .metrics import aha_loc_terms, center_segment, dice_precision_recall, aha_loc_from_terms

    out = {}
    for cls in ("scar", "bz"):
        d, p, r = dice_precision_recall(pred, truth, cls)
        out.update({f"{cls}_dice": d, f"{cls}_precision": p, f"{cls}_recall": r})
    from .cobiveco import DEFAULT_AHA

    cfg = cfg or DEFAULT_AHA
    terms = aha_loc_terms(pred, truth, mesh, cfg)
    out["aha_loc_score"] = 0.0 if terms is None else aha_loc_from_terms(*terms)
    out["center_segment_match"] = 0.0 if terms is None else terms[0]
    out["pred_center_segment"] = center_segment(mesh, pred, cfg)
    out["true_center_segment"] = center_segment(mesh, truth, cfg)
    return out


def perturbed(inf: InfarctSpec, rng: np.random.Generator, d_ab: float = 0.04, d_rt: float = 0.02) -> InfarctSpec:
    """Centre moved off the catalogue grid by a random offset of bounded size."""
    ab = float(np.clip(inf.ab0 + rng.uniform(-d_ab, d_ab), 0.0, 1.0))
    rt = float((inf.rt0 + rng.uniform(-d_rt, d_rt)) % 1.0)
    return replace(inf, ab0=ab, rt0=rt)
