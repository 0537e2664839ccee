"""Segmentation losses, reconstruction losses and localisation metrics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from .cobiveco import DEFAULT_AHA, RT, AhaConfig, aha_segments, in_lv_mask, rt_delta, SEPTAL_RT
from .errors import ValidationError
from .scenario import BZ, SCAR

CLASSES = {"scar": SCAR, "bz": BZ}


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 5.0
    lam_pc: float = 1.0
    lam_qrs: float = 1.0
    lam_kl: float = 0.01
    lam_dice: float = 1.0
    lam_compact: float = 1.0
    lam_size: float = 1.0
    lam_spa: float = 1.0
    lam_vae: float = 1.0

    def __post_init__(self):
        if any(getattr(self, f.name) < 0 for f in fields(self)):
            raise ValidationError("loss weights must be nonnegative")

    def scaled(self, c: float) -> "LossWeights":
        return LossWeights(**{f.name: getattr(self, f.name) * c for f in fields(self)})


@dataclass(frozen=True)
class AhaLocWeights:
    center_id: float = 0.5
    ids: float = 0.2
    center_dist: float = 0.3

    def __post_init__(self):
        w = (self.center_id, self.ids, self.center_dist)
        if min(w) < 0 or abs(sum(w) - 1.0) > 1e-12:
            raise ValidationError("AHA-loc weights must be nonnegative and sum to 1")


# ---------------------------------------------------------------------------
# overlap


def _class_id(cls) -> int:
    if isinstance(cls, str):
        try:
            return CLASSES[cls]
        except KeyError:
            raise ValidationError(f"class must be one of {sorted(CLASSES)}") from None
    return int(cls)


def dice_precision_recall(pred, gd, cls="scar") -> tuple[float, float, float]:
    pred, gd = np.asarray(pred), np.asarray(gd)
    if pred.shape != gd.shape:
        raise ValidationError("labelings must have equal length")
    c = _class_id(cls)
    p, g = pred == c, gd == c
    n_p, n_g = int(p.sum()), int(g.sum())
    if n_p == 0 and n_g == 0:
        return 1.0, 1.0, 1.0
    tp = int((p & g).sum())
    dice = 2.0 * tp / (n_p + n_g)
    precision = tp / n_p if n_p else 0.0
    recall = tp / n_g if n_g else 0.0
    return dice, precision, recall


# ---------------------------------------------------------------------------
# point clouds


def _points(a) -> np.ndarray:
    a = np.asarray(a, float)
    a = a.reshape(-1, a.shape[-1]) if a.ndim > 1 else a.reshape(-1, 1)
    if len(a) == 0:
        raise ValidationError("point set is empty")
    return a


def chamfer(a, b) -> float:
    """Mean squared nearest-neighbour distance A->B plus B->A."""
    a, b = _points(a), _points(b)
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(np.mean(da**2) + np.mean(db**2))


def reconstruction_loss_pc(inputs, recons, alpha: float = 5.0) -> float:
    """Sum over classes of coarse chamfer plus ``alpha`` times dense chamfer.

    ``inputs`` and ``recons`` are sequences (one item per class) of
    ``(coarse, dense)`` point-set pairs.
    """
    if len(inputs) != len(recons):
        raise ValidationError("input and reconstruction class counts differ")
    return float(sum(chamfer(ic, rc) + alpha * chamfer(idn, rd)
                     for (ic, idn), (rc, rd) in zip(inputs, recons)))


def reconstruction_loss_qrs(qrs, qrs_hat, gamma: float = 1.0) -> float:
    """Mean over leads of MSE plus DTW."""
    from .pseudo_ecg import EcgRecord
    from .qrs_analysis import dtw_distance, dtw_record

    if isinstance(qrs, EcgRecord) and isinstance(qrs_hat, EcgRecord):
        a, b = qrs.leads, qrs_hat.leads
        dtw = dtw_record(qrs, qrs_hat, gamma)
    else:
        a, b = np.atleast_2d(np.asarray(qrs, float)), np.atleast_2d(np.asarray(qrs_hat, float))
        if a.shape[0] != b.shape[0]:
            raise ValidationError("lead counts differ")
        dtw = np.array([dtw_distance(x, y, gamma=gamma) for x, y in zip(a, b)])
    if a.shape != b.shape:
        raise ValidationError("records must have the same shape for the MSE term")
    mse = np.mean((a - b) ** 2, axis=1)
    return float(np.mean(mse + dtw))


def kl_std_normal(mu, sigma) -> float:
    mu, sigma = np.asarray(mu, float), np.asarray(sigma, float)
    if np.any(sigma <= 0):
        raise ValidationError("sigma must be positive")
    return float(np.sum(0.5 * (mu**2 + sigma**2 - 1.0 - 2.0 * np.log(sigma))))


def seg_loss(prob, labels, lam_dice: float = 1.0, eps: float = 1e-6) -> float:
    """Cross-entropy plus weighted soft Dice loss (mean over the classes)."""
    prob = np.atleast_2d(np.asarray(prob, float))
    labels = np.asarray(labels, int).ravel()
    if prob.shape[0] != len(labels):
        raise ValidationError("one probability row per label is required")
    if np.any(prob < 0) or np.any(np.abs(prob.sum(axis=1) - 1.0) > 1e-6):
        raise ValidationError("probability rows must be nonnegative and sum to 1")
    n_cls = prob.shape[1]
    if labels.min() < 0 or labels.max() >= n_cls:
        raise ValidationError("labels out of class range")
    onehot = np.eye(n_cls)[labels]
    ce = -np.mean(np.log(np.clip(prob[np.arange(len(labels)), labels], 1e-12, None)))
    inter = (prob * onehot).sum(axis=0)
    denom = prob.sum(axis=0) + onehot.sum(axis=0)
    dice = (2 * inter + eps) / (denom + eps)
    return float(ce + lam_dice * np.mean(1.0 - dice))


def compactness_loss(pred_pts, gd_pts) -> float:
    """Mean of (distance to predicted centre + distance to true centre), over the
    largest distance of a true point to its centre."""
    p = np.asarray(pred_pts, float).reshape(-1, 3) if np.size(pred_pts) else np.empty((0, 3))
    g = np.asarray(gd_pts, float).reshape(-1, 3) if np.size(gd_pts) else np.empty((0, 3))
    if len(p) == 0:
        raise ValidationError("compactness is undefined for an empty prediction")
    if len(g) == 0:
        raise ValidationError("compactness needs a nonempty ground truth")
    cp, cg = p.mean(axis=0), g.mean(axis=0)
    d_max = np.linalg.norm(g - cg, axis=1).max()
    if d_max == 0:
        raise ValidationError("compactness is undefined when the ground truth has zero extent")
    d = np.linalg.norm(p - cp, axis=1) + np.linalg.norm(p - cg, axis=1)
    return float(d.sum() / len(p) / d_max)


def size_loss(n_pre: int, n_gd: int, absolute: bool = False) -> float:
    if n_gd <= 0:
        raise ValidationError("ground-truth size must be positive")
    v = (n_pre - n_gd) / n_gd
    return abs(v) if absolute else v


def spa_loss(n_pre_rv: int, n_pre: int) -> float:
    return 0.0 if n_pre == 0 else n_pre_rv / n_pre


def rv_scar_count(pred, cob, band: float = 0.02, cls=SCAR) -> int:
    """Predicted nodes of class ``cls`` outside the LV region, skipping the septal boundary band."""
    pred = np.asarray(pred)
    rv = ~in_lv_mask(cob)
    near = np.abs(rt_delta(SEPTAL_RT, np.asarray(cob)[:, RT])) <= band
    return int(((pred == cls) & rv & ~near).sum())


def total_losses(c: dict, w: LossWeights = LossWeights()) -> tuple[float, float]:
    """Weighted sums for the auto-encoder and inference objectives.

    ``c`` may hold ``pc``, ``qrs``, ``kl``, ``ce_dice``, ``compact``,
    ``size`` and ``spa``; missing terms count as 0.
    """
    g = lambda k: float(c.get(k, 0.0))
    vae = w.lam_pc * g("pc") + w.lam_qrs * g("qrs") + w.lam_kl * g("kl")
    inf = (g("ce_dice") + w.lam_compact * g("compact") + w.lam_size * g("size")
           + w.lam_spa * g("spa") + w.lam_vae * vae)
    return vae, inf


# ---------------------------------------------------------------------------
# localisation


def scar_center(mesh, labeling, cls=SCAR) -> int | None:
    """Node index nearest to the mean position of the class (restricted to LV nodes of that class)."""
    lab = np.asarray(labeling)
    idx = np.flatnonzero((lab == cls) & in_lv_mask(mesh.cobiveco))
    if len(idx) == 0:
        return None
    pts = mesh.nodes[idx]
    j = np.argmin(np.linalg.norm(pts - pts.mean(axis=0), axis=1))
    return int(idx[j])


def aha_loc_terms(pred, gd, mesh, cfg: AhaConfig = DEFAULT_AHA):
    """(delta, IoU, d_c) or None for an empty prediction."""
    gd_c = scar_center(mesh, gd)
    if gd_c is None:
        raise ValidationError("ground truth has no scar")
    pr_c = scar_center(mesh, pred)
    if pr_c is None:
        return None
    seg = aha_segments(mesh.cobiveco, cfg, strict=False)
    lab_p, lab_g = np.asarray(pred), np.asarray(gd)
    s_p = set(seg[(lab_p == SCAR) & (seg > 0)].tolist())
    s_g = set(seg[(lab_g == SCAR) & (seg > 0)].tolist())
    iou = len(s_p & s_g) / len(s_p | s_g) if s_p | s_g else 1.0
    delta = float(seg[pr_c] == seg[gd_c])
    lo, hi = mesh.bbox
    diag = float(np.linalg.norm(hi - lo))
    d_c = min(max(np.linalg.norm(mesh.nodes[pr_c] - mesh.nodes[gd_c]) / diag, 0.0), 1.0)
    return delta, iou, d_c


def aha_loc_from_terms(delta: float, iou: float, d_c: float, w: AhaLocWeights = AhaLocWeights()) -> float:
    return w.center_id * delta + w.ids * iou + w.center_dist * (1.0 - d_c)


def aha_loc_score(pred, gd, mesh, w: AhaLocWeights = AhaLocWeights(), cfg: AhaConfig = DEFAULT_AHA) -> float:
    terms = aha_loc_terms(pred, gd, mesh, cfg)
    return 0.0 if terms is None else aha_loc_from_terms(*terms, w)


def center_segment(mesh, labeling, cfg: AhaConfig = DEFAULT_AHA) -> int:
    c = scar_center(mesh, labeling)
    return 0 if c is None else int(aha_segments(mesh.cobiveco[c:c + 1], cfg, strict=False)[0])


# ---------------------------------------------------------------------------


EVAL_COLUMNS = ("subject", "scenario", "scar_dice", "scar_precision", "scar_recall",
                "bz_dice", "bz_precision", "bz_recall", "aha_loc_score")


def evaluation_row(subject: str, scenario: str, pred, gd, mesh, cfg: AhaConfig = DEFAULT_AHA) -> dict:
    row = {"subject": subject, "scenario": scenario}
    for cls in ("scar", "bz"):
        d, p, r = dice_precision_recall(pred, gd, cls)
        row.update({f"{cls}_dice": d, f"{cls}_precision": p, f"{cls}_recall": r})
    row["aha_loc_score"] = aha_loc_score(pred, gd, mesh, cfg=cfg)
    return row


def evaluation_csv(rows, header: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVAL_COLUMNS)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else f"{r[c]:.6f}" for c in EVAL_COLUMNS])
    return buf.getvalue()
