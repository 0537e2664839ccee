"""Infarct ellipsoids, the scenario catalogue and conduction-velocity fields."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cobiveco import AB, RT, TM, in_lv_mask, rt_delta
from .errors import ValidationError
from .geometry import LV_ENDO, RV_ENDO, Mesh

HEALTHY, SCAR, BZ = 0, 1, 2
CLASS_NAMES = ("healthy", "scar", "bz")

TRANSMURAL_R_TM = 3.0
SUBENDO_R_TM = 0.5


@dataclass(frozen=True)
class InfarctSpec:
    """Ellipsoid in (tm, ab, rt) with a concentric border-zone shell scaled by ``bz_scale``."""

    tm0: float = 0.0
    ab0: float = 0.5
    rt0: float = 0.0
    r_tm: float = TRANSMURAL_R_TM
    r_ab: float = 0.2
    r_rt: float = 0.1
    bz_scale: float = 1.5

    def __post_init__(self):
        if min(self.r_tm, self.r_ab, self.r_rt) < 0:
            raise ValidationError("infarct radii must be nonnegative")
        if self.bz_scale < 1:
            raise ValidationError("bz_scale must be >= 1")
        if not (0 <= self.tm0 <= 1 and 0 <= self.ab0 <= 1 and 0 <= self.rt0 < 1):
            raise ValidationError("infarct center must be a valid coordinate")

    @property
    def center(self):
        return self.tm0, self.ab0, self.rt0

    @property
    def radii(self):
        return self.r_tm, self.r_ab, self.r_rt

    def as_dict(self):
        return {k: float(getattr(self, k)) for k in
                ("tm0", "ab0", "rt0", "r_tm", "r_ab", "r_rt", "bz_scale")}


@dataclass(frozen=True)
class CvConfig:
    """Conduction velocities in cm/s and the scar/BZ scaling fractions."""

    v_f: float = 65.0
    v_s: float = 48.0
    v_n: float = 51.0
    v_dense: float = 150.0
    v_sparse: float = 100.0
    scar_fraction: float = 0.10
    bz_fraction: float = 0.50

    def __post_init__(self):
        if min(self.v_f, self.v_s, self.v_n, self.v_dense, self.v_sparse) <= 0:
            raise ValidationError("conduction velocities must be positive")
        if not 0 < self.scar_fraction <= self.bz_fraction <= 1:
            raise ValidationError("need 0 < scar_fraction <= bz_fraction <= 1")


SLOW_CV = dict(scar_fraction=0.05, bz_fraction=0.25)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    infarct: InfarctSpec | None
    cv: CvConfig = field(default_factory=CvConfig)

    @property
    def is_baseline(self) -> bool:
        return self.infarct is None


# (ab0, rt0, r_ab, r_rt) per location; centres sit inside an AHA segment of
# the highlighted territory so the centre segment is well defined.
LOCATIONS = {
    "septal": (0.50, 0.75, 0.30, 0.12),
    "apical": (0.15, 0.50, 0.25, 1.00),
    "ext-anterior": (0.50, 0.60, 0.40, 0.14),
    "lim-anterior": (0.25, 0.57, 0.18, 0.08),
    "lateral-large": (0.50, 0.40, 0.30, 0.14),
    "inferior": (0.50, 0.08, 0.30, 0.10),
    "inferolateral": (0.45, 0.25, 0.35, 0.14),
}
LOCATION_ORDER = ("septal", "apical", "ext-anterior", "lim-anterior",
                  "lateral-large", "lateral-small", "inferior", "inferolateral")
EXTENTS = {"transmural": TRANSMURAL_R_TM, "subendocardial": SUBENDO_R_TM}
SLOW_SCENARIO = "lateral-large-transmural-slowcv"


def catalogue(cv_base: CvConfig | None = None, locations: dict | None = None,
              bz_scale: float = 1.5) -> list[ScenarioSpec]:
    """The 17 infarct scenarios.

    Eight location entries (seven sites plus a small lateral infarct with
    halved ``r_ab``/``r_rt``) at two transmural extents, followed by the
    transmural large lateral infarct with the slower CV profile.
    """
    cv_base = cv_base or CvConfig()
    table = dict(LOCATIONS)
    if locations:
        table.update({k: tuple(v) for k, v in locations.items()})
    if "lateral-small" not in table:
        ab0, rt0, r_ab, r_rt = table["lateral-large"]
        table["lateral-small"] = (ab0, rt0, r_ab / 2, r_rt / 2)

    out = []
    for loc in LOCATION_ORDER:
        ab0, rt0, r_ab, r_rt = table[loc]
        for extent, r_tm in EXTENTS.items():
            inf = InfarctSpec(0.0, ab0, rt0, r_tm, r_ab, r_rt, bz_scale)
            out.append(ScenarioSpec(f"{loc}-{extent}", inf, cv_base))
    base = next(s for s in out if s.name == "lateral-large-transmural")
    out.append(ScenarioSpec(SLOW_SCENARIO, base.infarct, replace(cv_base, **SLOW_CV)))
    return out


def scenario_by_name(name: str, cat: list[ScenarioSpec] | None = None,
                     cv_base: CvConfig | None = None) -> ScenarioSpec:
    if name == "baseline":
        return ScenarioSpec("baseline", None, cv_base or CvConfig())
    cat = cat if cat is not None else catalogue(cv_base)
    for s in cat:
        if s.name == name:
            return s
    names = ", ".join(["baseline"] + [s.name for s in cat])
    raise ValidationError(f"unknown scenario {name!r}; choose one of: {names}")


def _ellipsoid_lhs(cob, inf: InfarctSpec, scale: float = 1.0) -> np.ndarray:
    diffs = (cob[:, TM] - inf.tm0, cob[:, AB] - inf.ab0, rt_delta(inf.rt0, cob[:, RT]))
    lhs = np.zeros(len(cob))
    for d, r in zip(diffs, inf.radii):
        r = r * scale
        if r > 0:
            lhs += (d / r) ** 2
        else:
            lhs += np.where(d == 0, 0.0, np.inf)
    return lhs


def ellipsoid_lhs(mesh_or_cob, inf: InfarctSpec, scale: float = 1.0) -> np.ndarray:
    """Left-hand side of the infarct inequality for every node (scar iff <= 1)."""
    cob = mesh_or_cob.cobiveco if isinstance(mesh_or_cob, Mesh) else np.atleast_2d(mesh_or_cob)
    return _ellipsoid_lhs(np.asarray(cob, float), inf, scale)


def label_tissue(mesh: Mesh, infarct: InfarctSpec | None) -> np.ndarray:
    """Per-node class (0 healthy, 1 scar, 2 border zone); only LV-region nodes can be infarcted."""
    lab = np.zeros(mesh.n_nodes, dtype=np.int8)
    if infarct is None:
        return lab
    cob = mesh.cobiveco
    lv = in_lv_mask(cob)
    scar = lv & (_ellipsoid_lhs(cob, infarct) <= 1.0)
    bz = lv & ~scar & (_ellipsoid_lhs(cob, infarct, infarct.bz_scale) <= 1.0)
    lab[scar] = SCAR
    lab[bz] = BZ
    return lab


def endocardial_elements(mesh: Mesh) -> np.ndarray:
    """Elements owning a face on an endocardial surface (three tagged nodes)."""
    endo = np.isin(mesh.surface_tags, (LV_ENDO, RV_ENDO))
    return endo[mesh.tets].sum(axis=1) >= 3


def element_labels(mesh: Mesh, labeling) -> np.ndarray:
    """Worst node label per element: scar > border zone > healthy."""
    labeling = np.asarray(labeling)
    if labeling.shape != (mesh.n_nodes,):
        raise ValidationError(
            f"labeling has {labeling.shape[0] if labeling.ndim else 0} entries, mesh has {mesh.n_nodes} nodes")
    lab = labeling[mesh.tets]
    out = np.zeros(mesh.n_tets, dtype=np.int8)
    out[(lab == BZ).any(axis=1)] = BZ
    out[(lab == SCAR).any(axis=1)] = SCAR
    return out


def conduction_field(mesh: Mesh, labeling, cv: CvConfig | None = None) -> np.ndarray:
    """Per-element ``(v_f, v_s, v_n)`` in cm/s.

    Elements on the endocardial surface use the dense/sparse endocardial
    speeds along fibre and sheet-normal (the in-surface directions); the
    sheet (transmural) speed is kept.  Infarcted elements are scaled down.
    """
    cv = cv or CvConfig()
    elab = element_labels(mesh, labeling)
    v = np.tile(np.array([cv.v_f, cv.v_s, cv.v_n], float), (mesh.n_tets, 1))
    endo = endocardial_elements(mesh)
    v[endo, 0] = cv.v_dense
    v[endo, 2] = cv.v_sparse
    v[elab == SCAR] *= cv.scar_fraction
    v[elab == BZ] *= cv.bz_fraction
    return v
