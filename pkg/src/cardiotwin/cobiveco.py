"""Predicates and mappings in consistent biventricular coordinates.

A coordinate is the tuple ``(tm, ab, rt, tv)``:

* ``tm`` transmural depth, 0 at the endocardium and 1 at the epicardium
* ``ab`` apicobasal position, 0 at the apex and 1 at the base
* ``rt`` rotational position in ``[0, 1)``, periodic
* ``tv`` ventricle flag, 0 for LV and 1 for RV

Arrays of coordinates are stored as ``(n, 4)`` float arrays in that column
order, which is also the layout of :attr:`cardiotwin.geometry.Mesh.cobiveco`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError

TM, AB, RT, TV = 0, 1, 2, 3

#: rt above which RV-flagged nodes belong to the septum (and hence to the LV region)
SEPTAL_RT = 2.0 / 3.0


@dataclass(frozen=True)
class CobivecoCoord:
    tm: float
    ab: float
    rt: float
    tv: int

    def __post_init__(self):
        if not 0.0 <= self.tm <= 1.0:
            raise ValidationError(f"tm must lie in [0, 1], got {self.tm}")
        if not 0.0 <= self.ab <= 1.0:
            raise ValidationError(f"ab must lie in [0, 1], got {self.ab}")
        if not 0.0 <= self.rt < 1.0:
            raise ValidationError(f"rt must lie in [0, 1), got {self.rt}")
        if self.tv not in (0, 1):
            raise ValidationError(f"tv must be 0 or 1, got {self.tv}")

    def as_array(self) -> np.ndarray:
        return np.array([self.tm, self.ab, self.rt, self.tv], dtype=float)


@dataclass(frozen=True)
class AhaConfig:
    """Ring and sector layout of the 17-segment map in coordinate space.

    Rings are selected on ``ab``: ``[0, apex_cap]`` is segment 17,
    ``(apex_cap, apical]`` the apical ring, ``(apical, mid]`` the mid ring and
    ``(mid, 1]`` the basal ring.  Sectors have equal width in ``rt`` and start
    at ``anchor`` (the anterior/septal junction).
    """

    apex_cap: float = 0.1
    apical: float = 1.0 / 3.0
    mid: float = 2.0 / 3.0
    anchor: float = SEPTAL_RT

    def __post_init__(self):
        if not 0.0 < self.apex_cap < self.apical < self.mid < 1.0:
            raise ValidationError("AHA ring thresholds must satisfy 0 < cap < apical < mid < 1")
        if not 0.0 <= self.anchor < 1.0:
            raise ValidationError("AHA anchor must lie in [0, 1)")


DEFAULT_AHA = AhaConfig()


def in_lv(c) -> bool:
    """LV region test: ``tv == 0`` or an RV-flagged point on the septum."""
    tv, rt = _tv_rt(c)
    return bool(tv == 0 or (tv == 1 and rt > SEPTAL_RT))


def in_lv_mask(cob: np.ndarray) -> np.ndarray:
    cob = np.asarray(cob, dtype=float)
    tv = cob[:, TV]
    return (tv == 0) | ((tv == 1) & (cob[:, RT] > SEPTAL_RT))


def rt_delta(a, b):
    """Signed circular difference ``b - a`` wrapped to ``[-0.5, 0.5]``.

    The antipodal case returns ``+0.5``.  Works elementwise on arrays.
    """
    d = np.mod(np.asarray(b, dtype=float) - np.asarray(a, dtype=float), 1.0)
    d = np.where(d > 0.5, d - 1.0, d)
    if d.ndim == 0:
        return float(d)
    return d


def _sector(rt, anchor, n):
    k = np.floor(np.mod(np.asarray(rt, dtype=float) - anchor, 1.0) * n).astype(int)
    # mod can return exactly 1.0 - eps rounding up to n
    return np.minimum(k, n - 1)


def aha_segments(cob: np.ndarray, cfg: AhaConfig = DEFAULT_AHA, strict: bool = True) -> np.ndarray:
    """Vectorised AHA segment ids for an ``(n, 4)`` coordinate array.

    Points outside the LV region raise :class:`DomainError` when ``strict``,
    otherwise they get id 0.
    """
    cob = np.atleast_2d(np.asarray(cob, dtype=float))
    lv = in_lv_mask(cob)
    if strict and not lv.all():
        bad = int(np.flatnonzero(~lv)[0])
        raise DomainError(f"coordinate {cob[bad].tolist()} is on the RV free wall; AHA map is LV-only")
    ab = cob[:, AB]
    rt = cob[:, RT]
    seg = np.zeros(len(cob), dtype=int)

    basal = ab > cfg.mid
    mid = (ab > cfg.apical) & ~basal
    apical = (ab > cfg.apex_cap) & ~basal & ~mid
    cap = ab <= cfg.apex_cap

    k6 = _sector(rt, cfg.anchor, 6)
    k4 = _sector(rt, cfg.anchor, 4)
    # sector 0 starts at the anterior/septal junction: anteroseptal (2, 8) / septal (14)
    seg[basal] = (k6[basal] + 1) % 6 + 1
    seg[mid] = (k6[mid] + 1) % 6 + 7
    seg[apical] = (k4[apical] + 1) % 4 + 13
    seg[cap] = 17
    seg[~lv] = 0
    return seg


def aha_segment(c, cfg: AhaConfig = DEFAULT_AHA) -> int:
    """AHA segment id (1..17) of a single LV coordinate."""
    arr = c.as_array() if isinstance(c, CobivecoCoord) else np.asarray(c, dtype=float)
    return int(aha_segments(arr.reshape(1, 4), cfg, strict=True)[0])


def cobiveco_distance(cob: np.ndarray, target) -> np.ndarray:
    """Euclidean distance in (tm, ab, rt) with periodic rt, ignoring tv."""
    cob = np.asarray(cob, dtype=float)
    target = np.asarray(target, dtype=float)
    d_tm = cob[:, TM] - target[TM]
    d_ab = cob[:, AB] - target[AB]
    d_rt = rt_delta(target[RT], cob[:, RT])
    return np.sqrt(d_tm**2 + d_ab**2 + d_rt**2)


def _tv_rt(c):
    if isinstance(c, CobivecoCoord):
        return c.tv, c.rt
    arr = np.asarray(c, dtype=float)
    return arr[TV], arr[RT]
