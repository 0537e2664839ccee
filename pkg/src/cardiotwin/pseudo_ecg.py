"""Pseudo-ECG synthesis from activation maps.

Each node follows a depolarisation-only template: resting at -85 mV, a
linear upstroke to +25 mV, then a plateau.  The extracellular potential at
an electrode is the volume integral of ``-grad(Vm) . grad(1/r)``, evaluated
with piecewise-linear ``Vm`` on every tet.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .eikonal import ActivationMap
from .errors import FormatError, GeometryError, NumericalError, ValidationError
from .geometry import Mesh

V_REST = -85.0
V_PLATEAU = 25.0

ELECTRODE_NAMES = ("LA", "RA", "LL", "RL", "V1", "V2", "V3", "V4", "V5", "V6")
LEAD_NAMES = ("I", "II", "V1", "V2", "V3", "V4", "V5", "V6")
N_LEADS = len(LEAD_NAMES)


@dataclass(frozen=True)
class EcgConfig:
    dt: float = 0.5  # ms
    upstroke: float = 2.0  # ms
    lumped_constant: float = 1.0  # a^2 sigma_i / (4 sigma_e)
    l_qrs: int = 512
    crop_fraction: float = 0.02

    def __post_init__(self):
        if self.dt <= 0 or self.upstroke <= 0:
            raise ValidationError("dt and upstroke must be positive")
        if self.l_qrs < 2:
            raise ValidationError("l_qrs must be at least 2")
        if not 0 <= self.crop_fraction < 1:
            raise ValidationError("crop_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class ElectrodeSet:
    positions: dict

    def __post_init__(self):
        pos = {k: np.asarray(v, float).reshape(3) for k, v in self.positions.items()}
        missing = set(ELECTRODE_NAMES) - set(pos)
        if missing:
            raise ValidationError(f"missing electrodes: {sorted(missing)}")
        if not all(np.isfinite(p).all() for p in pos.values()):
            raise ValidationError("electrode positions must be finite")
        object.__setattr__(self, "positions", {k: pos[k] for k in ELECTRODE_NAMES})

    def array(self) -> np.ndarray:
        return np.stack([self.positions[k] for k in ELECTRODE_NAMES])

    def translated(self, offset) -> "ElectrodeSet":
        return ElectrodeSet({k: p + np.asarray(offset, float) for k, p in self.positions.items()})


@dataclass
class EcgRecord:
    """Normalised, resampled QRS: ``leads`` has shape (8, l_qrs)."""

    leads: np.ndarray
    dt_effective: float
    onset: int = 0
    offset: int = -1
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.leads = np.asarray(self.leads, float)
        if self.leads.ndim != 2 or self.leads.shape[0] != N_LEADS:
            raise ValidationError(f"an ECG record needs {N_LEADS} leads")
        if self.offset < 0:
            self.offset = self.leads.shape[1] - 1

    @property
    def length(self) -> int:
        return self.leads.shape[1]

    def lead(self, name: str) -> np.ndarray:
        return self.leads[LEAD_NAMES.index(name)]

    @property
    def duration(self) -> float:
        return (self.offset - self.onset) * self.dt_effective


# ---------------------------------------------------------------------------


def transmembrane_trace(atm: ActivationMap | np.ndarray, t: float, cfg: EcgConfig | None = None) -> np.ndarray:
    """Per-node ``Vm`` (mV) at time ``t`` (same clock as the activation map)."""
    cfg = cfg or EcgConfig()
    tau = atm.times if isinstance(atm, ActivationMap) else np.asarray(atm, float)
    with np.errstate(invalid="ignore"):
        h = np.clip((t - tau) / cfg.upstroke, 0.0, 1.0)
    h = np.where(np.isfinite(tau), h, 0.0)
    return V_REST + (V_PLATEAU - V_REST) * h


def _gradients(mesh: Mesh):
    """Barycentric basis gradients (m, 4, 3) and volumes."""
    x = mesh.nodes[mesh.tets]
    J = (x[:, 1:] - x[:, :1]).transpose(0, 2, 1)  # columns are edge vectors
    Jinv = np.linalg.inv(J)
    g = np.empty((len(x), 4, 3))
    g[:, 1:] = Jinv
    g[:, 0] = -Jinv.sum(axis=1)
    return g, np.abs(mesh.signed_volumes)


def lead_field(mesh: Mesh, positions: np.ndarray, floor: float | None = None) -> np.ndarray:
    """Coefficients ``c[e, k, i]`` (tet, electrode, local node 1..3).

    ``phi_k(t) = sum_e sum_i c[e, k, i] * (Vm_i - Vm_0)``; writing the tet
    gradient through differences to its first node makes a uniform ``Vm``
    contribute exactly zero.
    """
    positions = np.atleast_2d(np.asarray(positions, float))
    floor = mesh.mean_edge_length if floor is None else floor
    g, vol = _gradients(mesh)
    c = mesh.centroids
    out = np.empty((mesh.n_tets, len(positions), 3))
    for k, p in enumerate(positions):
        d = c - p
        r = np.linalg.norm(d, axis=1)
        if r.min() < floor:
            raise GeometryError(
                f"electrode {k} at {p.tolist()} is within {r.min():.3g} mm of the myocardium")
        grad_inv_r = -d / r[:, None] ** 3  # gradient of 1/r w.r.t. the source point
        out[:, k, :] = -vol[:, None] * np.einsum("eij,ej->ei", g[:, 1:], grad_inv_r)
    return out


@njit(cache=True, nogil=True)
def _accumulate(tets, tau, coef, dt, upstroke, n_steps):
    m = tets.shape[0]
    n_el = coef.shape[1]
    phi = np.zeros((n_steps, n_el))
    h = np.empty(4)
    for e in range(m):
        lo = np.inf
        hi = -np.inf
        for a in range(4):
            ta = tau[tets[e, a]]
            if ta < lo:
                lo = ta
            if ta > hi:
                hi = ta
        if lo == hi or lo == np.inf:
            continue
        k0 = int(np.floor(lo / dt))
        if hi == np.inf:
            k1 = n_steps - 1
        else:
            k1 = min(int(np.ceil((hi + upstroke) / dt)), n_steps - 1)
        for k in range(max(k0, 0), k1 + 1):
            t = k * dt
            for a in range(4):
                ta = tau[tets[e, a]]
                if ta == np.inf:
                    h[a] = 0.0
                else:
                    s = (t - ta) / upstroke
                    h[a] = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
            for j in range(n_el):
                acc = 0.0
                for a in range(3):
                    acc += coef[e, j, a] * (h[a + 1] - h[0])
                phi[k, j] += acc
    return phi


def electrode_potentials(mesh: Mesh, atm: ActivationMap, positions, cfg: EcgConfig | None = None,
                         coef: np.ndarray | None = None):
    """Raw potentials at each position, shape (n_steps, n_electrodes), and the time axis.

    Time zero is the earliest finite activation; the window ends one
    upstroke after the latest one.
    """
    cfg = cfg or EcgConfig()
    tau = np.asarray(atm.times, float)
    finite = np.isfinite(tau)
    if not finite.any():
        raise NumericalError("activation map has no finite times")
    tau = np.where(finite, tau - tau[finite].min(), np.inf)
    n_steps = int(np.ceil((tau[finite].max() + cfg.upstroke) / cfg.dt)) + 2
    if coef is None:
        coef = lead_field(mesh, positions)
    phi = _accumulate(mesh.tets, tau, coef, cfg.dt, cfg.upstroke, n_steps)
    phi *= V_PLATEAU - V_REST
    return np.arange(n_steps) * cfg.dt, phi


def derive_leads(potentials: dict) -> np.ndarray:
    """Limb leads and Wilson-referenced precordial leads, keyed by electrode name."""
    missing = set(ELECTRODE_NAMES) - set(potentials)
    if missing:
        raise ValidationError(f"missing electrode series: {sorted(missing)}")
    series = {k: np.asarray(potentials[k], float) for k in ELECTRODE_NAMES}
    if len({s.shape for s in series.values()}) != 1:
        raise ValidationError("electrode series must have equal length")
    wct = (series["LA"] + series["RA"] + series["LL"]) / 3.0
    leads = [series["LA"] - series["RA"], series["LL"] - series["RA"]]
    leads += [series[f"V{i}"] - wct for i in range(1, 7)]
    return np.stack(leads)


def crop_resample(leads: np.ndarray, dt: float, cfg: EcgConfig | None = None, name: str = "") -> EcgRecord:
    """Crop to the QRS window, resample to ``l_qrs`` samples and normalise to unit peak."""
    cfg = cfg or EcgConfig()
    leads = np.asarray(leads, float)
    peak = np.abs(leads).max() if leads.size else 0.0
    if peak == 0.0:
        return EcgRecord(np.zeros((N_LEADS, cfg.l_qrs)), 0.0, 0, cfg.l_qrs - 1, name)
    active = np.flatnonzero((np.abs(leads) > cfg.crop_fraction * peak).any(axis=0))
    on, off = int(active[0]), int(active[-1])
    if off == on:
        off = min(on + 1, leads.shape[1] - 1)
        on = off - 1
    src = np.arange(on, off + 1)
    dst = np.linspace(on, off, cfg.l_qrs)
    res = np.stack([np.interp(dst, src, lead[on:off + 1]) for lead in leads])
    res /= np.abs(res).max()
    dt_eff = (off - on) * dt / (cfg.l_qrs - 1)
    return EcgRecord(res, dt_eff, 0, cfg.l_qrs - 1, name, {"raw_onset_ms": on * dt, "raw_offset_ms": off * dt})


def simulate_qrs(mesh: Mesh, atm: ActivationMap, electrodes: ElectrodeSet, cfg: EcgConfig | None = None,
                 name: str = "", coef: np.ndarray | None = None, return_raw: bool = False):
    """8-lead normalised QRS record for an activation map.

    With ``return_raw`` the un-normalised leads (scaled by the lumped
    constant) are returned as well.
    """
    cfg = cfg or EcgConfig()
    _, phi = electrode_potentials(mesh, atm, electrodes.array(), cfg, coef)
    leads = derive_leads({k: phi[:, i] for i, k in enumerate(ELECTRODE_NAMES)})
    rec = crop_resample(leads, cfg.dt, cfg, name)
    if return_raw:
        return rec, cfg.lumped_constant * leads
    return rec


# torso stations: azimuth (deg, 0 = anterior +y, 90 = left +x) and height in
# units of the heart's half-height above the bbox centre
_STATIONS = {
    "RA": (-90.0, 3.0), "LA": (90.0, 3.0), "LL": (150.0, -3.0), "RL": (-150.0, -3.0),
    "V1": (-15.0, 0.0), "V2": (15.0, 0.0), "V3": (35.0, 0.0),
    "V4": (55.0, 0.0), "V5": (72.0, 0.0), "V6": (90.0, 0.0),
}


def default_electrodes(mesh: Mesh, scale: float = 3.0) -> ElectrodeSet:
    """Electrodes on a virtual torso cylinder around the heart's bounding box.

    The cylinder axis runs along z through the bbox centre with radius
    ``scale`` times the largest horizontal half-width.
    """
    lo, hi = mesh.bbox
    centre = (lo + hi) / 2
    half = (hi - lo) / 2
    radius = scale * max(half[0], half[1])
    pos = {}
    for name, (az, zf) in _STATIONS.items():
        a = np.deg2rad(az)
        pos[name] = centre + np.array([radius * np.sin(a), radius * np.cos(a), zf * half[2]])
    return ElectrodeSet(pos)


# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_record(path, rec: EcgRecord, extra: dict | None = None) -> Path:
    path = Path(path)
    meta = {"dt_effective": _fmt(rec.dt_effective), "onset": rec.onset, "offset": rec.offset,
            "scenario": rec.name}
    meta.update(extra or {})
    lines = ["# " + " ".join(f"{k}={v}" for k, v in meta.items()),
             "sample," + ",".join(LEAD_NAMES)]
    for i in range(rec.length):
        lines.append(f"{i}," + ",".join(_fmt(v) for v in rec.leads[:, i]))
    path.write_text("\n".join(lines) + "\n")
    return path


def load_record(path) -> EcgRecord:
    text = Path(path).read_text().splitlines()
    meta = {}
    rows = []
    header = None
    for line in text:
        if line.startswith("#"):
            for tok in line[1:].split():
                k, _, v = tok.partition("=")
                meta[k] = v
        elif header is None:
            header = line.strip().split(",")
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    if header != ["sample", *LEAD_NAMES]:
        raise FormatError(f"unexpected ECG header {header}")
    arr = np.asarray(rows)
    try:
        rec = EcgRecord(arr[:, 1:].T, float(meta.get("dt_effective", 1.0)), int(meta.get("onset", 0)),
                        int(meta.get("offset", len(arr) - 1)), meta.get("scenario", ""))
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed ECG file: {exc}") from exc
    rec.meta = {k: v for k, v in meta.items() if k not in ("dt_effective", "onset", "offset", "scenario")}
    return rec
