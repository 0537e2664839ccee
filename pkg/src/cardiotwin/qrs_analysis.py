"""QRS dissimilarity, duration and morphology criteria, and the scenario sweep."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import NumericalError, ValidationError
from .pseudo_ecg import LEAD_NAMES, EcgRecord

PRECORDIAL = ("V1", "V2", "V3", "V4", "V5", "V6")


@njit(cache=True, nogil=True)
def _dtw(a, b):
    n, m = a.shape[0], b.shape[0]
    cost = np.empty((n, m))
    length = np.empty((n, m), dtype=np.int64)
    for i in range(n):
        for j in range(m):
            d = abs(a[i] - b[j])
            if i == 0 and j == 0:
                cost[i, j] = d
                length[i, j] = 1
                continue
            bc = np.inf
            bl = 0
            # candidates ordered (i-1, j), (i, j-1), (i-1, j-1); ties go to the shorter path
            if i > 0:
                bc = cost[i - 1, j]
                bl = length[i - 1, j]
            if j > 0:
                c = cost[i, j - 1]
                if c < bc or (c == bc and length[i, j - 1] < bl):
                    bc = c
                    bl = length[i, j - 1]
            if i > 0 and j > 0:
                c = cost[i - 1, j - 1]
                if c < bc or (c == bc and length[i - 1, j - 1] < bl):
                    bc = c
                    bl = length[i - 1, j - 1]
            cost[i, j] = bc + d
            length[i, j] = bl + 1
    return cost[n - 1, m - 1], length[n - 1, m - 1]


def dtw_alignment(a, b) -> tuple[float, int]:
    """Minimal accumulated absolute difference and its (shortest) path length."""
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1:
        raise ValidationError("DTW takes one-dimensional series")
    if len(a) == 0 or len(b) == 0:
        raise ValidationError("DTW needs nonempty series")
    c, n = _dtw(a, b)
    return float(c), int(n)


def duration_penalty(dur_a: float, dur_b: float, gamma: float = 1.0) -> float:
    top = max(dur_a, dur_b)
    return 0.0 if top <= 0 else gamma * abs(dur_a - dur_b) / top


def dtw_distance(a, b, dur_a: float | None = None, dur_b: float | None = None, gamma: float = 1.0) -> float:
    """Path-normalised DTW plus a relative duration penalty.

    Durations default to the series lengths.
    """
    c, n = dtw_alignment(a, b)
    dur_a = len(a) if dur_a is None else dur_a
    dur_b = len(b) if dur_b is None else dur_b
    return c / n + duration_penalty(dur_a, dur_b, gamma)


def dtw_record(a: EcgRecord, b: EcgRecord, gamma: float = 1.0) -> np.ndarray:
    """Per-lead DTW between two records, duration penalty from record metadata."""
    if a.leads.shape[0] != b.leads.shape[0]:
        raise ValidationError("records have different lead counts")
    pen = duration_penalty(a.duration, b.duration, gamma)
    out = np.empty(len(a.leads))
    for k, (x, y) in enumerate(zip(a.leads, b.leads)):
        c, n = dtw_alignment(x, y)
        out[k] = c / n + pen
    return out


def qrs_duration(rec: EcgRecord) -> float:
    if not np.any(rec.leads):
        raise NumericalError("QRS duration is undefined for an all-zero record")
    return (rec.offset - rec.onset) * rec.dt_effective


# ---------------------------------------------------------------------------
# morphology criteria


@dataclass(frozen=True)
class Thresholds:
    prolong_ratio: float = 1.2
    prolong_ms: float = 120.0
    q_width_ms: float = 40.0
    q_depth: float = 0.25
    fqrs_amp: float = 0.05
    fqrs_reversals: int = 2


@dataclass
class AbnormalityFlags:
    prolongation: bool
    duration: float
    pathological_q: dict = field(default_factory=dict)
    prwp: bool = False
    fqrs: dict = field(default_factory=dict)

    def any(self) -> bool:
        return self.prolongation or self.prwp or any(self.pathological_q.values()) or any(self.fqrs.values())


def is_prolonged(dur: float, base: float, th: Thresholds = Thresholds()) -> bool:
    return dur > base * th.prolong_ratio or dur > th.prolong_ms


def q_wave(lead, dt: float, th: Thresholds = Thresholds()) -> bool:
    """Initial negative deflection wider than the width limit or deeper than a fraction of R."""
    lead = np.asarray(lead, float)
    r_amp = max(lead.max(), 0.0)
    noise = th.fqrs_amp * np.abs(lead).max()
    sig = np.flatnonzero(np.abs(lead) > noise)
    if len(sig) == 0 or lead[sig[0]] > 0:
        return False
    start = sig[0]
    back = np.flatnonzero(lead[start:] >= 0)
    end = start + (back[0] if len(back) else len(lead) - start)
    width = (end - start) * dt
    depth = -lead[start:end].min()
    return width > th.q_width_ms or depth > th.q_depth * r_amp


def r_amplitudes(rec: EcgRecord) -> np.ndarray:
    return np.array([max(rec.lead(n).max(), 0.0) for n in PRECORDIAL])


def poor_r_progression(r_amp) -> bool:
    """R amplitudes V1..V6: not non-decreasing across V1-V4, or R(V6) > R(V5)."""
    r = np.asarray(r_amp, float)
    bad_rise = bool(np.any(np.diff(r[:4]) < 0))
    bad_tail = len(r) >= 6 and r[5] > r[4]
    return bad_rise or bad_tail


def reversals(lead, amp: float) -> int:
    """Direction changes of the signal, ignoring excursions smaller than ``amp``."""
    lead = np.asarray(lead, float)
    count = 0
    direction = 0  # +1 rising, -1 falling, 0 not yet established
    lo = hi = lead[0]
    for x in lead[1:]:
        lo, hi = min(lo, x), max(hi, x)
        if direction >= 0 and hi - x > amp:
            count += direction == 1
            direction, lo = -1, x
        elif direction <= 0 and x - lo > amp:
            count += direction == -1
            direction, hi = 1, x
    return count


def fragmented(lead, th: Thresholds = Thresholds()) -> bool:
    lead = np.asarray(lead, float)
    return reversals(lead, th.fqrs_amp * max(np.abs(lead).max(), 1e-300)) > th.fqrs_reversals


def _raw_flags(rec: EcgRecord, th: Thresholds):
    q = {n: q_wave(rec.lead(n), rec.dt_effective, th) for n in LEAD_NAMES}
    f = {n: fragmented(rec.lead(n), th) for n in LEAD_NAMES}
    return q, poor_r_progression(r_amplitudes(rec)), f


def detect_abnormalities(rec: EcgRecord, baseline: EcgRecord, thresholds: Thresholds | None = None) -> AbnormalityFlags:
    """Criteria present in ``rec`` and absent from the baseline.

    Each criterion is also available on its own (:func:`q_wave`,
    :func:`poor_r_progression`, :func:`fragmented`, :func:`is_prolonged`).
    """
    th = thresholds or Thresholds()
    dur, base = qrs_duration(rec), qrs_duration(baseline)
    prolonged = dur > base * th.prolong_ratio or (dur > th.prolong_ms >= base)
    q, prwp, f = _raw_flags(rec, th)
    q0, prwp0, f0 = _raw_flags(baseline, th)
    return AbnormalityFlags(
        prolongation=bool(prolonged), duration=dur,
        pathological_q={n: q[n] and not q0[n] for n in LEAD_NAMES},
        prwp=prwp and not prwp0,
        fqrs={n: f[n] and not f0[n] for n in LEAD_NAMES},
    )


# ---------------------------------------------------------------------------
# sweep


@dataclass
class DtwTable:
    scenarios: list
    values: np.ndarray  # (n_scenarios, n_leads)
    durations: np.ndarray  # ms
    baseline_duration: float
    leads: tuple = LEAD_NAMES

    @property
    def dtw_max(self) -> np.ndarray:
        return self.values.max(axis=1)

    @property
    def dtw_avg(self) -> np.ndarray:
        return self.values.mean(axis=1)

    @property
    def representative(self) -> np.ndarray:
        """Leads whose DTW exceeds that scenario's median."""
        return self.values > np.median(self.values, axis=1, keepdims=True)

    def row(self, name: str) -> int:
        return self.scenarios.index(name)

    def avg(self, name: str) -> float:
        return float(self.dtw_avg[self.row(name)])

    def duration(self, name: str) -> float:
        return float(self.durations[self.row(name)])

    def to_csv(self, header: dict | None = None) -> str:
        buf = io.StringIO()
        for k, v in (header or {}).items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", *self.leads, "dtw_max", "dtw_avg", "qrs_ms", "representative"])
        rep = self.representative
        for i, s in enumerate(self.scenarios):
            w.writerow([s, *(f"{v:.10f}" for v in self.values[i]), f"{self.dtw_max[i]:.10f}",
                        f"{self.dtw_avg[i]:.10f}", f"{self.durations[i]:.4f}",
                        " ".join(n for n, r in zip(self.leads, rep[i]) if r)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DtwTable":
        rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))]
        head, body = rows[0], rows[1:]
        leads = tuple(head[1:head.index("dtw_max")])
        vals = np.array([[float(v) for v in r[1:1 + len(leads)]] for r in body])
        durs = np.array([float(r[head.index("qrs_ms")]) for r in body])
        return cls([r[0] for r in body], vals, durs, float("nan"), leads)


def sensitivity_sweep(model, scenarios, gamma: float = 1.0, jobs: int = 1):
    """Simulate the baseline and every scenario; DTW of each lead against the baseline.

    ``model`` is a :class:`cardiotwin.forward.ForwardModel`.  Returns the
    table and the records (baseline first), in catalogue order regardless
    of ``jobs``.
    """
    from .scenario import CvConfig

    base = model.run(None, scenarios[0].cv if scenarios else CvConfig(), "baseline").record
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            recs = list(ex.map(lambda s: model.run_scenario(s).record, scenarios))
    else:
        recs = [model.run_scenario(s).record for s in scenarios]
    vals = np.array([dtw_record(r, base, gamma) for r in recs]).reshape(len(recs), len(LEAD_NAMES))
    durs = np.array([qrs_duration(r) for r in recs])
    table = DtwTable([s.name for s in scenarios], vals, durs, qrs_duration(base))
    return table, [base, *recs]


# ---------------------------------------------------------------------------
# heatmap


def _colour(v: float, vmax: float) -> str:
    x = 0.0 if vmax <= 0 else min(max(v / vmax, 0.0), 1.0)
    r = int(round(255 * x))
    g = int(round(255 * (1 - 0.8 * x)))
    b = int(round(255 * (1 - x)))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(table: DtwTable, title: str = "QRS dissimilarity to baseline") -> str:
    cell_w, cell_h, left, top = 48, 18, 230, 40
    cols = list(table.leads) + ["max", "avg"]
    data = np.c_[table.values, table.dtw_max, table.dtw_avg]
    vmax = float(data.max()) if data.size else 0.0
    width = left + cell_w * len(cols) + 10
    height = top + cell_h * len(table.scenarios) + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
           f'<text x="{left}" y="14" font-size="13">{title}</text>']
    for j, c in enumerate(cols):
        out.append(f'<text x="{left + j * cell_w + cell_w / 2}" y="{top - 6}" text-anchor="middle">{c}</text>')
    for i, s in enumerate(table.scenarios):
        y = top + i * cell_h
        out.append(f'<text x="{left - 6}" y="{y + 13}" text-anchor="end">{s}</text>')
        for j in range(len(cols)):
            v = data[i, j]
            out.append(f'<rect x="{left + j * cell_w}" y="{y}" width="{cell_w}" height="{cell_h}" '
                       f'fill="{_colour(v, vmax)}" stroke="#ffffff"/>')
            out.append(f'<text x="{left + j * cell_w + cell_w / 2}" y="{y + 13}" text-anchor="middle">{v:.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def traces_svg(records, title: str = "QRS") -> str:
    """Lead traces, one panel per lead, every record overlaid."""
    w, h, pad = 220, 90, 20
    palette = ("#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e")
    width = 4 * (w + pad) + pad
    height = 2 * (h + pad) + 40
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
           f'<text x="{pad}" y="16" font-size="13">{title}</text>']
    for k, lead in enumerate(LEAD_NAMES):
        ox = pad + (k % 4) * (w + pad)
        oy = 30 + (k // 4) * (h + pad)
        out.append(f'<rect x="{ox}" y="{oy}" width="{w}" height="{h}" fill="none" stroke="#cccccc"/>')
        out.append(f'<text x="{ox + 4}" y="{oy + 12}">{lead}</text>')
        for r_i, rec in enumerate(records):
            y = rec.lead(lead)
            xs = ox + np.linspace(0, w, len(y))
            ys = oy + h / 2 - y * (h / 2 - 4)
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{palette[r_i % len(palette)]}" stroke-width="1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
