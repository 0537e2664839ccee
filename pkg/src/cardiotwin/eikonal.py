"""Anisotropic Eikonal activation solver and a graph shortest-path oracle.

Times are in ms, lengths in mm and speeds are given in cm/s
(1 cm/s = 0.01 mm/ms).
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numba import njit
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .cobiveco import TV, cobiveco_distance
from .errors import NumericalError, ValidationError
from .geometry import LV_ENDO, RV_ENDO, Mesh

log = logging.getLogger(__name__)

CM_PER_S = 0.01  # mm/ms
DEFAULT_TOL = 1e-3


@dataclass(frozen=True)
class RootNodes:
    """Earliest-activation sites and their Purkinje delays (ms)."""

    nodes: tuple
    delays: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))
        object.__setattr__(self, "delays", tuple(float(d) for d in self.delays))
        if not self.nodes:
            raise ValidationError("at least one root node is required")
        if len(self.nodes) != len(self.delays):
            raise ValidationError("one delay per root node is required")
        if min(self.delays) < 0:
            raise ValidationError("root delays must be nonnegative")

    @classmethod
    def simultaneous(cls, nodes):
        return cls(tuple(nodes), (0.0,) * len(nodes))

    def initial_times(self) -> np.ndarray:
        d = np.asarray(self.delays)
        return d - d.min()

    def check(self, mesh: Mesh, require_endo: bool = True) -> "RootNodes":
        idx = np.asarray(self.nodes)
        if idx.min() < 0 or idx.max() >= mesh.n_nodes:
            raise ValidationError("root node index out of range")
        if require_endo and not np.isin(mesh.surface_tags[idx], (LV_ENDO, RV_ENDO)).all():
            raise ValidationError("root nodes must lie on an endocardial surface")
        return self


@dataclass(frozen=True)
class ActivationMap:
    times: np.ndarray

    @property
    def unreachable(self) -> np.ndarray:
        return np.flatnonzero(~np.isfinite(self.times))

    @property
    def max_time(self) -> float:
        t = self.times[np.isfinite(self.times)]
        return float(t.max()) if len(t) else 0.0


# targets (tm, ab, rt, tv): four LV sites then three RV sites
DEFAULT_ROOT_TARGETS = (
    (0.0, 0.50, 0.83, 0),   # LV mid-septum
    (0.0, 0.80, 0.62, 0),   # LV basal-anterior paraseptal
    (0.0, 0.50, 0.10, 0),   # LV mid-posterior
    (0.0, 0.50, 0.22, 0),   # LV mid-posterior
    (0.0, 0.50, 0.83, 1),   # RV mid-septum
    (0.0, 0.55, 0.20, 1),   # RV free wall
    (0.0, 0.50, 0.45, 1),   # RV free wall
)


def default_roots(mesh: Mesh, targets=DEFAULT_ROOT_TARGETS, delays=None) -> RootNodes:
    """Endocardial node nearest each target (periodic rt), searched on the target's ventricle."""
    endo = np.isin(mesh.surface_tags, (LV_ENDO, RV_ENDO))
    if not endo.any():
        raise ValidationError("mesh has no endocardial nodes")
    picked = []
    for tgt in targets:
        cand = np.flatnonzero(endo & (mesh.cobiveco[:, TV] == tgt[3]))
        if len(cand) == 0:
            cand = np.flatnonzero(endo)
        d = cobiveco_distance(mesh.cobiveco[cand], tgt)
        picked.append(int(cand[np.argmin(d)]))
    delays = delays if delays is not None else (0.0,) * len(picked)
    return RootNodes(tuple(picked), tuple(delays))


def metric_tensors(frames: np.ndarray, speeds_cm_s: np.ndarray) -> np.ndarray:
    """Inverse speed-squared tensors ``F^T diag(1/v^2) F`` per element (ms^2/mm^2)."""
    v = np.asarray(speeds_cm_s, float) * CM_PER_S
    if not (v > 0).all():
        raise ValidationError("conduction speeds must be positive")
    return np.einsum("eki,ek,ekj->eij", frames, 1.0 / v**2, frames)


@njit(cache=True, nogil=True)
def _qf(D, a, b):
    s = 0.0
    for i in range(3):
        for j in range(3):
            s += a[i] * D[i, j] * b[j]
    return s


@njit(cache=True, nogil=True)
def _local_solve(x, xa, xb, xc, ta, tb, tc, D):
    """Minimum arrival time at ``x`` through the triangle (a, b, c) or its edges/vertices."""
    best = np.inf
    xs = (xa, xb, xc)
    ts = (ta, tb, tc)
    for i in range(3):
        if ts[i] < np.inf:
            e = x - xs[i]
            cand = ts[i] + np.sqrt(_qf(D, e, e))
            if cand < best:
                best = cand
    for i in range(3):
        for j in range(i + 1, 3):
            if ts[i] == np.inf or ts[j] == np.inf:
                continue
            e = x - xs[i]
            d = xs[j] - xs[i]
            A = _qf(D, d, d)
            B = _qf(D, e, d)
            C = _qf(D, e, e)
            dt = ts[j] - ts[i]
            if A <= dt * dt:
                continue
            K = A * C - B * B
            if K < 0.0:
                K = 0.0
            u = np.sqrt(dt * dt * K / (A - dt * dt))
            if dt > 0:
                u = -u
            s = (u + B) / A
            if 0.0 < s < 1.0:
                g2 = A * s * s - 2.0 * B * s + C
                cand = ts[i] + s * dt + np.sqrt(max(g2, 0.0))
                if cand < best:
                    best = cand
    if ta < np.inf and tb < np.inf and tc < np.inf:
        d1 = xb - xa
        d2 = xc - xa
        e = x - xa
        q00 = _qf(D, d1, d1)
        q01 = _qf(D, d1, d2)
        q11 = _qf(D, d2, d2)
        det = q00 * q11 - q01 * q01
        if det > 1e-10 * q00 * q11:
            i00 = q11 / det
            i01 = -q01 / det
            i11 = q00 / det
            b0 = _qf(D, d1, e)
            b1 = _qf(D, d2, e)
            C = _qf(D, e, e)
            g0 = tb - ta
            g1 = tc - ta
            qd = g0 * (i00 * g0 + i01 * g1) + g1 * (i01 * g0 + i11 * g1)
            if qd < 1.0:
                K = C - (b0 * (i00 * b0 + i01 * b1) + b1 * (i01 * b0 + i11 * b1))
                if K < 0.0:
                    K = 0.0
                g = np.sqrt(K / (1.0 - qd))
                r0 = b0 - g * g0
                r1 = b1 - g * g1
                s0 = i00 * r0 + i01 * r1
                s1 = i01 * r0 + i11 * r1
                if s0 >= 0.0 and s1 >= 0.0 and s0 + s1 <= 1.0:
                    cand = ta + s0 * g0 + s1 * g1 + g
                    if cand < best:
                        best = cand
    return best


@njit(cache=True, nogil=True)
def _march(nodes, tets, dmat, ptr, idx, roots, root_t, tol):
    n = nodes.shape[0]
    t = np.full(n, np.inf)
    fixed = np.zeros(n, dtype=np.bool_)
    for k in range(roots.shape[0]):
        r = roots[k]
        if root_t[k] < t[r]:
            t[r] = root_t[k]
        fixed[r] = True
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for k in range(roots.shape[0]):
        heapq.heappush(heap, (t[roots[k]], np.int64(roots[k])))
    others = np.empty(3, dtype=np.int64)
    pops = 0
    while len(heap) > 0:
        tv, v = heapq.heappop(heap)
        if tv > t[v]:
            continue
        pops += 1
        for kk in range(ptr[v], ptr[v + 1]):
            e = idx[kk]
            for a in range(4):
                tgt = tets[e, a]
                if tgt == v or fixed[tgt]:
                    continue
                m = 0
                for b in range(4):
                    if b != a:
                        others[m] = tets[e, b]
                        m += 1
                new = _local_solve(nodes[tgt], nodes[others[0]], nodes[others[1]], nodes[others[2]],
                                   t[others[0]], t[others[1]], t[others[2]], dmat[e])
                if new < t[tgt] - tol:
                    t[tgt] = new
                    heapq.heappush(heap, (new, tgt))
    return t, pops


def solve_activation(mesh: Mesh, speeds, roots: RootNodes, tol: float = DEFAULT_TOL,
                     check_roots: bool = True) -> ActivationMap:
    """Activation times from the anisotropic Eikonal equation.

    Label-correcting active-list iteration ordered by tentative time: a node
    is re-queued whenever a local tetrahedral update lowers it by more than
    ``tol`` ms.  Root nodes are pinned to their normalised delays.
    """
    speeds = np.asarray(speeds, float)
    if speeds.shape != (mesh.n_tets, 3):
        raise ValidationError("speeds must be an (n_tets, 3) array")
    roots.check(mesh, require_endo=check_roots)
    dmat = metric_tensors(mesh.frames, speeds)
    ptr, idx = mesh.node_tets
    t, _ = _march(mesh.nodes, mesh.tets, dmat, ptr, idx,
                  np.asarray(roots.nodes, np.int64), roots.initial_times(), float(tol))
    atm = ActivationMap(t)
    if len(atm.unreachable):
        log.warning("%d nodes are unreachable from the root nodes", len(atm.unreachable))
    return atm


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------


def _lattice(r):
    return np.array([m for m in np.ndindex(r + 1, r + 1, r + 1, r + 1) if sum(m) == r], int)


def oracle_activation(mesh: Mesh, speeds, roots: RootNodes, refine: int = 1) -> ActivationMap:
    """Dijkstra shortest travel time on a refined graph of each tet.

    ``refine = r`` places the barycentric lattice of order ``r`` in every tet
    and connects all lattice points of the same tet (edges, face chords and
    interior chords); straight-segment cost uses that tet's speed tensor.
    ``r = 1`` is the plain edge graph.
    """
    if refine < 1:
        raise ValidationError("refine must be >= 1")
    speeds = np.asarray(speeds, float)
    dmat = metric_tensors(mesh.frames, speeds)
    lat = _lattice(refine)
    P = len(lat)
    tets = mesh.tets
    M = len(tets)

    # global identity of a lattice point: its (vertex, weight) pairs sorted by vertex
    verts = np.broadcast_to(tets[:, None, :], (M, P, 4))
    wts = np.broadcast_to(lat[None], (M, P, 4))
    vkey = np.where(wts > 0, verts, -1)
    order = np.argsort(vkey, axis=2)
    vkey = np.take_along_axis(vkey, order, axis=2)
    wkey = np.take_along_axis(np.where(wts > 0, wts, 0), order, axis=2)
    keys = np.concatenate([vkey, wkey], axis=2).reshape(M * P, 8)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(M, P)
    pos = (lat[None, :, :, None] * mesh.nodes[tets][:, None, :, :]).sum(axis=2) / refine

    pairs = np.array(list(combinations(range(P), 2)), int)
    a = inv[:, pairs[:, 0]].ravel()
    b = inv[:, pairs[:, 1]].ravel()
    d = (pos[:, pairs[:, 1]] - pos[:, pairs[:, 0]])
    cost = np.sqrt(np.einsum("epi,eij,epj->ep", d, dmat, d)).ravel()

    lo, hi = np.minimum(a, b), np.maximum(a, b)
    n_pts = len(uniq)
    key = lo * n_pts + hi
    srt = np.argsort(key, kind="stable")
    key, cost = key[srt], cost[srt]
    first = np.r_[True, key[1:] != key[:-1]]
    starts = np.flatnonzero(first)
    cost = np.minimum.reduceat(cost, starts)
    key = key[starts]
    lo, hi = key // n_pts, key % n_pts

    # vertex lattice points: a single nonzero weight equal to refine
    # after sorting, -1 placeholders come first, so a vertex point keeps only column 3
    is_vertex = (uniq[:, :3] == -1).all(axis=1)
    point_of_node = np.empty(mesh.n_nodes, int)
    point_of_node[uniq[is_vertex, 3]] = np.flatnonzero(is_vertex)

    # super source linked to every root with an offset so zero delays stay edges
    src = n_pts
    offset = 1.0
    root_pts = point_of_node[np.asarray(roots.nodes)]
    rows = np.r_[lo, hi, np.full(len(root_pts), src)]
    cols = np.r_[hi, lo, root_pts]
    data = np.r_[cost, cost, roots.initial_times() + offset]
    g = sparse.csr_matrix((data, (rows, cols)), shape=(n_pts + 1, n_pts + 1))
    dist = dijkstra(g, directed=True, indices=src)
    t = dist[point_of_node] - offset
    t[np.asarray(roots.nodes)] = np.minimum(t[np.asarray(roots.nodes)], roots.initial_times())
    return ActivationMap(t)


def require_reachable(atm: ActivationMap) -> ActivationMap:
    if len(atm.unreachable):
        raise NumericalError(f"{len(atm.unreachable)} nodes were never activated")
    return atm
