"""Tetrahedral biventricular meshes: container, phantom generator, file I/O."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay

from .cobiveco import AB, RT, TM, TV
from .errors import (
    DegenerateGeometryError,
    FormatError,
    GeometryError,
    ResolutionError,
    ValidationError,
)

log = logging.getLogger(__name__)

SURFACE_TAGS = ("none", "lv_endo", "rv_endo", "epi")
NONE, LV_ENDO, RV_ENDO, EPI = range(4)

# pairs of local vertex indices forming the 6 edges of a tet
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(eq=False)
class Mesh:
    """Immutable tetrahedral mesh with coordinates, fibre frames and surface tags.

    ``frames[e]`` holds the fibre, sheet and sheet-normal unit vectors of
    element ``e`` as its rows.  ``cobiveco`` columns are ``tm, ab, rt, tv``.
    """

    nodes: np.ndarray
    tets: np.ndarray
    frames: np.ndarray
    cobiveco: np.ndarray
    surface_tags: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = _readonly(self.nodes, float).reshape(-1, 3)
        self.tets = _readonly(self.tets, np.int64).reshape(-1, 4)
        self.frames = _readonly(self.frames, float).reshape(-1, 3, 3)
        self.cobiveco = _readonly(self.cobiveco, float).reshape(-1, 4)
        self.surface_tags = _readonly(self.surface_tags, np.int8).reshape(-1)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @cached_property
    def signed_volumes(self) -> np.ndarray:
        x = self.nodes[self.tets]
        jac = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=2)
        return np.linalg.det(jac) / 6.0

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.tets].mean(axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        e = self.tets[:, TET_EDGES].reshape(-1, 2)
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def mean_edge_length(self) -> float:
        e = self.edges
        return float(np.linalg.norm(self.nodes[e[:, 0]] - self.nodes[e[:, 1]], axis=1).mean())

    @cached_property
    def node_tets(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR incidence ``(indptr, tet_ids)`` from nodes to the tets containing them."""
        rows = self.tets.reshape(-1)
        cols = np.repeat(np.arange(self.n_tets), 4)
        order = np.argsort(rows, kind="stable")
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return np.cumsum(indptr), cols[order].astype(np.int64)

    @cached_property
    def node_neighbors(self) -> tuple[np.ndarray, np.ndarray]:
        adj = self.adjacency.tocsr()
        return adj.indptr.astype(np.int64), adj.indices.astype(np.int64)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        e = self.edges
        n = self.n_nodes
        data = np.ones(2 * len(e))
        adj = sparse.coo_matrix(
            (data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n)
        ).tocsr()
        adj.sort_indices()
        return adj

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.nodes.min(axis=0), self.nodes.max(axis=0)

    def nodes_with_tag(self, *names: str) -> np.ndarray:
        codes = [SURFACE_TAGS.index(n) for n in names]
        return np.flatnonzero(np.isin(self.surface_tags, codes))

    def validate(self) -> "Mesh":
        """Check all structural invariants; raises on the first violation."""
        n = self.n_nodes
        if n == 0 or self.n_tets == 0:
            raise GeometryError("mesh has no nodes or no tets")
        if not np.isfinite(self.nodes).all():
            raise GeometryError("non-finite node coordinates")
        if self.tets.min() < 0 or self.tets.max() >= n:
            raise GeometryError("tet references a node index out of range")
        if len(self.frames) != self.n_tets:
            raise ValidationError("one frame per tet is required")
        if len(self.cobiveco) != n or len(self.surface_tags) != n:
            raise ValidationError("cobiveco and surface_tags need one entry per node")
        vol = self.signed_volumes
        if not (vol > 0).all():
            bad = int(np.flatnonzero(~(vol > 0))[0])
            raise GeometryError(f"tet {bad} has non-positive signed volume {vol[bad]:.3g}")
        gram = np.einsum("eij,ekj->eik", self.frames, self.frames)
        if np.abs(gram - np.eye(3)).max() > 1e-6:
            raise ValidationError("element frames are not orthonormal within 1e-6")
        cob = self.cobiveco
        for col, name in ((TM, "tm"), (AB, "ab")):
            v = cob[:, col]
            if not ((v >= 0) & (v <= 1)).all():
                raise ValidationError(f"{name} must lie in [0, 1]")
        if not ((cob[:, RT] >= 0) & (cob[:, RT] < 1)).all():
            raise ValidationError("rt must lie in [0, 1)")
        if not np.isin(cob[:, TV], (0.0, 1.0)).all():
            raise ValidationError("tv must be 0 or 1")
        if self.surface_tags.min() < 0 or self.surface_tags.max() >= len(SURFACE_TAGS):
            raise ValidationError("unknown surface tag code")
        n_comp, _ = connected_components(self.adjacency, directed=False)
        used = np.zeros(n, dtype=bool)
        used[self.tets.reshape(-1)] = True
        if n_comp != 1 or not used.all():
            raise GeometryError(f"mesh must be a single connected component (found {n_comp})")
        return self

    def equals(self, other: "Mesh") -> bool:
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.tets, other.tets)
            and np.array_equal(self.frames, other.frames)
            and np.array_equal(self.cobiveco, other.cobiveco)
            and np.array_equal(self.surface_tags, other.surface_tags)
        )

    def translated(self, offset) -> "Mesh":
        return Mesh(self.nodes + np.asarray(offset, float), self.tets, self.frames,
                    self.cobiveco, self.surface_tags, dict(self.meta))


# ---------------------------------------------------------------------------
# Phantom generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhantomSpec:
    """Two truncated ellipsoidal shells (LV and an RV crescent on its -x side).

    Semi-axes are ``(x, y, z)`` in mm; the LV is centred at the origin with its
    apex towards -z, the RV shells are centred at ``(rv_offset, 0, 0)``.
    """

    lv_outer: tuple = (45.0, 45.0, 80.0)
    lv_inner: tuple = (35.0, 35.0, 70.0)
    rv_outer: tuple = (36.0, 50.0, 70.0)
    rv_inner: tuple = (30.0, 44.0, 64.0)
    rv_offset: float = -30.0
    base_z: float = 10.0
    h: float = 4.0
    helix_endo: float = 60.0
    helix_epi: float = -60.0

    def check(self):
        for name in ("lv_outer", "lv_inner", "rv_outer", "rv_inner"):
            if len(getattr(self, name)) != 3 or min(getattr(self, name)) <= 0:
                raise ValidationError(f"{name} needs three positive semi-axes")
        if self.h <= 0:
            raise ValidationError("edge length h must be positive")
        lv_t = np.subtract(self.lv_outer, self.lv_inner)
        rv_t = np.subtract(self.rv_outer, self.rv_inner)
        if lv_t.min() <= 0 or rv_t.min() <= 0:
            raise DegenerateGeometryError("inner semi-axes must be strictly smaller than outer ones")
        if self.h > min(lv_t.min(), rv_t.min()):
            raise ResolutionError(
                f"h={self.h} mm exceeds the thinnest wall ({min(lv_t.min(), rv_t.min())} mm)")
        if not -self.lv_inner[2] < self.base_z < self.lv_inner[2]:
            raise ValidationError("base plane must cut the LV cavity")
        return self

    @property
    def lv_center(self):
        return np.zeros(3)

    @property
    def rv_center(self):
        return np.array([self.rv_offset, 0.0, 0.0])


def shell_depth(p, center, inner, outer, iters: int = 80) -> np.ndarray:
    """Depth ``w`` of points in a family of concentric ellipsoids.

    The shell at depth ``w`` has semi-axes ``inner + w * (outer - inner)``,
    so ``w = 0`` is the inner surface and ``w = 1`` the outer one.  Values
    outside ``[0, 1]`` mean inside the cavity or outside the wall.
    """
    p = np.atleast_2d(np.asarray(p, float)) - np.asarray(center, float)
    inner = np.asarray(inner, float)
    d = np.asarray(outer, float) - inner
    lo = np.full(len(p), -0.999 * np.min(inner / d))
    hi = np.full(len(p), 100.0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g = ((p / (inner + mid[:, None] * d)) ** 2).sum(axis=1)
        outside = g > 1.0
        lo = np.where(outside, mid, lo)
        hi = np.where(outside, hi, mid)
    return 0.5 * (lo + hi)


def _ring_angles(A, B, C, base_z, h):
    theta_max = np.arccos(np.clip(-base_z / C, -1.0, 1.0))
    th = np.linspace(0.0, theta_max, 4001)
    R = 0.5 * (A + B)
    ds = np.sqrt((R * np.cos(th)) ** 2 + (C * np.sin(th)) ** 2)
    s = np.concatenate([[0.0], np.cumsum(0.5 * (ds[1:] + ds[:-1]) * np.diff(th))])
    n_r = max(2, int(round(s[-1] / h)))
    return np.interp(np.linspace(0.0, s[-1], n_r + 1), s, th), theta_max


def _shell_points(center, axes, base_z, h, rng, jitter=0.25):
    A, B, C = axes
    thetas, theta_max = _ring_angles(A, B, C, base_z, h)
    pts = [np.array([[center[0], center[1], -C]])]
    n_r = len(thetas) - 1
    for k in range(1, n_r + 1):
        th = thetas[k]
        if k < n_r:
            th = th + jitter * (thetas[k + 1] - thetas[k]) * rng.uniform(-1, 1)
        a, b = A * np.sin(th), B * np.sin(th)
        perim = np.pi * (3 * (a + b) - np.sqrt((3 * a + b) * (a + 3 * b)))
        n_phi = max(6, int(round(perim / h)))
        j = np.arange(n_phi) + 0.5 * (k % 2) + jitter * rng.uniform(-1, 1, n_phi)
        phi = 2 * np.pi * j / n_phi
        z = np.full(n_phi, base_z) if k == n_r else -C * np.cos(th) * np.ones(n_phi)
        pts.append(np.c_[center[0] + a * np.cos(phi), center[1] + b * np.sin(phi), z])
    return np.vstack(pts)


def _layers(thickness, h):
    n_w = max(1, int(round(thickness / h)))
    return np.linspace(0.0, 1.0, n_w + 1)


def _tet_quality(x):
    """Volume-to-rms-edge ratio, 1 for a regular tet."""
    jac = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=2)
    vol = np.linalg.det(jac) / 6.0
    l2 = sum(((x[:, i] - x[:, j]) ** 2).sum(axis=1) for i, j in TET_EDGES) / 6.0
    return 6.0 * np.sqrt(2.0) * vol / l2**1.5, vol


def _orthonormal_frames(normal, center_axis_pt, points, helix_deg):
    """Fibre/sheet/normal rows from an outward normal and a helix angle."""
    e_t = normal / np.linalg.norm(normal, axis=1, keepdims=True)
    r = points - center_axis_pt
    e_c = np.cross(np.array([0.0, 0.0, 1.0]), r)
    small = np.linalg.norm(e_c, axis=1) < 1e-9
    e_c[small] = np.array([1.0, 0.0, 0.0])
    e_c = e_c - (e_c * e_t).sum(axis=1, keepdims=True) * e_t
    bad = np.linalg.norm(e_c, axis=1) < 1e-9
    if bad.any():
        alt = np.cross(e_t[bad], np.array([0.0, 1.0, 0.0]))
        e_c[bad] = alt
    e_c /= np.linalg.norm(e_c, axis=1, keepdims=True)
    e_l = np.cross(e_t, e_c)
    a = np.deg2rad(helix_deg)[:, None]
    f = np.cos(a) * e_c + np.sin(a) * e_l
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    s = e_t
    n = np.cross(f, s)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return np.stack([f, s, n], axis=1)


def build_phantom(spec: PhantomSpec | None = None, seed: int = 0) -> Mesh:
    """Generate the analytic biventricular phantom.

    Points are sampled on nested ellipsoidal shells (exact surface layers,
    jittered tangentially with ``seed``), tetrahedralised with Delaunay and
    filtered back to the myocardium.  Coordinates are assigned analytically.
    """
    spec = (spec or PhantomSpec()).check()
    rng = np.random.default_rng(seed)
    h = spec.h
    lv_c, rv_c = spec.lv_center, spec.rv_center
    lv_in, lv_out = np.array(spec.lv_inner), np.array(spec.lv_outer)
    rv_in, rv_out = np.array(spec.rv_inner), np.array(spec.rv_outer)
    lv_thick = (lv_out - lv_in).min()
    rv_thick = (rv_out - rv_in).min()

    pts, region, depth = [], [], []
    ws = _layers(lv_thick, h)
    for j, w in enumerate(ws):
        if 0 < j < len(ws) - 1:
            w = w + 0.2 * (ws[1] - ws[0]) * rng.uniform(-1, 1)
        p = _shell_points(lv_c, lv_in + w * (lv_out - lv_in), spec.base_z, h, rng)
        pts.append(p)
        region.append(np.zeros(len(p), int))
        depth.append(np.full(len(p), w))
    ws = _layers(rv_thick, h)
    margin = 0.45 * h / lv_thick
    for j, w in enumerate(ws):
        if 0 < j < len(ws) - 1:
            w = w + 0.2 * (ws[1] - ws[0]) * rng.uniform(-1, 1)
        p = _shell_points(rv_c, rv_in + w * (rv_out - rv_in), spec.base_z, h, rng)
        keep = shell_depth(p, lv_c, lv_in, lv_out) > 1.0 + margin
        p = p[keep]
        pts.append(p)
        region.append(np.ones(len(p), int))
        depth.append(np.full(len(p), w))
    pts = np.vstack(pts)
    region = np.concatenate(region)
    depth = np.concatenate(depth)

    tets = Delaunay(pts).simplices.astype(np.int64)
    cen = pts[tets].mean(axis=1)
    w_lv = shell_depth(cen, lv_c, lv_in, lv_out)
    w_rv = shell_depth(cen, rv_c, rv_in, rv_out)
    in_myo = ((w_lv >= 0) & (w_lv <= 1)) | ((w_lv > 1) & (w_rv >= 0) & (w_rv <= 1))
    in_myo &= cen[:, 2] <= spec.base_z
    x = pts[tets]
    longest = np.max([np.linalg.norm(x[:, i] - x[:, j], axis=1) for i, j in TET_EDGES], axis=0)
    tets = tets[in_myo & (longest < 3.0 * h)]

    q, vol = _tet_quality(pts[tets])
    flip = vol < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]
    tets = tets[np.abs(q) > 0.02]

    # largest connected component, unused points dropped
    e = np.sort(tets[:, TET_EDGES].reshape(-1, 2), axis=1)
    adj = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(len(pts), len(pts)))
    _, lab = connected_components(adj, directed=False)
    used = np.zeros(len(pts), bool)
    used[tets.reshape(-1)] = True
    main = np.bincount(lab[used]).argmax()
    tets = tets[lab[tets[:, 0]] == main]
    used = np.zeros(len(pts), bool)
    used[tets.reshape(-1)] = True
    remap = -np.ones(len(pts), np.int64)
    remap[used] = np.arange(used.sum())
    tets = remap[tets]
    pts, region, depth = pts[used], region[used], depth[used]

    cob, tags = _phantom_coordinates(spec, pts, region, depth)

    cen = pts[tets].mean(axis=1)
    tm_e = cob[tets, TM].mean(axis=1)
    helix = spec.helix_endo + (spec.helix_epi - spec.helix_endo) * tm_e
    lv_elem = shell_depth(cen, lv_c, lv_in, lv_out) <= 1.0
    frames = np.empty((len(tets), 3, 3))
    for mask, c, a_in, a_out in ((lv_elem, lv_c, lv_in, lv_out), (~lv_elem, rv_c, rv_in, rv_out)):
        if not mask.any():
            continue
        w = shell_depth(cen[mask], c, a_in, a_out)
        axes = a_in + w[:, None] * (a_out - a_in)
        normal = (cen[mask] - c) / axes**2
        frames[mask] = _orthonormal_frames(normal, c, cen[mask], helix[mask])

    mesh = Mesh(pts, tets, frames, cob, tags, meta={"source": "phantom", "seed": int(seed)})
    log.debug("phantom: %d nodes, %d tets", mesh.n_nodes, mesh.n_tets)
    return mesh.validate()


def _phantom_coordinates(spec, pts, region, depth):
    lv_c, rv_c = spec.lv_center, spec.rv_center
    lv_in, lv_out = np.array(spec.lv_inner), np.array(spec.lv_outer)
    rv_in, rv_out = np.array(spec.rv_inner), np.array(spec.rv_outer)
    n = len(pts)
    lv = region == 0
    phi = np.mod(np.arctan2(pts[:, 1] - lv_c[1], pts[:, 0] - lv_c[0]), 2 * np.pi)

    # septum: LV wall whose radial projection onto the LV epicardium lies in the RV cavity
    axes = lv_in + depth[:, None] * (lv_out - lv_in)
    proj = lv_c + (pts - lv_c) / axes * lv_out
    septal = lv & (shell_depth(proj, rv_c, rv_in, rv_out) < 0)
    if not septal.any():
        raise DegenerateGeometryError("RV cavity does not touch the LV: no septum")
    pad = np.deg2rad(0.5)
    phi_a, phi_b = phi[septal].min() - pad, phi[septal].max() + pad
    sept_band = (phi >= phi_a) & (phi < phi_b)
    rt = np.empty(n)
    rt[sept_band] = 2.0 / 3.0 + (phi[sept_band] - phi_a) / (phi_b - phi_a) / 3.0
    free_span = 2 * np.pi - (phi_b - phi_a)
    rt[~sept_band] = (2.0 / 3.0) * np.mod(phi[~sept_band] - phi_b, 2 * np.pi) / free_span

    rv = ~lv
    if rv.any():
        phi_s, phi_e = phi[rv].min(), phi[rv].max()
        rt[rv] = np.clip((2.0 / 3.0) * (phi_e - phi[rv]) / (phi_e - phi_s), 0.0, 2.0 / 3.0)
    rt = np.where(rt >= 1.0, 0.0, rt)

    tm = depth.copy()
    tv = np.where(rv, 1.0, 0.0)
    rv_half = septal & (depth > 0.5)
    tv[rv_half] = 1.0
    tm[septal & ~rv_half] = 2.0 * depth[septal & ~rv_half]
    tm[rv_half] = 2.0 * (1.0 - depth[rv_half])
    tm = np.clip(tm, 0.0, 1.0)

    z_apex = lv_c[2] - lv_out[2]
    ab = np.clip((pts[:, 2] - z_apex) / (spec.base_z - z_apex), 0.0, 1.0)

    tags = np.zeros(n, np.int8)
    tags[lv & (depth == 0.0)] = LV_ENDO
    lv_epi = lv & (depth == 1.0)
    tags[lv_epi & septal] = RV_ENDO
    outside_rv = shell_depth(pts, rv_c, rv_in, rv_out) > 1.0
    tags[lv_epi & ~septal & outside_rv] = EPI
    tags[rv & (depth == 0.0)] = RV_ENDO
    tags[rv & (depth == 1.0)] = EPI
    return np.c_[tm, ab, rt, tv], tags


def build_slab(size=(40.0, 40.0, 8.0), h: float = 4.0, frame=None) -> Mesh:
    """Box ``[0, lx] x [0, ly] x [0, lz]`` split into Kuhn tetrahedra.

    Frames default to fibre along x, sheet along z, normal along -y.  The
    bottom face is tagged ``lv_endo`` and the top face ``epi``.
    """
    size = np.asarray(size, float)
    n = np.maximum(1, np.round(size / h).astype(int))
    axes = [np.linspace(0.0, size[i], n[i] + 1) for i in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    nodes = np.c_[X.ravel(), Y.ravel(), Z.ravel()]

    def vid(i, j, k):
        return (i * (n[1] + 1) + j) * (n[2] + 1) + k

    I, J, K = np.meshgrid(np.arange(n[0]), np.arange(n[1]), np.arange(n[2]), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    tets = []
    unit = np.eye(3, dtype=int)
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        a = np.zeros(3, int)
        verts = [vid(I, J, K)]
        for ax in perm:
            a = a + unit[ax]
            verts.append(vid(I + a[0], J + a[1], K + a[2]))
        tets.append(np.stack(verts, axis=1))
    tets = np.vstack(tets)
    x = nodes[tets]
    vol = np.linalg.det(np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=2))
    tets[vol < 0] = tets[vol < 0][:, [0, 2, 1, 3]]

    if frame is None:
        frame = np.array([[1.0, 0, 0], [0, 0, 1.0], [0, -1.0, 0]])
    frames = np.broadcast_to(np.asarray(frame, float), (len(tets), 3, 3))
    tm = nodes[:, 2] / size[2]
    ab = nodes[:, 1] / size[1]
    rt = np.minimum(nodes[:, 0] / size[0], 1.0 - 1e-9) * 0.5
    cob = np.c_[tm, ab, rt, np.zeros(len(nodes))]
    tags = np.zeros(len(nodes), np.int8)
    tags[nodes[:, 2] == 0.0] = LV_ENDO
    tags[nodes[:, 2] == size[2]] = EPI
    return Mesh(nodes, tets, frames, cob, tags, meta={"source": "slab"}).validate()


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

_SECTIONS = ("nodes", "tets", "frames", "cobiveco", "surface_tags")


def save_mesh(path, mesh: Mesh, header: dict | None = None) -> Path:
    """Write the native text format (sections ``nodes``, ``tets``, ``frames``,
    ``cobiveco``, ``surface_tags``; ``#`` lines are comments)."""
    path = Path(path)
    lines = ["# cardiotwin mesh v1"]
    for k, v in (header or {}).items():
        lines.append(f"# {k}={v}")
    lines.append(f"nodes {mesh.n_nodes}")
    lines += [" ".join(f"{v:.17g}" for v in row) for row in mesh.nodes]
    lines.append(f"tets {mesh.n_tets}")
    lines += [" ".join(str(int(v)) for v in row) for row in mesh.tets]
    lines.append(f"frames {mesh.n_tets}")
    lines += [" ".join(f"{v:.17g}" for v in row) for row in mesh.frames.reshape(-1, 9)]
    lines.append(f"cobiveco {mesh.n_nodes}")
    lines += [" ".join(f"{v:.17g}" for v in row) for row in mesh.cobiveco]
    lines.append(f"surface_tags {mesh.n_nodes}")
    lines += [SURFACE_TAGS[t] for t in mesh.surface_tags]
    path.write_text("\n".join(lines) + "\n")
    return path


def load_mesh(path) -> Mesh:
    """Read a mesh in the native format or legacy VTK (``.vtk``); validates it."""
    path = Path(path)
    if path.suffix.lower() == ".vtk":
        return _load_vtk(path)
    blocks: dict[str, list[str]] = {}
    current = None
    remaining = 0
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if remaining == 0:
                parts = line.split()
                if len(parts) != 2 or parts[0] not in _SECTIONS:
                    raise FormatError(f"expected a section header, got {line!r}")
                current, remaining = parts[0], int(parts[1])
                if current in blocks:
                    raise FormatError(f"duplicate section {current}")
                blocks[current] = []
                continue
            blocks[current].append(line)
            remaining -= 1
    if remaining:
        raise FormatError(f"section {current} is truncated")
    for name in _SECTIONS:
        if name not in blocks:
            raise FormatError(f"missing {name} block")

    def table(name, ncol, dtype):
        try:
            arr = np.array([row.split() for row in blocks[name]], dtype=dtype)
        except ValueError as exc:
            raise FormatError(f"malformed {name} block: {exc}") from None
        if arr.ndim != 2 or arr.shape[1] != ncol:
            raise FormatError(f"{name} rows need {ncol} columns")
        return arr

    nodes = table("nodes", 3, float)
    tets = table("tets", 4, np.int64)
    frames = table("frames", 9, float).reshape(-1, 3, 3)
    cob = table("cobiveco", 4, float)
    try:
        tags = np.array([SURFACE_TAGS.index(t) for t in blocks["surface_tags"]], np.int8)
    except ValueError:
        raise FormatError("unknown surface tag name") from None
    return Mesh(nodes, tets, frames, cob, tags, meta={"source": str(path)}).validate()


def _load_vtk(path: Path) -> Mesh:
    import meshio

    try:
        m = meshio.read(path)
    except Exception as exc:  # meshio raises a variety of parse errors
        raise FormatError(f"cannot parse VTK file: {exc}") from None
    blocks = [c for c in m.cells if c.type == "tetra"]
    if not blocks or any(c.type != "tetra" for c in m.cells):
        raise FormatError("VTK file must contain tetrahedral cells only")
    tets = np.vstack([c.data for c in blocks]).astype(np.int64)
    pd = m.point_data
    missing = [k for k in ("tm", "ab", "rt", "tv") if k not in pd]
    if missing:
        raise FormatError(f"missing cobiveco block: point data lacks {missing}")
    cob = np.c_[pd["tm"], pd["ab"], pd["rt"], pd["tv"]].astype(float)
    tags = np.asarray(pd.get("surface_tag", np.zeros(len(m.points))), dtype=np.int8).reshape(-1)
    cd = {k: np.vstack(v) for k, v in m.cell_data.items()}
    if all(k in cd for k in ("fiber", "sheet", "normal")):
        frames = np.stack([cd["fiber"], cd["sheet"], cd["normal"]], axis=1)
    else:
        log.warning("%s has no fiber/sheet/normal cell data; using identity frames", path)
        frames = np.broadcast_to(np.eye(3), (len(tets), 3, 3))
    return Mesh(m.points[:, :3], tets, frames, cob, tags, meta={"source": str(path)}).validate()
