import numpy as np
import pytest

from cardiotwin.cobiveco import TM
from cardiotwin.errors import DegenerateGeometryError, FormatError, GeometryError, ResolutionError, ValidationError
from cardiotwin.geometry import (EPI, LV_ENDO, RV_ENDO, PhantomSpec, build_phantom, build_slab, load_mesh,
                                 save_mesh)


def test_default_phantom_invariants(phantom):
    assert 3000 <= phantom.n_nodes <= 8000
    phantom.validate()
    assert (phantom.signed_volumes > 0).all()
    F = phantom.frames
    assert np.abs(F @ F.transpose(0, 2, 1) - np.eye(3)).max() < 1e-6


def test_phantom_tm_exact_on_surfaces(phantom):
    tm, tags = phantom.cobiveco[:, TM], phantom.surface_tags
    assert (tm[np.isin(tags, (LV_ENDO, RV_ENDO))] == 0.0).all()
    assert (tm[tags == EPI] == 1.0).all()
    assert {0, 1} == set(np.unique(phantom.cobiveco[:, 3]).tolist())


def test_phantom_deterministic():
    a = build_phantom(PhantomSpec(h=6.0), seed=3)
    b = build_phantom(PhantomSpec(h=6.0), seed=3)
    assert a.equals(b)


def test_phantom_errors():
    with pytest.raises(DegenerateGeometryError):
        build_phantom(PhantomSpec(lv_inner=(45.0, 45.0, 80.0)))
    with pytest.raises(ResolutionError):
        build_phantom(PhantomSpec(h=12.0))
    assert issubclass(DegenerateGeometryError, ValidationError)


def test_refinement_increases_nodes_bbox_stable():
    meshes = [build_phantom(PhantomSpec(h=h)) for h in (6.0, 5.0, 4.0)]
    counts = [m.n_nodes for m in meshes]
    assert counts == sorted(counts) and len(set(counts)) == 3
    lo0, hi0 = meshes[0].bbox
    for m in meshes[1:]:
        lo, hi = m.bbox
        assert np.abs(lo - lo0).max() <= 6.0 and np.abs(hi - hi0).max() <= 6.0


def test_roundtrip(tmp_path, small_phantom):
    p = save_mesh(tmp_path / "m.txt", small_phantom, {"k": "v"})
    assert load_mesh(p).equals(small_phantom)


def test_bad_cells(tmp_path, small_phantom):
    p = save_mesh(tmp_path / "m.txt", small_phantom)
    lines = p.read_text().splitlines()
    i = lines.index(f"tets {small_phantom.n_tets}")
    lines[i + 1] = " ".join(lines[i + 1].split()[:3])
    p.write_text("\n".join(lines))
    with pytest.raises(FormatError):
        load_mesh(p)


def test_tm_out_of_range(tmp_path):
    slab = build_slab(size=(8, 8, 4), h=4)
    p = save_mesh(tmp_path / "m.txt", slab)
    lines = p.read_text().splitlines()
    i = lines.index(f"cobiveco {slab.n_nodes}")
    parts = lines[i + 1].split()
    parts[0] = "1.3"
    lines[i + 1] = " ".join(parts)
    p.write_text("\n".join(lines))
    with pytest.raises(ValidationError):
        load_mesh(p)


def _write_vtk(path, mesh, with_cob=True, flip=False):
    tets = mesh.tets[:, [0, 2, 1, 3]] if flip else mesh.tets
    out = ["# vtk DataFile Version 3.0", "test", "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {mesh.n_nodes} double"]
    out += [" ".join(repr(float(v)) for v in p) for p in mesh.nodes]
    out.append(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}")
    out += ["4 " + " ".join(str(int(v)) for v in t) for t in tets]
    out.append(f"CELL_TYPES {mesh.n_tets}")
    out += ["10"] * mesh.n_tets
    if with_cob:
        out.append(f"POINT_DATA {mesh.n_nodes}")
        for k, name in enumerate(("tm", "ab", "rt", "tv")):
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [repr(float(v)) for v in mesh.cobiveco[:, k]]
    path.write_text("\n".join(out) + "\n")
    return path


def test_vtk_import(tmp_path):
    slab = build_slab(size=(8, 8, 4), h=4)
    m = load_mesh(_write_vtk(tmp_path / "s.vtk", slab))
    assert np.array_equal(m.nodes, slab.nodes)
    assert np.array_equal(m.cobiveco, slab.cobiveco)
    with pytest.raises(FormatError, match="cobiveco"):
        load_mesh(_write_vtk(tmp_path / "n.vtk", slab, with_cob=False))
    with pytest.raises(GeometryError):
        load_mesh(_write_vtk(tmp_path / "f.vtk", slab, flip=True))


def test_mesh_arrays_readonly(small_phantom):
    with pytest.raises(ValueError):
        small_phantom.nodes[0, 0] = 1.0
