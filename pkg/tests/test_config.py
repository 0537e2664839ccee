import json

import pytest

from cardiotwin.config import RunConfig, default_config_dict
from cardiotwin.errors import ValidationError


def test_defaults_roundtrip():
    d = default_config_dict()
    cfg = RunConfig.from_dict(json.loads(json.dumps(d)))
    assert cfg.to_dict() == d
    assert cfg.hash() == RunConfig().hash()
    assert len(cfg.catalogue()) == 17


def test_hash_ignores_jobs_but_not_seed():
    base = RunConfig().hash()
    assert RunConfig.from_dict({"jobs": 4}).hash() == base
    assert RunConfig.from_dict({"seed": 1}).hash() != base
    assert RunConfig.from_dict({"cv": {"scar_fraction": 0.2}}).hash() != base


@pytest.mark.parametrize("bad", [
    {"colour": 1},
    {"cv": {"speed": 1}},
    {"inverse": {"iterations": 3}},
    {"catalogue": {"extra": 1}},
    {"catalogue": {"locations": {"septal": [0.5, 0.7]}}},
    {"jobs": 0},
    {"mesh": "/nonexistent/mesh.txt"},
    {"cv": {"scar_fraction": 0.9, "bz_fraction": 0.5}},
])
def test_rejects_invalid(bad):
    with pytest.raises(ValidationError):
        RunConfig.from_dict(bad)


def test_from_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 3, "catalogue": {"locations": {"septal": [0.5, 0.72, 0.3, 0.1]}}}))
    cfg = RunConfig.from_file(p)
    assert cfg.seed == 3
    sept = next(s for s in cfg.catalogue() if s.name == "septal-transmural")
    assert sept.infarct.rt0 == 0.72
    p.write_text("{not json")
    with pytest.raises(ValidationError):
        RunConfig.from_file(p)
    with pytest.raises(ValidationError):
        RunConfig.from_file(tmp_path / "missing.json")
