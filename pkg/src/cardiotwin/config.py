"""Run configuration: a JSON document whose every key is optional.

Schema (defaults shown by :func:`default_config_dict`)::

    seed        int
    mesh        path to a mesh file, or null to build the phantom
    phantom     PhantomSpec fields
    cv          CvConfig fields
    catalogue   {"bz_scale": float, "locations": {name: [ab0, rt0, r_ab, r_rt]}}
    aha         AhaConfig fields
    ecg         EcgConfig fields
    electrodes  null, or {name: [x, y, z]} for all ten electrodes
    roots       null, or {"targets": [[tm, ab, rt, tv], ...], "delays": [...]}
    thresholds  qrs_analysis.Thresholds fields
    inverse     {"budget", "steps", "tol", "decimals", "gamma", "restart"}
    jobs        int
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .cobiveco import AhaConfig
from .errors import ValidationError
from .geometry import PhantomSpec
from .pseudo_ecg import EcgConfig, ElectrodeSet
from .qrs_analysis import Thresholds
from .scenario import CvConfig, catalogue

INVERSE_KEYS = ("budget", "steps", "tol", "decimals", "gamma", "restart")


def _build(cls, data: dict | None, section: str):
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValidationError(f"unknown keys in '{section}': {sorted(unknown)}")
    for k, v in data.items():
        if isinstance(v, list):
            data[k] = tuple(v)
    return cls(**data)


@dataclass
class RunConfig:
    seed: int = 0
    mesh: str | None = None
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    cv: CvConfig = field(default_factory=CvConfig)
    bz_scale: float = 1.5
    locations: dict = field(default_factory=dict)
    aha: AhaConfig = field(default_factory=AhaConfig)
    ecg: EcgConfig = field(default_factory=EcgConfig)
    electrodes: dict | None = None
    roots: dict | None = None
    thresholds: Thresholds = field(default_factory=Thresholds)
    inverse: dict = field(default_factory=dict)
    jobs: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"seed", "mesh", "phantom", "cv", "catalogue", "aha", "ecg", "electrodes", "roots",
                 "thresholds", "inverse", "jobs"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config sections: {sorted(unknown)}")
        cat = dict(d.get("catalogue") or {})
        if set(cat) - {"bz_scale", "locations"}:
            raise ValidationError("catalogue accepts only 'bz_scale' and 'locations'")
        inv = dict(d.get("inverse") or {})
        if set(inv) - set(INVERSE_KEYS):
            raise ValidationError(f"unknown keys in 'inverse': {sorted(set(inv) - set(INVERSE_KEYS))}")
        cfg = cls(
            seed=int(d.get("seed", 0)),
            mesh=d.get("mesh"),
            phantom=_build(PhantomSpec, d.get("phantom"), "phantom"),
            cv=_build(CvConfig, d.get("cv"), "cv"),
            bz_scale=float(cat.get("bz_scale", 1.5)),
            locations={k: tuple(float(x) for x in v) for k, v in (cat.get("locations") or {}).items()},
            aha=_build(AhaConfig, d.get("aha"), "aha"),
            ecg=_build(EcgConfig, d.get("ecg"), "ecg"),
            electrodes=d.get("electrodes"),
            roots=d.get("roots"),
            thresholds=_build(Thresholds, d.get("thresholds"), "thresholds"),
            inverse=inv,
            jobs=int(d.get("jobs", 1)),
        )
        if cfg.mesh is not None and not Path(cfg.mesh).is_file():
            raise ValidationError(f"mesh file {cfg.mesh} does not exist")
        if cfg.electrodes is not None:
            ElectrodeSet(cfg.electrodes)
        for loc, v in cfg.locations.items():
            if len(v) != 4:
                raise ValidationError(f"location {loc!r} needs [ab0, rt0, r_ab, r_rt]")
        if cfg.jobs < 1:
            raise ValidationError("jobs must be >= 1")
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"config file {path} does not exist")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        as_plain = lambda obj: {k: list(v) if isinstance(v, tuple) else v
                                for k, v in dataclasses.asdict(obj).items()}
        return {
            "seed": self.seed,
            "mesh": self.mesh,
            "phantom": as_plain(self.phantom),
            "cv": as_plain(self.cv),
            "catalogue": {"bz_scale": self.bz_scale,
                          "locations": {k: list(v) for k, v in sorted(self.locations.items())}},
            "aha": as_plain(self.aha),
            "ecg": as_plain(self.ecg),
            "electrodes": self.electrodes,
            "roots": self.roots,
            "thresholds": as_plain(self.thresholds),
            "inverse": self.inverse,
            "jobs": self.jobs,
        }

    def hash(self) -> str:
        """Digest of everything that affects results (``jobs`` excluded)."""
        d = self.to_dict()
        d.pop("jobs")
        if self.mesh is not None:
            d["mesh_sha256"] = hashlib.sha256(Path(self.mesh).read_bytes()).hexdigest()
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def catalogue(self):
        return catalogue(self.cv, self.locations or None, self.bz_scale)


def default_config_dict() -> dict:
    return RunConfig().to_dict()
