"""Forward pipeline: infarct -> labeling -> speeds -> activation -> QRS."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .eikonal import ActivationMap, RootNodes, default_roots, solve_activation
from .geometry import Mesh
from .pseudo_ecg import EcgConfig, EcgRecord, ElectrodeSet, default_electrodes, lead_field, simulate_qrs
from .scenario import CvConfig, InfarctSpec, ScenarioSpec, conduction_field, label_tissue


@dataclass(frozen=True)
class Simulation:
    labeling: np.ndarray
    activation: ActivationMap
    record: EcgRecord


class ForwardModel:
    """Binds a mesh, root nodes, electrodes and ECG settings; thread-safe to share."""

    def __init__(self, mesh: Mesh, roots: RootNodes | None = None, electrodes: ElectrodeSet | None = None,
                 ecg: EcgConfig | None = None, tol: float = 1e-3):
        self.mesh = mesh
        self.roots = roots if roots is not None else default_roots(mesh)
        self.electrodes = electrodes if electrodes is not None else default_electrodes(mesh)
        self.ecg = ecg or EcgConfig()
        self.tol = tol

    @cached_property
    def coef(self) -> np.ndarray:
        return lead_field(self.mesh, self.electrodes.array())

    def run_labeling(self, labeling, cv: CvConfig | None = None, name: str = "") -> Simulation:
        speeds = conduction_field(self.mesh, labeling, cv)
        atm = solve_activation(self.mesh, speeds, self.roots, self.tol)
        rec = simulate_qrs(self.mesh, atm, self.electrodes, self.ecg, name, coef=self.coef)
        return Simulation(np.asarray(labeling), atm, rec)

    def run(self, infarct: InfarctSpec | None, cv: CvConfig | None = None, name: str = "") -> Simulation:
        return self.run_labeling(label_tissue(self.mesh, infarct), cv, name)

    def run_scenario(self, s: ScenarioSpec) -> Simulation:
        return self.run(s.infarct, s.cv, s.name)
