import numpy as np
import pytest

from cardiotwin.errors import NumericalError, ValidationError
from cardiotwin.inverse import (InverseConfig, default_candidates, invert, objective, perturbed,
                                theta_from_vector, theta_vector)
from cardiotwin.scenario import SLOW_SCENARIO, catalogue, scenario_by_name


@pytest.fixture(scope="module")
def ext_ant():
    return scenario_by_name("ext-anterior-transmural")


@pytest.fixture(scope="module")
def observed(model, ext_ant):
    return model.run_scenario(ext_ant).record


def _subset(*names):
    return tuple(scenario_by_name(n) for n in names)


class _Counting:
    """Forward model wrapper that counts solves."""

    def __init__(self, model):
        self.model, self.calls = model, 0
        self.mesh = model.mesh

    def run_labeling(self, lab, cv=None, name=""):
        self.calls += 1
        return self.model.run_labeling(lab, cv, name)

    def run(self, inf, cv=None, name=""):
        return self.model.run(inf, cv, name)


def test_default_candidates():
    c = default_candidates()
    assert len(c) == 16
    assert SLOW_SCENARIO not in [s.name for s in c]
    assert [s.name for s in c] == [s.name for s in catalogue() if s.name != SLOW_SCENARIO]


def test_objective_self_consistency(model, ext_ant, observed):
    assert objective(ext_ant.infarct, observed, model, ext_ant.cv) <= 1e-9
    assert objective(None, observed, model) > 0


def test_config_validation():
    with pytest.raises(ValidationError):
        InverseConfig(budget=-1)
    with pytest.raises(ValidationError):
        InverseConfig(tol=0)
    with pytest.raises(ValidationError):
        InverseConfig(steps=(0.1, 0.1))
    with pytest.raises(ValidationError):
        InverseConfig(candidates=())


def test_theta_mapping():
    th = theta_from_vector([1.3, -0.25, -1.0, 0.2, 0.1])
    assert (th.ab0, th.rt0, th.r_tm, th.r_ab, th.r_rt) == (1.0, 0.75, 0.0, 0.2, 0.1)
    assert theta_from_vector([0.5, 1.9996, 1, 1, 1]).rt0 == 0.0
    x = np.array([0.5, 0.25, 3.0, 0.4, 0.14])
    assert np.array_equal(theta_vector(theta_from_vector(x)), x)


def test_budget_zero_returns_stage1_winner(model, ext_ant, observed):
    cands = _subset("septal-transmural", "ext-anterior-transmural", "inferior-transmural")
    res = invert(observed, model, InverseConfig(candidates=cands, budget=0))
    assert res.infarct == ext_ant.infarct
    assert res.stage1_name == "ext-anterior-transmural"
    assert res.objective < 1e-6
    assert res.forward_solves == 3
    assert res.history == []


def test_budget_accounting_and_monotone_history(model, ext_ant):
    rng = np.random.default_rng(3)
    inf = perturbed(ext_ant.infarct, rng)
    obs = model.run(inf).record
    counting = _Counting(model)
    cands = _subset("ext-anterior-transmural", "lateral-large-transmural")
    res = invert(obs, counting, InverseConfig(candidates=cands, budget=12))
    assert res.forward_solves == counting.calls
    assert res.forward_solves <= len(cands) + 12
    assert res.objective >= 0
    assert res.objective <= res.stage1_objective
    assert len(res.history) > 0
    assert all(np.diff(res.history) <= 0)
    assert res.history[-1] == res.objective


def test_deterministic(model, ext_ant):
    inf = perturbed(ext_ant.infarct, np.random.default_rng(5))
    obs = model.run(inf).record
    cfg = InverseConfig(candidates=_subset("ext-anterior-transmural", "lim-anterior-transmural"), budget=6)
    a, b = invert(obs, model, cfg), invert(obs, model, cfg)
    assert a.infarct == b.infarct and a.objective == b.objective and a.history == b.history
    assert a.report() == b.report()


def test_stage1_ties_go_to_lowest_index(model, ext_ant, observed):
    dup = (ext_ant, ext_ant)
    res = invert(observed, model, InverseConfig(candidates=dup, budget=0))
    assert res.stage1_name == ext_ant.name
    assert res.forward_solves == 1  # the duplicate labeling is served from the cache


def test_all_candidates_failing(model, observed):
    class Broken(_Counting):
        def run_labeling(self, lab, cv=None, name=""):
            raise NumericalError("unreachable nodes")

    with pytest.raises(NumericalError):
        invert(observed, Broken(model), InverseConfig(candidates=_subset("septal-transmural"), budget=0))


def test_evaluation_attached(model, ext_ant, observed):
    from cardiotwin.scenario import label_tissue

    truth = label_tissue(model.mesh, ext_ant.infarct)
    res = invert(observed, model, InverseConfig(candidates=_subset("ext-anterior-transmural"), budget=0),
                 truth=truth)
    assert res.evaluation["scar_dice"] == 1.0
    assert res.evaluation["center_segment_match"] == 1.0
    assert "eval_aha_loc_score: 1.000000" in res.report()
