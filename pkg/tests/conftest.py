from __future__ import annotations

import numpy as np
import pytest

from fedcausal.beliefs import HypothesisSpace
from fedcausal.likelihoods import CategoricalModel, GaussianMeanModel, InformativenessMatrix
from fedcausal.protocol import AgentSpec, Mode, Scenario

REF_WEIGHTS = np.array([0.125] * 4 + [0.075] * 4 + [0.05] * 4)
REF_PARTICIPATION = np.array([0.8] * 3 + [0.6] * 3 + [0.4] * 3 + [0.2] * 3)
# agents 1, 3, 5, ... (numbered from 1) have mean 0.5 under H1, the rest 1.0
REF_H1_MEANS = np.array([0.5 if k % 2 == 0 else 1.0 for k in range(12)])


def reference_scenario(mode=Mode.SYMMETRIC, intervene: bool = True) -> Scenario:
    agents = [
        AgentSpec(GaussianMeanModel([0.0, mu], 1.0), float(w), float(p))
        for mu, w, p in zip(REF_H1_MEANS, REF_WEIGHTS, REF_PARTICIPATION)
    ]
    scen = Scenario(Mode(mode), HypothesisSpace.binary(0), agents)
    return scen.with_intervention(0) if intervene else scen


def random_scenario(rng, mode, K, H, p_one=False):
    pi = rng.dirichlet(np.ones(K))
    pi /= pi.sum()
    pi[-1] = 1.0 - pi[:-1].sum()
    agents = []
    for k in range(K):
        if rng.random() < 0.5:
            model = GaussianMeanModel(rng.normal(size=H), float(rng.uniform(0.5, 2.0)))
        else:
            model = CategoricalModel(rng.dirichlet(np.ones(3), size=H) * 0.97 + 0.01)
        p = 1.0 if p_one else float(rng.uniform(0.05, 1.0))
        agents.append(AgentSpec(model, float(pi[k]), p))
    space = HypothesisSpace(tuple(f"h{h}" for h in range(H)), int(rng.integers(H)))
    return Scenario(mode, space, agents)


def reference_informativeness() -> InformativenessMatrix:
    return InformativenessMatrix(np.column_stack([np.zeros(12), REF_H1_MEANS**2 / 2]), 0)


@pytest.fixture
def ref_d():
    return reference_informativeness()


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE: list[tuple[str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        label = marker.args[0]
        param = getattr(item, "callspec", None)
        if param is not None:
            label += f" [{param.id}]"
        _ACCEPTANCE.append((label, "PASS" if report.passed else "FAIL"))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in _ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {label}")
