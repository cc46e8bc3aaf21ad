from importlib import resources

import pytest

from finsler_harmonic.cli import ScenarioConfig, parse_config_text, run_scenario
from finsler_harmonic.domain import DomainGrid, EuclideanMetric, WaveBoundary
from finsler_harmonic.energy import CircleQuadrature
from finsler_harmonic.finsler import METRICS, make_metric
from finsler_harmonic.minimizer import SolveConfig, minimize

# one-line verdicts collected by the acceptance suite, echoed after the run
ACCEPTANCE_LINES = []

METRIC_CASES = {
    "euclidean": {},
    "riemannian_u": {"eps": 0.1},
    "randers": {"b": (0.3, 0.1), "kappa": 0.5},
    "minkowski_quartic": {"kappa": 0.2},
    "rough": {"eps": 0.1},
}
assert set(METRIC_CASES) == set(METRICS)


def all_metrics():
    return [make_metric(name, **params) for name, params in METRIC_CASES.items()]


def bundled_flat(name, **overrides):
    text = (resources.files("finsler_harmonic") / "scenarios" / f"{name}.cfg").read_text()
    flat = parse_config_text(text)
    flat.update(overrides)
    return flat


def run_bundled(tmp_path_factory, name, **overrides):
    cfg = ScenarioConfig.from_flat(bundled_flat(name, **overrides))
    out = tmp_path_factory.mktemp(name)
    report, code = run_scenario(cfg, out, "flag")
    assert code == 0
    return report, out


@pytest.fixture(scope="session")
def randers129(tmp_path_factory):
    return run_bundled(tmp_path_factory, "randers_smooth", **{"domain.N": 129, "diagnostics.ladder_count": 4,
                                                             "diagnostics.frozen_probes": "interior"})


@pytest.fixture(scope="session")
def rough129(tmp_path_factory):
    return run_bundled(tmp_path_factory, "rough_sigma_quarter")


@pytest.fixture(scope="session")
def riem129(tmp_path_factory):
    return run_bundled(tmp_path_factory, "riem_u_smooth")


@pytest.fixture(scope="session")
def randers65(tmp_path_factory):
    return run_bundled(tmp_path_factory, "randers_smooth")


@pytest.fixture(scope="session")
def quad64():
    return CircleQuadrature(64)


@pytest.fixture(scope="session")
def wave_minimizers():
    """Converged N=33 minimisers with wave data, keyed by metric name."""
    grid = DomainGrid(33)
    out = {}
    for F in all_metrics():
        res = minimize(F, grid, EuclideanMetric(), WaveBoundary(), cfg=SolveConfig(gradient_tolerance=1e-9))
        out[F.name] = (F, res)
    return grid, out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
