"""Session-scoped bundles shared by the harness and acceptance suites."""
import pytest

from ticsp.harness import (
    SCENARIOS,
    PerturbationSpec,
    run_perturbation,
    run_scenarios,
)


@pytest.fixture(scope="session")
def scenario_results():
    """All four built-in cases, keyed by name."""
    results = run_scenarios(list(SCENARIOS), jobs=4)
    return dict(zip(SCENARIOS, results))


@pytest.fixture(scope="session")
def perturbation_reports():
    """The four documented perturbation experiments, keyed by (name, factor)."""
    specs = [
        PerturbationSpec("a", 0.8),
        PerturbationSpec("a", 1.2),
        PerturbationSpec("c", 0.6),
        PerturbationSpec("e", 0.6),
    ]
    return {(s.parameter, s.multiplier): run_perturbation(s) for s in specs}
