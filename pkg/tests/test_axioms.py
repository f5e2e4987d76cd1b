import numpy as np

from src import superlag
from src.axioms import check_catenation, check_localization, localization_expected, run_axiom_battery


def test_localization_expected_values():
    assert localization_expected(lambda t: np.array([[t]]), -1.0, 1.0) == 1
    assert localization_expected(lambda t: np.diag([t, -t]), -1.0, 1.0) == 0


def test_axiom_battery_passes():
    checks = run_axiom_battery(seed=0)
    assert len(checks) == 4 + 3 + 3
    failed = [(c.name, c.expected, c.observed) for c in checks if not c.passed]
    assert failed == []


def test_catenation_uses_whole_path_index():
    for check in check_catenation():
        assert check.expected == 2
        assert check.passed


def test_flipped_crossing_form_breaks_localization(monkeypatch):
    original = superlag.crossing_form_numeric

    def flipped(*args, **kwargs):
        return -original(*args, **kwargs)

    monkeypatch.setattr(superlag, 'crossing_form_numeric', flipped)
    checks = {c.name: c for c in check_localization()}
    assert not checks['localization graph(t)'].passed
    assert checks['localization graph(t)'].observed == -1
    assert not checks['localization graph(diag(t, 1))'].passed
