"""
Axiom battery for the EM-index: localization, catenation and homotopy
invariance on generated graph paths.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from . import superlag
from .hermitian import TolerancePolicy, inertia
from .superlag import SuperlagPath, coordinate_plane, graph_frame, standard_space

CATENATION_SPLITS = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class AxiomCheck:
    name: str
    expected: int
    observed: int

    @property
    def passed(self) -> bool:
        return self.expected == self.observed


def graph_path(H: Callable[[float], np.ndarray], a: float = -1.0, b: float = 1.0) -> SuperlagPath:
    """t -> graph(H(t)) in the standard space of matching size."""
    N = np.atleast_2d(H(a)).shape[0]
    space = standard_space(N)
    return SuperlagPath(a, b, lambda t: graph_frame(space, H(t)))


def _base_plane(N: int):
    return coordinate_plane(standard_space(N), range(N))


def localization_expected(H: Callable[[float], np.ndarray], a: float, b: float,
                          tol: TolerancePolicy = TolerancePolicy()) -> int:
    """1/2 sign H(b) - 1/2 sign H(a)."""
    return (inertia(H(b), tol).signature - inertia(H(a), tol).signature) // 2


def _index(path: SuperlagPath, tol: TolerancePolicy, points: int, rng: np.random.Generator) -> int:
    N = path(path.a).dim
    index, _ = superlag.em_index(path, _base_plane(N), tol, points=points, rng=rng)
    return index


def check_localization(tol: TolerancePolicy = TolerancePolicy(), points: int = 512,
                       rng: Optional[np.random.Generator] = None) -> List[AxiomCheck]:
    rng = np.random.default_rng(0) if rng is None else rng
    cases = {
        'localization graph(t)': lambda t: np.array([[t]]),
        'localization graph(-t)': lambda t: np.array([[-t]]),
        'localization graph(diag(t, 1))': lambda t: np.diag([t, 1.0]),
        'localization graph(diag(t, -t))': lambda t: np.diag([t, -t]),
    }
    checks = []
    for name, H in cases.items():
        expected = localization_expected(H, -1.0, 1.0, tol)
        checks.append(AxiomCheck(name, expected, _index(graph_path(H), tol, points, rng)))
    return checks


def check_catenation(tol: TolerancePolicy = TolerancePolicy(), points: int = 512,
                     rng: Optional[np.random.Generator] = None) -> List[AxiomCheck]:
    rng = np.random.default_rng(0) if rng is None else rng
    H = lambda t: np.diag([t, t - 0.6])  # noqa: E731
    whole = _index(graph_path(H), tol, points, rng)
    checks = []
    for split in CATENATION_SPLITS:
        left = _index(graph_path(H, -1.0, split), tol, points, rng)
        right = _index(graph_path(H, split, 1.0), tol, points, rng)
        checks.append(AxiomCheck(f"catenation at {split}", whole, left + right))
    return checks


def check_homotopy(tol: TolerancePolicy = TolerancePolicy(), points: int = 512,
                   rng: Optional[np.random.Generator] = None, samples: int = 3) -> List[AxiomCheck]:
    """graph(tI + 0.1 t(1-t^2) K) against graph(tI) for random Hermitian K with ||K|| = 1."""
    rng = np.random.default_rng(0) if rng is None else rng
    N = 2
    base = _index(graph_path(lambda t: t * np.eye(N)), tol, points, rng)
    checks = []
    for sample in range(samples):
        K = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
        K = 0.5 * (K + K.conj().T)
        K /= np.linalg.norm(K, 2)
        logging.debug(f"Homotopy perturbation {sample}: K = {K.tolist()}")
        perturbed = lambda t, K=K: t * np.eye(N) + 0.1 * t * (1 - t ** 2) * K  # noqa: E731
        checks.append(AxiomCheck(f"homotopy sample {sample}", base, _index(graph_path(perturbed), tol, points, rng)))
    return checks


def run_axiom_battery(tol: TolerancePolicy = TolerancePolicy(), points: int = 512, seed: int = 0) -> List[AxiomCheck]:
    """Run every axiom check; each result names its expected and observed index."""
    rng = np.random.default_rng(seed)
    checks = check_localization(tol, points, rng) + check_catenation(tol, points, rng) + \
        check_homotopy(tol, points, rng)
    for check in checks:
        level = logging.INFO if check.passed else logging.ERROR
        logging.log(level, f"{check.name}: expected {check.expected}, observed {check.observed}")
    return checks
