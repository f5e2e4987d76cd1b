"""Zero counting for the classical scalar case m = n = 1, nu = 0."""

import logging

import numpy as np

from .errors import DomainError
from .hermitian import TolerancePolicy
from .ode_engine import integrate, to_first_order
from .sturm_form import SturmProblem, assemble_operator

SAMPLES = 4001


def oracle_zero_count(problem: SturmProblem, tol: TolerancePolicy = TolerancePolicy(),
                      samples: int = SAMPLES) -> int:
    """
    Interior sign changes of the solution with u(0) = 0, u'(0) = 1 on [0, 1].

    Raises:
        DomainError: if the problem is not classical
    """
    if not problem.is_classical:
        raise DomainError(f"oracle needs m = n = 1 and nu = 0, got m={problem.m}, n={problem.n}, nu={problem.nu}")
    system = to_first_order(assemble_operator(problem), 1.0)
    handle = integrate(system, 0.0, 1.0, np.array([0.0, 1.0], dtype=complex), tol)
    # 只统计内点的符号变化
    xs = np.linspace(0.0, 1.0, samples)[1:-1]
    values = np.real(handle.jet(xs)[:, 0])
    signs = np.sign(values[values != 0.0])
    count = int(np.sum(signs[1:] != signs[:-1]))
    logging.info(f"Oracle zero count: {count}")
    return count
