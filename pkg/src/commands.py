"""
Command implementations behind the sturmflow CLI.

Each cmd_* function returns the process exit status: 0 success, 1 index
disagreement or axiom failure, 2 settings or problem input errors, 3
pipeline failures.
"""

import asyncio
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .axioms import run_axiom_battery
from .config_loader import Settings
from .em_pipeline import CrossingRecord, EMResult, em_index_of_form
from .errors import (DomainError, ProblemConfigError, ProblemValidationError, RegularizationRequired,
                     SturmflowError)
from .hermitian import inertia
from .morse_pipeline import MorseResult, delta_regularize, find_regularization, morse_index
from .oracle import oracle_zero_count
from .problem_io import (ConjugatePointEntry, IndexReport, append_run_record, conjugate_points_csv,
                         load_problem, parse_problem_document, read_problem_document, report_to_json,
                         set_parameter, sweep_csv, to_json, write_text)
from .sturm_form import SturmProblem

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_INPUT = 2
EXIT_PIPELINE = 3

SIGNATURE_MATCH_WINDOW = 1e-3


@dataclass
class RunOptions:
    """Flags shared by the problem commands."""
    galerkin: Optional[int] = None
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    seed: Optional[int] = None
    tol: Optional[float] = None
    out: Optional[str] = None


def apply_overrides(settings: Settings, options: RunOptions) -> Settings:
    """Settings with the CLI flags applied on top."""
    update: Dict[str, Any] = {}
    if options.seed is not None:
        update['seed'] = options.seed
    if options.tol is not None:
        update['tolerances'] = settings.tolerances.model_copy(update={'rank_rel_tol': options.tol})
    if options.galerkin is not None:
        update['galerkin'] = settings.galerkin.model_copy(update={'n_start': options.galerkin})
    if options.epsilon is not None:
        update['epsilon_guard'] = settings.epsilon_guard.model_copy(update={'initial': options.epsilon})
    return settings.model_copy(update=update)


def _report_input_error(exc: Exception) -> int:
    diagnostics = getattr(exc, 'diagnostics', None) or [str(exc)]
    for line in diagnostics:
        print(f"error: {line}", file=sys.stderr)
    return EXIT_INPUT


def _report_pipeline_error(exc: Exception) -> int:
    logging.error(f"Pipeline failed: {exc}")
    print(f"pipeline failure: {exc}", file=sys.stderr)
    return EXIT_PIPELINE


def run_regularized(problem: SturmProblem, settings: Settings, attempt, delta: Optional[float],
                    rng: np.random.Generator) -> Tuple[Any, Optional[float]]:
    """
    Run attempt on the problem, regularizing with a fixed or drawn delta when required.

    Returns:
        the attempt's result and the delta used (None when unregularized)
    """
    # 指定 delta 时不再抽样
    if delta is not None:
        return attempt(delta_regularize(problem, delta)), (delta if delta > 0 else None)
    try:
        return attempt(problem), None
    except RegularizationRequired as exc:
        logging.info(f"Regularization required: {exc}")
        return find_regularization(problem, settings, attempt, rng)


def log_crossing_triple(em_records: List[CrossingRecord], morse: MorseResult) -> int:
    """
    Compare analytic, geometric and Galerkin crossing signatures at matching instants.

    Returns:
        number of mismatches found
    """
    mismatches = 0
    # 按 lambda 就近匹配 Galerkin 交叉
    for record in em_records:
        near = [c for c in morse.crossings if abs(c.lam - record.lam) < SIGNATURE_MATCH_WINDOW]
        galerkin = sum(c.signature for c in near) if near else None
        geometric = None
        if record.geometric_form is not None:
            geometric = inertia(record.geometric_form).signature
        values = [v for v in (record.signature, geometric, galerkin) if v is not None]
        if galerkin is None or len(set(values)) > 1:
            mismatches += 1
            logging.warning(f"Crossing at lambda={record.lam:.12g}: analytic {record.signature}, "
                            f"geometric {geometric}, Galerkin {galerkin}")
        else:
            logging.debug(f"Crossing at lambda={record.lam:.12g}: signature {record.signature} on all three forms")
    if len(em_records) != len(morse.crossings):
        logging.warning(f"{len(em_records)} conjugate instant(s) but {len(morse.crossings)} Galerkin crossing(s)")
    return mismatches


def verify_problem(problem: SturmProblem, settings: Settings, epsilon: Optional[float] = None,
                   delta: Optional[float] = None) -> IndexReport:
    """Run both pipelines with shared tolerances and assemble the report."""
    rng = np.random.default_rng(settings.seed)

    def attempt(candidate: SturmProblem) -> Tuple[EMResult, MorseResult]:
        return em_index_of_form(candidate, settings, epsilon, rng), morse_index(candidate, settings)

    # 两条流程共用同一随机数生成器
    (em, morse), used_delta = run_regularized(problem, settings, attempt, delta, rng)
    log_crossing_triple(em.records, morse)
    # 组装报告
    points = [ConjugatePointEntry(lam=r.lam, kernel_dim=r.kernel_dim, signature=r.signature) for r in em.records]
    report = IndexReport(em_index=em.index, morse_index=morse.index, agree=em.index == morse.index,
                         epsilon=em.epsilon, galerkin_N=morse.N, delta=used_delta, seed=settings.seed,
                         conjugate_points=points, classical_morse_index=morse.classical_morse_index)
    level = logging.INFO if report.agree else logging.ERROR
    logging.log(level, f"EM-index {report.em_index}, Morse index {report.morse_index}, agree={report.agree}")
    return report


def cmd_verify(config_path: str, settings: Settings, options: RunOptions = RunOptions()) -> int:
    settings = apply_overrides(settings, options)
    try:
        problem = load_problem(config_path)
    except (ProblemConfigError, ProblemValidationError) as exc:
        return _report_input_error(exc)
    try:
        report = verify_problem(problem, settings, delta=options.delta)
    except SturmflowError as exc:
        return _report_pipeline_error(exc)
    # 输出报告，按配置追加运行记录
    write_text(report_to_json(report), options.out)
    if settings.output.record_enabled:
        append_run_record(report, settings.output.record_file, os.path.basename(config_path))
    return EXIT_OK if report.agree else EXIT_FAILED_CHECK


def _em_only(problem: SturmProblem, settings: Settings, options: RunOptions) -> Tuple[EMResult, Optional[float]]:
    rng = np.random.default_rng(settings.seed)
    return run_regularized(problem, settings, lambda p: em_index_of_form(p, settings, rng=rng),
                           options.delta, rng)


def cmd_conjugate_points(config_path: str, settings: Settings, options: RunOptions = RunOptions()) -> int:
    settings = apply_overrides(settings, options)
    try:
        problem = load_problem(config_path)
    except (ProblemConfigError, ProblemValidationError) as exc:
        return _report_input_error(exc)
    try:
        em, _ = _em_only(problem, settings, options)
    except SturmflowError as exc:
        return _report_pipeline_error(exc)
    rows = [{'lambda': r.lam, 'kernel_dim': r.kernel_dim, 'signature': r.signature} for r in em.records]
    write_text(conjugate_points_csv(rows), options.out)
    return EXIT_OK


def cmd_em_index(config_path: str, settings: Settings, options: RunOptions = RunOptions()) -> int:
    settings = apply_overrides(settings, options)
    try:
        problem = load_problem(config_path)
    except (ProblemConfigError, ProblemValidationError) as exc:
        return _report_input_error(exc)
    try:
        em, delta = _em_only(problem, settings, options)
    except SturmflowError as exc:
        return _report_pipeline_error(exc)
    write_text(to_json({'em_index': em.index, 'epsilon': em.epsilon, 'delta': delta, 'seed': settings.seed}),
               options.out)
    return EXIT_OK


def cmd_morse_index(config_path: str, settings: Settings, options: RunOptions = RunOptions()) -> int:
    settings = apply_overrides(settings, options)
    try:
        problem = load_problem(config_path)
    except (ProblemConfigError, ProblemValidationError) as exc:
        return _report_input_error(exc)
    rng = np.random.default_rng(settings.seed)
    try:
        morse, delta = run_regularized(problem, settings, lambda p: morse_index(p, settings), options.delta, rng)
    except SturmflowError as exc:
        return _report_pipeline_error(exc)
    write_text(to_json({'morse_index': morse.index, 'galerkin_N': morse.N,
                        'history': {str(k): v for k, v in morse.history.items()},
                        'classical_morse_index': morse.classical_morse_index,
                        'delta': delta, 'seed': settings.seed}), options.out)
    return EXIT_OK


def cmd_axioms(settings: Settings, options: RunOptions = RunOptions()) -> int:
    settings = apply_overrides(settings, options)
    try:
        checks = run_axiom_battery(settings.tolerances, settings.scan.points, settings.seed)
    except SturmflowError as exc:
        return _report_pipeline_error(exc)
    lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: expected {c.expected}, observed {c.observed}"
             for c in checks]
    failed = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - failed}/{len(checks)} axiom checks passed")
    write_text('\n'.join(lines) + '\n', options.out)
    return EXIT_OK if failed == 0 else EXIT_FAILED_CHECK


def cmd_oracle(config_path: str, settings: Settings, options: RunOptions = RunOptions()) -> int:
    settings = apply_overrides(settings, options)
    try:
        problem = load_problem(config_path)
        count = oracle_zero_count(problem, settings.tolerances)
    except (ProblemConfigError, ProblemValidationError, DomainError) as exc:
        return _report_input_error(exc)
    except SturmflowError as exc:
        return _report_pipeline_error(exc)
    write_text(f"{count}\n", options.out)
    return EXIT_OK


def sweep_sample(document: Dict[str, Any], param: str, value: float, settings: Settings,
                 epsilon: Optional[float], delta: Optional[float]) -> Dict[str, Any]:
    """Verify one sample of a sweep; failures are recorded in the row."""
    row: Dict[str, Any] = {'param': value, 'em_index': None, 'morse_index': None, 'agree': None,
                           'delta': None, 'error': None}
    try:
        # 替换参数后重新校验
        problem = parse_problem_document(set_parameter(document, param, value))
        report = verify_problem(problem, settings, epsilon, delta)
        row.update(em_index=report.em_index, morse_index=report.morse_index, agree=report.agree,
                   delta=report.delta)
    except SturmflowError as exc:
        logging.error(f"Sweep sample {param}={value!r} failed: {exc}")
        row['error'] = str(exc)
    return row


async def _sweep_parallel(document, param, values, settings, epsilon, delta, workers) -> List[Dict[str, Any]]:
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        tasks = [loop.run_in_executor(pool, sweep_sample, document, param, float(v), settings, epsilon, delta)
                 for v in values]
        return list(await asyncio.gather(*tasks))


def run_sweep(document: Dict[str, Any], param: str, start: float, stop: float, steps: int,
              settings: Settings, epsilon: Optional[float] = None,
              delta: Optional[float] = None) -> List[Dict[str, Any]]:
    """Rows (param, em_index, morse_index, agree, delta, error) sorted by parameter."""
    if steps <= 0:
        return []
    values = np.linspace(start, stop, steps)
    if settings.sweep.workers > 1:  # 多进程并行
        rows = asyncio.run(_sweep_parallel(document, param, values, settings, epsilon, delta,
                                           settings.sweep.workers))
    else:
        rows = [sweep_sample(document, param, float(v), settings, epsilon, delta) for v in values]  # 顺序执行
    return sorted(rows, key=lambda row: row['param'])


def cmd_sweep(config_path: str, param: str, start: float, stop: float, steps: int, settings: Settings,
              options: RunOptions = RunOptions()) -> int:
    settings = apply_overrides(settings, options)
    try:
        # 先校验原始配置和参数路径
        document = read_problem_document(config_path)
        parse_problem_document(document)
        if steps > 0:
            set_parameter(document, param, start)
    except (ProblemConfigError, ProblemValidationError) as exc:
        return _report_input_error(exc)
    rows = run_sweep(document, param, start, stop, steps, settings, delta=options.delta)
    write_text(sweep_csv(rows), options.out)
    return EXIT_OK
