"""
Problem configs, index reports and tabular output.

Problem configs and reports are JSON documents described by pydantic
models; reals are written with 17 significant digits and reports carry no
timestamps, so identical runs give identical bytes. The optional Excel run
record appends a summary row and its conjugate points to two sheets linked
by a timestamp.
"""

import copy
import json
import logging
import math
import os
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ProblemConfigError
from .sturm_form import MatrixPolynomial, SturmProblem, validate

FLOAT_FORMAT = '%.17g'

# --- Problem configs ---


class TermConfig(BaseModel):
    """One term coeff * x^power of a coefficient polynomial."""
    model_config = ConfigDict(allow_inf_nan=False)

    power: int = Field(..., ge=0, description="Power of x")
    re: List[List[float]] = Field(..., description="Real part, n x n")
    im: Optional[List[List[float]]] = Field(None, description="Imaginary part, n x n; zero when omitted")

    def matrix(self) -> np.ndarray:
        real = np.asarray(self.re, dtype=float)
        imag = np.zeros_like(real) if self.im is None else np.asarray(self.im, dtype=float)
        if real.shape != imag.shape:
            raise ProblemConfigError(f"term x^{self.power}: re has shape {real.shape}, im has shape {imag.shape}")
        return real + 1j * imag


class OmegaEntry(BaseModel):
    """Coefficient omega_{i,j}; only i <= j is given, the mirror is implied."""
    i: int = Field(..., ge=0)
    j: int = Field(..., ge=0)
    terms: List[TermConfig] = Field(default_factory=list)

    @model_validator(mode='after')
    def _upper_triangle(self):
        if self.i > self.j:
            raise ValueError(f"omega entry ({self.i},{self.j}) must satisfy i <= j")
        return self


class ProblemConfig(BaseModel):
    m: int = Field(..., ge=1, description="Half-order")
    n: int = Field(..., ge=1, description="System dimension")
    nu: int = Field(..., ge=0, description="Signature index")
    omega: List[OmegaEntry] = Field(default_factory=list)

    def to_problem(self) -> SturmProblem:
        """
        Build and validate the SturmProblem.

        Raises:
            ProblemConfigError: for out-of-range indices, duplicates or wrong shapes
            ProblemValidationError: if the problem violates its invariants
        """
        entries: Dict[tuple, MatrixPolynomial] = {}
        for entry in self.omega:
            key = (entry.i, entry.j)
            if entry.j > self.m:
                raise ProblemConfigError(f"omega entry {key} exceeds half-order m={self.m}")
            if key in entries:
                raise ProblemConfigError(f"omega entry {key} given twice")
            terms = []
            for term in entry.terms:
                matrix = term.matrix()
                if matrix.shape != (self.n, self.n):
                    raise ProblemConfigError(
                        f"omega[{entry.i}][{entry.j}] term x^{term.power} has shape {matrix.shape}, "
                        f"expected ({self.n}, {self.n})")
                terms.append((term.power, matrix))
            entries[key] = MatrixPolynomial.from_terms(terms, self.n)
        return validate(SturmProblem.from_upper(self.m, self.n, self.nu, entries))

    @classmethod
    def from_problem(cls, problem: SturmProblem) -> "ProblemConfig":
        omega = []
        for i in range(problem.m + 1):
            for j in range(i, problem.m + 1):
                poly = problem.omega[(i, j)]
                if poly.is_zero():
                    continue
                terms = [TermConfig(power=d, re=coeff.real.tolist(), im=coeff.imag.tolist())
                         for d, coeff in poly.terms()]
                omega.append(OmegaEntry(i=i, j=j, terms=terms))
        return cls(m=problem.m, n=problem.n, nu=problem.nu, omega=omega)


def parse_problem_document(document: Any) -> SturmProblem:
    try:
        config = ProblemConfig.model_validate(document)
    except ValidationError as exc:
        raise ProblemConfigError(f"invalid problem config: {exc}") from exc
    return config.to_problem()


def read_problem_document(path: str) -> Dict[str, Any]:
    """Raw JSON document of a problem config."""
    try:
        with open(path, 'r', encoding='utf-8') as stream:
            return json.load(stream)
    except OSError as exc:
        raise ProblemConfigError(f"cannot read problem config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ProblemConfigError(f"malformed JSON in {path}: {exc}") from exc


def load_problem(path: str) -> SturmProblem:
    problem = parse_problem_document(read_problem_document(path))
    logging.info(f"Problem loaded from {path}: m={problem.m}, n={problem.n}, nu={problem.nu}")
    return problem


def set_parameter(document: Dict[str, Any], path: str, value: float) -> Dict[str, Any]:
    """
    Copy of a config document with one real scalar replaced.

    Args:
        document: raw problem config
        path: dotted address such as "omega.0.terms.0.re.0.0"; integers index lists
        value: new value

    Raises:
        ProblemConfigError: if the address does not name a real scalar
    """
    result = copy.deepcopy(document)
    # 逐级定位，数字键索引列表
    keys = path.split('.')
    node: Any = result
    try:
        for key in keys[:-1]:
            node = node[int(key)] if isinstance(node, list) else node[key]
        last = int(keys[-1]) if isinstance(node, list) else keys[-1]
        current = node[last]
    except (KeyError, IndexError, ValueError, TypeError) as exc:
        raise ProblemConfigError(f"parameter path {path!r} does not exist in the config") from exc
    if isinstance(current, bool) or not isinstance(current, (int, float)):
        raise ProblemConfigError(f"parameter path {path!r} does not name a real scalar")
    node[last] = float(value)
    return result


# --- Reports ---


class ConjugatePointEntry(BaseModel):
    lam: float = Field(..., alias='lambda')
    kernel_dim: int
    signature: int

    model_config = ConfigDict(populate_by_name=True)


class IndexReport(BaseModel):
    em_index: int
    morse_index: int
    agree: bool
    convention: Literal['crossing-sum'] = 'crossing-sum'
    epsilon: float
    galerkin_N: int
    delta: Optional[float] = None
    seed: int
    conjugate_points: List[ConjugatePointEntry] = Field(default_factory=list)
    classical_morse_index: Optional[int] = None

    @field_validator('conjugate_points')
    @classmethod
    def _sorted(cls, points):
        return sorted(points, key=lambda point: point.lam)

    @model_validator(mode='after')
    def _agreement(self):
        if self.agree != (self.em_index == self.morse_index):
            raise ValueError("agree must equal (em_index == morse_index)")
        return self


FLOAT_TOKEN = '__sturmflow_float_{}__'


def _hold_floats(value: Any, held: List[str]) -> Any:
    """Copy of a document with every real replaced by a token naming its 17-digit text."""
    if isinstance(value, dict):
        return {str(k): _hold_floats(v, held) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_hold_floats(v, held) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError(f"cannot serialize non-finite value {value}")
        held.append(FLOAT_FORMAT % float(value))
        return FLOAT_TOKEN.format(len(held) - 1)
    return value


def to_json(document: Any, indent: int = 2) -> str:
    """Deterministic JSON with reals at 17 significant digits."""
    held: List[str] = []
    text = json.dumps(_hold_floats(document, held), indent=indent)
    for k, literal in enumerate(held):
        text = text.replace(json.dumps(FLOAT_TOKEN.format(k)), literal, 1)
    return text + '\n'


def report_to_json(report: IndexReport) -> str:
    return to_json(report.model_dump(by_alias=True))


def write_text(text: str, path: Optional[str]) -> None:
    """Write to path, or to standard output when path is None."""
    if path is None:
        print(text, end='')
        return
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as stream:
        stream.write(text)
    logging.info(f"Output written to {path}")


# --- Tables ---

CONJUGATE_COLUMNS = ['lambda', 'kernel_dim', 'signature']
SWEEP_COLUMNS = ['param', 'em_index', 'morse_index', 'agree', 'delta', 'error']


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def conjugate_points_csv(rows: List[Dict[str, Any]]) -> str:
    return frame_to_csv(pd.DataFrame(rows, columns=CONJUGATE_COLUMNS))


def sweep_csv(rows: List[Dict[str, Any]]) -> str:
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    if not frame.empty:  # 空表保留表头
        frame = frame.sort_values('param', kind='stable')
        for column in ('em_index', 'morse_index'):
            frame[column] = frame[column].astype('Int64')
    return frame_to_csv(frame)


def append_run_record(report: IndexReport, output_file: str, problem_name: str = '') -> Optional[str]:
    """
    Append a verify run to the Excel run record.

    Args:
        report: finished index report
        output_file: .xlsx path, created when missing
        problem_name: label of the problem config

    Returns:
        the path written, or None on failure
    """
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    # 汇总表与共轭点表通过时间戳关联
    summary = report.model_dump(by_alias=True, exclude={'conjugate_points'})
    summary.update({'problem': problem_name, 'timestamp': timestamp})
    points = [dict(point, problem=problem_name, timestamp=timestamp)
              for point in report.model_dump(by_alias=True)['conjugate_points']]
    df_runs = pd.DataFrame([summary])
    df_points = pd.DataFrame(points, columns=CONJUGATE_COLUMNS + ['problem', 'timestamp'])

    try:
        os.makedirs(os.path.dirname(os.path.abspath(output_file)), exist_ok=True)
        # 读取已有记录并追加
        if os.path.isfile(output_file):
            existing = pd.read_excel(output_file, sheet_name=None)
            if 'runs' in existing:
                df_runs = pd.concat([existing['runs'], df_runs], ignore_index=True)
            if 'conjugate_points' in existing:
                df_points = pd.concat([existing['conjugate_points'], df_points], ignore_index=True)
        with pd.ExcelWriter(output_file, engine='openpyxl', mode='w') as writer:
            df_runs.to_excel(writer, sheet_name='runs', index=False)
            df_points.to_excel(writer, sheet_name='conjugate_points', index=False)
        logging.info(f"Run record saved to {output_file}")
        return output_file
    except Exception as e:
        logging.error(f"Could not save run record {output_file}: {e}")
        return None
