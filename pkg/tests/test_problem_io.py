import json

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from src.errors import ProblemConfigError, ProblemValidationError
from src.problem_io import (ConjugatePointEntry, IndexReport, ProblemConfig, append_run_record,
                            conjugate_points_csv, load_problem, parse_problem_document, read_problem_document,
                            report_to_json, set_parameter, sweep_csv, to_json)

from .conftest import C_A, assert_allclose


def scalar_document(c=-1.0):
    return {'m': 1, 'n': 1, 'nu': 0, 'omega': [
        {'i': 0, 'j': 0, 'terms': [{'power': 0, 're': [[c]]}]},
        {'i': 1, 'j': 1, 'terms': [{'power': 0, 're': [[1.0]]}]},
    ]}


def make_report(**overrides):
    fields = dict(em_index=-2, morse_index=-2, agree=True, epsilon=1.0 / 64, galerkin_N=16, seed=0,
                  conjugate_points=[ConjugatePointEntry(lam=0.8, kernel_dim=1, signature=-1),
                                    ConjugatePointEntry(lam=0.4, kernel_dim=1, signature=-1)])
    fields.update(overrides)
    return IndexReport(**fields)


# ### problem configs


def test_load_canonical_configs(problem_path):
    pa = load_problem(problem_path('prob_a.json'))
    assert_allclose(pa.omega[(0, 0)](0.0), [[-C_A]], atol=1e-12)
    pb = load_problem(problem_path('prob_b.json'))
    assert (pb.m, pb.n, pb.nu) == (1, 2, 1)
    pc = load_problem(problem_path('prob_c.json'))
    assert pc.m == 2


def test_complex_terms_and_mirrors():
    document = {'m': 1, 'n': 2, 'nu': 0, 'omega': [
        {'i': 0, 'j': 1, 'terms': [{'power': 1, 're': [[0.0, 1.0], [1.0, 0.0]], 'im': [[0.0, 2.0], [-2.0, 0.0]]}]},
        {'i': 1, 'j': 1, 'terms': [{'power': 0, 're': [[1.0, 0.0], [0.0, 1.0]]}]},
    ]}
    problem = parse_problem_document(document)
    assert_allclose(problem.omega[(1, 0)](0.5), [[0.0, 0.5 + 1j], [0.5 - 1j, 0.0]])
    assert problem.omega[(0, 0)].is_zero()


def test_config_round_trip(pb):
    rebuilt = ProblemConfig.from_problem(pb).to_problem()
    for key, poly in pb.omega.items():
        assert rebuilt.omega[key].allclose(poly)


def test_rejects_lower_triangle_entry():
    document = scalar_document()
    document['omega'][0].update(i=1, j=0)
    with pytest.raises(ProblemConfigError):
        parse_problem_document(document)


def test_rejects_index_beyond_order_and_duplicates():
    document = scalar_document()
    document['omega'].append({'i': 0, 'j': 2, 'terms': []})
    with pytest.raises(ProblemConfigError, match='exceeds half-order'):
        parse_problem_document(document)
    document = scalar_document()
    document['omega'].append(document['omega'][0])
    with pytest.raises(ProblemConfigError, match='given twice'):
        parse_problem_document(document)


def test_rejects_wrong_shape_and_missing_fields():
    document = scalar_document()
    document['omega'][0]['terms'][0]['re'] = [[1.0, 0.0], [0.0, 1.0]]
    with pytest.raises(ProblemConfigError, match='shape'):
        parse_problem_document(document)
    with pytest.raises(ProblemConfigError):
        parse_problem_document({'m': 1, 'n': 1})


def test_rejects_non_finite_values():
    with pytest.raises(ProblemConfigError):
        parse_problem_document(scalar_document(float('nan')))


def test_invariant_violation_is_reported():
    document = scalar_document()
    document['omega'][1]['terms'][0]['re'] = [[-1.0]]
    with pytest.raises(ProblemValidationError) as info:
        parse_problem_document(document)
    assert any('leading symmetry mismatch' in line for line in info.value.diagnostics)


def test_read_errors(tmp_path):
    with pytest.raises(ProblemConfigError, match='cannot read'):
        read_problem_document(str(tmp_path / 'missing.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text('{"m": 1,')
    with pytest.raises(ProblemConfigError, match='malformed JSON'):
        read_problem_document(str(broken))


def test_set_parameter():
    document = scalar_document(-1.0)
    changed = set_parameter(document, 'omega.0.terms.0.re.0.0', -4.0)
    assert changed['omega'][0]['terms'][0]['re'][0][0] == -4.0
    assert document['omega'][0]['terms'][0]['re'][0][0] == -1.0
    with pytest.raises(ProblemConfigError, match='does not exist'):
        set_parameter(document, 'omega.5.terms.0.re.0.0', 1.0)
    with pytest.raises(ProblemConfigError, match='real scalar'):
        set_parameter(document, 'omega.0.terms', 1.0)


# ### reports


def test_report_sorts_points_and_checks_agreement():
    report = make_report()
    assert [p.lam for p in report.conjugate_points] == [0.4, 0.8]
    assert report.convention == 'crossing-sum'
    with pytest.raises(ValidationError):
        make_report(agree=False)


def test_report_json_is_deterministic():
    text = report_to_json(make_report())
    assert text == report_to_json(make_report())
    assert '"lambda": 0.40000000000000002' in text
    parsed = json.loads(text)
    assert parsed['em_index'] == -2
    assert parsed['delta'] is None
    assert parsed['epsilon'] == 0.015625


def test_to_json_rejects_non_finite():
    with pytest.raises(ValueError):
        to_json({'value': float('inf')})
    expected = '{\n  "flags": [\n    true,\n    null\n  ],\n  "empty": {}\n}\n'
    assert to_json({'flags': [True, None], 'empty': {}}) == expected


def test_to_json_writes_reals_at_full_precision():
    document = {'x': [0.1, np.float64(2.5), np.int64(3)], 'tag': 'a', 'nested': {'y': -0.25}}
    expected = ('{\n  "x": [\n    0.10000000000000001,\n    2.5,\n    3\n  ],\n  "tag": "a",\n'
                '  "nested": {\n    "y": -0.25\n  }\n}\n')
    assert to_json(document) == expected
    assert json.loads(to_json(document))['x'][0] == 0.1


# ### tables


def test_conjugate_points_csv():
    text = conjugate_points_csv([{'lambda': 0.5, 'kernel_dim': 1, 'signature': -1}])
    assert text == 'lambda,kernel_dim,signature\n0.5,1,-1\n'
    assert conjugate_points_csv([]) == 'lambda,kernel_dim,signature\n'


def test_sweep_csv_sorts_rows_and_keeps_failures():
    rows = [
        {'param': 2.0, 'em_index': -1, 'morse_index': -1, 'agree': True, 'delta': None, 'error': None},
        {'param': 1.0, 'em_index': None, 'morse_index': None, 'agree': None, 'delta': None, 'error': 'boom'},
    ]
    lines = sweep_csv(rows).splitlines()
    assert lines[0] == 'param,em_index,morse_index,agree,delta,error'
    assert lines[1].startswith('1,,,') and lines[1].endswith('boom')
    assert lines[2].startswith('2,-1,-1,True')


def test_append_run_record(tmp_path):
    output = str(tmp_path / 'records' / 'run_record.xlsx')
    assert append_run_record(make_report(), output, 'prob_a.json') == output
    assert append_run_record(make_report(delta=5e-4), output, 'prob_a.json') == output
    sheets = pd.read_excel(output, sheet_name=None)
    assert len(sheets['runs']) == 2
    assert len(sheets['conjugate_points']) == 4
    assert set(sheets['conjugate_points']['timestamp']) <= set(sheets['runs']['timestamp'])
    assert np.isclose(sheets['runs']['delta'].iloc[1], 5e-4)
