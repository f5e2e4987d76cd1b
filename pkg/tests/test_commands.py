import json
import os

import numpy as np
import pandas as pd
import pytest

from main import main
from src.commands import (EXIT_INPUT, EXIT_OK, RunOptions, apply_overrides, cmd_verify, log_crossing_triple, run_sweep,
                          verify_problem)
from src.config_loader import Settings
from src.em_pipeline import em_index_of_form
from src.morse_pipeline import morse_index
from src.problem_io import parse_problem_document, read_problem_document

from .conftest import C_A, CONFIG_PATH

C_PARAM = 'omega.0.terms.0.re.0.0'


def run_cli(*args):
    return main(list(args) + ['--config', CONFIG_PATH])


def read_json(path):
    with open(path, 'r', encoding='utf-8') as stream:
        return json.load(stream)


def write_problem(tmp_path, document, name='problem.json'):
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return str(path)


def test_apply_overrides():
    settings = apply_overrides(Settings(), RunOptions(galerkin=8, epsilon=0.01, seed=3, tol=1e-9))
    assert settings.galerkin.n_start == 8
    assert settings.epsilon_guard.initial == 0.01
    assert settings.seed == 3
    assert settings.tolerances.rank_rel_tol == 1e-9
    assert apply_overrides(Settings(), RunOptions()) == Settings()


def test_verify_prob_a(problem_path, tmp_path):
    out = str(tmp_path / 'report.json')
    assert run_cli('verify', problem_path('prob_a.json'), '--out', out) == EXIT_OK
    report = read_json(out)
    assert (report['em_index'], report['morse_index'], report['agree']) == (-2, -2, True)
    assert report['convention'] == 'crossing-sum'
    assert np.allclose([p['lambda'] for p in report['conjugate_points']], [0.4, 0.8], rtol=0, atol=1e-7)
    assert report['delta'] is None
    assert report['classical_morse_index'] == 2


def test_verify_prob_b_to_stdout(problem_path, capsys):
    assert run_cli('verify', problem_path('prob_b.json')) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report['em_index'] == report['morse_index'] == 1
    assert [p['signature'] for p in report['conjugate_points']] == [1, -1, 1]


def test_verify_regularizes_endpoint_degeneracy(problem_path, tmp_path):
    document = read_problem_document(problem_path('prob_a.json'))
    document['omega'][0]['terms'][0]['re'] = [[-(2 * np.pi) ** 2]]
    out = str(tmp_path / 'report.json')
    assert run_cli('verify', write_problem(tmp_path, document), '--out', out) == EXIT_OK
    report = read_json(out)
    assert 1e-4 <= report['delta'] <= 1e-3
    assert report['em_index'] == report['morse_index'] == -1


def test_verify_with_fixed_delta(problem_path, tmp_path):
    out = str(tmp_path / 'report.json')
    assert run_cli('verify', problem_path('prob_a.json'), '--delta', '1e-3', '--out', out) == EXIT_OK
    report = read_json(out)
    assert report['delta'] == 1e-3
    assert report['em_index'] == -2


def coincident_prob_b(problem_path):
    document = read_problem_document(problem_path('prob_b.json'))
    document['omega'][0]['terms'][0]['re'] = [[-C_A, 0.0], [0.0, C_A]]
    return document


def test_verify_regularizes_coincident_crossings(problem_path, tmp_path):
    out = str(tmp_path / 'report.json')
    assert run_cli('verify', write_problem(tmp_path, coincident_prob_b(problem_path)), '--out', out) == EXIT_OK
    report = read_json(out)
    assert 1e-4 <= report['delta'] <= 1e-3
    assert (report['em_index'], report['morse_index'], report['agree']) == (0, 0, True)
    assert np.allclose([p['lambda'] for p in report['conjugate_points']], [0.4, 0.8], rtol=0, atol=1e-5)
    assert [p['signature'] for p in report['conjugate_points']] == [0, 0]


def test_verify_report_is_reproducible(problem_path, tmp_path):
    config = write_problem(tmp_path, coincident_prob_b(problem_path))
    first, second = tmp_path / 'first.json', tmp_path / 'second.json'
    assert run_cli('verify', config, '--seed', '7', '--out', str(first)) == EXIT_OK
    assert run_cli('verify', config, '--seed', '7', '--out', str(second)) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_crossing_signatures_agree_on_all_three_forms(pb, settings):
    em = em_index_of_form(pb, settings)
    morse = morse_index(pb, settings)
    assert log_crossing_triple(em.records, morse) == 0
    morse.crossings = []
    assert log_crossing_triple(em.records, morse) == 3


def test_verify_problem_shares_seed_with_regularization(problem_path, settings):
    report = verify_problem(parse_problem_document(coincident_prob_b(problem_path)), settings)
    assert report.delta is not None
    assert report.seed == settings.seed
    assert report.em_index == report.morse_index == 0


def test_verify_writes_run_record(problem_path, tmp_path):
    record = str(tmp_path / 'record.xlsx')
    settings = Settings.model_validate({'output': {'record_file': record, 'record_enabled': True}})
    status = cmd_verify(problem_path('prob_0.json'), settings, RunOptions(out=str(tmp_path / 'report.json')))
    assert status == EXIT_OK
    assert os.path.isfile(record)


def test_missing_problem_is_input_error(tmp_path, capsys):
    assert run_cli('verify', str(tmp_path / 'absent.json')) == EXIT_INPUT
    assert 'error:' in capsys.readouterr().err


def test_invalid_problem_lists_diagnostics(tmp_path, capsys):
    document = {'m': 1, 'n': 1, 'nu': 0, 'omega': [{'i': 1, 'j': 1, 'terms': [{'power': 1, 're': [[1.0]]}]}]}
    assert run_cli('em-index', write_problem(tmp_path, document)) == EXIT_INPUT
    err = capsys.readouterr().err
    assert 'must be constant' in err


def test_bad_settings_file(problem_path, tmp_path):
    config = tmp_path / 'settings.yaml'
    config.write_text('scan:\n  points: 1\n')
    assert main(['verify', problem_path('prob_0.json'), '--config', str(config)]) == EXIT_INPUT


def test_conjugate_points_csv(problem_path, tmp_path):
    out = str(tmp_path / 'points.csv')
    assert run_cli('conjugate-points', problem_path('prob_b.json'), '--out', out) == EXIT_OK
    frame = pd.read_csv(out)
    assert list(frame.columns) == ['lambda', 'kernel_dim', 'signature']
    assert np.allclose(frame['lambda'], [0.4, 2.0 / 3.0, 0.8], rtol=0, atol=1e-7)
    assert list(frame['signature']) == [1, -1, 1]


def test_em_index_command(problem_path, tmp_path):
    out = str(tmp_path / 'em.json')
    assert run_cli('em-index', problem_path('prob_c.json'), '--out', out) == EXIT_OK
    assert read_json(out)['em_index'] == -1


def test_morse_index_command(problem_path, tmp_path):
    out = str(tmp_path / 'morse.json')
    assert run_cli('morse-index', problem_path('prob_b.json'), '--galerkin', '12', '--out', out) == EXIT_OK
    result = read_json(out)
    assert result['morse_index'] == 1
    assert result['galerkin_N'] == 12
    assert result['classical_morse_index'] is None


def test_oracle_command(problem_path, capsys):
    assert run_cli('oracle', problem_path('prob_a.json')) == EXIT_OK
    assert capsys.readouterr().out == '2\n'
    assert run_cli('oracle', problem_path('prob_b.json')) == EXIT_INPUT


def test_axioms_command(tmp_path):
    out = tmp_path / 'axioms.txt'
    assert run_cli('axioms', '--out', str(out)) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[-1] == '10/10 axiom checks passed'
    assert all(line.startswith('PASS') for line in lines[:-1])


def test_sweep_without_steps(problem_path, capsys):
    assert run_cli('sweep', problem_path('prob_a.json'), '--param', C_PARAM,
                   '--from', '-1', '--to', '-2', '--steps', '0') == EXIT_OK
    assert capsys.readouterr().out == 'param,em_index,morse_index,agree,delta,error\n'


def test_sweep_rejects_unknown_parameter(problem_path):
    assert run_cli('sweep', problem_path('prob_a.json'), '--param', 'omega.9.re',
                   '--from', '-1', '--to', '-2', '--steps', '3') == EXIT_INPUT


def test_sweep_records_failed_samples(problem_path):
    document = read_problem_document(problem_path('prob_0.json'))
    rows = run_sweep(document, 'omega.0.terms.0.re.0.0', -1.0, -1.0, 1, Settings())
    assert len(rows) == 1
    assert rows[0]['em_index'] is None
    assert 'leading symmetry mismatch' in rows[0]['error']


@pytest.mark.slow
def test_sweep_over_zero_order_coefficient(problem_path, tmp_path):
    out = str(tmp_path / 'sweep.csv')
    status = run_cli('sweep', problem_path('prob_a.json'), '--param', C_PARAM,
                     '--from', repr(-(0.5 * np.pi) ** 2), '--to', repr(-(3.5 * np.pi) ** 2), '--steps', '7',
                     '--out', out)
    assert status == EXIT_OK
    frame = pd.read_csv(out)
    assert list(frame['em_index']) == [-3, -3, -2, -2, -2, -1, 0]
    assert list(frame['em_index']) == list(frame['morse_index'])
    assert frame['agree'].all()
