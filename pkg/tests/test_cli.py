import io
import json

import pandas as pd
import pytest

import cli
from bounds import squeezing_limit_integral
from cli import build_config, build_parser, main, parse_report


def last_error(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


class TestLimit:
    def test_csv_file(self, tmp_path):
        out = tmp_path / "limit.csv"
        assert main(['limit', '--tau', '0.01', '--format', 'csv', '--out', str(out)]) == 0
        text = out.read_text()
        assert text.startswith("tau,paper_erf_db,")
        assert list(pd.read_csv(io.StringIO(text)).columns)[-1] == 'seed'
        meta, rows = parse_report(text, "csv")
        assert meta['metadata']['seed'] == 1234
        assert list(rows.columns) == ['tau', 'paper_erf_db', 'direct_integral_db', 'gap_db', 'error']
        assert rows['paper_erf_db'][0] == pytest.approx(-14.96, abs=0.01)

    def test_table_shows_two_decimals(self, capsys):
        assert main(['limit', '--tau', '0.01', '--tau', '1']) == 0
        out = capsys.readouterr().out
        assert "-14.96" in out
        assert "-0.00" in out
        assert "max_gap_db" in out

    def test_json_round_trip(self, tmp_path):
        out = tmp_path / "limit.json"
        assert main(['limit', '--tau', '0.01', '--tau', '0.1', '--format', 'json', '--out', str(out)]) == 0
        meta, rows = parse_report(out.read_text(), "json")
        assert meta['metadata']['subcommand'] == 'limit'
        assert meta['metadata']['tolerances']['rel_tol'] == 1e-8
        assert meta['summary']['max_gap_db'] == pytest.approx(3.01, abs=0.01)
        assert len(rows) == 2
        assert rows['error'].isna().all()

    def test_output_is_deterministic(self, tmp_path):
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (first, second):
            assert main(['limit', '--tau', '0.01', '--tau', '0.3', '--format', 'csv', '--out', str(path)]) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_reduction(self, capsys):
        assert main(['limit', '--reduction', '-6.2', '--format', 'json']) == 0
        document = json.loads(capsys.readouterr().out)
        row = document['rows'][0]
        assert row['tau_paper_erf'] == pytest.approx(0.5 * row['tau_direct_integral'], rel=1e-8)

    def test_tau_and_reduction_together(self, capsys):
        assert main(['limit', '--tau', '0.01', '--reduction', '-6.2', '--format', 'csv']) == 2
        assert last_error(capsys)['error'] == 'ConfigError'
        assert capsys.readouterr().out == ""

    def test_taus_from_config_file(self, tmp_path, capsys):
        config = tmp_path / "run.yaml"
        config.write_text("limit:\n  taus: [0.1]\n")
        assert main(['limit', '--config', str(config), '--format', 'json']) == 0
        document = json.loads(capsys.readouterr().out)
        assert [row['tau'] for row in document['rows']] == [0.1]


class TestErrors:
    def test_unknown_probe(self, capsys):
        assert main(['bound', '--probe', 'boxcar']) == 2
        record = last_error(capsys)
        assert record['error'] == 'ConfigError'
        assert record['exit_status'] == 2

    def test_nonpositive_tau(self, capsys):
        assert main(['limit', '--tau', '-1']) == 2
        assert last_error(capsys)['error'] == 'DomainError'

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(['limit', '--config', str(tmp_path / "absent.yaml")]) == 2
        assert last_error(capsys)['error'] == 'ConfigError'

    def test_unwritable_output(self, tmp_path, capsys):
        assert main(['limit', '--tau', '0.1', '--out', str(tmp_path / "missing" / "out.txt")]) == 3
        assert last_error(capsys)['exit_status'] == 3


    def test_states_rejected_before_decomposition(self, monkeypatch, capsys):
        calls = []
        monkeypatch.setattr(cli, 'decomposition_check', lambda *a, **k: calls.append(a))
        assert main(['verify', '--nmax', '2', '--random-states', '0']) == 2
        assert last_error(capsys)['error'] == 'TruncationCapacityError'
        assert calls == []

    def test_state_mode_out_of_range(self, tmp_path, capsys):
        config = tmp_path / "run.yaml"
        config.write_text("verify:\n  states:\n    - kind: squeezed_vacuum\n      r: 0.01\n      modes: [5]\n")
        assert main(['verify', '--config', str(config), '--random-states', '0']) == 2
        assert last_error(capsys)['error'] == 'ValidationError'


class TestConfig:
    def test_fock_runs_default_to_unit_t0(self):
        config = build_config(build_parser().parse_args(['verify']))
        assert config.probe.t0 == 1.0
        assert config.nmax == 6
        assert len(config.states) == 2

    def test_bound_runs_use_probe_section(self):
        config = build_config(build_parser().parse_args(['bound', '--probe', 'lorentzian']))
        assert config.probe.kind.value == 'lorentzian_squared'
        assert config.probe.t0 == 0.01
        assert config.field_kind.value == 'electromagnetic'

    def test_verify_builds_every_state(self):
        config = build_config(build_parser().parse_args(['verify', '--modes', '2', '--nmax', '4', '--random-states', '5']))
        assert config.space.nmax == 4
        assert config.space.n_modes == 2
        assert len(config.field_states) == 7

    def test_energy_warns_about_fixed_setup(self, monkeypatch):
        warnings = []
        monkeypatch.setattr(cli.logger, 'warning', warnings.append)
        build_config(build_parser().parse_args(['energy', '--nmax', '5', '--probe', 'lorentzian']))
        assert len(warnings) == 1
        assert '--probe' in warnings[0] and '--nmax' in warnings[0]

    def test_energy_without_flags_is_quiet(self, monkeypatch):
        warnings = []
        monkeypatch.setattr(cli.logger, 'warning', warnings.append)
        build_config(build_parser().parse_args(['energy']))
        assert warnings == []

    def test_tolerance_overrides(self):
        config = build_config(build_parser().parse_args(['decompose', '--operator-tol', '1e-6']))
        assert config.tolerances['operator_tolerance'] == 1e-6


class TestSubcommands:
    def test_bound(self, capsys):
        argv = ['bound', '--probe', 'gaussian', '--t0', '0.5', '--omega0', '1', '--bandwidth', '0.001', '--format', 'json']
        assert main(argv) == 0
        row = json.loads(capsys.readouterr().out)['rows'][0]
        assert row['r_db'] == pytest.approx(squeezing_limit_integral(0.5), abs=0.02)
        assert row['delta_max'] < 0.0

    def test_sweep(self, capsys):
        assert main(['sweep', '--tau', '0.5', '--tau', '1', '--format', 'json']) == 0
        rows = json.loads(capsys.readouterr().out)['rows']
        assert len(rows) == 4

    def test_decompose(self, capsys):
        assert main(['decompose', '--modes', '2', '--nmax', '4', '--format', 'json']) == 0
        rows = json.loads(capsys.readouterr().out)['rows']
        assert [row['kind'] for row in rows] == ['scalar_A', 'scalar_A_tilde']
        assert all(row['operator_residual'] <= 1e-8 for row in rows)

    def test_verify(self, capsys):
        argv = ['verify', '--modes', '2', '--nmax', '4', '--random-states', '8', '--seed', '3', '--format', 'json']
        assert main(argv) == 0
        document = json.loads(capsys.readouterr().out)
        assert document['metadata']['seed'] == 3
        assert document['summary']['states'] == 10
        assert document['summary']['min_margin'] >= -1e-9
        margins = [row['margin'] for row in document['rows']]
        assert margins == sorted(margins)

    def test_energy(self, capsys):
        assert main(['energy', '--format', 'json']) == 0
        document = json.loads(capsys.readouterr().out)
        assert document['summary']['min_rho'] < 0.0
        assert document['summary']['total_energy'] > 0.0
        assert len(document['rows']) == 61
