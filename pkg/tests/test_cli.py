#!/usr/bin/env python3
"""
Command Line Tests
Subcommands write their artifacts and map laboratory errors to exit codes
"""

import json
import math
from pathlib import Path

import pytest

from cli.main import build_parser, main


def run(capsys, argv):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


class TestParser:

    def test_common_flags(self):
        args = build_parser().parse_args(['sweep', '--seed', '3', '--set', 'a.b=1', '--set', 'c.d=2'])
        assert args.command == 'sweep'
        assert args.seed == 3
        assert args.set == ['a.b=1', 'c.d=2']

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['plot'])


class TestSubcommands:

    def test_sample(self, capsys, tmp_path):
        code, summary = run(capsys, ['sample', '--n', '30', '--seed', '2', '--out', str(tmp_path)])
        assert code == 0
        assert summary['n'] == 30 and summary['seed'] == 2
        lines = (tmp_path / 'cloud.csv').read_text().splitlines()
        assert len(lines) == 31

    def test_graph(self, capsys, tmp_path):
        code, summary = run(capsys, ['graph', '--n', '100', '--eps', '0.3', '--out', str(tmp_path)])
        assert code == 0
        assert summary['eps'] == 0.3
        assert summary['components'] >= 1
        assert (tmp_path / 'graph.csv').exists()

    def test_eigen(self, capsys, tmp_path):
        code, summary = run(capsys, ['eigen', '--n', '200', '--count', '3', '--out', str(tmp_path)])
        assert code == 0
        assert len(summary['eigenvalues']) == 3
        assert summary['eigenvalues'][0] == pytest.approx(0.0, abs=1e-6)
        assert summary['reference_factor'] == pytest.approx(math.pi / 4.0)
        assert (tmp_path / 'eigenpairs.csv').exists()

    def test_continuum(self, capsys, tmp_path):
        code, summary = run(capsys, ['continuum', '--count', '3', '--method', 'analytic',
                                     '--set', 'continuum.resolution=16', '--out', str(tmp_path)])
        assert code == 0
        assert summary['method'] == 'analytic'
        assert summary['eigenvalues'] == pytest.approx([0.0, math.pi ** 2, math.pi ** 2])
        header = (tmp_path / 'continuum.csv').read_text().splitlines()[0]
        assert header.endswith('u1,u2,u3')

    def test_continuum_courant_fischer(self, capsys, tmp_path):
        code, summary = run(capsys, ['continuum', '--count', '2', '--courant-fischer', '5',
                                     '--set', 'domain.lower=[0.0]', '--set', 'domain.upper=[1.0]',
                                     '--set', 'continuum.resolution=32', '--out', str(tmp_path)])
        assert code == 0
        assert summary['courant_fischer_passed'] is True
        assert len(summary['courant_fischer']) == 2


class TestExitCodes:

    def test_missing_config_file(self, capsys, tmp_path):
        code, payload = run(capsys, ['sample', '--config', str(tmp_path / 'absent.yaml')])
        assert code == 2
        assert payload['error'] == 'ConfigurationError'

    def test_invalid_override(self, capsys, tmp_path):
        code, payload = run(capsys, ['eigen', '--set', 'laplacian.kind=signless', '--out', str(tmp_path)])
        assert code == 2
        assert payload['exit_code'] == 2

    def test_one_based_index(self, capsys, tmp_path):
        code, payload = run(capsys, ['tl2', '--n', '50', '--index', '0', '--out', str(tmp_path)])
        assert code == 2
        assert payload['error'] == 'InvalidArgumentError'


class TestLayout:

    def test_blank_lines_between_definitions(self):
        from flake8.api import legacy as flake8
        style = flake8.get_style_guide(select=['E301', 'E302', 'E303', 'E305'])
        report = style.check_files([str(Path(__file__).resolve().parent.parent / 'cli')])
        assert report.total_errors == 0


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
