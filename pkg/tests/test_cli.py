"""
Tests for the intentgames command-line interface
"""
import os
import shutil
import tempfile

import pytest
import yaml
from click.testing import CliRunner

from intentgames.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, cli


class TestCli:
    """Test CLI commands and exit codes"""

    def setup_method(self):
        """Setup test environment"""
        self.temp_dir = tempfile.mkdtemp()
        self.out = os.path.join(self.temp_dir, 'out')
        self.runner = CliRunner()
        self.quiet = {'INTENTGAMES_LOG_LEVEL': 'WARNING'}

    def teardown_method(self):
        """Cleanup test environment"""
        if os.path.exists(self.temp_dir):
            shutil.rmtree(self.temp_dir)

    def _write_config(self, data):
        path = os.path.join(self.temp_dir, 'experiment.yaml')
        with open(path, 'w') as f:
            yaml.safe_dump(data, f)
        return path

    def _toy(self, **extra):
        data = {'environment': {'name': 'scalar_toy'}, 'initial_estimate': 0.0}
        data.update(extra)
        return self._write_config(data)

    def test_run(self):
        """Test that run writes its outputs and exits 0"""
        result = self.runner.invoke(cli, ['--config', self._toy(), 'run', '--out', self.out])
        assert result.exit_code == 0, result.output
        assert os.path.exists(os.path.join(self.out, 'summary.csv'))
        assert "Wrote" in result.output

    def test_run_config_after_subcommand(self):
        """Test that run accepts --config after the subcommand"""
        result = self.runner.invoke(cli, ['run', '--config', self._toy(), '--out', self.out])
        assert result.exit_code == 0, result.output
        assert os.path.exists(os.path.join(self.out, 'summary.csv'))

    def test_subcommand_config_beats_group_config(self):
        """Test that a subcommand --config wins over the group --config"""
        broken = os.path.join(self.temp_dir, 'broken.yaml')
        with open(broken, 'w') as f:
            yaml.safe_dump({'environment': {'name': 'scalar_toy'}, 'models': []}, f)
        result = self.runner.invoke(cli, ['--config', broken, 'check', 'prop2',
                                          '--config', self._toy(), '--out', self.out])
        assert result.exit_code == 0, result.output
        assert "prop2: PASS" in result.output

    def test_run_flag_beats_environment_variable(self):
        """Test that --out wins over INTENTGAMES_OUT"""
        elsewhere = os.path.join(self.temp_dir, 'elsewhere')
        result = self.runner.invoke(cli, ['--config', self._toy(), 'run', '--out', self.out],
                                    env={'INTENTGAMES_OUT': elsewhere})
        assert result.exit_code == 0, result.output
        assert os.path.exists(os.path.join(self.out, 'summary.csv'))
        assert not os.path.exists(elsewhere)

    def test_environment_variable_sets_output(self):
        """Test that INTENTGAMES_OUT applies without a flag"""
        result = self.runner.invoke(cli, ['--config', self._toy(), 'run'],
                                    env={'INTENTGAMES_OUT': self.out})
        assert result.exit_code == 0, result.output
        assert os.path.exists(os.path.join(self.out, 'config.resolved.yaml'))

    def test_config_error_exit_code(self):
        """Test that an invalid config exits 2 and names the key"""
        path = self._write_config({'environment': {'name': 'scalar_toy'}, 'models': []})
        result = self.runner.invoke(cli, ['--config', path, 'run', '--out', self.out])
        assert result.exit_code == EXIT_CONFIG
        assert "models: must be non-empty" in result.output
        assert not os.path.exists(self.out)

    def test_unknown_parameter_exit_code(self):
        """Test that an unknown environment parameter exits 2"""
        path = self._write_config({'environment': {'name': 'furniture', 'params': {'mass': 3}}})
        result = self.runner.invoke(cli, ['--config', path, 'run', '--out', self.out])
        assert result.exit_code == EXIT_CONFIG
        assert "environment.params.mass" in result.output

    def test_check_pass(self):
        """Test that a passing check prints its report and exits 0"""
        result = self.runner.invoke(cli, ['--config', self._toy(), 'check', 'prop2',
                                          '--out', self.out])
        assert result.exit_code == 0, result.output
        assert "jacobian_norm" in result.output
        assert "prop2: PASS" in result.output
        assert os.path.exists(os.path.join(self.out, 'prop2_report.yaml'))

    def test_check_fail(self):
        """Test that a failing check exits 1"""
        result = self.runner.invoke(cli, ['--config', self._toy(alpha=0.0), 'check', 'prop1',
                                          '--out', self.out])
        assert result.exit_code == EXIT_CHECK_FAILED
        assert "prop1: FAIL" in result.output

    def test_check_nonlinear_environment(self):
        """Test that checks on nonlinear environments are config errors"""
        path = self._write_config({'environment': {'name': 'furniture'}})
        result = self.runner.invoke(cli, ['--config', path, 'check', 'prop1', '--out', self.out])
        assert result.exit_code == EXIT_CONFIG

    def test_unknown_proposition(self):
        """Test that click rejects an unknown proposition"""
        result = self.runner.invoke(cli, ['check', 'prop9'])
        assert result.exit_code == 2

    def test_bench(self):
        """Test that bench writes bench.csv"""
        path = self._toy(bench={'repeats': 5})
        result = self.runner.invoke(cli, ['--config', path, 'bench', '--out', self.out])
        assert result.exit_code == 0, result.output
        assert "scalar_toy: solve" in result.output
        assert os.path.exists(os.path.join(self.out, 'bench.csv'))

    @pytest.mark.parametrize("name", ['furniture', 'lunar_lander'])
    def test_print_config(self, name):
        """Test that print-config emits a loadable template"""
        result = self.runner.invoke(cli, ['print-config', name], env=self.quiet)
        assert result.exit_code == 0, result.output
        data = yaml.safe_load(result.output)
        assert data['environment']['name'] == name

    def test_print_config_params_only(self):
        """Test that --params-only prints just the environment defaults"""
        result = self.runner.invoke(cli, ['print-config', 'furniture', '--params-only'],
                                    env=self.quiet)
        assert result.exit_code == 0
        assert yaml.safe_load(result.output)['phi0'] == 0.6

    def test_missing_config_file(self):
        """Test that a missing --config path is a usage error"""
        result = self.runner.invoke(cli, ['--config', os.path.join(self.temp_dir, 'nope.yaml'), 'run'])
        assert result.exit_code == 2
