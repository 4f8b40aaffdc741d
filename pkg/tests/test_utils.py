import math
from unittest.mock import patch

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from django.core.exceptions import SuspiciousFileOperation
from django.test import TestCase
from django.test import override_settings

from cail import utils


class SettingTest(TestCase):
    def test_get_setting(self):
        value = utils.setting('SECRET_KEY')
        self.assertEqual(settings.SECRET_KEY, value)

    def test_missing_setting_falls_back(self):
        self.assertEqual(utils.setting('CAIL_NOT_A_SETTING', 7), 7)


class ArtifactNameTest(TestCase):
    def test_plain(self):
        self.assertEqual(utils.artifact_name('run/ckpt_100'), 'run/ckpt_100')

    def test_folds_dots(self):
        self.assertEqual(utils.artifact_name('run/../other/./metrics.csv'), 'other/metrics.csv')

    def test_keeps_trailing_slash(self):
        self.assertEqual(utils.artifact_name('runs/cail/'), 'runs/cail/')

    def test_windows_separators(self):
        self.assertEqual(utils.artifact_name('runs\\cail\\config'), 'runs/cail/config')

    def test_root(self):
        self.assertEqual(utils.artifact_name('.'), '')
        self.assertEqual(utils.artifact_name(''), '')

    def test_escaping_the_root_raises(self):
        with self.assertRaises(ValueError):
            utils.artifact_name('../../etc/passwd')
        with self.assertRaises(ValueError):
            utils.artifact_name('run/../..')
        with self.assertRaises(ValueError):
            utils.artifact_name('/etc/passwd')


class TruncateNameTest(TestCase):
    def test_no_limit(self):
        name = 'runs/cail-pendulum-s0/metrics.csv'
        self.assertEqual(utils.truncate_name(name, None), name)
        self.assertEqual(utils.truncate_name(name, len(name)), name)

    def test_shortens_file_root(self):
        name = 'run/config.txt'
        self.assertEqual(utils.truncate_name(name, len(name) - 1), 'run/confi.txt')

    def test_truncating_away_the_root_raises(self):
        name = 'run/ckpt.bin'
        with self.assertRaises(SuspiciousFileOperation):
            utils.truncate_name(name, len(name) - 5)


class RunsRootTest(TestCase):
    def test_default(self):
        with patch.dict('os.environ', {}, clear=True):
            self.assertEqual(utils.runs_root(), 'runs')

    @override_settings(CAIL_RUNS_DIR='/data/from-settings')
    def test_setting(self):
        with patch.dict('os.environ', {}, clear=True):
            self.assertEqual(utils.runs_root(), '/data/from-settings')

    @override_settings(CAIL_RUNS_DIR='/data/from-settings')
    def test_environment_wins(self):
        with patch.dict('os.environ', {'CAIL_RUNS_DIR': '/data/from-env'}):
            self.assertEqual(utils.runs_root(), '/data/from-env')


class FormatFloatTest(TestCase):
    def test_six_significant_digits(self):
        self.assertEqual(utils.format_float(1.0 / 3.0), '0.333333')
        self.assertEqual(utils.format_float(150), '150')

    def test_missing_is_nan(self):
        self.assertEqual(utils.format_float(None), 'nan')
        self.assertEqual(utils.format_float(math.nan), 'nan')


class KeyValueTest(TestCase):
    def test_parse(self):
        text = '# comment\nbatch_size = 32\n\nalgo=gail  # trailing\n'
        self.assertEqual(utils.parse_key_values(text), {'batch_size': '32', 'algo': 'gail'})

    def test_missing_equals(self):
        with self.assertRaises(ImproperlyConfigured):
            utils.parse_key_values('batch_size 32')

    def test_coerce_to_default_type(self):
        self.assertEqual(utils.coerce_value('batch_size', '32', 64), 32)
        self.assertEqual(utils.coerce_value('tau', '0.5', 0.1), 0.5)
        self.assertIs(utils.coerce_value('timing', 'true', False), True)
        self.assertEqual(utils.coerce_value('algo', 'gail', 'cail'), 'gail')

    def test_coerce_rejects_bad_values(self):
        with self.assertRaises(ImproperlyConfigured):
            utils.coerce_value('batch_size', 'lots', 64)
        with self.assertRaises(ImproperlyConfigured):
            utils.coerce_value('timing', 'maybe', False)
