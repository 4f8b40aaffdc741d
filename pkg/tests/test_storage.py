import os

from django.test import TestCase

from cail.storage import RunStorage
from cail.storage import storage_for_path
from tests.utils import TempDirMixin


class RunStorageTest(TempDirMixin, TestCase):
    def setUp(self):
        super().setUp()
        self.storage = RunStorage(location=self.tmpdir)

    def test_write_and_read(self):
        name = self.storage.write_text('config', 'algo=cail\n')
        self.assertEqual(name, 'config')
        self.assertEqual(self.storage.read_text('config'), 'algo=cail\n')

    def test_overwrite_keeps_name(self):
        self.storage.write_bytes('ckpt_10', b'first')
        name = self.storage.write_bytes('ckpt_10', b'second')
        self.assertEqual(name, 'ckpt_10')
        self.assertEqual(self.storage.read_bytes('ckpt_10'), b'second')
        self.assertEqual(sorted(os.listdir(self.tmpdir)), ['ckpt_10'])

    def test_without_overwrite_picks_new_name(self):
        self.storage.file_overwrite = False
        self.storage.write_bytes('metrics.csv', b'a')
        name = self.storage.write_bytes('metrics.csv', b'b')
        self.assertNotEqual(name, 'metrics.csv')
        self.assertEqual(self.storage.read_bytes('metrics.csv'), b'a')

    def test_normalizes_windows_names(self):
        self.storage.write_text('sub\\config', 'x=1\n')
        self.assertTrue(os.path.exists(os.path.join(self.tmpdir, 'sub', 'config')))

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            self.storage.read_bytes('nope')


class StorageForPathTest(TempDirMixin, TestCase):
    def test_split(self):
        path = os.path.join(self.tmpdir, 'demos', 'pendulum', '3.demo')
        storage, name = storage_for_path(path)
        self.assertEqual(name, '3.demo')
        storage.write_bytes(name, b'CAILDEM1')
        with open(path, 'rb') as f:
            self.assertEqual(f.read(), b'CAILDEM1')
