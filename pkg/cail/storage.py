import os

from django.core.files.base import ContentFile
from django.core.files.storage import FileSystemStorage
from django.utils.deconstruct import deconstructible

from cail.utils import artifact_name
from cail.utils import truncate_name


@deconstructible
class RunStorage(FileSystemStorage):
    """
    Filesystem storage rooted at one run (or demo) directory.

    Saving an existing name replaces the file instead of picking a fresh
    suffixed name, so reruns with the same seed produce the same tree.
    """
    file_overwrite = True

    def _normalize_name(self, name):
        return artifact_name(name)

    def get_available_name(self, name, max_length=None):
        """Overwrite existing file with the same name."""
        name = self._normalize_name(name)
        if self.file_overwrite:
            if self.exists(name):
                self.delete(name)
            return truncate_name(name, max_length)
        return super().get_available_name(name, max_length)

    def write_bytes(self, name, data):
        return self.save(name, ContentFile(bytes(data)))

    def write_text(self, name, text):
        return self.write_bytes(name, text.encode('utf-8'))

    def read_bytes(self, name):
        with self.open(self._normalize_name(name), 'rb') as f:
            return f.read()

    def read_text(self, name):
        return self.read_bytes(name).decode('utf-8')


def storage_for_path(path):
    """Split a file path into a storage rooted at its directory and a name."""
    directory, name = os.path.split(os.path.abspath(path))
    return RunStorage(location=directory), name
