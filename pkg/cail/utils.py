import math
import os
import posixpath

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from django.core.exceptions import SuspiciousFileOperation


def setting(name, default=None):
    """
    Read a ``CAIL_*`` Django setting, returning ``default`` when the project
    does not define it.

    :param name: Name of setting
    :param default: Value used when the setting is absent
    """
    return getattr(settings, name, default)


def lookup_env(names):
    """First non-empty value among the given environment variables, else None."""
    for name in names:
        value = os.environ.get(name)
        if value:
            return value


def runs_root():
    """Default output root for run directories."""
    return lookup_env(['CAIL_RUNS_DIR']) or setting('CAIL_RUNS_DIR') or 'runs'


def artifact_name(name):
    """
    Normalise an artifact name relative to its storage root.

    Backslashes become slashes, ``.`` and ``..`` segments are folded and a
    trailing slash survives. Absolute names and names that climb above the
    root raise ``ValueError``.
    """
    name = name.replace('\\', '/')
    if name.startswith('/'):
        raise ValueError('Artifact name {!r} is absolute'.format(name))
    normalized = posixpath.normpath(name)
    if normalized == '.':
        return ''
    if normalized == '..' or normalized.startswith('../'):
        raise ValueError('Artifact name {!r} leaves its storage root'.format(name))
    if name.endswith('/'):
        normalized += '/'
    return normalized


def truncate_name(name, max_length):
    """Shorten the file root, never the directory or extension, to fit ``max_length``."""
    if max_length is None or len(name) <= max_length:
        return name
    dir_name, file_name = posixpath.split(name)
    root, ext = posixpath.splitext(file_name)
    root = root[:max_length - len(name)]
    if not root:
        raise SuspiciousFileOperation(
            'Artifact name "{}" cannot be truncated to {} characters'.format(name, max_length)
        )
    return posixpath.join(dir_name, root + ext)


def format_float(value):
    """Six significant digits, the metrics CSV number format."""
    if value is None:
        return 'nan'
    value = float(value)
    if math.isnan(value):
        return 'nan'
    return '{:.6g}'.format(value)


def coerce_value(name, raw, default):
    """Coerce a ``key=value`` string to the type of its default."""
    raw = raw.strip()
    if isinstance(default, bool):
        lowered = raw.lower()
        if lowered in ('1', 'true', 'yes', 'on'):
            return True
        if lowered in ('0', 'false', 'no', 'off'):
            return False
        raise ImproperlyConfigured("Setting '{}' expects a boolean, got '{}'".format(name, raw))
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ImproperlyConfigured(
            "Setting '{}' expects {}, got '{}'".format(name, type(default).__name__, raw)
        )
    return raw


def parse_key_values(text):
    """
    Parse flat ``key=value`` lines. Blank lines and ``#`` comments are skipped.
    Values are returned as stripped strings.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ImproperlyConfigured('Line {} is not a key=value pair: {!r}'.format(lineno, line))
        key, value = line.split('=', 1)
        values[key.strip()] = value.strip()
    return values
