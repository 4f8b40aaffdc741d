"""
``cail`` console script: runs the ``cail`` management command without a
Django project, configuring minimal settings first.
"""
import sys

import django
from django.conf import settings

DEFAULT_LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {'format': '%(asctime)s %(levelname)s %(name)s %(message)s'},
    },
    'handlers': {
        'stderr': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'cail': {'handlers': ['stderr'], 'level': 'INFO', 'propagate': False},
    },
}


def configure():
    if not settings.configured:
        settings.configure(INSTALLED_APPS=['cail'], LOGGING=DEFAULT_LOGGING)
    django.setup()


def main(argv=None):
    configure()
    from cail.management.commands.cail import Command

    argv = sys.argv[1:] if argv is None else list(argv)
    Command().run_from_argv(['cail', 'cail'] + argv)


if __name__ == '__main__':
    main()
