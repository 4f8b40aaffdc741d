#!/usr/bin/env python

# Lets the test suite's settings drive the cail command directly:
#   DJANGO_SETTINGS_MODULE=tests.settings ./manage.py cail selftest

import os
import sys

if __name__ == "__main__":
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'tests.settings')
    from django.core.management import execute_from_command_line

    execute_from_command_line(sys.argv)
