# django-cail documentation build configuration file.

import os
import sys

sys.path.insert(0, os.path.abspath('..'))
import cail  # noqa: E402

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.viewcode']
templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'django-cail'
copyright = 'django-cail contributors'
version = cail.__version__
release = cail.__version__

exclude_patterns = ['_build']
pygments_style = 'sphinx'

html_theme = 'default'
htmlhelp_basename = 'django-caildoc'

latex_documents = [
    ('index', 'django-cail.tex', 'django-cail Documentation', 'django-cail contributors', 'manual'),
]
man_pages = [
    ('index', 'django-cail', 'django-cail Documentation', ['django-cail contributors'], 1),
]
