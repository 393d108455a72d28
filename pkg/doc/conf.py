# -*- coding: utf-8 -*-
#
# Ciml documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing dir.

import sys, os

# -- General configuration -----------------------------------------------------

extensions = []

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'Ciml'
copyright = u'2026, the Ciml developers'

# The short X.Y version and the full version.
version = '0.1'
release = '0.1'

exclude_patterns = ['_build']
pygments_style = 'sphinx'


# -- Options for HTML output ---------------------------------------------------

html_theme = 'sphinxdoc'
html_title = "Ciml"
html_static_path = ['_static']
html_sidebars = {
    '**': [ "relations.html", "globaltoc.html" ],
}
html_use_index = False
html_show_copyright = False
htmlhelp_basename = 'Cimldoc'


# -- Options for LaTeX output --------------------------------------------------

latex_documents = [
  ('index', 'ciml.tex', u'Ciml', u'The Ciml developers', 'manual'),
]
latex_show_pagerefs = True
latex_elements = { 'papersize': 'a4paper',
                   'pointsize': '10pt',
                   'fncychap': '\\usepackage[Lenny]{fncychap}',
                   }


# -- Options for manual page output --------------------------------------------

man_pages = [
    ('index', 'ciml', u'Ciml Documentation', [u'The Ciml developers'], 1)
]
