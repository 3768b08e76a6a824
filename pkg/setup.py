"""Build hook for the optional compiled kernel extension.

The package works without the extension (a pure-Python twin of every
kernel is selected at import time), so a missing compiler or Cython
only costs speed, not functionality.
"""

import os

from setuptools import setup

PYX = "src/accbs/_kernels_cy.pyx"

ext_modules = []
if os.path.exists(PYX):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [PYX],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "initializedcheck": False,
                "cdivision": True,
            },
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
