"""Build script: compiles the optional Cython twin of the execution kernel.

The package works without the extension (the pure-Python kernel is the
fallback); a failed extension build must therefore never fail the install.
"""

import os

from setuptools import Extension, setup

PYX = "src/uarchleak/engine/_kernel_cy.pyx"

ext_modules = []
if os.environ.get("UARCHLEAK_NO_EXT") != "1" and os.path.exists(PYX):
    try:
        from Cython.Build import cythonize

        ext = Extension("uarchleak.engine._kernel_cy", [PYX])
        ext.optional = True
        ext_modules = cythonize(
            [ext],
            compiler_directives={"language_level": "3", "boundscheck": False},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
