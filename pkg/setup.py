"""Build script: compiles the optional fast-kernel extension when Cython and a
C compiler are available.  The package is fully functional without it (a numpy
fallback is selected at import time), so any build failure here downgrades to
a pure-Python install instead of aborting.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("TLPRICING_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "tlpricing._speedups",
                    ["src/tlpricing/_speedups.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
            quiet=True,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
