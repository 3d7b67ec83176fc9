"""Build script: compiles the optional fast-kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the build therefore tolerates a missing compiler
or Cython and simply skips the extension in that case.
"""

import numpy
from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "kpjoint.kernels._fastcore",
                ["src/kpjoint/kernels/_fastcore.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=extensions)
