"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a NumPy reference
backend is selected at import time), so any build failure here downgrades
to a pure-Python install instead of aborting.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("SQUEEZEKIT_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "squeezekit.kernels._fast",
                    ["src/squeezekit/kernels/_fast.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
